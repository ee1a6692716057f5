import unittest

import numpy as np

from elegance.config import METRIC_CAP_DB
from elegance.errors import ContractError, DomainError
from elegance.signal.metrics import MetricName, improvement, sdr, si_sdr
from elegance.signal.waveform import Waveform, mix_at_snr


def _orthogonal_pair(seed: int, ratio: float, n: int = 4000) -> tuple[np.ndarray, np.ndarray]:
    """Zero-mean reference and zero-mean noise orthogonal to it with |ref|^2/|noise|^2 = ratio."""
    rng = np.random.default_rng(seed)
    ref = rng.normal(size=n)
    ref -= ref.mean()
    noise = rng.normal(size=n)
    noise -= noise.mean()
    noise -= (np.dot(noise, ref) / np.dot(ref, ref)) * ref
    noise *= np.sqrt(np.dot(ref, ref) / (ratio * np.dot(noise, noise)))
    return ref, noise


class SiSdrTest(unittest.TestCase):
    def test_identity_is_perfect(self) -> None:
        ref = Waveform(np.random.default_rng(1).normal(size=800), 8000)
        result = si_sdr(ref, ref)
        self.assertTrue(result.perfect)
        self.assertEqual(result.capped, METRIC_CAP_DB)

    def test_scaled_copy_is_perfect(self) -> None:
        samples = np.random.default_rng(2).normal(size=800)
        self.assertTrue(si_sdr(Waveform(3.7 * samples, 8000), Waveform(samples, 8000)).perfect)

    def test_orthogonal_noise_at_20_db(self) -> None:
        ref, noise = _orthogonal_pair(3, 100.0)
        result = si_sdr(Waveform(ref + noise, 8000), Waveform(ref, 8000))
        self.assertFalse(result.perfect)
        self.assertAlmostEqual(result.value, 20.0, delta=1e-6)

    def test_decomposition_matches_closed_form(self) -> None:
        rng = np.random.default_rng(4)
        for _ in range(50):
            ref, noise = _orthogonal_pair(int(rng.integers(1 << 30)), rng.uniform(0.1, 1000.0))
            scale = rng.uniform(0.2, 5.0)
            target = scale * ref
            expected = 10 * np.log10(np.dot(target, target) / np.dot(noise, noise))
            value = si_sdr(Waveform(target + noise, 8000), Waveform(ref, 8000)).value
            self.assertAlmostEqual(value, expected, delta=1e-9)

    def test_scale_invariance(self) -> None:
        rng = np.random.default_rng(5)
        for _ in range(1000):
            est = Waveform(rng.normal(size=256), 8000)
            ref = Waveform(rng.normal(size=256), 8000)
            a = rng.uniform(0.01, 100.0)
            scaled = Waveform(a * est.samples, 8000)
            self.assertAlmostEqual(si_sdr(scaled, ref).value, si_sdr(est, ref).value, delta=1e-8)

    def test_length_mismatch(self) -> None:
        with self.assertRaises(ContractError):
            si_sdr(Waveform(np.ones(10), 8000), Waveform(np.ones(11), 8000))

    def test_zero_reference(self) -> None:
        with self.assertRaises(DomainError):
            si_sdr(Waveform(np.ones(10), 8000), Waveform(np.full(10, 0.5), 8000))

    def test_silent_estimate_is_floor(self) -> None:
        ref = Waveform(np.random.default_rng(14).normal(size=800), 8000)
        for est in (np.zeros(800), np.full(800, 0.25)):
            result = si_sdr(Waveform(est, 8000), ref)
            self.assertFalse(result.perfect)
            self.assertEqual(result.capped, -METRIC_CAP_DB)

    def test_silent_estimate_improvement_is_negative(self) -> None:
        rng = np.random.default_rng(15)
        ref = Waveform(rng.normal(size=800), 8000)
        mix = Waveform(ref.samples + rng.normal(size=800), 8000)
        result = improvement(MetricName.SI_SDR, Waveform(np.zeros(800), 8000), mix, ref)
        self.assertFalse(result.perfect)
        self.assertLess(result.value, 0.0)


class SdrTest(unittest.TestCase):
    def test_identity_is_perfect(self) -> None:
        ref = Waveform(np.random.default_rng(6).normal(size=500), 8000)
        self.assertTrue(sdr(ref, ref).perfect)

    def test_half_amplitude(self) -> None:
        samples = np.random.default_rng(7).normal(size=500)
        result = sdr(Waveform(0.5 * samples, 8000), Waveform(samples, 8000))
        self.assertAlmostEqual(result.value, 20 * np.log10(2), delta=1e-4)
        self.assertAlmostEqual(result.value, 6.0206, delta=1e-4)

    def test_orthogonal_noise_at_10_db(self) -> None:
        ref, noise = _orthogonal_pair(8, 10.0)
        result = sdr(Waveform(ref + noise, 8000), Waveform(ref, 8000))
        self.assertAlmostEqual(result.value, 10.0, delta=1e-6)

    def test_not_scale_invariant(self) -> None:
        ref, noise = _orthogonal_pair(9, 10.0)
        a = sdr(Waveform(ref + noise, 8000), Waveform(ref, 8000)).value
        b = sdr(Waveform(2.0 * (ref + noise), 8000), Waveform(ref, 8000)).value
        self.assertNotAlmostEqual(a, b, places=3)


class ImprovementTest(unittest.TestCase):
    def setUp(self) -> None:
        ref, noise = _orthogonal_pair(10, 1.0)
        self.ref = Waveform(ref, 8000)
        self.mix = Waveform(ref + noise, 8000)

    def test_no_processing_is_zero_for_every_metric(self) -> None:
        for metric in (MetricName.SI_SDR, MetricName.SDR, MetricName.STOI):
            result = improvement(metric, self.mix, self.mix, self.ref)
            self.assertEqual(result.value, 0.0)
            self.assertFalse(result.perfect)

    def test_oracle_over_0_db_mixture_is_perfect(self) -> None:
        self.assertAlmostEqual(si_sdr(self.mix, self.ref).value, 0.0, delta=1e-9)
        result = improvement(MetricName.SI_SDR, self.ref, self.mix, self.ref)
        self.assertEqual(result.name, MetricName.SI_SDR_I)
        self.assertTrue(result.perfect)

    def test_matches_componentwise_difference(self) -> None:
        _, small = _orthogonal_pair(11, 100.0)
        small -= (np.dot(small, self.ref.samples) / self.ref.energy()) * self.ref.samples
        small *= np.sqrt(self.ref.energy() / (100.0 * np.dot(small, small)))
        est = Waveform(self.ref.samples + small, 8000)
        expected = si_sdr(est, self.ref).value - si_sdr(self.mix, self.ref).value
        result = improvement(MetricName.SI_SDR_I, est, self.mix, self.ref)
        self.assertAlmostEqual(result.value, expected, delta=1e-12)
        self.assertAlmostEqual(result.value, 20.0, delta=1e-3)

    def test_sdr_improvement_name(self) -> None:
        result = improvement(MetricName.SDR, self.ref, self.mix, self.ref)
        self.assertEqual(result.name, MetricName.SDR_I)

    def test_length_mismatch(self) -> None:
        with self.assertRaises(ContractError):
            improvement(MetricName.SI_SDR, Waveform(np.ones(5), 8000), self.mix, self.ref)


class MixAtSnrTest(unittest.TestCase):
    def test_equal_energies_at_0_db(self) -> None:
        target = Waveform(np.array([1.0, -1.0, 1.0, -1.0]), 8000)
        interferer = Waveform(np.array([1.0, 1.0, -1.0, -1.0]), 8000)
        mixture, gains = mix_at_snr(target, [interferer], [0.0])
        self.assertAlmostEqual(gains[0], 1.0, places=12)
        np.testing.assert_allclose(mixture.samples, target.samples + interferer.samples)

    def test_equal_energies_at_10_db(self) -> None:
        target = Waveform(np.array([1.0, -1.0, 1.0, -1.0]), 8000)
        interferer = Waveform(np.array([1.0, 1.0, -1.0, -1.0]), 8000)
        _, gains = mix_at_snr(target, [interferer], [10.0])
        self.assertAlmostEqual(gains[0], 10 ** -0.5, places=12)
        self.assertAlmostEqual(gains[0], 0.31623, places=5)

    def test_round_trip_snr(self) -> None:
        rng = np.random.default_rng(12)
        for _ in range(1000):
            target = Waveform(rng.normal(size=200), 8000)
            interferer = Waveform(rng.normal(size=200) * rng.uniform(0.1, 10), 8000)
            snr = rng.uniform(-10.0, 10.0)
            _, gains = mix_at_snr(target, [interferer], [snr])
            scaled = gains[0] * interferer.samples
            measured = 10 * np.log10(target.energy() / np.dot(scaled, scaled))
            self.assertAlmostEqual(measured, snr, delta=1e-9)

    def test_three_speakers(self) -> None:
        rng = np.random.default_rng(13)
        target = Waveform(rng.normal(size=300), 8000)
        interferers = [Waveform(rng.normal(size=300), 8000) for _ in range(2)]
        mixture, gains = mix_at_snr(target, interferers, [-10.0, 10.0])
        total = target.samples.copy()
        for gain, snr, interferer in zip(gains, [-10.0, 10.0], interferers):
            scaled = gain * interferer.samples
            total += scaled
            measured = 10 * np.log10(target.energy() / np.dot(scaled, scaled))
            self.assertAlmostEqual(measured, snr, delta=1e-9)
        np.testing.assert_allclose(mixture.samples, total, atol=1e-12)

    def test_zero_energy_interferer(self) -> None:
        target = Waveform(np.ones(8), 8000)
        with self.assertRaises(DomainError):
            mix_at_snr(target, [Waveform(np.zeros(8), 8000)], [0.0])


if __name__ == "__main__":
    unittest.main()
