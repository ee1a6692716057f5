import unittest
from dataclasses import replace

import numpy as np

from elegance.errors import DomainError
from elegance.simkit.speakers import (
    LEXICONS,
    Language,
    sample_transcript,
    speaker_spec,
)
from elegance.simkit.synth import synth_utterance


class SpeakerSpecTest(unittest.TestCase):
    def test_deterministic_and_in_range(self) -> None:
        for speaker_id in range(40):
            spec = speaker_spec(speaker_id)
            self.assertEqual(spec, speaker_spec(speaker_id))
            self.assertGreaterEqual(spec.base_pitch, 80.0)
            self.assertLessEqual(spec.base_pitch, 300.0)
            self.assertEqual(len(spec.formant_offsets), 3)

    def test_language_cycles_through_configured_set(self) -> None:
        self.assertEqual(speaker_spec(7, (Language.EN,)).language_tag, Language.EN)
        self.assertEqual(speaker_spec(1, tuple(Language)).language_tag, Language.ES)

    def test_transcript_uses_language_lexicon(self) -> None:
        rng = np.random.default_rng(0)
        text = sample_transcript(rng, Language.PT, 2.0)
        self.assertTrue(set(text.split(" ")) <= set(LEXICONS[Language.PT]))
        self.assertGreaterEqual(len(text), 22)


class SynthUtteranceTest(unittest.TestCase):
    def setUp(self) -> None:
        self.spec = speaker_spec(3)

    def test_deterministic(self) -> None:
        a = synth_utterance(self.spec, "aaa", 1.0, seed=7)
        b = synth_utterance(self.spec, "aaa", 1.0, seed=7)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_exact_length_and_peak(self) -> None:
        for duration in (0.5, 1.0, 2.0):
            wave = synth_utterance(self.spec, "the quiet river", duration, seed=1)
            self.assertEqual(len(wave), int(round(duration * 8000)))
            self.assertLessEqual(np.max(np.abs(wave.samples)), 0.99)

    def test_different_transcripts_decorrelate(self) -> None:
        a = synth_utterance(self.spec, "morning light", 1.0, seed=2).samples
        b = synth_utterance(self.spec, "yellow paper", 1.0, seed=2).samples
        self.assertLess(abs(np.corrcoef(a, b)[0, 1]), 0.9)

    def test_fft_peak_follows_pitch(self) -> None:
        peaks = []
        for pitch in (100.0, 200.0):
            wave = synth_utterance(replace(self.spec, base_pitch=pitch), "a", 1.0, seed=0)
            spectrum = np.abs(np.fft.rfft(wave.samples))
            freqs = np.fft.rfftfreq(len(wave), 1.0 / wave.sample_rate)
            peaks.append(freqs[int(np.argmax(spectrum))])
        self.assertAlmostEqual(peaks[1] / peaks[0], 2.0, delta=0.05)

    def test_unknown_character(self) -> None:
        with self.assertRaises(DomainError) as ctx:
            synth_utterance(self.spec, "abZ", 1.0, seed=0)
        self.assertIn("'Z'", str(ctx.exception))

    def test_empty_transcript(self) -> None:
        with self.assertRaises(DomainError):
            synth_utterance(self.spec, "", 1.0, seed=0)


if __name__ == "__main__":
    unittest.main()
