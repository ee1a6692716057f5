import tempfile
import unittest
from pathlib import Path

import numpy as np

from elegance.config import LOG_FLOOR
from elegance.errors import DomainError, FormatError
from elegance.signal.waveform import Waveform
from elegance.simkit.speakers import speaker_spec
from elegance.simkit.synth import synth_utterance
from elegance.simkit.visual import (
    Impairment,
    apply_visual_impairment,
    derive_visual_stream,
    impaired_frame_count,
    read_visual_stream,
    write_visual_stream,
)


class DeriveVisualStreamTest(unittest.TestCase):
    def setUp(self) -> None:
        self.spec = speaker_spec(5)
        self.speech = synth_utterance(self.spec, "the morning station", 2.0, seed=3)

    def test_frame_count(self) -> None:
        stream = derive_visual_stream(self.speech, self.spec, fps=25, d_v=16)
        self.assertEqual(stream.features.shape, (50, 16))
        self.assertTrue(np.all(stream.impairment_mask == Impairment.CLEAN))

    def test_silence_hits_floor_and_keeps_identity(self) -> None:
        silent = derive_visual_stream(Waveform(np.zeros(16000), 8000), self.spec, d_v=16)
        voiced = derive_visual_stream(self.speech, self.spec, d_v=16)
        np.testing.assert_allclose(silent.features[:, :5], np.float32(np.log(LOG_FLOOR)))
        np.testing.assert_array_equal(silent.features[:, 5:], voiced.features[:, 5:])

    def test_envelope_tracks_square_modulation(self) -> None:
        rng = np.random.default_rng(0)
        t = np.arange(4 * 8000) / 8000
        square = np.where((t % 1.0) < 0.5, 1.0, 0.05)
        stream = derive_visual_stream(Waveform(square * rng.normal(size=t.size), 8000), self.spec)
        frame_env = square[:: 8000 // 25][: stream.n_frames]
        r = np.corrcoef(stream.features[:, 0], frame_env)[0, 1]
        self.assertGreater(r, 0.9)

    def test_identity_is_speaker_specific(self) -> None:
        other = speaker_spec(6)
        a = derive_visual_stream(self.speech, self.spec)
        b = derive_visual_stream(self.speech, other)
        self.assertFalse(np.array_equal(a.features[:, 5:], b.features[:, 5:]))


class ImpairmentTest(unittest.TestCase):
    def setUp(self) -> None:
        spec = speaker_spec(2)
        speech = synth_utterance(spec, "people listen", 2.0, seed=1)
        self.stream = derive_visual_stream(speech, spec, d_v=16)

    def test_zero_ratio_is_identity(self) -> None:
        for kind in (Impairment.OCCLUDED, Impairment.LOW_RES, Impairment.MISSING):
            out = apply_visual_impairment(self.stream, kind, 0.0, seed=4)
            np.testing.assert_array_equal(out.features, self.stream.features)
            np.testing.assert_array_equal(out.impairment_mask, self.stream.impairment_mask)

    def test_full_missing_is_all_zero(self) -> None:
        out = apply_visual_impairment(self.stream, Impairment.MISSING, 1.0, seed=4)
        self.assertTrue(np.all(out.features == 0.0))
        self.assertTrue(np.all(out.impairment_mask == Impairment.MISSING))

    def test_half_marks_contiguous_25_frames(self) -> None:
        for kind in (Impairment.OCCLUDED, Impairment.LOW_RES, Impairment.MISSING):
            out = apply_visual_impairment(self.stream, kind, 0.5, seed=9)
            marked = np.flatnonzero(out.impairment_mask == kind)
            self.assertEqual(marked.size, 25)
            self.assertEqual(marked[-1] - marked[0], 24)

    def test_marked_count_is_exact(self) -> None:
        rng = np.random.default_rng(0)
        for seed in range(200):
            ratio = float(rng.uniform())
            kind = (Impairment.OCCLUDED, Impairment.LOW_RES, Impairment.MISSING)[seed % 3]
            out = apply_visual_impairment(self.stream, kind, ratio, seed)
            self.assertEqual(
                int(np.sum(out.impairment_mask != Impairment.CLEAN)),
                impaired_frame_count(ratio, 50),
            )

    def test_occlusion_overwrites_a_dim_block(self) -> None:
        out = apply_visual_impairment(self.stream, Impairment.OCCLUDED, 0.4, seed=2)
        frames = out.impairment_mask == Impairment.OCCLUDED
        changed = np.any(out.features[frames] != self.stream.features[frames], axis=0)
        self.assertLessEqual(int(changed.sum()), 8)
        np.testing.assert_array_equal(out.features[~frames], self.stream.features[~frames])
        block = out.features[frames][:, changed]
        np.testing.assert_array_equal(block, np.tile(block[0], (block.shape[0], 1)))

    def test_low_res_leaves_clean_frames(self) -> None:
        out = apply_visual_impairment(self.stream, Impairment.LOW_RES, 0.3, seed=5)
        clean = out.impairment_mask == Impairment.CLEAN
        np.testing.assert_array_equal(out.features[clean], self.stream.features[clean])
        self.assertFalse(np.array_equal(out.features[~clean], self.stream.features[~clean]))

    def test_unknown_kind(self) -> None:
        with self.assertRaises(DomainError):
            apply_visual_impairment(self.stream, "blur", 0.5, seed=0)
        with self.assertRaises(DomainError):
            apply_visual_impairment(self.stream, 9, 0.5, seed=0)


class VisualCodecTest(unittest.TestCase):
    def test_round_trip_and_header(self) -> None:
        spec = speaker_spec(1)
        stream = apply_visual_impairment(
            derive_visual_stream(synth_utterance(spec, "why?", 1.0, seed=0), spec),
            Impairment.MISSING,
            0.3,
            seed=1,
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = write_visual_stream(Path(tmp) / "v.elvs", stream)
            raw = path.read_bytes()
            self.assertEqual(raw[:4], b"ELVS")
            self.assertEqual(len(raw), 16 + 4 * stream.features.size + stream.n_frames)
            loaded = read_visual_stream(path)
            np.testing.assert_array_equal(loaded.features, stream.features)
            np.testing.assert_array_equal(loaded.impairment_mask, stream.impairment_mask)
            self.assertEqual(loaded.fps, stream.fps)

            path.write_bytes(b"XXXX" + raw[4:])
            with self.assertRaises(FormatError):
                read_visual_stream(path)


if __name__ == "__main__":
    unittest.main()
