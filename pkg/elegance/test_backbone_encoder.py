import unittest

import numpy as np
import torch

from elegance.backbone.encoder import (
    Fusion,
    SpeechDecoder,
    SpeechEncoder,
    VisualEncoder,
    apply_mask,
    frame_count,
    upsample_nearest,
)
from elegance.errors import ContractError, DomainError


def _identity_pair(kernel: int) -> tuple[SpeechEncoder, SpeechDecoder]:
    basis = torch.cat([torch.eye(kernel), -torch.eye(kernel)]).unsqueeze(1)
    encoder = SpeechEncoder(2 * kernel, kernel, kernel)
    decoder = SpeechDecoder(2 * kernel, kernel, kernel)
    with torch.no_grad():
        encoder.conv.weight.copy_(basis)
        decoder.deconv.weight.copy_(basis)
    return encoder.double(), decoder.double()


class SpeechEncoderTest(unittest.TestCase):
    def setUp(self) -> None:
        torch.manual_seed(0)
        self.encoder = SpeechEncoder(64, 40, 20)

    def test_frame_count(self) -> None:
        self.assertEqual(frame_count(8000, 40, 20), 399)
        self.assertEqual(frame_count(8010, 40, 20), 400)
        self.assertEqual(self.encoder(torch.randn(2, 8000)).shape, (2, 399, 64))

    def test_zero_wave_gives_zero_feature(self) -> None:
        out = self.encoder(torch.zeros(1, 1000))
        self.assertTrue(torch.all(out == 0))

    def test_positive_homogeneity(self) -> None:
        x = torch.randn(1, 1000, dtype=torch.float64)
        encoder = self.encoder.double()
        torch.testing.assert_close(encoder(2 * x), 2 * encoder(x))

    def test_too_short(self) -> None:
        with self.assertRaises(DomainError):
            self.encoder(torch.zeros(1, 39))

    def test_stride_above_kernel(self) -> None:
        with self.assertRaises(ContractError):
            SpeechEncoder(8, 4, 8)


class SpeechDecoderTest(unittest.TestCase):
    def test_identity_basis_reconstructs(self) -> None:
        encoder, decoder = _identity_pair(8)
        x = torch.randn(3, 1003, dtype=torch.float64)
        y = decoder(encoder(x), 1003)
        self.assertEqual(y.shape, x.shape)
        torch.testing.assert_close(y, x, atol=1e-6, rtol=0)

    def test_masks(self) -> None:
        torch.manual_seed(1)
        encoder, decoder = SpeechEncoder(32, 40, 20), SpeechDecoder(32, 40, 20)
        x = torch.randn(1, 8000)
        feats = encoder(x)
        ones = decoder(apply_mask(torch.ones_like(feats), feats), 8000)
        self.assertEqual(ones.shape, (1, 8000))
        silent = decoder(apply_mask(torch.zeros_like(feats), feats), 8000)
        self.assertTrue(torch.all(silent == 0))

    def test_shape_mismatch(self) -> None:
        decoder = SpeechDecoder(16, 40, 20)
        with self.assertRaises(ContractError):
            decoder(torch.zeros(1, 10, 16), 8000)
        with self.assertRaises(ContractError):
            apply_mask(torch.zeros(1, 10, 16), torch.zeros(1, 11, 16))


class VisualPathTest(unittest.TestCase):
    def test_nearest_upsampling(self) -> None:
        frames = torch.arange(50, dtype=torch.float32).reshape(1, 50, 1)
        up = upsample_nearest(frames, 399)
        self.assertEqual(up.shape, (1, 399, 1))
        expected = np.minimum(49, np.floor((np.arange(399) + 0.5) * 50 / 399))
        np.testing.assert_array_equal(up[0, :, 0].numpy(), expected)

    def test_missing_stream_rows_are_constant(self) -> None:
        torch.manual_seed(0)
        encoder = VisualEncoder(16, 32)
        out = encoder(torch.zeros(1, 50, 16), 399)
        self.assertEqual(out.shape, (1, 399, 32))
        torch.testing.assert_close(out[0], out[0, :1].expand(399, -1))

    def test_impaired_rows_only_differ(self) -> None:
        torch.manual_seed(0)
        encoder = VisualEncoder(16, 32)
        clean = torch.randn(1, 50, 16)
        impaired = clean.clone()
        impaired[:, 10:20] = 0.0
        a, b = encoder(clean, 50), encoder(impaired, 50)
        differs = torch.any(a != b, dim=-1)[0]
        self.assertTrue(torch.all(differs[10:20]))
        self.assertFalse(torch.any(differs[:10]) or torch.any(differs[20:]))


class FusionTest(unittest.TestCase):
    def test_shape_and_gradients(self) -> None:
        torch.manual_seed(0)
        fusion = Fusion(16, 8, 24)
        audio = torch.randn(2, 30, 16, requires_grad=True)
        visual = torch.zeros(2, 30, 8, requires_grad=True)
        out = fusion(audio, visual)
        self.assertEqual(out.shape, (2, 30, 24))
        self.assertTrue(torch.all(torch.isfinite(out)))
        (out * torch.randn_like(out)).sum().backward()
        self.assertGreater(float(audio.grad.abs().sum()), 0.0)
        self.assertGreater(float(visual.grad.abs().sum()), 0.0)

    def test_frame_mismatch(self) -> None:
        with self.assertRaises(ContractError):
            Fusion(4, 4, 4)(torch.zeros(1, 10, 4), torch.zeros(1, 11, 4))


if __name__ == "__main__":
    unittest.main()
