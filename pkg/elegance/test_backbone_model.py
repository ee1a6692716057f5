import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from elegance.backbone.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from elegance.backbone.model import (
    AVTSEModel,
    BackboneConfig,
    BackboneKind,
    backbone_preset,
    extract,
)
from elegance.errors import ConfigError, FormatError
from elegance.signal.waveform import Waveform
from elegance.simkit.visual import Impairment, VisualStream

TINY = BackboneConfig(
    enc_dim=16,
    kernel=8,
    stride=4,
    n_blocks=1,
    chunk_len=10,
    ssm_state_dim=4,
    hidden_dim=12,
    visual_dim=8,
)


class AVTSEModelTest(unittest.TestCase):
    def test_length_and_finiteness(self) -> None:
        for kind in BackboneKind:
            torch.manual_seed(0)
            model = AVTSEModel(replace(TINY, kind=kind))
            for length in (400, 403, 517):
                est, inter = model(torch.randn(2, length), torch.randn(2, 5, 8))
                self.assertEqual(est.shape, (2, length))
                self.assertTrue(torch.all(torch.isfinite(est)))
                self.assertEqual(inter.X.shape, inter.X_a.shape)
                self.assertTrue(torch.all(inter.mask >= 0))
                torch.testing.assert_close(inter.X_a, inter.mask * inter.X)

    def test_prior_requires_fusion(self) -> None:
        model = AVTSEModel(TINY)
        with self.assertRaises(ConfigError):
            model(torch.randn(1, 400), torch.randn(1, 5, 8), torch.zeros(1, 4))

    def test_extract_wrapper(self) -> None:
        torch.manual_seed(0)
        model = AVTSEModel(TINY)
        model.train()
        mixture = Waveform(np.random.default_rng(0).normal(size=4000), 8000)
        visual = VisualStream(
            np.zeros((13, 8), dtype=np.float32), 25.0, np.full(13, Impairment.MISSING, dtype=np.uint8)
        )
        est = extract(model, mixture, visual)
        self.assertEqual(len(est), 4000)
        self.assertEqual(est.sample_rate, 8000)
        self.assertTrue(model.training)


class BackboneConfigTest(unittest.TestCase):
    def test_presets(self) -> None:
        usev = backbone_preset("usev")
        self.assertEqual((usev.kernel, usev.stride, usev.hidden_dim, usev.chunk_len, usev.n_blocks), (40, 20, 256, 100, 6))
        mamba = backbone_preset("av_mamba")
        self.assertEqual(mamba.kind, BackboneKind.BISSM)
        self.assertEqual((mamba.n_blocks, mamba.hidden_dim, mamba.ssm_state_dim, mamba.expand, mamba.conv_kernel), (16, 512, 16, 2, 4))
        self.assertEqual(backbone_preset("toy_dprnn", n_blocks=3).n_blocks, 3)
        with self.assertRaises(ConfigError):
            backbone_preset("conv_tasnet")

    def test_invalid(self) -> None:
        with self.assertRaises(ConfigError):
            AVTSEModel(replace(TINY, stride=16))
        with self.assertRaises(ConfigError):
            AVTSEModel(replace(TINY, kind="TRANSFORMER"))


class CheckpointTest(unittest.TestCase):
    def setUp(self) -> None:
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / "model.pt"

    def tearDown(self) -> None:
        self.tmp.cleanup()

    def test_round_trip(self) -> None:
        torch.manual_seed(0)
        model = AVTSEModel(replace(TINY, kind=BackboneKind.BISSM))
        optimizer = torch.optim.Adam(model.parameters(), lr=1e-3)
        x, v = torch.randn(1, 400), torch.randn(1, 5, 8)
        model(x, v)[0].pow(2).mean().backward()
        optimizer.step()
        save_checkpoint(self.path, {"model": model}, model.cfg, optimizer, {"epoch": 3, "best_val_loss": -4.5})

        torch.manual_seed(1)
        fresh = AVTSEModel(replace(TINY, kind=BackboneKind.BISSM))
        fresh_opt = torch.optim.Adam(fresh.parameters(), lr=1e-3)
        payload = load_checkpoint(self.path, {"model": fresh}, fresh_opt)
        torch.testing.assert_close(fresh(x, v)[0], model(x, v)[0], atol=0, rtol=0)
        self.assertEqual(payload["config"]["kind"], "BISSM")
        self.assertEqual(payload["train_state"]["epoch"], 3)
        self.assertEqual(payload["optimizer_name"], "Adam")
        self.assertEqual(fresh_opt.state_dict()["state"].keys(), optimizer.state_dict()["state"].keys())

    def test_payload_is_float32_with_shapes(self) -> None:
        model = AVTSEModel(TINY).double()
        save_checkpoint(self.path, {"model": model}, TINY)
        payload = read_checkpoint(self.path)
        for name, tensor in payload["params"].items():
            self.assertEqual(tensor.dtype, torch.float32)
            self.assertEqual(list(tensor.shape), payload["shapes"][name])

    def test_shape_mismatch_names_parameter(self) -> None:
        save_checkpoint(self.path, {"model": AVTSEModel(TINY)}, TINY)
        with self.assertRaises(FormatError) as ctx:
            load_checkpoint(self.path, {"model": AVTSEModel(replace(TINY, enc_dim=24))})
        self.assertIn("model.", str(ctx.exception))

    def test_bad_file(self) -> None:
        self.path.write_bytes(b"not a checkpoint")
        with self.assertRaises(FormatError):
            read_checkpoint(self.path)
        with self.assertRaises(FormatError):
            read_checkpoint(self.path.with_name("absent.pt"))


if __name__ == "__main__":
    unittest.main()
