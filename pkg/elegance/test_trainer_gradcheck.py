import unittest

import torch

from elegance.backbone.bissm import BiSSMLayer
from elegance.backbone.dprnn import DPRNNBlock
from elegance.backbone.model import BackboneKind
from elegance.config import GRADCHECK_TOLERANCE
from elegance.errors import ContractError
from elegance.guidance.bundle import Strategy
from elegance.guidance.input_prior import GatedPriorFusion
from elegance.lmcore.model import CrossAttention, SelfAttention
from elegance.trainer.gradcheck import (
    composed_objective_check,
    grad_check,
    randomize_zero_parameters,
    relative_error,
)


def _weighted_sum(out: torch.Tensor, seed: int = 11) -> torch.Tensor:
    weights = torch.randn(out.shape, generator=torch.Generator().manual_seed(seed), dtype=out.dtype)
    return (out * weights).sum()


class GradCheckToolTest(unittest.TestCase):
    def test_exact_for_polynomial(self) -> None:
        x = torch.randn(5, dtype=torch.float64, requires_grad=True)
        self.assertLess(grad_check(lambda: (x**3).sum(), [x], n_probes=5), 1e-8)

    def test_detects_wrong_gradient(self) -> None:
        class Wrong(torch.autograd.Function):
            @staticmethod
            def forward(ctx, x):
                return x * x

            @staticmethod
            def backward(ctx, grad):
                return grad

        x = torch.full((3,), 2.0, dtype=torch.float64, requires_grad=True)
        self.assertGreater(grad_check(lambda: Wrong.apply(x).sum(), [x]), 0.5)

    def test_requires_float64(self) -> None:
        x = torch.randn(3, requires_grad=True)
        with self.assertRaises(ContractError):
            grad_check(lambda: x.sum(), [x])

    def test_relative_error_floor(self) -> None:
        self.assertEqual(relative_error(0.0, 0.0), 0.0)
        self.assertAlmostEqual(relative_error(1e-9, 0.0), 1e-5)
        self.assertAlmostEqual(relative_error(2.0, 1.0), 0.5)


class BlockGradientTest(unittest.TestCase):
    def setUp(self) -> None:
        torch.manual_seed(0)
        self.generator = torch.Generator().manual_seed(0)

    def _check(self, module: torch.nn.Module, fn) -> None:
        module = module.double()
        randomize_zero_parameters(module, self.generator)
        params = list(module.parameters())
        self.assertLess(grad_check(fn(module), params, n_probes=4), GRADCHECK_TOLERANCE)

    def test_dprnn_block(self) -> None:
        chunks = torch.randn(2, 3, 5, 6, dtype=torch.float64)
        self._check(DPRNNBlock(6, 4), lambda m: lambda: _weighted_sum(m(chunks)))

    def test_bissm_layer(self) -> None:
        x = torch.randn(2, 9, 6, dtype=torch.float64)
        self._check(BiSSMLayer(6, state_dim=3, expand=2, conv_kernel=3), lambda m: lambda: _weighted_sum(m(x)))

    def test_self_attention(self) -> None:
        x = torch.randn(2, 7, 8, dtype=torch.float64)
        padding = torch.zeros(2, 7, dtype=torch.bool)
        padding[1, 5:] = True
        for causal in (True, False):
            with self.subTest(causal=causal):
                self._check(SelfAttention(8, 2), lambda m: lambda: _weighted_sum(m(x, causal, padding)[:, :5]))

    def test_cross_attention(self) -> None:
        h = torch.randn(2, 6, 8, dtype=torch.float64)
        acoustic = torch.randn(2, 11, 5, dtype=torch.float64, requires_grad=True)
        module = CrossAttention(8, 5).double()
        randomize_zero_parameters(module, self.generator)

        def fn() -> torch.Tensor:
            return _weighted_sum(module(h, acoustic))

        self.assertLess(grad_check(fn, list(module.parameters()) + [acoustic], n_probes=4), GRADCHECK_TOLERANCE)

    def test_gated_fusion(self) -> None:
        x = torch.randn(2, 10, 6, dtype=torch.float64)
        prior = torch.randn(2, 5, dtype=torch.float64)
        self._check(GatedPriorFusion(6, 5, 4), lambda m: lambda: _weighted_sum(m(x, prior)))


class ComposedObjectiveGradientTest(unittest.TestCase):
    def test_every_strategy_and_backbone(self) -> None:
        for strategy in (Strategy.OUTPUT, Strategy.INTERMEDIATE, Strategy.INPUT, Strategy.NONE):
            for kind in BackboneKind:
                with self.subTest(strategy=strategy, kind=kind):
                    self.assertLess(composed_objective_check(strategy, kind, n_probes=2), GRADCHECK_TOLERANCE)


if __name__ == "__main__":
    unittest.main()
