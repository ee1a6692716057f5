import json
import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import torch

from elegance.backbone.model import BackboneConfig, BackboneKind
from elegance.errors import ConfigError, DomainError, FormatError, VerificationError
from elegance.evalkit.acceptance import (
    BASELINE,
    HELD_OUT,
    IMPAIRED,
    STRATEGIES,
    efficacy_checks,
    load_sweep,
    verify_efficacy,
)
from elegance.evalkit.case_study import SIDECAR_NAME, export_case_study
from elegance.evalkit.evaluate import ModelEstimator, OracleEstimator, PassthroughEstimator, evaluate
from elegance.evalkit.report import MetricsReport, build_report
from elegance.evalkit.stats import compare_reports, false_rate, relative_improvement
from elegance.guidance.bundle import GuidanceConfig, Strategy
from elegance.lmcore.embeddings import ToyLMProvider
from elegance.lmcore.model import LmConfig, ToyLM
from elegance.simkit.dataset import DatasetConfig, build_dataset, load_sample
from elegance.simkit.mixtures import SampleConfig
from elegance.trainer.loop import build_model

CORE = SampleConfig(duration_s=0.5, visual_dim=8, n_speakers=4)
SWITCHING = SampleConfig(switching=True, scale=0.25, duration_s=4.0, visual_dim=8, n_speakers=4)
TINY = BackboneConfig(
    kind=BackboneKind.DPRNN,
    enc_dim=8,
    kernel=16,
    stride=8,
    n_blocks=1,
    chunk_len=10,
    ssm_state_dim=4,
    hidden_dim=8,
    visual_dim=8,
)


def _rows(si_sdr_i: list[float]) -> MetricsReport:
    records = [
        {
            "sample_id": f"s{k}",
            "scenario": "CORE",
            "SI_SDR": 10.0,
            "SI_SDR_I": v,
            "SDR_I": v,
            "STOI": 0.8,
            "perfect": False,
            "region_si_sdr": "",
        }
        for k, v in enumerate(si_sdr_i)
    ]
    return build_report(records, {"model_tag": "fixture"})


class EvalkitFixture(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = Path(cls.tmp.name)
        cls.core = build_dataset(DatasetConfig(name="core", n_samples=6, sample=CORE), cls.root / "core")
        cls.switching = build_dataset(
            DatasetConfig(name="switch", n_samples=3, sample=SWITCHING), cls.root / "switch"
        )

    @classmethod
    def tearDownClass(cls) -> None:
        cls.tmp.cleanup()


class SentinelTest(EvalkitFixture):
    def test_oracle_is_perfect(self) -> None:
        for manifest in (self.core, self.switching):
            report = evaluate(OracleEstimator(), manifest)
            self.assertEqual(len(report), len(manifest))
            self.assertTrue(report.rows["perfect"].all())
            self.assertTrue((report.rows["SI_SDR"] == 300.0).all())
            self.assertEqual(false_rate(report), 0.0)

    def test_passthrough_has_zero_improvement(self) -> None:
        for manifest in (self.core, self.switching):
            report = evaluate(PassthroughEstimator(), manifest)
            self.assertEqual(len(report), len(manifest))
            self.assertTrue((report.rows["SI_SDR_I"] == 0.0).all())
            self.assertTrue((report.rows["SDR_I"] == 0.0).all())
            self.assertEqual(false_rate(report), 0.0)

    def test_switching_regions_scored_separately(self) -> None:
        report = evaluate(OracleEstimator(), self.switching)
        for cell in report.rows["region_si_sdr"]:
            self.assertEqual([float(v) for v in cell.split(";")], [300.0, 300.0])

        report = evaluate(PassthroughEstimator(), self.switching)
        record = self.switching.records[0]
        sample = load_sample(record, self.switching.root)
        regions = [float(v) for v in report.rows["region_si_sdr"][0].split(";")]
        weights = [stop - start for start, stop in sample.regions()]
        self.assertAlmostEqual(report.rows["SI_SDR"][0], np.average(regions, weights=weights), places=4)

    def test_scenario_filter(self) -> None:
        report = evaluate(OracleEstimator(), self.core, scenarios=["core"])
        self.assertEqual(report.scenarios, ["CORE"])
        with self.assertRaises(DomainError):
            evaluate(OracleEstimator(), self.core, scenarios=["switching"])


class ReportTest(EvalkitFixture):
    def test_checksum_is_deterministic(self) -> None:
        first = evaluate(PassthroughEstimator(), self.core, max_workers=1)
        second = evaluate(PassthroughEstimator(), self.core, max_workers=4)
        self.assertEqual(first.checksum(), second.checksum())
        self.assertEqual(first.meta["manifest_checksum"], self.core.checksum())
        self.assertEqual(first.meta["pairing"], "like-with-like")

    def test_save_and_load(self) -> None:
        report = evaluate(PassthroughEstimator(), self.switching)
        with tempfile.TemporaryDirectory() as tmp:
            report.save(Path(tmp) / "reports")
            loaded = MetricsReport.load(tmp)
            summary = json.loads((Path(tmp) / "reports" / "metrics.json").read_text())
        self.assertEqual(loaded.checksum(), report.checksum())
        self.assertEqual(loaded.meta, report.meta)
        self.assertEqual(summary["aggregates"]["SWITCHING"]["count"], 3)
        self.assertEqual(summary["aggregates"]["SWITCHING"]["false_rate"], 0.0)

    def test_aggregates_use_cap(self) -> None:
        report = evaluate(OracleEstimator(), self.core)
        table = report.aggregates()
        self.assertEqual(table.loc["CORE", "SI_SDR"], 300.0)
        self.assertEqual(table.loc["CORE", "count"], 6)

    def test_model_evaluation(self) -> None:
        torch.manual_seed(0)
        guidance = GuidanceConfig(strategy=Strategy.INPUT, text_dim=16, gated_dim=8)
        model = build_model(TINY, guidance)
        first = evaluate(ModelEstimator(model, "tiny-input"), self.core)
        second = evaluate(ModelEstimator(model, "tiny-input"), self.core, max_workers=1)
        self.assertEqual(first.checksum(), second.checksum())
        self.assertEqual(first.meta["model_tag"], "tiny-input")
        self.assertTrue(np.isfinite(first.rows["SI_SDR"]).all())

        torch.manual_seed(1234)
        provider = ToyLMProvider(ToyLM(LmConfig(model_dim=16, n_heads=2, n_blocks=1)))
        with_text = evaluate(ModelEstimator(model, "tiny-text", provider, use_text=True), self.core)
        # zero-initialized gate branch: the prior value does not move the estimate yet
        np.testing.assert_allclose(with_text.rows["SI_SDR"], first.rows["SI_SDR"], atol=1e-4)

    def test_visual_dim_mismatch(self) -> None:
        model = build_model(replace(TINY, visual_dim=12), GuidanceConfig())
        with self.assertRaises(ConfigError):
            evaluate(ModelEstimator(model), self.core, max_workers=1)
        with self.assertRaises(ConfigError):
            ModelEstimator(model, use_text=True)


class StatsTest(EvalkitFixture):
    def test_false_rate_counts(self) -> None:
        self.assertEqual(false_rate(_rows([-1.0] * 3 + [2.0] * 9)), 0.25)
        self.assertEqual(false_rate(_rows([0.0, 0.0, -1e-9])), 1 / 3)
        with self.assertRaises(DomainError):
            false_rate(_rows([]))
        with self.assertRaises(DomainError):
            false_rate(pd.DataFrame({"SI_SDR": [1.0]}))

    def test_relative_improvement(self) -> None:
        self.assertAlmostEqual(relative_improvement(11.478, 10.749), 6.78, delta=0.01)
        self.assertAlmostEqual(relative_improvement(10.683, 9.433), 13.25, delta=0.01)
        self.assertEqual(relative_improvement(7.5, 7.5), 0.0)
        for baseline in (0.0, -3.0, float("nan")):
            with self.assertRaises(DomainError):
                relative_improvement(1.0, baseline)

    def test_compare_reports(self) -> None:
        baseline = evaluate(PassthroughEstimator(), self.core)
        guided = evaluate(OracleEstimator(), self.core)
        (row,) = compare_reports(baseline, guided)
        self.assertEqual(row["scenario"], "CORE")
        self.assertEqual(row["guided"], 300.0)
        if row["baseline"] > 0:
            self.assertAlmostEqual(row["ri_percent"], round(relative_improvement(300.0, row["baseline"]), 2))
        else:
            self.assertIsNone(row["ri_percent"])
        self.assertEqual(compare_reports(guided, guided)[0]["ri_percent"], 0.0)

    def test_compare_rejects_other_manifest(self) -> None:
        with self.assertRaises(VerificationError):
            compare_reports(evaluate(OracleEstimator(), self.core), evaluate(OracleEstimator(), self.switching))


class CaseStudyTest(EvalkitFixture):
    def test_panels_and_sidecar(self) -> None:
        record = self.core.records[2]
        sample = load_sample(record, self.core.root)
        report = evaluate(PassthroughEstimator(), self.core)
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / "figures"
            sidecar = export_case_study([OracleEstimator(), PassthroughEstimator()], sample, out)
            self.assertEqual(len(sidecar["panels"]), 4)
            self.assertEqual(len(list(out.glob("*.png"))), 4)
            self.assertEqual((out / "oracle.png").read_bytes(), (out / "reference.png").read_bytes())
            self.assertEqual((out / "passthrough.png").read_bytes(), (out / "mixture.png").read_bytes())
            stored = json.loads((out / SIDECAR_NAME).read_text())
        self.assertTrue(stored["metrics"]["oracle"]["perfect"])
        self.assertAlmostEqual(stored["metrics"]["passthrough"]["si_sdr"], report.rows["SI_SDR"][2], places=9)

    def test_duplicate_tags(self) -> None:
        sample = load_sample(self.core.records[0], self.core.root)
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(ConfigError):
                export_case_study([OracleEstimator(), OracleEstimator()], sample, tmp)



def _sweep_means(impaired_gain: float = 0.5) -> dict[tuple[str, str], float]:
    means = {(s, t): 7.0 for s in (BASELINE, *STRATEGIES) for t in (HELD_OUT, IMPAIRED)}
    means[("intermediate", IMPAIRED)] = 7.0 + impaired_gain
    return means


class EfficacyTest(unittest.TestCase):
    def test_passing_sweep(self) -> None:
        rows = efficacy_checks(_sweep_means())
        self.assertEqual(len(rows), 5)
        self.assertTrue(all(r["passed"] for r in rows))
        self.assertEqual(rows[-1]["check"], "intermediate gain on impaired")
        self.assertAlmostEqual(rows[-1]["value"], 0.5)

    def test_weak_baseline(self) -> None:
        means = _sweep_means()
        means[(BASELINE, HELD_OUT)] = 6.0
        for strategy in STRATEGIES:
            means[(strategy, HELD_OUT)] = 6.0
        rows = efficacy_checks(means)
        self.assertEqual([r["passed"] for r in rows], [False, True, True, True, True])

    def test_strategy_tolerance(self) -> None:
        means = _sweep_means()
        means[("output", HELD_OUT)] = 7.0 - 0.2
        means[("input", HELD_OUT)] = 6.75
        passed = {r["check"]: r["passed"] for r in efficacy_checks(means)}
        self.assertTrue(passed["output on core"])
        self.assertFalse(passed["input on core"])

    def test_impaired_gain_is_strict(self) -> None:
        self.assertFalse(efficacy_checks(_sweep_means(0.0))[-1]["passed"])
        self.assertTrue(efficacy_checks(_sweep_means(0.31))[-1]["passed"])

    def test_missing_entry(self) -> None:
        means = _sweep_means()
        del means[("input", IMPAIRED)]
        with self.assertRaises(FormatError):
            efficacy_checks(means)

    def _write_sweep(self, root: Path, baseline_core: float) -> None:
        for kind in ("DPRNN", "BISSM"):
            for (strategy, test_set), value in _sweep_means().items():
                if (strategy, test_set) == (BASELINE, HELD_OUT):
                    value = baseline_core
                _rows([value]).save(root / kind / "eval" / f"{strategy}-{test_set}" / "evaluate-x" / "reports")

    def test_verify_sweep_on_disk(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            self._write_sweep(root, 7.0)
            (root / "data").mkdir()
            table = verify_efficacy(root)
            self.assertEqual(sorted(table["kind"].unique()), ["BISSM", "DPRNN"])
            self.assertEqual(len(table), 10)
            self.assertTrue((root / "efficacy.csv").is_file())

    def test_verify_sweep_failure(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            self._write_sweep(root, 5.0)
            with self.assertRaises(VerificationError):
                verify_efficacy(root)
            failed = pd.read_csv(root / "efficacy.csv")
            self.assertEqual(int((~failed["passed"]).sum()), 2)

    def test_empty_sweep(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(FormatError):
                load_sweep(tmp)


if __name__ == "__main__":
    unittest.main()
