from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import Callable, Optional, Sequence

import pandas as pd

from elegance.backbone.model import BackboneKind
from elegance.config import DEFAULT_OUT_ROOT, GRADCHECK_TOLERANCE, LOG_FORMAT, LOG_LEVEL, OUT_ROOT_ENV
from elegance.errors import ConfigError, EleganceError, VerificationError
from elegance.evalkit.case_study import export_case_study
from elegance.evalkit.evaluate import Estimator, ModelEstimator, OracleEstimator, PassthroughEstimator, evaluate
from elegance.evalkit.report import MetricsReport
from elegance.evalkit.stats import compare_reports
from elegance.experiment import ExperimentConfig, config_hash, load_experiment, to_plain, write_snapshot
from elegance.guidance.bundle import GuidanceConfig, Strategy
from elegance.lmcore.embeddings import (
    EmbeddingProvider,
    ToyLMProvider,
    coverage,
    export_embeddings,
    import_embeddings,
)
from elegance.lmcore.pretrain import load_lm
from elegance.simkit.dataset import Manifest, build_dataset, load_sample
from elegance.trainer.gradcheck import composed_objective_check
from elegance.trainer.loop import BEST_NAME, LM_NAME, load_model, pretrained_text_lm, run_training
from elegance.utils import format_db, get_time_str, install_verbosity_level, log_final, run_timestamp, write_json

logger = logging.getLogger(__name__)

RUN_SUBDIRS = ("checkpoints", "reports", "figures", "data")
INPUTS_NAME = "inputs.json"
EMBEDDINGS_NAME = "embeddings.elem"
REFERENCE_ESTIMATORS = {"oracle": OracleEstimator, "passthrough": PassthroughEstimator}

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERIFICATION = 2


class UsageExit(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors print the usage text and exit 1."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageExit(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument(
        "--config",
        type=str,
        default=None,
        help="Experiment YAML path, or a preset name under provisioning/experiments.",
    )
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Dotlist override, repeatable (e.g. --set train.lr=1.5e-4).",
    )
    common.add_argument("--seed", type=int, default=None, help="Seed for data generation and training.")
    common.add_argument(
        "--out",
        type=str,
        default=None,
        help=f"Output root for run directories (default ${OUT_ROOT_ENV} or '{DEFAULT_OUT_ROOT}').",
    )
    common.add_argument(
        "--verbosity",
        type=str,
        choices=["debug", "some", "minimal", "silent"],
        default="some",
        help="Log verbosity. debug=per-step losses, some=progress, minimal=epoch/dataset totals, silent=final summary only.",
    )

    parser = _Parser(prog="elegance", description="LM-guided audio-visual target speech extraction at desk scale.")
    verbs = parser.add_subparsers(dest="verb", required=True, metavar="VERB")
    verbs.add_parser("simulate", parents=[common], help="Generate a synthetic corpus and its manifest.")
    verbs.add_parser("train", parents=[common], help="Train one strategy; writes checkpoints/ and the training log.")
    verbs.add_parser("evaluate", parents=[common], help="Score a checkpoint (or oracle/passthrough) on a manifest.")
    verbs.add_parser("export-emb", parents=[common], help="Export toy LM embeddings of the manifest transcripts.")
    verbs.add_parser("import-emb-check", parents=[common], help="Check an imported embedding table covers the manifest.")
    grad = verbs.add_parser("gradcheck", parents=[common], help="Central-difference check of composed objectives.")
    grad.add_argument("--strategy", type=str.upper, choices=[s.value for s in Strategy], default=None)
    grad.add_argument("--kind", type=str.upper, choices=[k.value for k in BackboneKind], default=None)
    report = verbs.add_parser("report", parents=[common], help="Relative-improvement table of two evaluation runs.")
    report.add_argument("--baseline", type=Path, required=True, help="Baseline run directory or reports/ folder.")
    report.add_argument("--guided", type=Path, required=True, help="Guided run directory or reports/ folder.")
    verbs.add_parser("case-study", parents=[common], help="Mel-spectrogram panels for one sample.")
    return parser


def make_run_dir(cfg: ExperimentConfig, verb: str, out: Optional[str]) -> Path:
    """Fresh <root>/<verb>-<hash>-<timestamp>; an existing directory is never reused."""
    root = Path(out or os.environ.get(OUT_ROOT_ENV) or DEFAULT_OUT_ROOT)
    base = root / f"{verb}-{config_hash(cfg, verb)}-{run_timestamp()}"
    run_dir, k = base, 1
    while run_dir.exists():
        run_dir = base.with_name(f"{base.name}-{k}")
        k += 1
    for sub in RUN_SUBDIRS:
        (run_dir / sub).mkdir(parents=True)
    write_snapshot(cfg, run_dir)
    return run_dir


class Run:
    """One command invocation: resolved config, run directory and the inputs it consumed."""

    def __init__(self, cfg: ExperimentConfig, run_dir: Path, args: argparse.Namespace):
        self.cfg = cfg
        self.dir = run_dir
        self.args = args
        self.inputs: dict[str, object] = {}

    def record(self, key: str, value: object) -> None:
        self.inputs[key] = value
        write_json(self.dir / INPUTS_NAME, self.inputs)

    def manifest(self) -> Manifest:
        if self.cfg.manifest:
            manifest = Manifest.load(self.cfg.manifest)
            manifest.validate()
        else:
            manifest = build_dataset(self.cfg.data, self.dir / "data")
        self.record("manifest", {"path": str(manifest.path), "checksum": manifest.checksum()})
        return manifest


def checkpoint_path(source: str) -> Path:
    """A checkpoint file, a checkpoints/ folder or a training run directory."""
    path = Path(source)
    for candidate in (path, path / BEST_NAME, path / "checkpoints" / BEST_NAME):
        if candidate.is_file():
            return candidate
    raise ConfigError(f"No checkpoint at {source}")


def text_provider(guidance_cfg: GuidanceConfig, checkpoint: Path) -> EmbeddingProvider:
    if guidance_cfg.provider.startswith("imported:"):
        return import_embeddings(guidance_cfg.provider.split(":", 1)[1], expected_dim=guidance_cfg.text_dim)
    lm_path = checkpoint.parent / LM_NAME
    if not lm_path.is_file():
        raise ConfigError(f"Transcript priors need the run's text LM at {lm_path}")
    return ToyLMProvider(load_lm(lm_path))


def make_estimator(run: Run, source: str, tag: Optional[str] = None) -> Estimator:
    if source in REFERENCE_ESTIMATORS:
        return REFERENCE_ESTIMATORS[source]()
    path = checkpoint_path(source)
    model, guidance_cfg = load_model(path)
    use_text = run.cfg.evaluation.use_text or guidance_cfg.use_text_at_inference
    provider = text_provider(guidance_cfg, path) if use_text and model.prior_fusion is not None else None
    run.record(f"checkpoint:{source}", str(path))
    return ModelEstimator(model, tag or Strategy(guidance_cfg.strategy).value.lower(), provider, provider is not None)


def cmd_simulate(run: Run) -> int:
    manifest = run.manifest()
    log_final(f"✅ {len(manifest)} samples in {manifest.root}, checksum {manifest.checksum()[:12]}")
    return EXIT_OK


def cmd_train(run: Run) -> int:
    cfg = run.cfg
    manifest = run.manifest()
    trainer = run_training(
        manifest, cfg.backbone, cfg.guidance, cfg.train, cfg.lm, run.dir / "checkpoints", run_config=to_plain(cfg)
    )
    log_final(
        f"✅ {trainer.strategy.value} training done after {trainer.state.epoch} epochs, "
        f"best validation loss {trainer.state.best_val_loss:.3f}"
    )
    return EXIT_OK


def cmd_evaluate(run: Run) -> int:
    ev = run.cfg.evaluation
    if not ev.checkpoint:
        raise ConfigError("Set evaluation.checkpoint to a checkpoint, run directory, 'oracle' or 'passthrough'")
    estimator = make_estimator(run, ev.checkpoint, ev.model_tag)
    manifest = run.manifest()
    report = evaluate(estimator, manifest, ev.scenarios or None, ev.model_tag, ev.pairing, ev.max_workers)
    report.save(run.dir / "reports")
    log_final(f"✅ {report.meta['model_tag']} report\n{report.aggregates().to_string(float_format='%.3f')}")
    return EXIT_OK


def cmd_export_emb(run: Run) -> int:
    manifest = run.manifest()
    transcripts = manifest.transcripts()
    lm = pretrained_text_lm(run.cfg.lm, transcripts, run.cfg.train, run.dir / "checkpoints")
    path = export_embeddings(transcripts, ToyLMProvider(lm), run.dir / "data" / EMBEDDINGS_NAME)
    log_final(f"✅ Exported {len(transcripts)} transcript embeddings (C={lm.dim}) to {path}")
    return EXIT_OK


def cmd_import_emb_check(run: Run) -> int:
    cfg = run.cfg
    source = cfg.evaluation.embeddings
    if not source and cfg.guidance.provider.startswith("imported:"):
        source = cfg.guidance.provider.split(":", 1)[1]
    if not source:
        raise ConfigError("Set evaluation.embeddings or guidance.provider=imported:<path>")
    table = import_embeddings(source, expected_dim=cfg.guidance.text_dim)
    manifest = run.manifest()
    transcripts = manifest.transcripts()
    missing = coverage(table, transcripts)
    write_json(
        run.dir / "reports" / "embedding_coverage.json",
        {"table": str(source), "tag": table.tag, "dim": table.dim, "checked": len(transcripts), "missing": missing},
    )
    if missing:
        raise VerificationError(f"{len(missing)} of {len(transcripts)} transcripts missing from {source}")
    log_final(f"✅ {source} ({table.tag}, C={table.dim}) covers all {len(transcripts)} transcripts")
    return EXIT_OK


def cmd_gradcheck(run: Run) -> int:
    strategies = [Strategy(run.args.strategy)] if run.args.strategy else list(Strategy)
    kinds = [BackboneKind(run.args.kind)] if run.args.kind else list(BackboneKind)
    seed = run.cfg.seed or 0
    results = []
    for strategy in strategies:
        for kind in kinds:
            error = composed_objective_check(strategy, kind, seed=seed)
            results.append({"strategy": strategy.value, "kind": kind.value, "max_relative_error": error})
            print(f"{strategy.value:<12} {kind.value:<6} max relative error {error:.3e}")
    write_json(run.dir / "reports" / "gradcheck.json", {"tolerance": GRADCHECK_TOLERANCE, "results": results})
    failed = [r for r in results if not r["max_relative_error"] < GRADCHECK_TOLERANCE]
    if failed:
        raise VerificationError(f"{len(failed)} objective(s) at or above {GRADCHECK_TOLERANCE:g}: {failed}")
    log_final(f"✅ {len(results)} gradient checks below {GRADCHECK_TOLERANCE:g}")
    return EXIT_OK


def cmd_report(run: Run) -> int:
    baseline = MetricsReport.load(run.args.baseline)
    guided = MetricsReport.load(run.args.guided)
    run.record("baseline", str(run.args.baseline))
    run.record("guided", str(run.args.guided))
    table = pd.DataFrame(compare_reports(baseline, guided))
    table.to_csv(run.dir / "reports" / "ri.csv", index=False, lineterminator="\n")
    write_json(run.dir / "reports" / "ri.json", {"rows": table.to_dict(orient="records")})
    print(table[["scenario", "baseline", "guided", "ri_percent"]].to_string(index=False, float_format="%.3f"))
    log_final(f"✅ RI table of {guided.meta.get('model_tag')} over {baseline.meta.get('model_tag')} written")
    return EXIT_OK


def cmd_case_study(run: Run) -> int:
    ev = run.cfg.evaluation
    sources = list(ev.case_models) or ([ev.checkpoint] if ev.checkpoint else [])
    if not sources:
        raise ConfigError("Set evaluation.case_models (checkpoints, 'oracle' or 'passthrough')")
    manifest = run.manifest()
    if not 0 <= ev.case_sample < len(manifest):
        raise ConfigError(f"evaluation.case_sample={ev.case_sample} outside manifest of {len(manifest)}")
    estimators = []
    for k, source in enumerate(sources):
        estimator = make_estimator(run, source)
        if estimator.tag in {e.tag for e in estimators}:
            estimator.tag = f"{estimator.tag}-{k}"
        estimators.append(estimator)
    sample = load_sample(manifest.records[ev.case_sample], manifest.root)
    sidecar = export_case_study(estimators, sample, run.dir / "figures")
    scores = ", ".join(f"{tag} {format_db(m['si_sdr'], m['perfect'])}" for tag, m in sidecar["metrics"].items())
    log_final(f"✅ Case study of {sample.sample_id}: {scores}")
    return EXIT_OK


COMMANDS: dict[str, Callable[[Run], int]] = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "export-emb": cmd_export_emb,
    "import-emb-check": cmd_import_emb_check,
    "gradcheck": cmd_gradcheck,
    "report": cmd_report,
    "case-study": cmd_case_study,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageExit:
        return EXIT_ERROR

    logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
    install_verbosity_level(args.verbosity)
    start_time = time.time()
    try:
        cfg = load_experiment(args.config, args.overrides, args.seed)
        run_dir = make_run_dir(cfg, args.verb, args.out)
        logger.info(f"⏳ {args.verb} → {run_dir}")
        code = COMMANDS[args.verb](Run(cfg, run_dir, args))
    except VerificationError as e:
        logger.error(f"❌ Verification failed: {e}")
        return EXIT_VERIFICATION
    except EleganceError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return EXIT_ERROR
    except OSError as e:
        logger.error(f"❌ I/O failure: {e}")
        return EXIT_ERROR
    log_final(f"⏱️ {args.verb} finished in {get_time_str(start_time)}")
    return code
