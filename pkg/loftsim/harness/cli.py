"""
loftsim command line

Subcommands:
- simulate       run one scenario set and export occupancy, summary and plan
- recon          infer match fields and the idle timeout against a simulated network
- build-dataset  run every configured set without the defense and write the labelled dataset
- train          feature selection plus a model trained on the whole dataset
- evaluate       the five stratified train/test splits
- full           recon, dataset, selection, evaluation and a defended run end to end

Usage:
    loftsim simulate --set 1 --detector --out out/
    loftsim full --paper-scale --seed 7
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from sklearn.model_selection import train_test_split

from loftsim import __version__
from loftsim.errors import ConfigurationError, LoftSimError
from loftsim.flora.boosting import TrainedModel, train_classifier
from loftsim.flora.features import FEATURE_COLUMNS
from loftsim.flora.selector import SelectionResult, rfecv_select
from loftsim.harness.config import ScenarioConfig, derive_seed, env_log_level, env_out_dir, load_config
from loftsim.harness.dataset import build_dataset, class_counts, load_dataset
from loftsim.harness.evaluate import evaluate_splits
from loftsim.harness.export import export_artifacts, write_json
from loftsim.harness.scenario import ExperimentResult, run_scenario
from loftsim.netsim import build_topology
from loftsim.recon.probing import (
    MUTABLE_FIELDS,
    ReconReport,
    SimulatorProber,
    build_report,
    estimate_idle_timeout,
    infer_match_fields,
)

logger = logging.getLogger("Harness")

SELECTION_ROWS = 4000


# ============ Commands ============

def _scenario_config(args: argparse.Namespace) -> ScenarioConfig:
    overrides = {
        "seed": args.seed,
        "profile": "paper" if args.paper_scale else None,
        "record_trace": True if getattr(args, "trace", False) else None,
    }
    cfg = load_config(args.config, overrides)
    set_index = getattr(args, "set", None)
    if set_index is not None:
        cfg = cfg.for_set(set_index)
    if getattr(args, "attack_set", None) is not None:
        cfg = cfg.for_set(cfg.set_index, attack_set_index=args.attack_set)
    if getattr(args, "detector", False):
        cfg = cfg.for_set(cfg.set_index, attack_set_index=cfg.attack_index, detector_enabled=True)
    if getattr(args, "no_attack", False):
        cfg = cfg.for_set(cfg.set_index, attack_set_index=cfg.attack_index, attack_enabled=False)
    return cfg


def _load_model(path: Optional[str]) -> Optional[TrainedModel]:
    if path is None:
        return None
    try:
        return TrainedModel.from_json(Path(path).read_text())
    except OSError as e:
        raise ConfigurationError(f"Cannot read model {path}: {e}")


def dataset_runs(cfg: ScenarioConfig) -> List[ExperimentResult]:
    results = []
    for set_index in cfg.sets:
        run_cfg = cfg.for_set(set_index, detector_enabled=False, attack_enabled=True)
        results.append(run_scenario(run_cfg))
    return results


def _select(dataset: pd.DataFrame, cfg: ScenarioConfig) -> SelectionResult:
    frame = dataset
    if len(frame) > SELECTION_ROWS:
        frame, _ = train_test_split(frame, train_size=SELECTION_ROWS, stratify=frame["label"],
                                    random_state=derive_seed(cfg.seed, 5))
    return rfecv_select(
        frame[FEATURE_COLUMNS],
        frame["label"].to_numpy(dtype=int),
        cfg.classifier.selector_params(derive_seed(cfg.seed, 6)),
        folds=cfg.classifier.folds,
    )


def run_recon(cfg: ScenarioConfig, src_host: str, dst_host: str, repetitions: int, alpha: float) -> ReconReport:
    spec = cfg.topology.build(cfg.capacity)
    sim = build_topology(spec, derive_seed(cfg.seed, 7))
    prober = SimulatorProber(sim, src_host, dst_host)
    probe = infer_match_fields(prober, MUTABLE_FIELDS, repetitions=repetitions)
    timeout = estimate_idle_timeout(prober, sorted(probe.inferred_fields), alpha=alpha)
    return build_report(probe, timeout, repetitions)


def cmd_simulate(args: argparse.Namespace, out_dir: Path) -> dict:
    cfg = _scenario_config(args)
    result = run_scenario(cfg, model=_load_model(args.model), collect_features=False)
    files = export_artifacts(out_dir, result=result)
    return {"summary": result.summary(), "files": sorted(files)}


def cmd_recon(args: argparse.Namespace, out_dir: Path) -> dict:
    cfg = _scenario_config(args)
    report = run_recon(cfg, args.src, args.dst, args.repetitions, args.alpha)
    export_artifacts(out_dir, recon=report)
    return report.model_dump()


def cmd_build_dataset(args: argparse.Namespace, out_dir: Path) -> dict:
    cfg = _scenario_config(args)
    dataset = build_dataset(dataset_runs(cfg), balance_classes=cfg.balance_classes, seed=cfg.seed)
    export_artifacts(out_dir, dataset=dataset)
    return {"rows": len(dataset), "class_counts": class_counts(dataset)}


def cmd_train(args: argparse.Namespace, out_dir: Path) -> dict:
    cfg = _scenario_config(args)
    dataset = load_dataset(Path(args.dataset))
    features = list(FEATURE_COLUMNS)
    extra: Dict[str, Path] = {}
    if not args.no_select:
        selection = _select(dataset, cfg)
        features = selection.selected
        extra["selection"] = write_json(
            {"selected": selection.selected, "ranking": selection.ranking,
             "importances": selection.importances,
             "cv_scores": {str(k): v for k, v in selection.cv_scores.items()}},
            out_dir / "selection.json",
        )
    model = train_classifier(
        dataset[features].to_numpy(dtype=float),
        dataset["label"].to_numpy(dtype=int),
        cfg.classifier.params(derive_seed(cfg.seed, 4)),
        feature_names=features,
    )
    export_artifacts(out_dir, model=model, extra=extra)
    return {"features": features, "trees": model.tree_count, "importances": model.importances}


def cmd_evaluate(args: argparse.Namespace, out_dir: Path) -> dict:
    cfg = _scenario_config(args)
    dataset = load_dataset(Path(args.dataset))
    features = args.features.split(",") if args.features else FEATURE_COLUMNS
    evaluation = evaluate_splits(dataset, cfg.classifier.params(derive_seed(cfg.seed, 4)), features, seed=cfg.seed)
    export_artifacts(out_dir, evaluation=evaluation, model=evaluation.best_model)
    return evaluation.to_dict()


def cmd_full(args: argparse.Namespace, out_dir: Path) -> dict:
    cfg = _scenario_config(args)
    recon = run_recon(cfg, args.src, args.dst, args.repetitions, args.alpha)

    baselines = dataset_runs(cfg)
    dataset = build_dataset(baselines, balance_classes=cfg.balance_classes, seed=cfg.seed)
    selection = _select(dataset, cfg)
    evaluation = evaluate_splits(dataset, cfg.classifier.params(derive_seed(cfg.seed, 4)),
                                 selection.selected, seed=cfg.seed)

    extra: Dict[str, Path] = {
        "selection": write_json({"selected": selection.selected, "ranking": selection.ranking,
                                  "importances": selection.importances}, out_dir / "selection.json"),
    }
    for result in baselines:
        prefix = f"set{result.config.set_index}_nodefense_"
        extra.update(export_artifacts(out_dir, result=result, prefix=prefix))

    defended_cfg = cfg.for_set(cfg.set_index, attack_set_index=cfg.attack_index, detector_enabled=True)
    defended = run_scenario(defended_cfg, model=evaluation.best_model, collect_features=False)
    extra.pop("manifest", None)
    files = export_artifacts(out_dir, result=defended, dataset=dataset, evaluation=evaluation, recon=recon,
                             model=evaluation.best_model, prefix=f"set{cfg.set_index}_flora_", extra=extra)
    return {
        "recon": recon.model_dump(),
        "dataset": class_counts(dataset),
        "selected": selection.selected,
        "best_split": evaluation.best.to_dict(),
        "defended": defended.summary(),
        "files": sorted(files),
    }


COMMANDS = {
    "simulate": cmd_simulate,
    "recon": cmd_recon,
    "build-dataset": cmd_build_dataset,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "full": cmd_full,
}


# ============ Parser ============

def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="TOML scenario file")
    parser.add_argument("--seed", type=int, help="Master seed (overrides LOFTSIM_SEED)")
    parser.add_argument("--out", type=Path, help="Output directory (overrides LOFTSIM_OUT_DIR)")
    parser.add_argument("--paper-scale", action="store_true", help="1000 s sets, attack at 300 s, unscaled ANP")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING (overrides LOFTSIM_LOG_LEVEL)")


def _recon_options(parser: argparse.ArgumentParser):
    parser.add_argument("--src", default="h1", help="Probing host")
    parser.add_argument("--dst", default="h7", help="Probed host")
    parser.add_argument("--repetitions", type=int, default=5)
    parser.add_argument("--alpha", type=float, default=0.05)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loftsim", description="LOFT attack and FloRa defense simulator")
    parser.add_argument("--version", action="version", version=f"loftsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Run one scenario set")
    _common(simulate)
    simulate.add_argument("--set", type=int, choices=[1, 2, 3, 4], help="Background and attack set")
    simulate.add_argument("--attack-set", type=int, choices=[1, 2, 3, 4], help="Attack set, when different")
    simulate.add_argument("--detector", action="store_true", help="Enable the defense")
    simulate.add_argument("--no-attack", action="store_true", help="Background traffic only")
    simulate.add_argument("--model", help="Model JSON for the detector; trained on the fly when absent")
    simulate.add_argument("--trace", action="store_true", help="Also export the packet trace")

    recon = sub.add_parser("recon", help="Infer match fields and idle timeout")
    _common(recon)
    _recon_options(recon)

    dataset = sub.add_parser("build-dataset", help="Run all sets and write the labelled dataset")
    _common(dataset)

    train = sub.add_parser("train", help="Select features and train on a dataset")
    _common(train)
    train.add_argument("--dataset", required=True, help="Dataset CSV")
    train.add_argument("--no-select", action="store_true", help="Train on all 12 features")

    evaluate = sub.add_parser("evaluate", help="Evaluate the five train/test splits")
    _common(evaluate)
    evaluate.add_argument("--dataset", required=True, help="Dataset CSV")
    evaluate.add_argument("--features", help="Comma separated feature subset")

    full = sub.add_parser("full", help="End to end run")
    _common(full)
    _recon_options(full)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or env_log_level()).upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )
    out_dir = Path(args.out or env_out_dir())
    try:
        payload = COMMANDS[args.command](args, out_dir)
    except (LoftSimError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(json.dumps({"error": type(e).__name__, "message": str(e), "command": args.command}), file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception(f"{args.command} failed unexpectedly")
        print(json.dumps({"error": type(e).__name__, "message": str(e), "command": args.command}), file=sys.stderr)
        return 1
    print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
