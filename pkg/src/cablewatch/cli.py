"""Command-line entry point.

Subcommands wire the pipeline end to end: ``synth`` writes a synthetic CSV
tree from a world-spec file, ``ingest`` materializes labelled datasets,
``train`` fits one scenario's classifier, ``evaluate`` scores a checkpoint,
and ``diagnose`` turns both scenarios' test accuracies into a verdict (or
replays the bundled published tables with --replay-paper-tables).

Configuration is resolved profile -> config file -> command-line flags, and
the resolved snapshot is written into every output directory so runs are
reproducible byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from datetime import date as Date
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import diagnosis as diag_mod
from . import synth as synth_mod
from .errors import CableWatchError, UsageError
from .model import ModelConfig, build_model, load_checkpoint
from .training import (TrainConfig, eval_result_to_dict, evaluate, save_run,
                       train)

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "CABLEWATCH_OUT"

# Paper-faithful defaults vs a laptop-scale profile with the same
# architecture shape. Only keys that differ from the dataclass defaults are
# listed; resolve_config() merges them over ModelConfig/TrainConfig.
PROFILES = {
    "paper": {
        "model": {},
        "train": {},
        "data": {"segment_length": 1600},
    },
    "desk": {
        "model": {
            "conv_filters": [16, 32, 16],
            "conv_kernel_widths": [8, 5, 3],
            "lstm_cells": 4,
            "dropout_rate": 0.5,
            "standardize": True,
        },
        "train": {
            "epochs": 80,
            "batch_size": 64,
            "plateau_window": 15,
        },
        "data": {"segment_length": 200},
    },
}

CONFIG_SECTIONS = ("model", "train", "data", "diagnosis")


def default_config(profile="paper"):
    if profile not in PROFILES:
        raise UsageError(f"unknown profile {profile!r} (expected desk or paper)")
    cfg = {
        "profile": profile,
        "model": {},
        "train": {},
        "data": {
            "segment_length": 1600,
            "test_start": None,
            "split_seed": 0,
            "val_fraction": 0.2,
            "iqr_multiplier": 5.0,
            "failure_fraction": 0.05,
        },
        "diagnosis": {"tau_rel": 0.6, "tau_abs": 0.45},
    }
    for section, values in PROFILES[profile].items():
        cfg[section].update(copy.deepcopy(values))
    return cfg


def resolve_config(args):
    """Merge profile defaults, the --config file and explicit flags."""
    file_cfg = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(CONFIG_SECTIONS) - {"profile"}
        if unknown:
            raise UsageError(f"unknown config sections: {sorted(unknown)}")

    profile = getattr(args, "profile", None) or file_cfg.get("profile") or "paper"
    cfg = default_config(profile)
    for section in CONFIG_SECTIONS:
        cfg[section].update(file_cfg.get(section, {}))

    if getattr(args, "seed", None) is not None:
        cfg["train"]["seed"] = args.seed
        cfg["data"]["split_seed"] = args.seed
    if getattr(args, "test_start", None):
        cfg["data"]["test_start"] = args.test_start
    return cfg


def resolve_out_dir(args, default_name):
    if getattr(args, "out", None):
        return Path(args.out)
    root = os.environ.get(OUTPUT_ROOT_ENV, "runs")
    return Path(root) / default_name


def write_snapshot(out_dir, cfg, command, extra=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot = {"command": command, "config": cfg}
    if extra:
        snapshot.update(extra)
    path = out_dir / "config_snapshot.json"
    path.write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n")
    return path


def _model_config(cfg, num_classes):
    values = dict(cfg["model"])
    for key in ("conv_filters", "conv_kernel_widths"):
        if key in values:
            values[key] = tuple(values[key])
    return ModelConfig(num_classes=num_classes,
                       input_length=cfg["data"]["segment_length"], **values)


def _train_config(cfg):
    return TrainConfig(**cfg["train"])


def _parse_test_start(cfg):
    raw = cfg["data"].get("test_start")
    if raw is None:
        return Date.max  # nothing is post-damage
    return Date.fromisoformat(raw)


def _prepare(cfg, data_dir, scenario):
    return data_mod.prepare_dataset(
        data_dir,
        scenario,
        segment_length=cfg["data"]["segment_length"],
        test_start=_parse_test_start(cfg),
        split_seed=cfg["data"]["split_seed"],
        val_fraction=cfg["data"]["val_fraction"],
        iqr_multiplier=cfg["data"]["iqr_multiplier"],
        failure_fraction=cfg["data"]["failure_fraction"],
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args):
    spec, faults = synth_mod.load_world_spec(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    out_dir = resolve_out_dir(args, "synth")
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = synth_mod.write_world(spec, faults, out_dir)
    manifest = {
        "world": synth_mod.world_to_dict(spec, faults),
        "files": [
            {"path": p.name,
             "sha256": hashlib.sha256(p.read_bytes()).hexdigest()}
            for p in paths
        ],
    }
    (out_dir / "world_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(paths)} day files to {out_dir}")
    return 0


def cmd_ingest(args):
    cfg = resolve_config(args)
    out_dir = resolve_out_dir(args, "ingest")
    write_snapshot(out_dir, cfg, "ingest", {"data": str(args.data)})
    scenarios = [args.scenario] if args.scenario else ["forces", "ratios"]
    for scenario in scenarios:
        dataset, _ = _prepare(cfg, args.data, scenario)
        data_mod.write_manifest(
            dataset, out_dir / f"manifest_{scenario}.json",
            input_files=[p.name for p in sorted(Path(args.data).rglob("*.csv"))],
            policies={"iqr_multiplier": cfg["data"]["iqr_multiplier"],
                      "failure_fraction": cfg["data"]["failure_fraction"]},
        )
        data_mod.write_stable_npz(out_dir / f"dataset_{scenario}.npz", {
            "x": dataset.x, "y": dataset.y, "split": dataset.split,
            "class_names": np.array(dataset.class_names),
        })
        counts = dataset.counts()
        totals = {k: sum(v.values()) for k, v in counts.items()}
        print(f"{scenario}: {len(dataset.class_names)} classes, segments {totals}")
    return 0


def cmd_train(args):
    cfg = resolve_config(args)
    scenario = args.scenario or "forces"
    out_dir = resolve_out_dir(args, "train") / scenario
    write_snapshot(out_dir, cfg, "train",
                   {"data": str(args.data), "scenario": scenario})

    dataset, _ = _prepare(cfg, args.data, scenario)
    train_x, train_y = dataset.arrays("train")
    val_x, val_y = dataset.arrays("val")
    model_cfg = _model_config(cfg, dataset.num_classes)
    params = build_model(model_cfg, seed=cfg["train"].get("seed", 0))
    result = train(params, train_x, train_y, _train_config(cfg),
                   val_x=val_x if len(val_y) else None,
                   val_y=val_y if len(val_y) else None)

    eval_results = {}
    for split in ("test_pre", "test_post"):
        x, y = dataset.arrays(split)
        if len(y):
            eval_results[split] = evaluate(result.best_params, x, y,
                                           num_classes=dataset.num_classes)
    save_run(out_dir, result, result.best_params, _train_config(cfg),
             eval_results=eval_results, class_names=dataset.class_names,
             extra_config={"scenario": scenario, "profile": cfg["profile"]},
             checkpoint_metadata={"scenario": scenario,
                                  "class_names": dataset.class_names,
                                  "excluded": dataset.excluded})
    last = result.history[-1] if result.history else None
    if last is not None:
        print(f"{scenario}: best val acc {result.best_val_acc:.3f} "
              f"at epoch {result.best_epoch} ({len(result.history)} epochs run)")
    for split, ev in eval_results.items():
        print(f"{scenario}: {split} accuracy {ev.overall_accuracy:.3f}")
    return 0


def _evaluate_checkpoint(checkpoint_path, cfg, data_dir, scenario, split):
    params, meta = load_checkpoint(checkpoint_path)
    dataset, _ = _prepare(cfg, data_dir, scenario)
    x, y = dataset.arrays(split)
    if not len(y):
        raise UsageError(f"split {split!r} has no segments for scenario {scenario!r}")
    trained_names = meta.get("class_names")
    if trained_names and list(trained_names) != dataset.class_names:
        raise UsageError(
            "checkpoint classes do not match the dataset: "
            f"{trained_names} vs {dataset.class_names}"
        )
    result = evaluate(params, x, y, num_classes=dataset.num_classes)
    return result, dataset, meta


def cmd_evaluate(args):
    cfg = resolve_config(args)
    scenario = args.scenario or "forces"
    result, dataset, _ = _evaluate_checkpoint(
        args.checkpoint, cfg, args.data, scenario, args.split)
    payload = eval_result_to_dict(result, class_names=dataset.class_names)
    payload.update({"scenario": scenario, "split": args.split,
                    "excluded": dataset.excluded})
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"eval_{scenario}_{args.split}.json").write_text(text)
    sys.stdout.write(text)
    return 0


def _diagnose_scenario(cfg, data_dir, scenario, checkpoint_path):
    result, dataset, _ = _evaluate_checkpoint(
        checkpoint_path, cfg, data_dir, scenario, "test_post")
    per_class = {
        name: (None if np.isnan(result.per_class_accuracy[i])
               else float(result.per_class_accuracy[i]))
        for i, name in enumerate(dataset.class_names)
    }
    suspects = diag_mod.flag_suspects(
        per_class, dataset.excluded,
        tau_rel=cfg["diagnosis"]["tau_rel"],
        tau_abs=cfg["diagnosis"]["tau_abs"],
        scenario=scenario,
    )
    return suspects, float(result.overall_accuracy)


def cmd_diagnose(args):
    out_dir = resolve_out_dir(args, "diagnose")

    if args.replay_paper_tables:
        report = diag_mod.replay_published_tables()
    else:
        cfg = resolve_config(args)
        if not args.data:
            raise UsageError("diagnose needs --data (or --replay-paper-tables)")
        checkpoints = {}
        for scenario, flag in (("forces", args.checkpoint_forces),
                               ("ratios", args.checkpoint_ratios)):
            path = Path(flag) if flag else (
                Path(args.run) / scenario / "checkpoint.npz" if args.run else None)
            if path and path.exists():
                checkpoints[scenario] = path
        if not checkpoints:
            raise UsageError(
                "no checkpoints found; pass --run DIR or --checkpoint-forces/"
                "--checkpoint-ratios"
            )
        missing = [s for s in ("forces", "ratios") if s not in checkpoints]
        if missing:
            logger.warning(
                "single-scenario mode: no %s checkpoint; verdict will be "
                "inconclusive", missing[0],
            )

        suspect_sets = {}
        overall = {}
        for scenario, path in checkpoints.items():
            suspect_sets[scenario], overall[scenario] = _diagnose_scenario(
                cfg, args.data, scenario, path)

        if len(suspect_sets) == 2:
            verdict = diag_mod.combine_scenarios(
                suspect_sets["forces"], suspect_sets["ratios"])
        else:
            only = next(iter(suspect_sets.values()))
            verdict = diag_mod.Verdict(
                status="inconclusive",
                s1_suspects=only.names() if only.scenario == "forces" else [],
                s2_suspects=only.names() if only.scenario == "ratios" else [],
                reason=f"single-scenario mode ({only.scenario}): "
                       "pair confirmation unavailable",
            )
        report = diag_mod.build_report(
            suspect_sets.get("forces"), suspect_sets.get("ratios"), verdict,
            thresholds=cfg["diagnosis"],
            provenance={"data": str(args.data),
                        "checkpoints": {k: str(v) for k, v in checkpoints.items()}},
            overall=overall,
        )

    out_dir.mkdir(parents=True, exist_ok=True)
    structured = diag_mod.render_report(report)
    human = diag_mod.render_report(report, format="human")
    (out_dir / "report.json").write_text(structured)
    (out_dir / "report.txt").write_text(human)
    sys.stdout.write(human)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="cablewatch",
        description="Detect damaged stay cables from monitored cable forces.",
    )
    parser.add_argument("--verbose", "-v", action="store_true",
                        help="log pipeline details to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--profile", choices=["desk", "paper"],
                        help="model/training scale (default paper)")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--out", help=f"output directory (default under "
                                      f"${OUTPUT_ROOT_ENV} or ./runs)")

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic bridge CSV tree")
    p.add_argument("--spec", required=True, help="world-spec JSON file")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common],
                       help="build labelled datasets from a CSV tree")
    p.add_argument("--data", required=True, help="directory of day CSV files")
    p.add_argument("--scenario", choices=["forces", "ratios"],
                   help="build one scenario (default both)")
    p.add_argument("--test-start", help="first post-damage date (ISO)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", parents=[common],
                       help="train one scenario's classifier")
    p.add_argument("--data", required=True, help="directory of day CSV files")
    p.add_argument("--scenario", choices=["forces", "ratios"], default="forces")
    p.add_argument("--test-start", help="first post-damage date (ISO)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common],
                       help="score a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="directory of day CSV files")
    p.add_argument("--scenario", choices=["forces", "ratios"], default="forces")
    p.add_argument("--split", default="test_post",
                   choices=["train", "val", "test_pre", "test_post"])
    p.add_argument("--test-start", help="first post-damage date (ISO)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("diagnose", parents=[common],
                       help="combine both scenarios into a damage verdict")
    p.add_argument("--data", help="directory of day CSV files")
    p.add_argument("--run", help="run directory holding <scenario>/checkpoint.npz")
    p.add_argument("--checkpoint-forces", help="scenario-1 checkpoint path")
    p.add_argument("--checkpoint-ratios", help="scenario-2 checkpoint path")
    p.add_argument("--test-start", help="first post-damage date (ISO)")
    p.add_argument("--replay-paper-tables", action="store_true",
                   help="run the decision logic over the bundled published "
                        "accuracy tables instead of model output")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CableWatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
