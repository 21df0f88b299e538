"""Command-line entry point wiring the engine into reproducible runs.

Every command writes its artifacts under --out and echoes the fully
resolved configuration to <out>/config.json, so a run directory is
sufficient to reproduce the run. Flag values override config-file
values. Exit codes: 0 success, 1 data error (single machine-parsable
line on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .concepts import build_concept_bank, load_concept_bank, save_concept_bank
from .errors import CCLIError
from .evaluation import (
    SWEEP_PARAMS,
    evaluate,
    evaluate_domain_shift,
    evaluate_zero_shot,
    sweep,
    write_sweep_csv,
)
from .feature_store import SynthSpec, gen_synth, read_bundle, sample_episode, write_bundle
from .model import Hyperparams
from .trainer import (
    TrainConfig,
    effective_hyperparams,
    load_checkpoint,
    save_checkpoint,
    train,
)

_HP_FLAGS = ("alpha", "lambda", "delta", "eta", "beta", "tau", "top_i")
_TRAIN_FLAGS = (
    "epochs",
    "batch_size",
    "lr",
    "lr_min",
    "seed",
    "freeze_w3",
    "disable_ci",
    "disable_ta",
    "disable_description",
    "disable_class",
    "w2_init",
    "weight_decay",
)


def _echo_config(out_dir: str, payload: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, ensure_ascii=False)
        f.write("\n")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-min", type=float, dest="lr_min")
    p.add_argument("--seed", type=int)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--w2-init", choices=("top1", "uniform"), dest="w2_init")
    p.add_argument("--freeze-w3", action="store_true", default=None, dest="freeze_w3")
    p.add_argument("--disable-ci", action="store_true", default=None, dest="disable_ci")
    p.add_argument("--disable-ta", action="store_true", default=None, dest="disable_ta")
    p.add_argument(
        "--disable-description-concepts",
        action="store_true",
        default=None,
        dest="disable_description",
    )
    p.add_argument(
        "--disable-class-concepts",
        action="store_true",
        default=None,
        dest="disable_class",
    )
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", type=float, dest="lam")
    p.add_argument("--delta", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--top-i", type=int, dest="top_i")
    p.add_argument("--shots", type=int, help="support shots per class")


def _resolve_train_config(
    args: argparse.Namespace,
) -> tuple[TrainConfig, int, set[str]]:
    """Merge JSON config (if any) with flag overrides.

    Returns (cfg, shots, explicit) where ``explicit`` names the keys the
    user actually set via file or flag (so defaults can be distinguished
    from choices).
    """
    file_cfg: dict = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as f:
            file_cfg = json.load(f)
    explicit = set(file_cfg.keys())

    hp_d = dict(file_cfg.get("hyperparams", {}))
    for flag in _HP_FLAGS:
        attr = "lam" if flag == "lambda" else flag
        val = getattr(args, attr, None)
        if val is not None:
            hp_d[flag] = val
    hp = Hyperparams.from_json_dict(hp_d)

    opt_d = dict(file_cfg.get("optimizer", {}))
    if getattr(args, "weight_decay", None) is not None:
        opt_d["weight_decay"] = args.weight_decay

    cfg_d = {
        k: v
        for k, v in file_cfg.items()
        if k not in ("hyperparams", "optimizer", "shots")
    }
    for flag in _TRAIN_FLAGS:
        if flag == "weight_decay":
            continue
        val = getattr(args, flag, None)
        if val is not None:
            cfg_d[flag] = val
            explicit.add(flag)
    cfg_d["hyperparams"] = hp.to_json_dict()
    cfg_d["optimizer"] = opt_d
    cfg = TrainConfig.from_json_dict(cfg_d)

    shots = getattr(args, "shots", None)
    if shots is not None:
        explicit.add("shots")
    else:
        shots = int(file_cfg.get("shots", 16))
    return cfg, shots, explicit


def cmd_gen_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        num_classes=args.classes,
        dim=args.dim,
        num_concepts=args.concepts,
        train_per_class=args.train_per_class,
        test_per_class=args.test_per_class,
        sigma=args.sigma,
        seed=args.seed,
    )
    train_b, test_b = gen_synth(spec)
    write_bundle(train_b, os.path.join(args.out, "train"))
    write_bundle(test_b, os.path.join(args.out, "test"))
    _echo_config(args.out, {"command": "gen-synth", **dataclasses.asdict(spec)})
    print(f"wrote {os.path.join(args.out, 'train')} and {os.path.join(args.out, 'test')}")
    return 0


def cmd_learn_concepts(args: argparse.Namespace) -> int:
    bundle = read_bundle(args.bundle)
    episode = sample_episode(bundle, args.shots, args.seed)
    bank = build_concept_bank(bundle, episode, args.top_i)
    save_concept_bank(bank, args.out)
    _echo_config(
        args.out,
        {
            "command": "learn-concepts",
            "bundle": args.bundle,
            "shots": args.shots,
            "seed": args.seed,
            "top_i": args.top_i,
        },
    )
    print(f"wrote concept bank with {bank.num_concepts} concepts to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    bundle = read_bundle(args.bundle)
    bank = load_concept_bank(args.concepts)
    cfg, shots, explicit = _resolve_train_config(args)
    # Reuse the concept bank's episode unless the user chose otherwise.
    prov = bank.provenance
    if "shots" not in explicit and "shots" in prov:
        shots = int(prov["shots"])
    episode_seed = cfg.seed
    if "seed" not in explicit and "episode_seed" in prov:
        episode_seed = int(prov["episode_seed"])
        cfg = dataclasses.replace(cfg, seed=episode_seed)

    episode = sample_episode(bundle, shots, episode_seed)
    params, log = train(bundle, episode, bank, cfg)

    ckpt_dir = os.path.join(args.out, "checkpoint")
    save_checkpoint(
        ckpt_dir,
        params,
        cfg.hyperparams,
        init_provenance={
            "concepts": args.concepts,
            "bundle": bundle.identity(),
            "episode_seed": episode_seed,
            "shots": shots,
            "w2_init": cfg.w2_init,
        },
        train_config=cfg.to_json_dict(),
    )
    log.write_jsonl(os.path.join(args.out, "trainlog.jsonl"))
    _echo_config(
        args.out,
        {
            "command": "train",
            "bundle": args.bundle,
            "concepts": args.concepts,
            "shots": shots,
            **cfg.to_json_dict(),
        },
    )
    print(
        f"trained {cfg.epochs} epochs ({log.final_step} steps), "
        f"final loss {log.epoch_loss[-1]:.4f}, "
        f"train acc {log.epoch_train_acc[-1]:.2f}%"
    )
    print(f"checkpoint: {ckpt_dir}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    params, hp, sidecar = load_checkpoint(args.checkpoint)
    bundle = read_bundle(args.bundle)
    cfg = TrainConfig.from_json_dict(sidecar["train_config"]) if sidecar.get(
        "train_config"
    ) else TrainConfig(hyperparams=hp)
    hp_eff = effective_hyperparams(cfg)
    report = evaluate(params, hp_eff, bundle, config_echo={"checkpoint": args.checkpoint})
    os.makedirs(args.out, exist_ok=True)
    report.write_json(os.path.join(args.out, "report.json"))
    print(report.to_text())

    if args.target:
        targets = [read_bundle(t) for t in args.target]
        shift = evaluate_domain_shift(
            params, hp_eff, report, targets, bundle.class_names
        )
        with open(
            os.path.join(args.out, "domain_shift.json"), "w", encoding="utf-8"
        ) as f:
            json.dump(shift.to_json_dict(), f, indent=2, ensure_ascii=False)
            f.write("\n")
        for t in shift.targets:
            print(f"target {t.bundle_id}: {t.overall_accuracy_pct:.2f}%")
        print(f"OOD average: {shift.ood_average_pct:.2f}%")
    _echo_config(
        args.out,
        {
            "command": "eval",
            "checkpoint": args.checkpoint,
            "bundle": args.bundle,
            "targets": list(args.target or ()),
        },
    )
    return 0


def cmd_zeroshot(args: argparse.Namespace) -> int:
    bundle = read_bundle(args.bundle)
    report = evaluate_zero_shot(bundle, args.tau)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        report.write_json(os.path.join(args.out, "report.json"))
        _echo_config(
            args.out,
            {"command": "zeroshot", "bundle": args.bundle, "tau": args.tau},
        )
    print(f"zero-shot accuracy: {report.overall_accuracy_pct:.2f}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    train_b = read_bundle(args.bundle)
    test_b = read_bundle(args.test_bundle)
    cfg, shots, _ = _resolve_train_config(args)
    values = [float(x) for x in args.values.split(",") if x.strip()]
    rows = sweep(args.param, values, train_b, test_b, cfg, shots, cfg.seed)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "sweep.csv")
    write_sweep_csv(rows, csv_path)
    _echo_config(
        args.out,
        {
            "command": "sweep",
            "param": args.param,
            "values": values,
            "bundle": args.bundle,
            "test_bundle": args.test_bundle,
            "shots": shots,
            **cfg.to_json_dict(),
        },
    )
    for row in rows:
        print(f"{row.param}={row.value:g}: {row.accuracy_pct:.2f}%")
    print(f"wrote {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccli",
        description="Concept learning and inference over embedding bundles",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic train/test bundle pair")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--concepts", type=int, required=True)
    p.add_argument("--train-per-class", type=int, required=True, dest="train_per_class")
    p.add_argument("--test-per-class", type=int, required=True, dest="test_per_class")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("learn-concepts", help="mine concepts from a support episode")
    p.add_argument("--bundle", required=True)
    p.add_argument("--shots", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-i", type=int, default=5, dest="top_i")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_learn_concepts)

    p = sub.add_parser("train", help="train on a support episode")
    p.add_argument("--bundle", required=True)
    p.add_argument("--concepts", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one or more bundles")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--target", action="append", help="domain-shift target bundle")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("zeroshot", help="zero-shot baseline accuracy")
    p.add_argument("--bundle", required=True)
    p.add_argument("--tau", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_zeroshot)

    p = sub.add_parser("sweep", help="hyper-parameter sweep (full train+eval per value)")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--bundle", required=True, help="training bundle")
    p.add_argument("--test-bundle", required=True, dest="test_bundle")
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CCLIError as e:
        msg = str(e).replace("\n", " ")
        print(f"error: {type(e).__name__}: {msg}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
