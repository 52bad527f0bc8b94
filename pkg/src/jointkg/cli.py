"""Command-line entry points: synth, train, eval, grid.

Every run writes a manifest (resolved configuration, input hashes, package
version, root seed) sufficient to reproduce its outputs byte for byte.
Config values resolve as: config file < JOINTKG_* environment variables <
explicit command-line flags.
"""
from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import os
import sys
from pathlib import Path

from . import __version__
from .alignment import build_alignment_matrix, greedy_match, write_matches
from .errors import JointKgError, TrainError
from .evaluate import evaluate_kga, evaluate_kgc, write_results
from .kgdata import load_multikg, write_transfer_sidecar
from .synth import SynthSpec, generate, write_dataset
from .train import Checkpoint, TrainConfig, fit, resume

ENV_PREFIX = "JOINTKG_"


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, settings: dict, inputs: list[Path],
                    seed: int) -> None:
    manifest = {
        "command": command,
        "settings": settings,
        "inputs": {p.name: _sha256(p) for p in sorted(inputs)},
        "version": __version__,
        "rng_seed": seed,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def apply_env_overrides(data: dict, environ=None) -> dict:
    """Overlay JOINTKG_<FIELD> environment values onto a config dict."""
    environ = os.environ if environ is None else environ
    merged = dict(data)
    from dataclasses import fields

    for f in fields(TrainConfig):
        raw = environ.get(ENV_PREFIX + f.name.upper())
        if raw is None:
            continue
        try:
            merged[f.name] = json.loads(raw)
        except json.JSONDecodeError:
            merged[f.name] = raw
    return merged


def _resolved_config(args) -> TrainConfig:
    data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    data = apply_env_overrides(data)
    if args.ablation:
        data["ablations"] = sorted(set(data.get("ablations", [])) | set(args.ablation))
    if args.seed is not None:
        data["rng_seed"] = args.seed
    return TrainConfig.from_dict(data, require_all=True)


def cmd_synth(args) -> int:
    spec = SynthSpec(entity_count=args.entities, relation_count=args.relations,
                     mean_degree=args.mean_degree, missing_rate=args.missing_rate,
                     seed_fraction=args.seed_fraction, rng_seed=args.seed)
    result = generate(spec)
    out_dir = Path(args.out)
    written = write_dataset(result, out_dir)
    _write_manifest(out_dir, "synth", spec.to_dict(), written, spec.rng_seed)
    print(f"wrote {len(written)} files to {out_dir}")
    return 0


def _data_inputs(data_dir: Path) -> list[Path]:
    return sorted(p for p in Path(data_dir).glob("*.tsv"))


def cmd_train(args) -> int:
    config = _resolved_config(args)
    multikg = load_multikg(Path(args.data))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    log_lines: list[str] = []
    checkpoint = fit(multikg, config, log_lines=log_lines)
    checkpoint.save(out_dir / "checkpoint.json")
    (out_dir / "metrics.tsv").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    config.to_file(out_dir / "config.json")
    if config.entr_active:
        for kg in multikg.kgs:
            write_transfer_sidecar(kg, out_dir / f"transferred_{kg.id}.tsv")
    _write_manifest(out_dir, "train", config.to_dict() | {"ablations": list(config.ablations)},
                    _data_inputs(args.data), config.rng_seed)
    print(f"best epoch {checkpoint.epoch} with validation MRR {checkpoint.val_mrr:.4f}")
    return 0


def cmd_eval(args) -> int:
    checkpoint = Checkpoint.load(Path(args.checkpoint))
    multikg = load_multikg(Path(args.data))
    state = resume(checkpoint, multikg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    kgc_results = None
    kga_results = None
    if args.task in ("kgc", "both"):
        layers = state.completion_layers(tape=False)
        kgc_results = evaluate_kgc(multikg, layers.entity_values(), layers.relation_values(),
                                   split="test")
    if args.task in ("kga", "both"):
        finals, _ = state.alignment_layers_and_finals(tape=False)
        kga_results = evaluate_kga(multikg, finals.values, state.test_seeds)
        for pair in sorted(state.test_seeds):
            src, tgt, _, _ = state.pair_blocks(pair, finals.values)
            matches = greedy_match(build_alignment_matrix(src, tgt, pair))
            write_matches(matches, multikg.by_id[pair[0]].entity_labels,
                          multikg.by_id[pair[1]].entity_labels,
                          out_dir / f"matches_{pair[0]}_{pair[1]}.tsv")
    summary = write_results(out_dir / "results.tsv", kgc_results, kga_results)
    _write_manifest(out_dir, "eval", {"task": args.task,
                                      "checkpoint": _sha256(Path(args.checkpoint))},
                    _data_inputs(args.data), checkpoint.config.rng_seed)
    print(summary)
    return 0


def cmd_grid(args) -> int:
    grid_spec = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    base = json.loads(Path(args.config).read_text(encoding="utf-8"))
    base = apply_env_overrides(base)
    names = sorted(grid_spec)
    multikg_path = Path(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for index, combo in enumerate(itertools.product(*(grid_spec[n] for n in names))):
        data = dict(base)
        data.update(dict(zip(names, combo)))
        config = TrainConfig.from_dict(data, require_all=True)
        run_dir = out_dir / f"run_{index:03d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        multikg = load_multikg(multikg_path)
        log_lines: list[str] = []
        checkpoint = fit(multikg, config, log_lines=log_lines)
        checkpoint.save(run_dir / "checkpoint.json")
        (run_dir / "metrics.tsv").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
        config.to_file(run_dir / "config.json")
        rows.append((checkpoint.val_mrr, index, dict(zip(names, combo))))
        print(f"run_{index:03d}: val MRR {checkpoint.val_mrr:.4f} {dict(zip(names, combo))}")

    rows.sort(key=lambda r: (-r[0], r[1]))
    lines = ["val_mrr\trun\tsettings"]
    lines += [f"{mrr:.6f}\trun_{index:03d}\t{json.dumps(settings, sort_keys=True)}"
              for mrr, index, settings in rows]
    (out_dir / "leaderboard.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_manifest(out_dir, "grid", {"grid": grid_spec, "base": base},
                    _data_inputs(args.data), int(base.get("rng_seed", 0)))
    print(f"leaderboard written to {out_dir / 'leaderboard.tsv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jointkg",
        description="Joint multilingual KG completion and alignment toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic KG pair")
    synth.add_argument("--out", required=True)
    synth.add_argument("--entities", type=int, default=200)
    synth.add_argument("--relations", type=int, default=3)
    synth.add_argument("--mean-degree", type=float, default=4.0)
    synth.add_argument("--missing-rate", type=float, default=0.0)
    synth.add_argument("--seed-fraction", type=float, default=0.3)
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(func=cmd_synth)

    train = sub.add_parser("train", help="train and select the best checkpoint")
    train.add_argument("--config", required=True)
    train.add_argument("--data", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--ablation", action="append", default=[],
                       help="ablation flag (repeatable)")
    train.add_argument("--seed", type=int, default=None, help="override rng_seed")
    train.set_defaults(func=cmd_train)

    evaluate = sub.add_parser("eval", help="evaluate a checkpoint")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--data", required=True)
    evaluate.add_argument("--out", required=True)
    evaluate.add_argument("--task", choices=("kgc", "kga", "both"), default="both")
    evaluate.set_defaults(func=cmd_eval)

    grid = sub.add_parser("grid", help="train over a config grid and rank results")
    grid.add_argument("--grid", required=True, help="JSON file: field -> list of values")
    grid.add_argument("--config", required=True, help="base config file")
    grid.add_argument("--data", required=True)
    grid.add_argument("--out", required=True)
    grid.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except JointKgError as error:
        print(f"error [{error.module}]: {error}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
