"""Command-line front end.

Subcommands: synth, train, evaluate, ablate, params.  Exit codes: 0 on
success, 1 on runtime failure (diagnostic on stderr), 2 on usage errors.
Options fall back to a JSON config file (--config) and then to built-in
defaults, so every run is fully specified; outputs carry no timestamps so
repeat runs are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import (
    SPLITS,
    SyntheticSpec,
    dataset_sequences,
    generate_synthetic,
    load_manifest,
)
from .metrics import render_report, report_table
from .model import (
    ModelConfig,
    ModelVariant,
    count_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .train import TrainConfig, predict_records, train

__all__ = ["REFERENCE_BUDGETS", "dispatch", "main", "run_ablation_grid"]

# Reference parameter budgets (millions) for the full-scale profile
# (d_w=768, h=12, d_v=512, d_a=128, d_m=21); params fails beyond 1%.
REFERENCE_BUDGETS = {
    "tf_v": 10.0,
    "df_xm": 19.4,
    "df_xs": 19.4,
    "df_xm_xs": 36.0,
    "bert": 17.1,
}

_VARIANT_NAMES = [v.value for v in ModelVariant]


def _variant_arg(value: str) -> str:
    if value.lower() not in _VARIANT_NAMES:
        raise argparse.ArgumentTypeError(
            f"unknown variant {value!r}; choose from {', '.join(_VARIANT_NAMES)}"
        )
    return value.lower()


def _positive_int(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def _int_list(value: str) -> list[int]:
    try:
        return [int(x) for x in value.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {value!r}") from None


def _variant_list(value: str) -> list[str]:
    return [_variant_arg(x) for x in value.split(",") if x.strip()]


def _plants_arg(value: str) -> tuple:
    entries = [e for e in value.split(",")]
    if len(entries) != 5:
        raise argparse.ArgumentTypeError("plants need exactly 5 comma-separated entries")
    return tuple(tuple(part for part in e.split("+") if part) for e in entries)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise RuntimeError(f"cannot load config file {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise RuntimeError(f"config file {path} must hold a JSON object")
    return cfg


def _merged(section: dict, overrides: dict) -> dict:
    out = dict(section)
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def _model_config(
    args, file_cfg: dict, variant: str | None = None, sessions=None
) -> ModelConfig:
    overrides = {
        "variant": variant if variant is not None else getattr(args, "variant", None),
        "d_w": getattr(args, "d_w", None),
        "h": getattr(args, "h", None),
        "dropout": getattr(args, "dropout", None),
    }
    merged = _merged(file_cfg.get("model", {}), overrides)
    if sessions:
        # input widths come from the dataset unless pinned explicitly
        track = sessions[0].participants["A"]
        merged.setdefault("d_v", track.video.data.shape[1])
        merged.setdefault("d_a", track.audio.data.shape[1])
        merged.setdefault("d_m", track.metadata.data.shape[0])
    return ModelConfig.from_dict(merged)


def _train_config(args, file_cfg: dict, seed: int | None = None) -> TrainConfig:
    overrides = {
        "seed": seed if seed is not None else getattr(args, "seed", None),
        "max_epochs": getattr(args, "epochs", None),
        "batch_size": getattr(args, "batch_size", None),
        "lr0": getattr(args, "lr", None),
    }
    merged = _merged(file_cfg.get("train", {}), overrides)
    return TrainConfig.from_dict(merged)


def _data_params(args, file_cfg: dict) -> tuple[int, int]:
    section = file_cfg.get("data", {})
    T = getattr(args, "T", None) or section.get("T", 6)
    stride = getattr(args, "stride", None) or section.get("stride", 1)
    return int(T), int(stride)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args) -> int:
    file_cfg = _load_config_file(args.config)
    overrides = {
        "n_sessions": args.sessions,
        "chunks_per_session": args.chunks,
        "d_v": args.d_v,
        "d_a": args.d_a,
        "noise_std": args.noise_std,
        "plants": args.plants,
    }
    spec = SyntheticSpec(**_merged(file_cfg.get("synth", {}), overrides))
    sessions, manifest = generate_synthetic(spec, args.seed, args.out)
    counts = {split: sum(1 for s in sessions if s.split == split) for split in SPLITS}
    print(f"wrote {len(sessions)} sessions to {manifest}")
    print(f"splits: train={counts['train']} val={counts['val']} test={counts['test']}")
    return 0


def _cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    sessions = load_manifest(args.data)
    model_cfg = _model_config(args, file_cfg, sessions=sessions)
    train_cfg = _train_config(args, file_cfg)
    T, stride = _data_params(args, file_cfg)
    train_seqs = dataset_sequences(sessions, T, stride, "train")
    val_seqs = dataset_sequences(sessions, T, stride, "val")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    best, state = train(
        model_cfg, train_cfg, train_seqs, val_seqs,
        log_path=out_dir / "train_log.jsonl",
    )
    ckpt = out_dir / "checkpoint.dyck"
    save_checkpoint(ckpt, model_cfg, best)
    print(
        f"trained {model_cfg.variant.value} for {state.epoch} epochs; "
        f"best val loss {state.best_val_loss:.6f} at epoch {state.best_epoch}"
    )
    print(f"checkpoint: {ckpt}")
    return 0


def _cmd_evaluate(args) -> int:
    config, store = load_checkpoint(args.checkpoint)
    sessions = load_manifest(args.data)
    T, stride = _data_params(args, _load_config_file(args.config))
    seqs = dataset_sequences(sessions, T, stride, args.split)
    if not seqs:
        raise RuntimeError(f"no sequences in split {args.split!r} at T={T}")
    records = predict_records(seqs, config, store)
    rows = report_table(records, group_by="task")
    print(render_report(rows))
    if args.out is not None:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        tsv = out_dir / "metrics.tsv"
        with open(tsv, "w") as fh:
            fh.write("task\ttrait\tmetric\tvalue\n")
            for group, trait, metric, value in rows:
                fh.write(f"{group}\t{trait}\t{metric}\t{value!r}\n")
        print(f"metrics: {tsv}")
    return 0


def run_ablation_grid(
    manifest: str | Path,
    variants: list[str],
    T_values: list[int],
    seeds: list[int],
    file_cfg: dict,
    stride: int = 1,
    out_dir: str | Path | None = None,
) -> tuple[dict, list[str]]:
    """Train/evaluate every (variant, T, seed) cell on the manifest's splits.

    Returns ({(variant, T): mean test mse_seq avg or None}, failures).
    A failing cell is recorded and skipped; survivors still report.
    """
    sessions = load_manifest(manifest)
    results: dict[tuple[str, int], float | None] = {}
    failures: list[str] = []
    for variant in variants:
        for T in T_values:
            cell_scores = []
            for seed in seeds:
                label = f"{variant} T={T} seed={seed}"
                try:
                    model_cfg = _model_config(None, file_cfg, variant=variant, sessions=sessions)
                    train_cfg = _train_config(None, file_cfg, seed=seed)
                    train_seqs = dataset_sequences(sessions, T, stride, "train")
                    val_seqs = dataset_sequences(sessions, T, stride, "val")
                    test_seqs = dataset_sequences(sessions, T, stride, "test")
                    if not test_seqs:
                        raise RuntimeError(f"no test sequences at T={T}")
                    best, _state = train(model_cfg, train_cfg, train_seqs, val_seqs)
                    if out_dir is not None:
                        path = Path(out_dir) / f"{variant}_T{T}_seed{seed}.dyck"
                        path.parent.mkdir(parents=True, exist_ok=True)
                        save_checkpoint(path, model_cfg, best)
                    records = predict_records(test_seqs, model_cfg, best)
                    rows = report_table(records, group_by="overall")
                    score = next(
                        v for g, t, m, v in rows
                        if g == "Overall" and t == "Avg" and m == "mse_seq"
                    )
                    cell_scores.append(score)
                except Exception as e:  # cell failures must not kill the grid
                    failures.append(f"{label}: {e}")
            results[(variant, T)] = (
                float(np.mean(cell_scores)) if cell_scores else None
            )
    return results, failures


def _render_grid(results: dict, variants: list[str], T_values: list[int]) -> str:
    """Variant x T table of seed-averaged test MSE; column best wrapped in *."""
    best_per_col = {}
    for T in T_values:
        vals = [(results[(v, T)], v) for v in variants if results[(v, T)] is not None]
        best_per_col[T] = min(vals)[1] if vals else None
    name_w = max(len(v) for v in variants + ["variant"])
    lines = ["  ".join([f"{'variant':<{name_w}}"] + [f"{f'T={T}':>10}" for T in T_values])]
    for v in variants:
        cells = []
        for T in T_values:
            r = results[(v, T)]
            if r is None:
                cells.append(f"{'failed':>10}")
            else:
                text = f"*{r:.4f}*" if best_per_col[T] == v else f"{r:.4f}"
                cells.append(f"{text:>10}")
        lines.append("  ".join([f"{v:<{name_w}}"] + cells))
    return "\n".join(lines)


def _cmd_ablate(args) -> int:
    file_cfg = _load_config_file(args.config)
    stride = args.stride if args.stride is not None else int(file_cfg.get("data", {}).get("stride", 1))
    results, failures = run_ablation_grid(
        args.data, args.variants, args.T, args.seeds, file_cfg,
        stride=stride, out_dir=args.out,
    )
    print(_render_grid(results, args.variants, args.T))
    if failures:
        print(f"\n{len(failures)} cell(s) failed:", file=sys.stderr)
        for f in failures:
            print(f"  {f}", file=sys.stderr)
        return 1
    return 0


def _cmd_params(args) -> int:
    file_cfg = _load_config_file(args.config)
    worst = 0.0
    print(f"{'variant':<9} {'params':>12} {'budget':>8} {'drift':>7}")
    for variant, budget_m in REFERENCE_BUDGETS.items():
        cfg = _model_config(args, file_cfg, variant=variant)
        n = count_parameters(cfg)
        drift = abs(n - budget_m * 1e6) / (budget_m * 1e6)
        worst = max(worst, drift)
        print(f"{variant:<9} {n:>12,d} {budget_m:>7.1f}M {drift:>6.2%}")
    if worst > 0.01:
        print("parameter counts drift beyond 1% of the reference budgets", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyadformer",
        description="Dyadic-interaction transformer: data synthesis, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--sessions", type=_positive_int, default=None)
    p.add_argument("--chunks", type=_positive_int, default=None)
    p.add_argument("--d-v", dest="d_v", type=_positive_int, default=None)
    p.add_argument("--d-a", dest="d_a", type=_positive_int, default=None)
    p.add_argument("--noise-std", dest="noise_std", type=float, default=None)
    p.add_argument("--plants", type=_plants_arg, default=None,
                   help="5 comma-separated sources, '+' joins multiple per trait")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--data", required=True, help="manifest path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", default=None)
    p.add_argument("--variant", type=_variant_arg, default=None)
    p.add_argument("--T", dest="T", type=_positive_int, default=None)
    p.add_argument("--stride", type=_positive_int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=_positive_int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--d-w", dest="d_w", type=_positive_int, default=None)
    p.add_argument("--h", dest="h", type=_positive_int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--config", default=None)
    p.add_argument("--T", dest="T", type=_positive_int, default=None)
    p.add_argument("--stride", type=_positive_int, default=None)
    p.add_argument("--out", default=None, help="directory for metrics.tsv")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="train/evaluate a variant grid")
    p.add_argument("--data", required=True)
    p.add_argument("--variants", type=_variant_list, default=list(REFERENCE_BUDGETS))
    p.add_argument("--T", dest="T", type=_int_list, default=[6])
    p.add_argument("--seeds", type=_int_list, default=[0])
    p.add_argument("--stride", type=_positive_int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="directory for per-cell checkpoints")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("params", help="audit parameter counts against budgets")
    p.add_argument("--config", default=None)
    p.add_argument("--d-w", dest="d_w", type=_positive_int, default=None)
    p.add_argument("--h", dest="h", type=_positive_int, default=None)
    p.set_defaults(func=_cmd_params)

    return parser


def dispatch(argv: list[str] | None = None) -> int:
    """Parse and run; returns the process exit code."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    code = dispatch(argv)
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
