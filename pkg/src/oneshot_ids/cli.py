"""Command-line experiment runner.

Subcommands::

    oneshot-ids run         leave-one-attack-out experiments end to end
    oneshot-ids metrics     re-score a stored confusion matrix
    oneshot-ids seed-report rerun one experiment across seeds, report spread
    oneshot-ids synth       write a synthetic Gaussian-cluster dataset

`run` settings come from a flat key-value manifest file and/or flags
(flags win). Each experiment writes cm.csv, cm.txt, metrics.json,
sweep.csv, trace.csv and checkpoint.json into its own subdirectory, and a
top-level summary.csv aggregates overall accuracies.

Exit codes: 0 all experiments succeeded, 1 partial failures, 2 invalid
manifest or arguments.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import DatasetError, SchemaError, load_dataset, load_schema, prepare_experiment
from .evaluator import DEFAULT_VOTE_SWEEP, ConfusionMatrix, metrics, sweep_to_csv, vote_sweep
from .network import LossConfig, save_model
from .trainer import DEFAULT_ARCHITECTURE, TrainingConfig, run_training

EXPERIMENT_ARTIFACTS = (
    "cm.csv", "cm.txt", "metrics.json", "sweep.csv", "trace.csv", "checkpoint.json",
)

# Published j=5 overall accuracies (percent) for the benchmark datasets,
# keyed by the attack class excluded from training. Shown for orientation
# only: the originating study does not publish its network architecture,
# so these numbers cannot be reproduced exactly.
REFERENCE_NOTE = "non-reproducible-spec-exact (reference architecture unpublished)"
REFERENCE_OVERALL = {
    "nsl-kdd": {"dos": 77.99, "probe": 75.31, "r2l": 80.16, "u2r": 77.04},
    "kddcup99": {"dos": 76.67, "probe": 72.23, "r2l": 74.20, "u2r": 75.72},
    "cicids2017": {
        "dos (hulk)": 80.81,
        "dos (slowloris)": 81.07,
        "ftp brute force": 82.50,
        "ssh brute force": 81.28,
    },
}


class ManifestError(ValueError):
    pass


@dataclass
class ExperimentManifest:
    dataset: Path
    schema: Path
    out: Path
    exclude: list[str] = field(default_factory=lambda: ["all-attacks"])
    votes: tuple[int, ...] = DEFAULT_VOTE_SWEEP
    training: TrainingConfig = field(default_factory=TrainingConfig)
    reference: str | None = None
    dump_batch: bool = False


def _parse_manifest_file(path: Path) -> dict[str, str]:
    if not path.exists():
        raise ManifestError(f"manifest file {path} not found")
    values: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            key, _, value = line.partition("=")
        else:
            key, _, value = line.partition(" ")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if not key or not value:
            raise ManifestError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        values[key] = value
    return values


def _parse_int_list(text: str, what: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ManifestError(f"{what}: expected comma-separated integers, got {text!r}") from None


def build_manifest(args: argparse.Namespace, need_out: bool = True) -> ExperimentManifest:
    """Merge manifest file values and CLI flags (flags override)."""
    values = _parse_manifest_file(Path(args.manifest)) if args.manifest else {}

    def pick(key: str, flag_value):
        return flag_value if flag_value is not None else values.get(key)

    dataset = pick("dataset", args.dataset)
    schema = pick("schema", args.schema)
    out = pick("out", args.out)
    required = [("dataset", dataset), ("schema", schema)]
    if need_out:
        required.append(("out", out))
    for name, value in required:
        if value is None:
            raise ManifestError(f"missing required setting {name!r}")

    exclude = args.exclude if args.exclude else values.get("exclude", "all-attacks")
    if isinstance(exclude, str):
        exclude = [v.strip() for v in exclude.split(",") if v.strip()]

    votes = pick("votes", args.votes)
    votes = _parse_int_list(votes, "votes") if votes is not None else DEFAULT_VOTE_SWEEP

    arch = pick("arch", args.arch)
    loss_kind = pick("loss", args.loss)
    if loss_kind is not None:
        loss_kind = loss_kind.replace("-", "_")
    try:
        loss = LossConfig(
            kind=loss_kind if loss_kind is not None else "contrastive",
            margin=float(pick("margin", args.margin) or 1.0),
            l2=float(pick("lambda", getattr(args, "lam", None)) or 1e-4),
        )
        cfg = TrainingConfig(
            train_batch_size=int(pick("batch_size", args.batch_size) or 30000),
            test_batch_size=int(pick("test_batch_size", args.test_batch_size) or 30000),
            n_epochs=int(pick("epochs", args.epochs) or 2000),
            minibatch_size=int(pick("minibatch", args.minibatch) or 256),
            fresh_batch_per_epoch=bool(args.fresh_batch or values.get("fresh_batch") == "true"),
            loss=loss,
            architecture=tuple(int(v) for v in arch.split(",")) if arch else DEFAULT_ARCHITECTURE,
            activation=pick("activation", args.activation) or "sigmoid",
            learning_rate=float(pick("lr", args.lr) or 0.01),
            momentum=float(pick("momentum", args.momentum) or 0.9),
            seed=int(pick("seed", args.seed) or 0),
        )
    except ValueError as exc:
        raise ManifestError(str(exc)) from None

    reference = pick("reference", args.reference)
    if reference is None:
        stem = Path(schema).stem.lower()
        if "nsl" in stem:
            reference = "nsl-kdd"
        elif "kdd" in stem:
            reference = "kddcup99"
        elif "cicids" in stem:
            reference = "cicids2017"
    elif reference not in REFERENCE_OVERALL:
        raise ManifestError(
            f"unknown reference {reference!r}; have {sorted(REFERENCE_OVERALL)}"
        )

    manifest = ExperimentManifest(
        dataset=Path(dataset),
        schema=Path(schema),
        out=Path(out) if out is not None else Path("."),
        exclude=list(exclude),
        votes=votes,
        training=cfg,
        reference=reference,
        dump_batch=bool(args.dump_batch or values.get("dump_batch") == "true"),
    )
    if not manifest.dataset.exists():
        raise ManifestError(f"dataset file {manifest.dataset} not found")
    if not manifest.schema.exists():
        raise ManifestError(f"schema file {manifest.schema} not found")
    if not manifest.exclude:
        raise ManifestError("need at least one excluded class")
    return manifest


def _reference_overall(reference: str | None, class_name: str) -> float | None:
    if reference is None:
        return None
    table = REFERENCE_OVERALL.get(reference, {})
    wanted = class_name.strip().lower()
    for key, value in table.items():
        if key == wanted or key.startswith(wanted) or wanted.startswith(key):
            return value
    return None


def _slug(name: str) -> str:
    return "exclude-" + "".join(ch if ch.isalnum() else "-" for ch in name.lower()).strip("-")


def _report_j(votes: tuple[int, ...]) -> int:
    return 5 if 5 in votes else votes[0]


def _resolve_excluded(manifest: ExperimentManifest, class_names: tuple[str, ...]) -> list[str]:
    if manifest.exclude == ["all-attacks"]:
        return list(class_names[1:])
    for name in manifest.exclude:
        if name not in class_names:
            raise ManifestError(f"unknown class {name!r}; have {list(class_names)}")
        if name == class_names[0]:
            raise ManifestError("cannot exclude benign class")
    return manifest.exclude


def run_experiment(manifest: ExperimentManifest, raw, excluded_name: str, out_dir: Path) -> dict:
    """One leave-one-attack-out experiment; returns its summary row."""
    cfg = manifest.training
    ds, split = prepare_experiment(raw, excluded_name, cfg.seed)
    on_batch = None
    if manifest.dump_batch:
        out_dir.mkdir(parents=True, exist_ok=True)
        on_batch = lambda batch: batch.dump(out_dir / "pairs.txt")  # noqa: E731
    model, split, trace = run_training(ds, split.excluded_class, cfg, split=split, on_batch=on_batch)
    rows = vote_sweep(model, split, cfg.test_batch_size, manifest.votes, seed=cfg.seed)

    out_dir.mkdir(parents=True, exist_ok=True)
    report_j = _report_j(manifest.votes)
    designated = next(r for r in rows if r.votes == report_j)
    designated.cm.to_csv(out_dir / "cm.csv")
    (out_dir / "cm.txt").write_text(designated.cm.to_text(), encoding="utf-8")
    designated.report.to_json(out_dir / "metrics.json")
    sweep_to_csv(rows, out_dir / "sweep.csv")
    trace.to_csv(out_dir / "trace.csv")
    save_model(model, out_dir / "checkpoint.json")
    return {
        "excluded_class": excluded_name,
        "status": "ok",
        "votes": report_j,
        "overall_accuracy": designated.report.overall_accuracy,
        "new_class_tpr": designated.report.new_class_tpr,
        "error": "",
    }


def cmd_run(args: argparse.Namespace) -> int:
    try:
        manifest = build_manifest(args)
        schema = load_schema(manifest.schema)
        raw = load_dataset(manifest.dataset, schema)
        class_names = raw.classes
        excluded_names = _resolve_excluded(manifest, class_names)
    except (ManifestError, SchemaError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    manifest.out.mkdir(parents=True, exist_ok=True)
    summary_rows = []
    for name in excluded_names:
        out_dir = manifest.out / _slug(name)
        try:
            row = run_experiment(manifest, raw, name, out_dir)
        except Exception as exc:  # keep going with the remaining classes
            row = {
                "excluded_class": name,
                "status": "error",
                "votes": _report_j(manifest.votes),
                "overall_accuracy": "",
                "new_class_tpr": "",
                "error": str(exc),
            }
        row["reference_overall"] = _reference_overall(manifest.reference, name)
        summary_rows.append(row)
        _print_summary_row(row)

    _write_summary(manifest.out / "summary.csv", summary_rows)
    failures = sum(1 for r in summary_rows if r["status"] != "ok")
    return 1 if failures else 0


def _print_summary_row(row: dict) -> None:
    if row["status"] != "ok":
        print(f"{row['excluded_class']}: failed: {row['error']}")
        return
    line = (
        f"{row['excluded_class']}: overall accuracy {100.0 * row['overall_accuracy']:.2f}% "
        f"(new-class TPR {100.0 * row['new_class_tpr']:.2f}%, j={row['votes']})"
    )
    if row.get("reference_overall") is not None:
        line += f" | published {row['reference_overall']:.2f}% [{REFERENCE_NOTE}]"
    print(line)


def _write_summary(path: Path, rows: list[dict]) -> None:
    columns = (
        "excluded_class", "status", "votes", "overall_accuracy",
        "new_class_tpr", "reference_overall", "reference_note", "error",
    )
    with path.open("w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            ref = row.get("reference_overall")
            cells = [
                str(row["excluded_class"]),
                row["status"],
                str(row["votes"]),
                repr(row["overall_accuracy"]) if row["overall_accuracy"] != "" else "",
                repr(row["new_class_tpr"]) if row["new_class_tpr"] != "" else "",
                repr(ref) if ref is not None else "",
                REFERENCE_NOTE if ref is not None else "",
                '"' + row["error"].replace('"', "'") + '"' if row["error"] else "",
            ]
            fh.write(",".join(cells) + "\n")


def cmd_metrics(args: argparse.Namespace) -> int:
    try:
        cm = ConfusionMatrix.from_csv(args.cm)
        if args.exclude is not None and args.exclude not in cm.class_names:
            raise ManifestError(
                f"unknown class {args.exclude!r}; have {list(cm.class_names)}"
            )
        report = metrics(cm, args.exclude)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(report.to_kv_lines())
    if args.out:
        report.to_json(args.out)
    return 0


def cmd_seed_report(args: argparse.Namespace) -> int:
    try:
        manifest = build_manifest(args, need_out=False)
        seeds = _parse_int_list(args.seeds, "seeds")
        if len(seeds) < 2:
            raise ManifestError("need at least 2 seeds")
        schema = load_schema(manifest.schema)
        raw = load_dataset(manifest.dataset, schema)
        excluded = _resolve_excluded(manifest, raw.classes)[0]
    except (ManifestError, SchemaError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    report_j = _report_j(manifest.votes)
    accuracies = []
    for seed in seeds:
        cfg = manifest.training.with_overrides(seed=seed)
        ds, split = prepare_experiment(raw, excluded, seed)
        model, split, _ = run_training(ds, split.excluded_class, cfg, split=split)
        rows = vote_sweep(model, split, cfg.test_batch_size, (report_j,), seed=seed)
        accuracies.append(rows[0].report.overall_accuracy)
        print(f"seed {seed}: overall accuracy {100.0 * accuracies[-1]:.2f}%")

    summary = {
        "excluded_class": excluded,
        "seeds": list(seeds),
        "overall_accuracies": accuracies,
        "mean": sum(accuracies) / len(accuracies),
        "min": min(accuracies),
        "max": max(accuracies),
    }
    print(
        f"mean {100.0 * summary['mean']:.2f}%  "
        f"min {100.0 * summary['min']:.2f}%  max {100.0 * summary['max']:.2f}%"
    )
    if args.report_out:
        Path(args.report_out).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    from .synthetic import write_files

    try:
        csv_path, schema_path = write_files(
            args.out,
            n_classes=args.classes,
            per_class=args.per_class,
            n_features=args.features,
            separation=args.separation,
            seed=args.seed,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(csv_path)
    print(schema_path)
    return 0


def _add_manifest_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--manifest", help="key-value manifest file; flags override it")
    sub.add_argument("--dataset", help="dataset CSV path")
    sub.add_argument("--schema", help="schema descriptor path")
    sub.add_argument("--out", help="output directory")
    sub.add_argument(
        "--exclude", action="append",
        help="attack class to exclude (repeatable, or 'all-attacks')",
    )
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--batch-size", type=int, dest="batch_size")
    sub.add_argument("--test-batch-size", type=int, dest="test_batch_size")
    sub.add_argument("--minibatch", type=int)
    sub.add_argument("--votes", help="comma-separated j values, e.g. 1,5,10")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--arch", help="comma-separated widths: hidden layers then embedding")
    sub.add_argument("--activation", choices=["sigmoid", "relu", "tanh", "linear"])
    sub.add_argument("--loss", choices=["contrastive", "regularized-log"])
    sub.add_argument("--margin", type=float)
    sub.add_argument("--lambda", type=float, dest="lam", help="L2 coefficient for regularized-log")
    sub.add_argument("--lr", type=float)
    sub.add_argument("--momentum", type=float)
    sub.add_argument("--fresh-batch", action="store_true", dest="fresh_batch",
                     help="regenerate the pair batch every epoch")
    sub.add_argument("--dump-batch", action="store_true", dest="dump_batch",
                     help="write each training pair batch to pairs.txt for audit")
    sub.add_argument("--reference", choices=sorted(REFERENCE_OVERALL),
                     help="attach published benchmark accuracies to the summary")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oneshot-ids",
        description="Leave-one-attack-out twin-network experiments",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="train and evaluate every configured experiment")
    _add_manifest_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_metrics = subs.add_parser("metrics", help="recompute metrics from a stored cm.csv")
    p_metrics.add_argument("cm", help="confusion matrix CSV path")
    p_metrics.add_argument("--exclude", help="class treated as the new attack")
    p_metrics.add_argument("--out", help="also write metrics JSON here")
    p_metrics.set_defaults(func=cmd_metrics)

    p_seeds = subs.add_parser("seed-report", help="rerun one experiment across seeds")
    _add_manifest_flags(p_seeds)
    p_seeds.add_argument("--seeds", required=True, help="comma-separated seed list")
    p_seeds.add_argument("--report-out", dest="report_out", help="write the variance summary JSON here")
    p_seeds.set_defaults(func=cmd_seed_report)

    p_synth = subs.add_parser("synth", help="write a synthetic Gaussian-cluster dataset")
    p_synth.add_argument("--out", required=True, help="directory for synthetic.csv + synthetic.schema")
    p_synth.add_argument("--classes", type=int, default=5)
    p_synth.add_argument("--per-class", type=int, default=500, dest="per_class")
    p_synth.add_argument("--features", type=int, default=20)
    p_synth.add_argument("--separation", type=float, default=4.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
