"""Command-line interface: ``rcfusion <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .classifiers import DEFAULT_ROSTER, ClassifierError, ClassifierKind, ClassifierSpec
from .data import DataError, UCI_DATASETS, bundled_config, convert_uci_raw, load_csv, load_dataset
from .fusion import (
    BeliefDistribution,
    Evidence,
    FusionError,
    FusionStrategy,
    aer_fuse,
    compute_reliabilities,
    ds_fuse,
    er_fuse,
    rcf_fuse,
    reliability_sweep,
    weighted_fuse,
)
from .metrics import ConfigurationError, CvProtocol
from .optimizer import CsaConfig, OptimizerConfig
from .pipeline import (
    POOLED,
    SINGLE_PREFIX,
    PipelineError,
    TrainConfig,
    atomic_write_text,
    evaluate_strategies,
    load_model,
    predict,
    save_model,
    train_multiclassifier,
    train_multimodality,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2

REPORT_HEADER = ("strategy", "auc_mean", "auc_std", "sens_mean", "sens_std", "spec_mean", "spec_std")

# Two groups of three classifier outputs used as the worked example
EXAMPLE_GROUPS = {
    1: ((0.8, 0.2), (0.7, 0.3), (0.6, 0.4)),
    2: ((0.8, 0.2), (0.3, 0.7), (0.4, 0.6)),
}
EXAMPLE_RELIABILITIES = {1: (0.88, 0.92, 0.94), 2: (0.0, 0.34, 0.38)}
EXAMPLE_EXPECTED = {
    "rcf": {1: (0.8393, 0.1607), 2: (0.4592, 0.5408)},
    "wf": {1: (0.7, 0.3), 2: (0.5, 0.5)},
    "rcf1": {1: (0.9333, 0.0667), 2: (0.5333, 0.4667)},
}
PUBLISHED_RCF1_GROUP1 = (0.7778, 0.2222)
SCORE_TOL = 5e-5
RELIABILITY_TOL = 5e-3


class CliError(Exception):
    pass


def blob_hash(content: bytes) -> str:
    """Content hash computed the way git names blob objects."""
    return hashlib.sha1(b"blob %d\0" % len(content) + content).hexdigest()


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise CliError(f"{what}: expected comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# example
# ---------------------------------------------------------------------------

def run_example() -> tuple[str, bool]:
    """Reliabilities and fused scores for the two worked groups; returns (text, all checks passed)."""
    lines = []
    ok = True
    third = [1.0 / 3.0] * 3
    lines.append("Reliabilities")
    for g, outputs in EXAMPLE_GROUPS.items():
        r = compute_reliabilities([BeliefDistribution(o) for o in outputs])
        good = bool(np.all(np.abs(r - EXAMPLE_RELIABILITIES[g]) <= RELIABILITY_TOL))
        ok &= good
        lines.append(f"  group {g}: " + ", ".join(f"{x:.4f}" for x in r) + ("" if good else "  MISMATCH"))
    lines.append("")
    lines.append(f"{'strategy':<8} {'group 1':>18} {'group 2':>18}")
    fused = {}
    for name in ("rcf", "wf", "rcf1"):
        row = {}
        for g, outputs in EXAMPLE_GROUPS.items():
            beliefs = [BeliefDistribution(o) for o in outputs]
            if name == "rcf":
                bd = rcf_fuse(beliefs, third)
            elif name == "wf":
                bd = weighted_fuse(beliefs, third)
            else:
                bd = aer_fuse([Evidence(b, 1.0 / 3.0, 1.0) for b in beliefs])
            row[g] = bd.scores
            good = all(abs(a - b) <= SCORE_TOL for a, b in zip(bd.scores, EXAMPLE_EXPECTED[name][g]))
            ok &= good
        fused[name] = row
        cells = [f"({row[g][0]:.4f}, {row[g][1]:.4f})" for g in (1, 2)]
        lines.append(f"{name.upper():<8} {cells[0]:>18} {cells[1]:>18}")
    # the normalised product of the group 1 scores is 0.336 / 0.360
    lines.append("")
    lines.append(
        "note: RCF-1 group 1 is the derived normalised product "
        f"({fused['rcf1'][1][0]:.4f}, {fused['rcf1'][1][1]:.4f}); the published table prints "
        f"({PUBLISHED_RCF1_GROUP1[0]:.4f}, {PUBLISHED_RCF1_GROUP1[1]:.4f}), which no weight "
        "choice with unit reliabilities reproduces."
    )
    lines.append("checks: " + ("PASS" if ok else "FAIL"))
    return "\n".join(lines) + "\n", ok


def cmd_example(args) -> int:
    text, ok = run_example()
    _emit(text, args.out)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# fuse / sweep
# ---------------------------------------------------------------------------

def read_score_blocks(path) -> list[list[tuple[float, ...]]]:
    """Blocks of classifier rows separated by blank lines; each row must sum to 1."""
    blocks, current = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                if current:
                    blocks.append(current)
                    current = []
                continue
            try:
                row = tuple(float(x) for x in line.split(","))
            except ValueError:
                raise CliError(f"{path}:{lineno}: non-numeric score row {line!r}") from None
            try:
                BeliefDistribution(row)
            except FusionError as exc:
                raise CliError(f"{path}:{lineno}: {exc}") from None
            if current and len(row) != len(current[0]):
                raise CliError(f"{path}:{lineno}: row has {len(row)} classes, block started with {len(current[0])}")
            current.append(row)
    if current:
        blocks.append(current)
    if not blocks:
        raise CliError(f"{path}: no score rows")
    return blocks


def fuse_block(block, strategy: FusionStrategy, weights, reliabilities) -> BeliefDistribution:
    beliefs = [BeliefDistribution(r) for r in block]
    n = len(beliefs)
    w = list(weights) if weights is not None else [1.0 / n] * n
    if len(w) != n:
        raise CliError(f"{len(w)} weights given for a block of {n} classifiers")
    if strategy is FusionStrategy.WF:
        return weighted_fuse(beliefs, w)
    if strategy is FusionStrategy.DSF:
        return ds_fuse(beliefs)
    if strategy is FusionStrategy.ERF:
        return er_fuse(beliefs, w)
    if strategy is FusionStrategy.RCF1:
        return aer_fuse([Evidence(b, wi, 1.0) for b, wi in zip(beliefs, w)])
    if reliabilities is None:
        return rcf_fuse(beliefs, w)
    if len(reliabilities) != n:
        raise CliError(f"{len(reliabilities)} reliabilities given for a block of {n} classifiers")
    return aer_fuse([Evidence(b, wi, ri) for b, wi, ri in zip(beliefs, w, reliabilities)])


def cmd_fuse(args) -> int:
    strategy = FusionStrategy.parse(args.strategy)
    weights = _parse_floats(args.weights, "--weights") if args.weights else None
    rel = None if args.reliabilities == "auto" else _parse_floats(args.reliabilities, "--reliabilities")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    for block in read_score_blocks(args.scores):
        writer.writerow([repr(x) for x in fuse_block(block, strategy, weights, rel).scores])
    _emit(out.getvalue(), args.out)
    return EXIT_OK


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (inclusive, decimal-safe) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise CliError(f"grid {text!r}: expected start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise CliError("grid step must be positive")
        count = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 12) for i in range(max(count, 0))]
    return _parse_floats(text, "grid")


def cmd_sweep(args) -> int:
    if args.config:
        from .data import parse_key_values

        values = dict(parse_key_values(args.config))
        for key in ("scores", "weights", "classifier", "grid", "fixed_reliability", "group"):
            if key in values and getattr(args, key, None) in (None, ""):
                setattr(args, key, values[key])
    if args.group:
        group = int(args.group)
        if group not in EXAMPLE_GROUPS:
            raise CliError(f"unknown example group {group}")
        block = list(EXAMPLE_GROUPS[group])
    elif args.scores:
        blocks = read_score_blocks(args.scores)
        if len(blocks) != 1:
            raise CliError("sweep expects a scores file with exactly one block")
        block = blocks[0]
    else:
        raise CliError("sweep needs --scores FILE or --group 1|2")
    n = len(block)
    weights = _parse_floats(args.weights, "weights") if args.weights else [1.0 / n] * n
    index = int(args.classifier) - 1
    if not 0 <= index < n:
        raise CliError(f"classifier number must lie in 1..{n}")
    grid = parse_grid(args.grid or "0.1:1.0:0.1")
    points = reliability_sweep([BeliefDistribution(r) for r in block], weights, index, grid,
                               float(args.fixed_reliability if args.fixed_reliability is not None else 1.0))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["r"] + [f"class_{h + 1}" for h in range(len(block[0]))])
    for r, bd in points:
        writer.writerow([repr(r)] + [repr(x) for x in bd.scores])
    _emit(out.getvalue(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train / predict / evaluate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    data: str
    strategy: str = "rcf"
    mode: str = "classifiers"
    kinds: tuple[str, ...] = tuple(k.value for k in DEFAULT_ROSTER)
    strategies: tuple[str, ...] = ("rcf", "wf", "dsf", "erf")
    population: int = 100
    generations: int = 200
    mutation_probability: float = 0.9
    repeats: int = 20
    feature_selection: bool = True
    folds: int = 5
    repetitions: int = 10
    weight_train_fraction: float = 0.7
    pool_folds: bool = False
    csa_population: int = 50
    csa_generations: int = 100
    seed: int = 0

    def validate(self) -> None:
        if not Path(self.data).exists():
            raise CliError(f"dataset config not found: {self.data}")
        if self.mode not in ("classifiers", "modalities"):
            raise CliError(f"mode must be 'classifiers' or 'modalities', not {self.mode!r}")
        FusionStrategy.parse(self.strategy)
        for k in self.kinds:
            ClassifierKind.parse(k)
        self.optimizer_config()
        self.protocol()
        self.train_config()

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(self.population, self.generations, self.mutation_probability, self.seed)

    def train_config(self, workers: int = 1) -> TrainConfig:
        return TrainConfig(
            optimizer=self.optimizer_config(),
            csa=CsaConfig(population=self.csa_population, generations=self.csa_generations, seed=self.seed),
            feature_selection=self.feature_selection,
            repeats=self.repeats,
            weight_train_fraction=self.weight_train_fraction,
            workers=workers,
        )

    def protocol(self) -> CvProtocol:
        return CvProtocol(self.folds, self.repetitions, self.weight_train_fraction, True, self.seed, self.pool_folds)


def _resolve_data(value: str) -> str:
    """A path, or the name of a bundled UCI config (``heart``, ``sonar``, ...)."""
    if Path(value).exists():
        return value
    key = value.lower()
    if key in UCI_DATASETS or key == "mask":
        return str(bundled_config(key))
    return value


def _expand_strategies(names, kinds) -> tuple[str, ...]:
    out = []
    for name in names:
        name = name.strip().lower()
        if name == "singles":
            out.extend(f"{SINGLE_PREFIX}{ClassifierKind.parse(k).value}" for k in kinds)
        elif name.startswith(SINGLE_PREFIX):
            out.append(f"{SINGLE_PREFIX}{ClassifierKind.parse(name[len(SINGLE_PREFIX):]).value}")
        elif name == POOLED:
            out.append(POOLED)
        else:
            out.append(FusionStrategy.parse(name).value)
    return tuple(dict.fromkeys(out))


def run_config_from_args(args) -> RunConfig:
    kinds = tuple(ClassifierKind.parse(k).value for k in args.kinds.split(",")) if args.kinds else \
        tuple(k.value for k in DEFAULT_ROSTER)
    fields = dict(
        data=_resolve_data(args.data),
        kinds=kinds,
        population=args.population,
        generations=args.generations,
        mutation_probability=args.mutation_probability,
        repeats=args.repeats,
        seed=args.seed,
        csa_population=args.csa_population,
        csa_generations=args.csa_generations,
    )
    if hasattr(args, "strategy"):
        fields.update(strategy=FusionStrategy.parse(args.strategy).value, mode=args.mode,
                      feature_selection=not args.no_feature_selection, weight_train_fraction=args.weight_train_fraction)
    if hasattr(args, "strategies"):
        fields.update(strategies=_expand_strategies(args.strategies.split(","), kinds), folds=args.folds,
                      repetitions=args.repetitions, weight_train_fraction=args.weight_train_fraction,
                      pool_folds=args.pool_folds, feature_selection=args.feature_selection)
    cfg = RunConfig(**fields)
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = run_config_from_args(args)
    if not args.out:
        raise CliError("train needs --out MODEL.json")
    dataset = load_dataset(cfg.data)
    tc = cfg.train_config(workers=args.threads)
    if cfg.mode == "modalities":
        spec = ClassifierSpec.of(cfg.kinds[0]) if args.kinds else None
        model = train_multimodality(dataset, tc, cfg.strategy, spec=spec, seed=cfg.seed)
    else:
        model = train_multiclassifier(dataset, list(cfg.kinds), tc, cfg.strategy, seed=cfg.seed)
    beliefs, labels = predict(model, dataset.X, dataset.feature_names)
    report = {
        "config": asdict(cfg),
        "positive_label": dataset.positive_label,
        "sources": [{"id": s.source_id, "selected": list(s.selected_names)} for s in model.sources],
        "weights": list(model.weights),
        "training_accuracy": float(np.mean(labels == dataset.y)),
        "config_hash": model.config_hash,
    }
    save_model(model, args.out)
    atomic_write_text(Path(args.out).with_suffix(".report.json"), json.dumps(report, indent=1) + "\n")
    print(f"model written to {args.out}; training accuracy {report['training_accuracy']:.4f}")
    return EXIT_OK


def _read_feature_rows(path, names_needed) -> tuple[np.ndarray, tuple[str, ...]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        missing = [n for n in names_needed if n not in header]
        if missing:
            raise CliError(f"{path}: missing columns {missing}")
        idx = [header.index(n) for n in names_needed]
        rows = []
        for lineno, rec in enumerate(reader, 2):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                rows.append([float(rec[i]) for i in idx])
            except (ValueError, IndexError):
                raise CliError(f"{path}: row {lineno}: bad or missing value in a model column") from None
    return np.array(rows, dtype=float).reshape(len(rows), len(idx)), tuple(names_needed)


def cmd_predict(args) -> int:
    model = load_model(args.model)
    data = _resolve_data(args.data)
    path = data
    if data.endswith(".cfg"):
        from .data import load_config

        path = load_config(data).path
    X, names = _read_feature_rows(path, model.input_names)
    beliefs, labels = predict(model, X, names)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["negative", "positive", "label"])
    for b, lab in zip(beliefs, labels):
        writer.writerow([repr(float(b[0])), repr(float(b[1])), int(lab)])
    _emit(out.getvalue(), args.out)
    return EXIT_OK


def format_report_csv(reports) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for name, r in reports.items():
        writer.writerow([name] + [repr(v) for v in (r.auc.mean, r.auc.std, r.sensitivity.mean, r.sensitivity.std,
                                                     r.specificity.mean, r.specificity.std)])
    return out.getvalue()


def format_report_table(reports) -> str:
    lines = [f"{'strategy':<14} {'AUC':>15} {'sensitivity':>15} {'specificity':>15}"]
    for name, r in reports.items():
        lines.append(f"{name:<14} {r.auc.display():>15} {r.sensitivity.display():>15} {r.specificity.display():>15}")
    return "\n".join(lines) + "\n"


def cmd_evaluate(args) -> int:
    cfg = run_config_from_args(args)
    dataset = load_dataset(cfg.data)
    tc = cfg.train_config()
    reports = evaluate_strategies(dataset, list(cfg.strategies), list(cfg.kinds), cfg.protocol(), tc, args.threads)
    text = format_report_csv(reports)
    sidecar = {
        "config": asdict(cfg),
        "dataset": {"name": dataset.name, "rows": dataset.n_samples, "features": dataset.n_features,
                    "positive_label": dataset.positive_label, "negative_label": dataset.negative_label},
        "report_sha1": blob_hash(text.encode("utf-8")),
        "per_repetition": {name: [list(v) for v in r.per_repetition] for name, r in reports.items()},
        "version": __version__,
    }
    if args.out:
        atomic_write_text(args.out, text)
        atomic_write_text(Path(args.out).with_suffix(".json"), json.dumps(sidecar, indent=1) + "\n")
    sys.stdout.write(format_report_table(reports))
    return EXIT_OK


def cmd_import_uci(args) -> int:
    out = args.out or str(Path(args.raw).with_suffix(".csv"))
    path = convert_uci_raw(args.name, args.raw, out)
    dataset = load_csv(path, "class", UCI_DATASETS["musk" if args.name.lower() == "mask" else args.name.lower()].positive_label)
    print(f"{path}: {dataset.n_samples} rows, {dataset.n_features} features, class counts {dataset.class_counts()}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _global_flags(parser, suppress: bool) -> None:
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(0), help="master random seed")
    parser.add_argument("--threads", type=int, default=default(1), help="cap on internal parallelism")
    parser.add_argument("--out", default=default(None), help="output path (stdout when omitted)")


def _search_flags(p) -> None:
    p.add_argument("--data", required=True, help="dataset config file or bundled name (heart, ionosphere, ...)")
    p.add_argument("--kinds", default="", help="comma-separated classifier kinds")
    p.add_argument("--population", type=int, default=100)
    p.add_argument("--generations", type=int, default=200)
    p.add_argument("--mutation-probability", type=float, default=0.9)
    p.add_argument("--repeats", type=int, default=20, help="feature-selection repeats")
    p.add_argument("--csa-population", type=int, default=50)
    p.add_argument("--csa-generations", type=int, default=100)
    p.add_argument("--weight-train-fraction", type=float, default=0.7)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rcfusion", description="Reliable classifier fusion toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("example", parents=[common], help="reproduce the two-group worked example")
    p.set_defaults(func=cmd_example)

    p = sub.add_parser("fuse", parents=[common], help="fuse blocks of classifier scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--strategy", default="rcf")
    p.add_argument("--weights", default="", help="comma-separated, default equal 1/N")
    p.add_argument("--reliabilities", default="auto", help="'auto' or comma-separated values (rcf only)")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("sweep", parents=[common], help="fused scores as one reliability varies")
    p.add_argument("--config", help="key = value file with scores/group, weights, classifier, grid, fixed_reliability")
    p.add_argument("--scores")
    p.add_argument("--group", help="use worked-example group 1 or 2")
    p.add_argument("--weights")
    p.add_argument("--classifier", default=None, help="1-based classifier whose reliability is swept")
    p.add_argument("--grid", default=None, help="start:stop:step or comma list (default 0.1:1.0:0.1)")
    p.add_argument("--fixed-reliability", dest="fixed_reliability", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("train", parents=[common], help="train a fused model and save it as JSON")
    _search_flags(p)
    p.add_argument("--mode", choices=("classifiers", "modalities"), default="classifiers")
    p.add_argument("--strategy", default="rcf")
    p.add_argument("--no-feature-selection", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="score a CSV with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="CSV with a header naming the model's columns, or a dataset config")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="repeated cross-validation of fusion strategies")
    _search_flags(p)
    p.add_argument("--strategies", default="rcf,wf,dsf,erf",
                   help="comma list of rcf, rcf1, wf, dsf, erf, single:<kind>, singles, pooled")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--pool-folds", action="store_true", help="pool test folds instead of averaging fold metrics")
    p.add_argument("--feature-selection", action="store_true", help="run per-classifier feature selection")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("import-uci", parents=[common], help="convert an original UCI data file to CSV")
    p.add_argument("name", choices=sorted(UCI_DATASETS) + ["mask"])
    p.add_argument("raw")
    p.set_defaults(func=cmd_import_uci)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except (CliError, DataError, PipelineError, FusionError, ClassifierError, ConfigurationError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
