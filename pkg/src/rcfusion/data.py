"""Tabular dataset ingestion, z-scoring and split planning."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DATA_DIR_ENV = "RCFUSION_DATA_DIR"
BUNDLED_DIR = Path(__file__).parent / "datasets"


class DataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with binary labels encoded 1 = positive class, 0 = other."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    positive_label: str = "1"
    negative_label: str = "0"
    groups: dict[str, tuple[int, ...]] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise DataError(f"shape mismatch: X {X.shape}, y {y.shape}")
        if len(self.feature_names) != X.shape[1]:
            raise DataError("one feature name per column is required")
        if np.isnan(X).any():
            raise DataError("features contain NaN")
        if not np.all(np.isin(y, (0, 1))):
            raise DataError("labels must be encoded 0/1")
        seen: set[int] = set()
        for gname, cols in self.groups.items():
            for c in cols:
                if not 0 <= c < X.shape[1]:
                    raise DataError(f"group {gname!r} references column {c} outside 0..{X.shape[1] - 1}")
                if c in seen:
                    raise DataError(f"column {c} belongs to more than one group")
                seen.add(c)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> tuple[int, int]:
        """(negative count, positive count)."""
        n_pos = int(self.y.sum())
        return self.n_samples - n_pos, n_pos

    def subset(self, rows) -> Dataset:
        rows = np.asarray(rows)
        return Dataset(
            self.X[rows], self.y[rows], self.feature_names, self.positive_label,
            self.negative_label, self.groups, self.name,
        )

    def columns(self, cols, name: str | None = None) -> Dataset:
        cols = list(cols)
        return Dataset(
            self.X[:, cols], self.y, tuple(self.feature_names[c] for c in cols),
            self.positive_label, self.negative_label, {}, name or self.name,
        )


@dataclass(frozen=True)
class DatasetConfig:
    path: Path
    label_column: str
    positive_label: str
    groups: dict[str, tuple[str, ...]] = field(default_factory=dict)
    name: str = ""


def parse_key_values(path) -> list[tuple[str, str]]:
    """Read ``key = value`` lines, skipping blanks and ``#`` comments."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            pairs.append((key.strip(), value.strip()))
    return pairs


def _resolve_data_path(raw: str, config_dir: Path) -> Path:
    candidate = Path(raw)
    if candidate.is_absolute():
        return candidate
    local = config_dir / candidate
    if local.exists():
        return local
    env_dir = os.environ.get(DATA_DIR_ENV)
    if env_dir and (Path(env_dir) / candidate).exists():
        return Path(env_dir) / candidate
    return local


def load_config(path) -> DatasetConfig:
    path = Path(path)
    entries = parse_key_values(path)
    values: dict[str, str] = {}
    groups: dict[str, tuple[str, ...]] = {}
    for key, value in entries:
        if key.startswith("group."):
            gname = key[len("group."):]
            if not gname:
                raise DataError(f"{path}: empty group name")
            groups[gname] = tuple(c.strip() for c in value.split(",") if c.strip())
        else:
            values[key] = value
    missing = [k for k in ("path", "label_column", "positive_label") if k not in values]
    if missing:
        raise DataError(f"{path}: missing required keys {missing}")
    return DatasetConfig(
        path=_resolve_data_path(values["path"], path.parent),
        label_column=values["label_column"],
        positive_label=values["positive_label"],
        groups=groups,
        name=values.get("name", path.stem),
    )


def load_csv(path, label_column: str, positive_label: str, groups=None, name: str = "") -> Dataset:
    """Read a header CSV with numeric features and a categorical label column.

    ``groups`` maps a modality name to the column names it owns. Rows with
    blank or non-numeric feature cells are rejected with their row number.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header")
        label_idx = header.index(label_column)
        feature_idx = [i for i in range(len(header)) if i != label_idx]
        rows, labels = [], []
        for lineno, record in enumerate(reader, 2):
            if not record or all(not c.strip() for c in record):
                continue
            if len(record) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(record)} cells, expected {len(header)}")
            values = []
            for i in feature_idx:
                cell = record[i].strip()
                if not cell:
                    raise DataError(f"{path}: row {lineno}, column {header[i]!r}: missing value")
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {header[i]!r}: non-numeric {cell!r}") from None
                if math.isnan(v):
                    raise DataError(f"{path}: row {lineno}, column {header[i]!r}: missing value")
                values.append(v)
            label = record[label_idx].strip()
            if not label:
                raise DataError(f"{path}: row {lineno}: missing label")
            rows.append(values)
            labels.append(label)

    distinct = sorted(set(labels))
    if len(distinct) != 2:
        raise DataError(f"{path}: expected exactly two label values, found {distinct}")
    if positive_label not in distinct:
        raise DataError(f"{path}: positive label {positive_label!r} not among {distinct}")
    negative_label = distinct[0] if distinct[1] == positive_label else distinct[1]
    names = [header[i] for i in feature_idx]
    group_idx = {}
    for gname, cols in (groups or {}).items():
        unknown = [c for c in cols if c not in names]
        if unknown:
            raise DataError(f"group {gname!r} names unknown columns {unknown}")
        group_idx[gname] = tuple(names.index(c) for c in cols)
    return Dataset(
        X=np.array(rows, dtype=float).reshape(len(rows), len(names)),
        y=np.array([1 if lab == positive_label else 0 for lab in labels]),
        feature_names=tuple(names),
        positive_label=positive_label,
        negative_label=negative_label,
        groups=group_idx,
        name=name or path.stem,
    )


def load_dataset(config_path) -> Dataset:
    cfg = load_config(config_path)
    return load_csv(cfg.path, cfg.label_column, cfg.positive_label, cfg.groups, cfg.name)


# ---------------------------------------------------------------------------
# Normalisation
# ---------------------------------------------------------------------------

STD_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class ZScore:
    mean: np.ndarray
    std: np.ndarray


def zscore_fit(rows) -> ZScore:
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise DataError("z-score statistics need at least two training rows")
    std = rows.std(axis=0)
    std = np.where(std < STD_FLOOR, 1.0, std)
    return ZScore(rows.mean(axis=0), std)


def zscore_apply(stats: ZScore, rows) -> np.ndarray:
    return (np.asarray(rows, dtype=float) - stats.mean) / stats.std


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def stratified_folds(y, n_folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per sample; each class is dealt round-robin after shuffling.

    Per-fold class counts therefore differ by at most one.
    """
    y = np.asarray(y)
    if n_folds < 2:
        raise DataError("need at least 2 folds")
    folds = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        if len(idx) < n_folds:
            raise DataError(f"class {c} has {len(idx)} samples, fewer than {n_folds} folds")
        idx = rng.permutation(idx)
        # continue the deal where the previous class stopped to balance fold sizes
        folds[idx] = (np.arange(len(idx)) + offset) % n_folds
        offset = (offset + len(idx)) % n_folds
    return folds


def stratified_holdout(y, train_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Split indices into (train, held-out) with per-class proportions kept."""
    if not 0 < train_fraction < 1:
        raise DataError("train_fraction must lie in (0, 1)")
    y = np.asarray(y)
    train, held = [], []
    for c in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == c))
        n_train = int(math.floor(train_fraction * len(idx) + 0.5))
        n_train = min(max(n_train, 1), len(idx) - 1) if len(idx) >= 2 else len(idx)
        train.append(idx[:n_train])
        held.append(idx[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(held))


@dataclass(frozen=True, eq=False)
class SplitPlan:
    """Fold ids per repetition plus the inner weight-training split of every fold."""

    seed: int
    folds: tuple[np.ndarray, ...]
    # inner[rep][fold] = (weight-train indices, validation indices), both global
    inner: tuple[tuple[tuple[np.ndarray, np.ndarray], ...], ...]

    def train_test(self, rep: int, fold: int) -> tuple[np.ndarray, np.ndarray]:
        f = self.folds[rep]
        return np.flatnonzero(f != fold), np.flatnonzero(f == fold)


def task_seed(master_seed: int, *path: int) -> np.random.SeedSequence:
    """Independent stream for a (repetition, fold, ...) task."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(p) for p in path))


def random_folds(n: int, n_folds: int, rng: np.random.Generator) -> np.ndarray:
    if n < n_folds:
        raise DataError(f"{n} samples cannot fill {n_folds} folds")
    folds = np.empty(n, dtype=np.int64)
    folds[rng.permutation(n)] = np.arange(n) % n_folds
    return folds


def make_splits(dataset_or_y, folds: int = 5, repetitions: int = 10, weight_train_fraction: float = 0.7,
                seed: int = 0, stratified: bool = True) -> SplitPlan:
    y = dataset_or_y.y if isinstance(dataset_or_y, Dataset) else np.asarray(dataset_or_y)
    all_folds, all_inner = [], []
    for rep in range(repetitions):
        rng = np.random.default_rng(task_seed(seed, rep))
        assignment = stratified_folds(y, folds, rng) if stratified else random_folds(len(y), folds, rng)
        inner = []
        for k in range(folds):
            train_idx = np.flatnonzero(assignment != k)
            a, b = stratified_holdout(y[train_idx], weight_train_fraction, np.random.default_rng(task_seed(seed, rep, k)))
            inner.append((train_idx[a], train_idx[b]))
        all_folds.append(assignment)
        all_inner.append(tuple(inner))
    return SplitPlan(seed, tuple(all_folds), tuple(all_inner))


# ---------------------------------------------------------------------------
# Bundled UCI configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UciInfo:
    name: str
    instances: int
    features: int
    # class sizes as listed in the published summary (first, second)
    class_sizes: tuple[int, int]
    positive_label: str
    raw_file: str


UCI_DATASETS: dict[str, UciInfo] = {
    "heart": UciInfo("heart", 270, 13, (150, 120), "2", "heart.dat"),
    "ionosphere": UciInfo("ionosphere", 351, 34, (225, 126), "b", "ionosphere.data"),
    "musk": UciInfo("musk", 476, 166, (269, 207), "1", "clean1.data"),
    "sonar": UciInfo("sonar", 208, 60, (97, 111), "M", "sonar.all-data"),
    "spambase": UciInfo("spambase", 4601, 57, (1813, 2788), "1", "spambase.data"),
}


def bundled_config(name: str) -> Path:
    key = name.lower()
    if key == "mask":
        key = "musk"
    if key not in UCI_DATASETS:
        raise DataError(f"no bundled config {name!r}; known: {sorted(UCI_DATASETS)}")
    return BUNDLED_DIR / f"{key}.cfg"


def convert_uci_raw(name: str, raw_path, out_path) -> Path:
    """Turn an original UCI distribution file into the header CSV the configs expect.

    Handles heart.dat (space separated, class last), ionosphere.data,
    sonar.all-data, spambase.data (comma separated, class last) and Musk
    clean1.data (molecule and conformation names first, class last).
    """
    key = "musk" if name.lower() == "mask" else name.lower()
    info = UCI_DATASETS.get(key)
    if info is None:
        raise DataError(f"unknown UCI dataset {name!r}")
    records = []
    with open(raw_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            cells = line.split() if key == "heart" else [c.strip() for c in line.rstrip(".").split(",")]
            if key == "musk":
                cells = cells[2:]
                cells[-1] = str(int(float(cells[-1])))
            records.append(cells)
    widths = {len(r) for r in records}
    if widths != {info.features + 1}:
        raise DataError(f"{raw_path}: expected {info.features + 1} columns per row, found {sorted(widths)}")
    header = [f"f{i + 1}" for i in range(info.features)] + ["class"]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(records)
    return out_path
