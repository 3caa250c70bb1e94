"""Dataset ingestion, feature encoding, and experiment splits.

CSV files are described by a small schema descriptor (see `load_schema`).
Categorical features are one-hot encoded, numeric features min-max scaled
to [0, 1]. Encoding statistics are fitted on a caller-chosen subset of rows
so that held-out and excluded-class instances cannot influence the feature
space; `prepare_experiment` wires this up for the leave-one-attack-out
protocol.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .seeding import SPLIT_STREAM, stream_rng

NUMERIC = "numeric"
CATEGORICAL = "categorical"
LABEL = "label"
IGNORE = "ignore"

_COLUMN_KINDS = (NUMERIC, CATEGORICAL, LABEL, IGNORE)


class SchemaError(ValueError):
    """Raised for malformed schema descriptor files."""


class DatasetError(ValueError):
    """Raised for unreadable or malformed dataset files."""


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    # Optional fixed category inventory; when empty the vocabulary is
    # learned from the fitting rows.
    values: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in _COLUMN_KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.values and self.kind != CATEGORICAL:
            raise SchemaError(f"column {self.name!r}: only categorical columns take values")


@dataclass(frozen=True)
class Schema:
    """Ordered column descriptors plus label bookkeeping.

    `label_map` collapses raw label strings into class names (e.g. mapping
    individual attack signatures onto their attack family); unmapped labels
    pass through unchanged. `normal_label` designates the benign class.
    """

    columns: tuple[Column, ...]
    normal_label: str | None = None
    label_map: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        labels = [c for c in self.columns if c.kind == LABEL]
        if len(labels) != 1:
            raise SchemaError(f"schema must declare exactly one label column, found {len(labels)}")

    @property
    def feature_columns(self) -> tuple[Column, ...]:
        return tuple(c for c in self.columns if c.kind in (NUMERIC, CATEGORICAL))

    @property
    def label_index(self) -> int:
        return next(i for i, c in enumerate(self.columns) if c.kind == LABEL)

    def map_label(self, raw: str) -> str:
        return self.label_map.get(raw, raw)


def bundled_schema_path(name: str) -> Path:
    """Path of a schema descriptor shipped with the package.

    Available: kddcup99, nslkdd, cicids2017.
    """
    path = Path(__file__).parent / "schemas" / f"{name}.schema"
    if not path.exists():
        available = sorted(p.stem for p in path.parent.glob("*.schema"))
        raise SchemaError(f"no bundled schema {name!r}; available: {available}")
    return path


def load_schema(path: str | Path) -> Schema:
    """Parse a schema descriptor file.

    Line format, one directive per line (blank lines and ``#`` comments
    ignored)::

        column <name> <kind> [v1|v2|...]   # kind: numeric|categorical|label|ignore
        normal <class name>
        map <raw label> <class name>
    """
    path = Path(path)
    columns: list[Column] = []
    normal = None
    label_map: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        key = parts[0]
        if key == "column":
            if len(parts) == 3:
                columns.append(Column(parts[1], parts[2]))
            elif len(parts) == 4:
                columns.append(Column(parts[1], parts[2], tuple(parts[3].split("|"))))
            else:
                raise SchemaError(f"{path}:{lineno}: expected 'column <name> <kind> [values]'")
        elif key == "normal" and len(parts) == 2:
            normal = parts[1]
        elif key == "map" and len(parts) == 3:
            label_map[parts[1]] = parts[2]
        else:
            raise SchemaError(f"{path}:{lineno}: unrecognised directive {line!r}")
    if not columns:
        raise SchemaError(f"{path}: no columns declared")
    return Schema(tuple(columns), normal, label_map)


@dataclass
class RawDataset:
    """Parsed rows in file order: feature tuples plus mapped class labels."""

    schema: Schema
    rows: list[tuple]          # feature values only, schema feature order
    labels: list[str]          # class name per row, post label_map

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def classes(self) -> tuple[str, ...]:
        """Observed class inventory, benign class first then alphabetical."""
        return _ordered_classes(set(self.labels), self.schema.normal_label)

    def class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for lab in self.labels:
            counts[lab] = counts.get(lab, 0) + 1
        return counts


def _ordered_classes(observed: set[str], normal: str | None) -> tuple[str, ...]:
    if normal is not None and normal in observed:
        return (normal, *sorted(observed - {normal}))
    return tuple(sorted(observed))


def load_dataset(path: str | Path, schema: Schema) -> RawDataset:
    """Read a comma-separated dataset file.

    Row order is preserved. A first line whose numeric fields fail to parse
    is treated as a header and skipped; any later malformed row is an error
    naming its line number.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: file not found")
    numeric_cols = [i for i, c in enumerate(schema.columns) if c.kind == NUMERIC]
    feature_cols = [(i, c) for i, c in enumerate(schema.columns) if c.kind in (NUMERIC, CATEGORICAL)]
    label_col = schema.label_index
    width = len(schema.columns)

    rows: list[tuple] = []
    labels: list[str] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, record in enumerate(reader, start=1):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            record = [f.strip() for f in record]
            if len(record) != width:
                raise DatasetError(
                    f"{path}: row {lineno}: expected {width} fields, got {len(record)}"
                )
            try:
                parsed = tuple(
                    float(record[i]) if col.kind == NUMERIC else record[i]
                    for i, col in feature_cols
                )
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header line
                bad = next(i for i in numeric_cols if not _is_float(record[i]))
                raise DatasetError(
                    f"{path}: row {lineno}: column {schema.columns[bad].name!r}: "
                    f"could not parse {record[bad]!r} as numeric"
                ) from None
            rows.append(parsed)
            labels.append(schema.map_label(record[label_col]))
    if not rows:
        raise DatasetError(f"{path}: no records")
    return RawDataset(schema, rows, labels)


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


@dataclass(frozen=True)
class FittedColumn:
    name: str
    kind: str
    lo: float = 0.0
    hi: float = 0.0
    values: tuple[str, ...] = ()

    @property
    def width(self) -> int:
        return 1 if self.kind == NUMERIC else len(self.values)


@dataclass(frozen=True)
class Encoder:
    """Fitted per-feature encoding statistics (frozen once fitted)."""

    columns: tuple[FittedColumn, ...]

    @property
    def width(self) -> int:
        return sum(c.width for c in self.columns)

    def groups(self) -> list[tuple[str, str, int, int]]:
        """(name, kind, start, stop) slice of each source feature in the
        encoded vector; used to audit one-hot group sums."""
        out = []
        offset = 0
        for c in self.columns:
            out.append((c.name, c.kind, offset, offset + c.width))
            offset += c.width
        return out

    def feature_names(self) -> list[str]:
        names = []
        for c in self.columns:
            if c.kind == NUMERIC:
                names.append(c.name)
            else:
                names.extend(f"{c.name}={v}" for v in c.values)
        return names

    def transform_row(self, row: Sequence) -> np.ndarray:
        out = np.zeros(self.width)
        offset = 0
        for value, col in zip(row, self.columns):
            if col.kind == NUMERIC:
                if col.hi > col.lo:
                    out[offset] = min(max((value - col.lo) / (col.hi - col.lo), 0.0), 1.0)
                # constant feature encodes as 0.0
                offset += 1
            else:
                try:
                    out[offset + col.values.index(value)] = 1.0
                except ValueError:
                    pass  # unseen category: all-zeros group
                offset += len(col.values)
        return out

    def transform(self, rows: Iterable[Sequence]) -> np.ndarray:
        encoded = [self.transform_row(r) for r in rows]
        if not encoded:
            return np.zeros((0, self.width))
        return np.vstack(encoded)


def fit_encoder(raw: RawDataset, fit_rows: Sequence[int]) -> Encoder:
    """Compute encoding statistics from `fit_rows` only.

    Numeric ranges and learned category vocabularies never see rows outside
    `fit_rows`; schema-declared vocabularies are taken as-is.
    """
    if len(fit_rows) == 0:
        raise DatasetError("fit_encoder: fit_rows is empty")
    fitted: list[FittedColumn] = []
    for j, col in enumerate(raw.schema.feature_columns):
        if col.kind == NUMERIC:
            values = [raw.rows[i][j] for i in fit_rows]
            fitted.append(FittedColumn(col.name, NUMERIC, lo=min(values), hi=max(values)))
        elif col.values:
            fitted.append(FittedColumn(col.name, CATEGORICAL, values=col.values))
        else:
            seen = sorted({raw.rows[i][j] for i in fit_rows})
            fitted.append(FittedColumn(col.name, CATEGORICAL, values=tuple(seen)))
    return Encoder(tuple(fitted))


@dataclass
class EncodedDataset:
    """Encoded feature matrix plus integer class labels.

    Class index 0 is always the benign class; attack classes follow in
    alphabetical order.
    """

    matrix: np.ndarray            # (n, width) float64 in [0, 1]
    labels: np.ndarray            # (n,) int64 class indices
    class_names: tuple[str, ...]
    encoder: Encoder

    NORMAL_CLASS = 0

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def width(self) -> int:
        return self.matrix.shape[1]

    @property
    def attack_classes(self) -> tuple[int, ...]:
        return tuple(range(1, self.n_classes))

    def instances_of(self, class_index: int) -> np.ndarray:
        return np.flatnonzero(self.labels == class_index)

    def class_index(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise DatasetError(f"unknown class {name!r}; have {list(self.class_names)}") from None


def encode(raw: RawDataset, encoder: Encoder) -> EncodedDataset:
    """Transform every row of `raw` with a fitted encoder."""
    if raw.schema.normal_label is None:
        raise DatasetError("schema does not designate the benign class (missing 'normal' directive)")
    if raw.schema.normal_label not in set(raw.labels):
        raise DatasetError(f"benign class {raw.schema.normal_label!r} has no instances")
    class_names = raw.classes
    index = {name: i for i, name in enumerate(class_names)}
    matrix = encoder.transform(raw.rows)
    if not np.all(np.isfinite(matrix)):
        raise DatasetError("encoding produced non-finite values")
    labels = np.fromiter((index[lab] for lab in raw.labels), dtype=np.int64, count=len(raw))
    return EncodedDataset(matrix, labels, class_names, encoder)


@dataclass
class ExperimentSplit:
    """Per-class instance pools for one leave-one-attack-out experiment.

    Retained classes are halved into a training pool (pair generation) and
    a testing pool (evaluation instances and comparison references). The
    excluded class is halved into a labelled pool (the few examples the
    classifier is allowed to see) and an unlabelled pool (the stream of
    unknown instances to classify).
    """

    dataset: EncodedDataset
    excluded_class: int
    training_pools: dict[int, np.ndarray]
    testing_pools: dict[int, np.ndarray]
    excluded_labelled: np.ndarray
    excluded_unlabelled: np.ndarray

    @property
    def training_classes(self) -> tuple[int, ...]:
        return tuple(sorted(self.training_pools))

    @property
    def n_classes(self) -> int:
        return self.dataset.n_classes

    def reference_pool(self, class_index: int) -> np.ndarray:
        """Pool the classifier draws comparison references from."""
        if class_index == self.excluded_class:
            return self.excluded_labelled
        return self.testing_pools[class_index]

    def evaluation_pool(self, class_index: int) -> np.ndarray:
        """Pool evaluation instances of a class are drawn from."""
        if class_index == self.excluded_class:
            return self.excluded_unlabelled
        return self.testing_pools[class_index]

    def training_indices(self) -> np.ndarray:
        return np.concatenate([self.training_pools[c] for c in self.training_classes])


def _as_rng(rng: int | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _halve(indices: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    # odd counts: the extra instance goes to the first (training/labelled) half
    perm = rng.permutation(indices)
    cut = math.ceil(len(perm) / 2)
    return perm[:cut], perm[cut:]


def _split_pools(
    labels: np.ndarray,
    class_names: Sequence[str],
    excluded_class: int,
    rng: np.random.Generator,
):
    n_classes = len(class_names)
    if not 0 <= excluded_class < n_classes:
        raise DatasetError(f"excluded class index {excluded_class} out of range")
    if excluded_class == EncodedDataset.NORMAL_CLASS:
        raise DatasetError("cannot exclude benign class")
    training, testing = {}, {}
    labelled = unlabelled = None
    for c in range(n_classes):
        members = np.flatnonzero(labels == c)
        if len(members) < 2:
            raise DatasetError(
                f"class {class_names[c]!r} has {len(members)} instance(s); need at least 2 to split"
            )
        first, second = _halve(members, rng)
        if c == excluded_class:
            labelled, unlabelled = first, second
        else:
            training[c], testing[c] = first, second
    return training, testing, labelled, unlabelled


def make_split(
    ds: EncodedDataset,
    excluded_class: int,
    rng: int | np.random.Generator,
) -> ExperimentSplit:
    """Shuffle and halve every class; deterministic given the seed."""
    training, testing, labelled, unlabelled = _split_pools(
        ds.labels, ds.class_names, excluded_class, _as_rng(rng)
    )
    return ExperimentSplit(ds, excluded_class, training, testing, labelled, unlabelled)


def prepare_experiment(
    raw: RawDataset,
    excluded_class: int | str,
    seed: int,
) -> tuple[EncodedDataset, ExperimentSplit]:
    """Split first, then fit the encoder on training pools only.

    This is the leakage-free path: encoding statistics are computed from
    the union of the retained classes' training pools, so neither testing
    rows nor any excluded-class row can influence the feature space.
    """
    class_names = raw.classes
    if isinstance(excluded_class, str):
        try:
            excluded_class = class_names.index(excluded_class)
        except ValueError:
            raise DatasetError(
                f"unknown class {excluded_class!r}; have {list(class_names)}"
            ) from None
    index = {name: i for i, name in enumerate(class_names)}
    labels = np.fromiter((index[lab] for lab in raw.labels), dtype=np.int64, count=len(raw))
    rng = stream_rng(seed, SPLIT_STREAM)
    training, testing, labelled, unlabelled = _split_pools(
        labels, class_names, excluded_class, rng
    )
    fit_rows = np.sort(np.concatenate([training[c] for c in sorted(training)]))
    encoder = fit_encoder(raw, fit_rows)
    ds = encode(raw, encoder)
    split = ExperimentSplit(ds, excluded_class, training, testing, labelled, unlabelled)
    return ds, split
