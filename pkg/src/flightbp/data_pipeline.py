"""NTSB-style accident CSV ingestion, cleaning, splitting and encoding.

Header cells bind to record fields case-insensitively with non-alphanumerics
ignored, so ``Injury Severity``, ``Injury.Severity`` and ``InjurySeverity``
all map to ``injury_severity``.  Cells that cannot be parsed become absent
and produce a ``ParseWarning``; rows are never dropped at parse time.
Cleaning then filters (it never imputes), and the z-score statistics and
categorical vocabularies are fitted on the training split only.

A ``Row`` column, when present, supplies the source row number; the split
files written by the CLI carry one so records stay traceable to the
original export.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from flightbp.errors import (
    EmptyInput,
    InsufficientClassSamples,
    MalformedCsv,
    MissingHeader,
    SchemaMismatch,
)

log = logging.getLogger(__name__)

FATAL = "Fatal"
NON_FATAL = "NonFatal"
# index order is part of the model contract: class 1 is the positive (Fatal) class
BINARY_CLASSES = (NON_FATAL, FATAL)
UNKNOWN = "<UNKNOWN>"

NUMERIC_FIELDS = ("latitude", "longitude", "number_of_engines")
TEXT_FIELDS = (
    "location",
    "country",
    "airport_code",
    "injury_severity",
    "aircraft_damage",
    "make",
    "model",
    "amateur_built",
    "engine_type",
)
LABEL_FIELD = "injury_severity"

# closed intervals; None means unbounded on that side
FIELD_RANGES = {
    "latitude": (-90.0, 90.0),
    "longitude": (-180.0, 180.0),
    "number_of_engines": (0, None),
}

# canonical output header, in the column order of the NTSB export
CSV_HEADERS = {
    "location": "Location",
    "country": "Country",
    "latitude": "Latitude",
    "longitude": "Longitude",
    "airport_code": "Airport Code",
    "injury_severity": "Injury Severity",
    "aircraft_damage": "Aircraft Damage",
    "make": "Make",
    "model": "Model",
    "amateur_built": "Amateur Built",
    "number_of_engines": "Number of Engines",
    "engine_type": "Engine Type",
}


def header_key(name: str) -> str:
    return re.sub(r"[^a-z0-9]", "", name.lower())


_FIELD_BY_KEY = {header_key(name): name for name in CSV_HEADERS}


@dataclass(frozen=True)
class RawRecord:
    """One data row; ``row`` is the 1-based data-row number (header excluded)."""

    row: int
    location: Optional[str] = None
    country: Optional[str] = None
    latitude: Optional[float] = None
    longitude: Optional[float] = None
    airport_code: Optional[str] = None
    injury_severity: Optional[str] = None
    aircraft_damage: Optional[str] = None
    make: Optional[str] = None
    model: Optional[str] = None
    amateur_built: Optional[str] = None
    number_of_engines: Optional[int] = None
    engine_type: Optional[str] = None

    def get(self, name: str):
        return getattr(self, name)


RECORD_FIELDS = tuple(f.name for f in fields(RawRecord) if f.name != "row")


@dataclass(frozen=True)
class ParseWarning:
    row: int
    column: str
    value: str
    message: str

    def __str__(self):
        return f"row {self.row}, column {self.column}: {self.message} ({self.value!r})"


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("non-finite value")
    return value


def _parse_int(text: str) -> int:
    value = _parse_float(text)
    if value != int(value):
        raise ValueError("not an integer")
    return int(value)


_PARSERS = {"latitude": _parse_float, "longitude": _parse_float, "number_of_engines": _parse_int}


def _decode(source) -> str:
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, (bytes, bytearray)):
        try:
            return bytes(source).decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise MalformedCsv(f"input is not valid UTF-8: {exc}") from None
    return source.lstrip("\ufeff")


def parse_records(
    source, required_columns: Iterable[str] = ()
) -> tuple[list[RawRecord], list[ParseWarning]]:
    """Parse an accident CSV (bytes, text or a file object) into raw records.

    ``required_columns`` names record fields whose columns must appear in the
    header; any absent ones raise a single ``MissingHeader`` listing them all.
    """
    text = _decode(source)
    reader = csv.reader(io.StringIO(text, newline=""), strict=True)
    try:
        header = next(reader, None)
        if header is None:
            raise MalformedCsv("input is empty: a header row is required")
        bindings = {}
        row_col = None
        for pos, cell in enumerate(header):
            if header_key(cell) == "row" and row_col is None:
                row_col = pos
                continue
            name = _FIELD_BY_KEY.get(header_key(cell))
            if name is not None and name not in bindings.values():
                bindings[pos] = name
        missing = [c for c in required_columns if c not in bindings.values()]
        if missing:
            raise MissingHeader(missing)

        records, warnings = [], []
        row_no = 0
        for cells in reader:
            if not cells:
                continue
            row_no += 1
            row_id = row_no
            if row_col is not None and row_col < len(cells):
                try:
                    row_id = int(cells[row_col])
                except ValueError:
                    raise MalformedCsv(f"data row {row_no}: Row column holds {cells[row_col]!r}") from None
            if len(cells) > len(header) and any(c.strip() for c in cells[len(header):]):
                raise MalformedCsv(
                    f"data row {row_no} (line {reader.line_num}) has {len(cells)} fields, header has {len(header)}"
                )
            values = {}
            for pos, name in bindings.items():
                cell = cells[pos].strip() if pos < len(cells) else ""
                if not cell:
                    continue
                parser = _PARSERS.get(name)
                if parser is None:
                    values[name] = cell
                    continue
                try:
                    values[name] = parser(cell)
                except ValueError:
                    warnings.append(ParseWarning(row_id, name, cell, f"cannot parse {name}"))
            records.append(RawRecord(row=row_id, **values))
    except csv.Error as exc:
        raise MalformedCsv(f"line {reader.line_num}: {exc}") from None
    return records, warnings


def header_fields(source) -> list[str]:
    """Record fields bound by the header row, in header order."""
    first = next(csv.reader(io.StringIO(_decode(source), newline="")), [])
    found = []
    for cell in first:
        name = _FIELD_BY_KEY.get(header_key(cell))
        if name is not None and name not in found:
            found.append(name)
    return found


def write_records_csv(records: Iterable[RawRecord]) -> str:
    """Serialise raw records back to CSV text that ``parse_records`` reads losslessly."""
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["Row"] + [CSV_HEADERS[name] for name in RECORD_FIELDS])
    for rec in records:
        cells = [str(rec.row)]
        for name in RECORD_FIELDS:
            value = rec.get(name)
            cells.append("" if value is None else (repr(value) if isinstance(value, float) else str(value)))
        writer.writerow(cells)
    return buf.getvalue()


_FATAL_RE = re.compile(r"^fatal\s*(\(\s*\d*\s*\))?$", re.IGNORECASE)


def derive_label(raw: RawRecord) -> Optional[str]:
    """``Fatal`` for "Fatal"/"Fatal(n)", ``NonFatal`` for "Non-Fatal", else None."""
    text = raw.injury_severity
    if text is None:
        return None
    text = text.strip()
    if _FATAL_RE.match(text):
        return FATAL
    if re.sub(r"[\s\-_]", "", text).lower() == "nonfatal":
        return NON_FATAL
    return None


@dataclass(frozen=True)
class FeatureConfig:
    numeric: tuple[str, ...] = ("latitude", "longitude", "number_of_engines")
    categorical: tuple[str, ...] = ("make", "engine_type", "amateur_built")

    def __post_init__(self):
        object.__setattr__(self, "numeric", tuple(self.numeric))
        object.__setattr__(self, "categorical", tuple(self.categorical))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        for name in self.numeric:
            if name not in NUMERIC_FIELDS:
                out.append(f"{name!r} is not a numeric column (choose from {', '.join(NUMERIC_FIELDS)})")
        for name in self.categorical:
            if name not in RECORD_FIELDS:
                out.append(f"{name!r} is not a known column")
            elif name == LABEL_FIELD:
                out.append(f"{name!r} is the label column and cannot be a feature")
        names = self.names
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            out.append(f"duplicate feature columns: {', '.join(dupes)}")
        if not names:
            out.append("at least one feature column is required")
        return out

    @property
    def names(self) -> list[str]:
        return list(self.numeric) + list(self.categorical)

    @property
    def required_columns(self) -> list[str]:
        return [LABEL_FIELD] + self.names

    def to_dict(self) -> dict:
        return {"numeric": list(self.numeric), "categorical": list(self.categorical)}


@dataclass(frozen=True, eq=False)
class CleanRecord:
    row: int
    label: Optional[str]
    features: Mapping[str, object]
    raw: Optional[RawRecord] = None

    def get(self, name: str):
        return self.features.get(name)


@dataclass
class RejectionReport:
    n_input: int = 0
    n_kept: int = 0
    reasons: Counter = field(default_factory=Counter)
    rejected_rows: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_rejected(self) -> int:
        return len(self.rejected_rows)

    def add(self, row: int, reason: str) -> None:
        self.reasons[reason] += 1
        self.rejected_rows.append((row, reason))

    def to_text(self) -> str:
        """Structured ``key: value`` text, reasons sorted by name, then one line per rejected row."""
        lines = [f"input: {self.n_input}", f"kept: {self.n_kept}", f"rejected: {self.n_rejected}"]
        for reason in sorted(self.reasons):
            lines.append(f"reason[{reason}]: {self.reasons[reason]}")
        for row, reason in self.rejected_rows:
            lines.append(f"row[{row}]: {reason}")
        return "\n".join(lines) + "\n"


def _rejection_reason(raw: RawRecord, config: FeatureConfig, need_label: bool = True) -> Optional[str]:
    if need_label and derive_label(raw) is None:
        return "missing label"
    for name in config.names:
        value = raw.get(name)
        if value is None:
            return f"missing {name}"
        bounds = FIELD_RANGES.get(name)
        if bounds is not None:
            lo, hi = bounds
            if (lo is not None and value < lo) or (hi is not None and value > hi):
                return f"out-of-range {name}"
    return None


def _feature_value(name: str, value):
    if name in NUMERIC_FIELDS:
        return value
    return normalize_category(value)


def normalize_category(value) -> str:
    return " ".join(str(value).split()).casefold()


def clean_records(
    raw: Sequence[RawRecord], feature_config: FeatureConfig = FeatureConfig()
) -> tuple[list[CleanRecord], RejectionReport]:
    """Keep records with a label and every configured feature present and in range.

    Each rejected record gets the first failing check as its reason: the
    label, then the features in configuration order.
    """
    report = RejectionReport(n_input=len(raw))
    kept = []
    for rec in raw:
        reason = _rejection_reason(rec, feature_config)
        if reason is not None:
            report.add(rec.row, reason)
            continue
        feats = {name: _feature_value(name, rec.get(name)) for name in feature_config.names}
        kept.append(CleanRecord(rec.row, derive_label(rec), feats, rec))
    report.n_kept = len(kept)
    return kept, report


def prepare_unlabeled(raw: RawRecord, feature_config: FeatureConfig):
    """Feature-only cleaning for prediction: a ``CleanRecord`` (label may be None) or a rejection reason."""
    reason = _rejection_reason(raw, feature_config, need_label=False)
    if reason is not None:
        return reason
    feats = {name: _feature_value(name, raw.get(name)) for name in feature_config.names}
    return CleanRecord(raw.row, derive_label(raw), feats, raw)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.70
    val_fraction: float = 0.15
    test_fraction: float = 0.15
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        for name, f in zip(("train", "val", "test"), fracs):
            if not (0 < f < 1):
                out.append(f"{name} fraction must lie in (0, 1), got {f}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            out.append(f"split fractions must sum to 1, got {sum(fracs)!r}")
        return out


def _partition(n: int, spec: SplitSpec) -> tuple[int, int]:
    # tolerance guards against e.g. 0.29 * 100 == 28.999999999999996
    n_train = math.floor(spec.train_fraction * n + 1e-9)
    n_val = math.floor(spec.val_fraction * n + 1e-9)
    return n_train, n_val


def split(
    records: Sequence[CleanRecord], spec: SplitSpec = SplitSpec(), class_names: Sequence[str] = BINARY_CLASSES
) -> tuple[list[CleanRecord], list[CleanRecord], list[CleanRecord]]:
    """Seeded train/validation/test partition.

    Sizes are floor(fraction * n) for train and validation with the
    remainder going to test, per class when stratified.  Each split keeps
    the input order of its records.
    """
    if not records:
        raise EmptyInput("cannot split an empty record list")
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        groups = []
        for name in class_names:
            idx = [i for i, r in enumerate(records) if r.label == name]
            if not idx:
                raise InsufficientClassSamples(f"stratified split needs at least one {name!r} record")
            groups.append(idx)
        stray = [r.label for r in records if r.label not in class_names]
        if stray:
            raise InsufficientClassSamples(f"records carry undeclared class labels: {sorted(set(stray))}")
    else:
        groups = [list(range(len(records)))]

    parts = ([], [], [])
    for idx in groups:
        perm = [idx[i] for i in rng.permutation(len(idx))]
        n_train, n_val = _partition(len(perm), spec)
        parts[0].extend(perm[:n_train])
        parts[1].extend(perm[n_train:n_train + n_val])
        parts[2].extend(perm[n_train + n_val:])
    return tuple([records[i] for i in sorted(p)] for p in parts)


@dataclass(frozen=True)
class NumericFeature:
    name: str
    mean: float
    std: float


@dataclass(frozen=True)
class CategoricalFeature:
    name: str
    vocabulary: tuple[str, ...]

    @property
    def width(self) -> int:
        return len(self.vocabulary) + 1

    @property
    def unknown_index(self) -> int:
        return len(self.vocabulary)

    def index(self, value) -> int:
        try:
            return self.vocabulary.index(normalize_category(value))
        except ValueError:
            return self.unknown_index


@dataclass(frozen=True)
class FeatureSchema:
    """Fitted encoding: numeric features first, then one-hot blocks, in config order."""

    numeric: tuple[NumericFeature, ...]
    categorical: tuple[CategoricalFeature, ...]
    class_names: tuple[str, ...] = BINARY_CLASSES
    warnings: tuple[str, ...] = ()

    @property
    def encoded_width(self) -> int:
        return len(self.numeric) + sum(c.width for c in self.categorical)

    @property
    def target_width(self) -> int:
        return 1 if len(self.class_names) == 2 else len(self.class_names)

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.numeric] + [c.name for c in self.categorical]

    @property
    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(tuple(f.name for f in self.numeric), tuple(c.name for c in self.categorical))

    def column_names(self) -> list[str]:
        cols = [f.name for f in self.numeric]
        for c in self.categorical:
            cols.extend(f"{c.name}={v}" for v in c.vocabulary)
            cols.append(f"{c.name}={UNKNOWN}")
        return cols

    def target_names(self) -> list[str]:
        if len(self.class_names) == 2:
            return [f"target={self.class_names[1]}"]
        return [f"target={name}" for name in self.class_names]

    def to_dict(self) -> dict:
        return {
            "numeric": [{"name": f.name, "mean": f.mean, "std": f.std} for f in self.numeric],
            "categorical": [{"name": c.name, "vocabulary": list(c.vocabulary)} for c in self.categorical],
            "class_names": list(self.class_names),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FeatureSchema":
        return cls(
            tuple(NumericFeature(d["name"], float(d["mean"]), float(d["std"])) for d in data["numeric"]),
            tuple(CategoricalFeature(d["name"], tuple(d["vocabulary"])) for d in data["categorical"]),
            tuple(data["class_names"]),
        )


def fit_schema(
    train_records: Sequence[CleanRecord],
    feature_config: FeatureConfig = FeatureConfig(),
    class_names: Sequence[str] = BINARY_CLASSES,
) -> FeatureSchema:
    if not train_records:
        raise EmptyInput("cannot fit a feature schema on an empty training set")
    warnings = []
    numeric = []
    for name in feature_config.numeric:
        values = np.array([r.get(name) for r in train_records], dtype=np.float64)
        mean = float(np.mean(values))
        std = float(np.std(values))
        if std == 0.0:
            msg = f"ConstantColumn: {name} is constant ({mean!r}) in the training split; std stored as 1"
            log.warning(msg)
            warnings.append(msg)
            std = 1.0
        numeric.append(NumericFeature(name, mean, std))
    categorical = []
    for name in feature_config.categorical:
        vocab = sorted({normalize_category(r.get(name)) for r in train_records})
        categorical.append(CategoricalFeature(name, tuple(vocab)))
    return FeatureSchema(tuple(numeric), tuple(categorical), tuple(class_names), tuple(warnings))


def encode(record: CleanRecord, schema: FeatureSchema) -> tuple[np.ndarray, np.ndarray]:
    return encode_features(record, schema), encode_target(record.label, schema.class_names)


def encode_features(record: CleanRecord, schema: FeatureSchema) -> np.ndarray:
    missing = [n for n in schema.feature_names if record.get(n) is None]
    if missing:
        raise SchemaMismatch(
            f"record {record.row} lacks schema feature(s): {', '.join(missing)}",
            expected=schema.feature_names,
            found=[n for n in schema.feature_names if n not in missing],
        )
    x = np.zeros(schema.encoded_width)
    for i, f in enumerate(schema.numeric):
        x[i] = (float(record.get(f.name)) - f.mean) / f.std
    offset = len(schema.numeric)
    for c in schema.categorical:
        x[offset + c.index(record.get(c.name))] = 1.0
        offset += c.width
    return x


def encode_target(label: str, class_names: Sequence[str]) -> np.ndarray:
    """Binary: [+1] for class 1 else [-1].  K > 2: +1 at the class, -1 elsewhere."""
    try:
        k = list(class_names).index(label)
    except ValueError:
        raise SchemaMismatch(f"label {label!r} is not one of {list(class_names)}") from None
    if len(class_names) == 2:
        return np.array([1.0 if k == 1 else -1.0])
    y = np.full(len(class_names), -1.0)
    y[k] = 1.0
    return y


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    ids: tuple[int, ...]

    def __len__(self):
        return self.features.shape[0]

    def labels(self) -> np.ndarray:
        """Class indices recovered from the encoded targets."""
        if self.targets.shape[1] == 1:
            return (self.targets[:, 0] > 0).astype(int)
        return np.argmax(self.targets, axis=1)


def build_dataset(records: Sequence[CleanRecord], schema: FeatureSchema) -> Dataset:
    x = np.zeros((len(records), schema.encoded_width))
    y = np.zeros((len(records), schema.target_width))
    for i, rec in enumerate(records):
        x[i], y[i] = encode(rec, schema)
    return Dataset(x, y, tuple(r.row for r in records))


def dataset_to_csv(dataset: Dataset, schema: FeatureSchema) -> str:
    """Encoded dataset as CSV: source row, feature columns, target columns."""
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row"] + schema.column_names() + schema.target_names())
    for rid, x, y in zip(dataset.ids, dataset.features, dataset.targets):
        writer.writerow([rid] + [repr(float(v)) for v in x] + [repr(float(v)) for v in y])
    return buf.getvalue()


def dataset_from_csv(text: str, schema: FeatureSchema) -> Dataset:
    rows = list(csv.reader(io.StringIO(text, newline="")))
    expected = ["row"] + schema.column_names() + schema.target_names()
    if not rows or rows[0] != expected:
        raise SchemaMismatch("encoded dataset columns do not match the schema", expected, rows[0] if rows else [])
    body = rows[1:]
    w = schema.encoded_width
    ids = tuple(int(r[0]) for r in body)
    values = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64)
    values = values.reshape(len(body), w + schema.target_width)
    return Dataset(values[:, :w].copy(), values[:, w:].copy(), ids)
