"""ARFF and delimited-text readers producing :class:`~icsids.dataset.Dataset`.

Only numeric and nominal ARFF attributes are understood; that is all the
Gas Pipeline corpus uses. Missing values (``?``) are an error unless the
caller asks for such rows to be dropped.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .dataset import Dataset
from .errors import (
    ArityMismatch,
    EmptyTable,
    MissingLabelColumn,
    MissingSection,
    MissingValue,
    NonBinaryLabel,
    UnparseableNumeric,
    UnsupportedAttribute,
)

NUMERIC = "numeric"
Kind = Union[str, tuple]  # "numeric" or ("nominal", (levels...))


@dataclass(frozen=True)
class DataSchema:
    feature_names: tuple[str, ...]
    feature_kinds: tuple[Kind, ...]
    label_column: str
    positive_label: str
    label_levels: tuple[str, ...] = ()

    def __post_init__(self):
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("duplicate feature names")
        if len(self.feature_kinds) != len(self.feature_names):
            raise ValueError("one kind per feature required")
        if self.label_column in self.feature_names:
            raise ValueError(f"label column {self.label_column!r} listed as a feature")


@dataclass
class RawTable:
    """Parsed rows; each row is the feature values followed by the label string."""

    rows: list[tuple]
    schema: DataSchema
    dropped_rows: int = field(default=0)


def _is_nominal(kind: Kind) -> bool:
    return isinstance(kind, tuple) and kind[0] == "nominal"


def _parse_number(s: str, line: int, col: int) -> float:
    try:
        v = float(s)
    except ValueError:
        raise UnparseableNumeric(line, col, s) from None
    if not math.isfinite(v):
        raise UnparseableNumeric(line, col, s)
    return v


# -- ARFF ---------------------------------------------------------------------

def _split_values(line: str) -> list[str]:
    quote = '"' if '"' in line and "'" not in line else "'"
    rec = next(csv.reader([line], quotechar=quote, escapechar="\\", skipinitialspace=True), [])
    return [v.strip() for v in rec]


def _parse_attribute(rest: str, lineno: int) -> tuple[str, Kind]:
    rest = rest.strip()
    if rest[:1] in "'\"":
        q = rest[0]
        end = rest.index(q, 1)
        name, typ = rest[1:end], rest[end + 1:].strip()
    else:
        parts = rest.split(None, 1)
        if len(parts) != 2:
            raise UnsupportedAttribute(f"line {lineno}: malformed @attribute declaration")
        name, typ = parts
    if typ.startswith("{"):
        if not typ.endswith("}"):
            raise UnsupportedAttribute(f"line {lineno}: unterminated nominal level list")
        levels = tuple(v for v in _split_values(typ[1:-1]))
        if not levels or any(v == "" for v in levels):
            raise UnsupportedAttribute(f"line {lineno}: nominal attribute {name!r} needs levels")
        return name, ("nominal", levels)
    if typ.lower() in ("numeric", "real", "integer"):
        return name, NUMERIC
    raise UnsupportedAttribute(f"line {lineno}: attribute {name!r} has unsupported type {typ!r}")


def parse_arff(
    text: str,
    label_column: str | None = None,
    positive_label: str = "1",
    drop_columns: Sequence[str] = (),
    drop_missing: bool = False,
) -> RawTable:
    """Parse an ARFF document.

    The label defaults to the last attribute. ``drop_columns`` removes extra
    attributes (the Gas Pipeline file carries categorized/specific result
    columns next to the binary one).
    """
    attrs: list[tuple[str, Kind]] = []
    lines = text.splitlines()
    data_start = None
    saw_relation = False
    for i, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        low = line.lower()
        if low.startswith("@relation"):
            saw_relation = True
        elif low.startswith("@attribute"):
            attrs.append(_parse_attribute(line[len("@attribute"):], i))
        elif low.startswith("@data"):
            data_start = i
            break
        else:
            raise UnsupportedAttribute(f"line {i}: unexpected header line {line[:40]!r}")
    if not saw_relation:
        raise MissingSection("no @relation declaration")
    if not attrs:
        raise MissingSection("no @attribute declarations")
    if data_start is None:
        raise MissingSection("no @data section")

    names = [a[0] for a in attrs]
    label = label_column if label_column is not None else names[-1]
    if label not in names:
        raise MissingLabelColumn(f"label column {label!r} not among attributes")
    for d in drop_columns:
        if d not in names:
            raise MissingLabelColumn(f"column {d!r} to drop is not an attribute")
    label_pos = names.index(label)
    keep = [j for j, n in enumerate(names) if n != label and n not in drop_columns]
    kinds = [a[1] for a in attrs]

    rows, dropped = [], 0
    for i in range(data_start + 1, len(lines) + 1):
        line = lines[i - 1].strip()
        if not line or line.startswith("%"):
            continue
        if line.startswith("{"):
            raise UnsupportedAttribute(f"line {i}: sparse ARFF rows are not supported")
        vals = _split_values(line)
        if len(vals) != len(attrs):
            raise ArityMismatch(i, len(attrs), len(vals))
        if "?" in vals:
            if drop_missing:
                dropped += 1
                continue
            raise MissingValue(f"line {i}: missing value '?'")
        row = []
        for j in keep:
            kind = kinds[j]
            if _is_nominal(kind):
                if vals[j] not in kind[1]:
                    raise UnparseableNumeric(i, j + 1, vals[j])
                row.append(vals[j])
            else:
                row.append(_parse_number(vals[j], i, j + 1))
        row.append(vals[label_pos])
        rows.append(tuple(row))

    label_kind = kinds[label_pos]
    schema = DataSchema(
        feature_names=tuple(names[j] for j in keep),
        feature_kinds=tuple(kinds[j] for j in keep),
        label_column=label,
        positive_label=positive_label,
        label_levels=label_kind[1] if _is_nominal(label_kind) else (),
    )
    return RawTable(rows, schema, dropped)


# -- delimited text -----------------------------------------------------------


def parse_delimited(
    text: str,
    delimiter: str = ",",
    schema_hint: DataSchema | None = None,
    label_column: str = "label",
    positive_label: str = "Attack",
    drop_columns: Sequence[str] = (),
    drop_missing: bool = False,
) -> RawTable:
    """Parse header-first delimited text. Lines starting with ``#`` are comments.

    With ``schema_hint`` the header still names the columns, but kinds, label
    column and positive label come from the hint.
    """
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    header = None
    records = []
    for rec in reader:
        if not rec or (len(rec) == 1 and not rec[0].strip()):
            continue
        if rec[0].lstrip().startswith("#"):
            continue
        if header is None:
            header = [c.strip() for c in rec]
            continue
        records.append((reader.line_num, [c.strip() for c in rec]))
    if header is None:
        raise EmptyTable("no header line")

    if schema_hint is not None:
        label_column = schema_hint.label_column
        positive_label = schema_hint.positive_label
    if label_column not in header:
        raise MissingLabelColumn(f"label column {label_column!r} not in header")
    label_pos = header.index(label_column)
    keep = [j for j, n in enumerate(header) if n != label_column and n not in drop_columns]
    names = tuple(header[j] for j in keep)
    if schema_hint is not None:
        hint = dict(zip(schema_hint.feature_names, schema_hint.feature_kinds))
        missing = [n for n in names if n not in hint]
        if missing:
            raise MissingLabelColumn(f"columns {missing} not described by schema hint")
        kinds = tuple(hint[n] for n in names)
    else:
        kinds = (NUMERIC,) * len(names)

    rows, dropped = [], 0
    for line, rec in records:
        if len(rec) != len(header):
            raise ArityMismatch(line, len(header), len(rec))
        if any(rec[j] in ("", "?", "NA", "NaN") for j in keep):
            if drop_missing:
                dropped += 1
                continue
            raise MissingValue(f"line {line}: missing value")
        row = []
        for j, kind in zip(keep, kinds):
            row.append(rec[j] if _is_nominal(kind) else _parse_number(rec[j], line, j + 1))
        row.append(rec[label_pos])
        rows.append(tuple(row))
    schema = DataSchema(names, kinds, label_column, positive_label)
    return RawTable(rows, schema, dropped)


# -- conversion ---------------------------------------------------------------


def to_dataset(table: RawTable, features: Sequence[str] | None = None) -> Dataset:
    """One-hot encode nominal features and map the label to Attack=1 / Normal=0.

    ``features`` optionally restricts the output to a subset of source columns.
    """
    schema = table.schema
    if not table.rows:
        raise EmptyTable("table has no rows")
    observed = sorted({r[-1] for r in table.rows})
    if len(observed) > 2:
        raise NonBinaryLabel(f"label column {schema.label_column!r} has levels {observed}")
    if len(observed) == 2 and schema.positive_label not in observed:
        raise NonBinaryLabel(
            f"positive label {schema.positive_label!r} not among observed levels {observed}"
        )
    selected = range(len(schema.feature_names))
    if features is not None:
        unknown = set(features) - set(schema.feature_names)
        if unknown:
            raise MissingLabelColumn(f"unknown feature columns {sorted(unknown)}")
        selected = [j for j, n in enumerate(schema.feature_names) if n in set(features)]

    n = len(table.rows)
    cols, names = [], []
    for j in selected:
        kind, name = schema.feature_kinds[j], schema.feature_names[j]
        values = [r[j] for r in table.rows]
        if _is_nominal(kind):
            levels = kind[1]
            lookup = {lv: c for c, lv in enumerate(levels)}
            block = np.zeros((n, len(levels)))
            block[np.arange(n), [lookup[v] for v in values]] = 1.0
            cols.append(block)
            names.extend(f"{name}={lv}" for lv in levels)
        else:
            cols.append(np.asarray(values, dtype=np.float64).reshape(n, 1))
            names.append(name)
    X = np.hstack(cols) if cols else np.zeros((n, 0))
    y = np.fromiter((r[-1] == schema.positive_label for r in table.rows), dtype=np.int64, count=n)
    return Dataset(X, y, tuple(names))


def load_arff(path, **kw) -> Dataset:
    features = kw.pop("features", None)
    with open(path, encoding="utf-8") as fh:
        return to_dataset(parse_arff(fh.read(), **kw), features)


def load_delimited(path, **kw) -> Dataset:
    features = kw.pop("features", None)
    with open(path, encoding="utf-8", newline="") as fh:
        return to_dataset(parse_delimited(fh.read(), **kw), features)


def load_any(path, **kw) -> Dataset:
    """Dispatch on extension: ``.arff`` vs everything else as delimited text."""
    if str(path).lower().endswith(".arff"):
        kw.setdefault("positive_label", "1")
        return load_arff(path, **kw)
    return load_delimited(path, **kw)
