"""
Panel data model: one observation per unit per period.

A ``PanelDataset`` stores its records column-wise in numpy arrays and is
immutable after construction.  Periods are remapped on ingestion to the
consecutive integers ``1..T`` (in sorted order of the original labels, which
are kept for export).

Estimators only ever see *complete* units, i.e. units with a record for
every period and both outcomes present.  ``PanelDataset.wide()`` returns
those as ``(n_units, T)`` matrices.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    DimensionError,
    DuplicateKeyError,
    InsufficientPeriodsError,
    ParseError,
    SchemaError,
)

DEFAULT_SCHEMA = {
    "unit_id": "unit_id",
    "period": "period",
    "treated": "treated",
    "actual_outcome": "actual_outcome",
    "predicted_outcome": "predicted_outcome",
}

_TRUE_TOKENS = {"1", "true"}
_FALSE_TOKENS = {"0", "false"}


@dataclass(frozen=True)
class PanelRecord:
    unit_id: Any
    period: int
    treated: bool
    actual_outcome: float | None = None
    predicted_outcome: float | None = None

    def __post_init__(self):
        if int(self.period) != self.period or self.period < 1:
            raise ParseError(f"period must be an integer >= 1, got {self.period!r}")


@dataclass(frozen=True)
class DeltaPair:
    unit_id: Any
    delta_actual: float
    delta_predicted: float


@dataclass(frozen=True)
class CenteredObservation:
    unit_id: Any
    period: int
    centered_actual: float
    centered_predicted: float


@dataclass(frozen=True, eq=False)
class WidePanel:
    """Complete units as ``(n_units, n_periods)`` matrices."""

    unit_ids: np.ndarray
    actual: np.ndarray
    predicted: np.ndarray
    treated: np.ndarray

    @property
    def n_units(self) -> int:
        return self.actual.shape[0]

    @property
    def n_periods(self) -> int:
        return self.actual.shape[1]


@dataclass(frozen=True, eq=False)
class DeltaTable(Sequence):
    """Per-unit period-2 minus period-1 differences, stored column-wise."""

    unit_ids: np.ndarray
    delta_actual: np.ndarray
    delta_predicted: np.ndarray

    def __len__(self):
        return len(self.delta_actual)

    def __getitem__(self, i):
        return DeltaPair(self.unit_ids[i], float(self.delta_actual[i]),
                         float(self.delta_predicted[i]))

    def __iter__(self) -> Iterator[DeltaPair]:
        return (self[i] for i in range(len(self)))


@dataclass(frozen=True, eq=False)
class CenteredTable(Sequence):
    """Within-unit demeaned outcomes, one entry per (unit, period).

    ``unit_index`` holds integer codes ``0..n_units-1`` for grouping.
    """

    unit_ids: np.ndarray
    unit_index: np.ndarray
    periods: np.ndarray
    centered_actual: np.ndarray
    centered_predicted: np.ndarray
    n_units: int
    n_periods: int

    def __len__(self):
        return len(self.centered_actual)

    def __getitem__(self, i):
        return CenteredObservation(self.unit_ids[i], int(self.periods[i]),
                                   float(self.centered_actual[i]),
                                   float(self.centered_predicted[i]))

    def __iter__(self) -> Iterator[CenteredObservation]:
        return (self[i] for i in range(len(self)))


def _frozen(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


class PanelDataset:
    """Immutable collection of panel records.

    Build one with :func:`load_panel`, :meth:`from_records` or
    :meth:`from_wide`.  Missing outcomes are stored as NaN.
    """

    def __init__(self, unit_ids, period, treated, actual, predicted,
                 period_labels=None):
        # copies: freezing must not touch the caller's arrays
        unit_ids = np.array(unit_ids)
        period = np.array(period, dtype=np.int64)
        n = len(unit_ids)
        treated = np.array(treated, dtype=bool)
        actual = np.array(actual, dtype=float)
        predicted = np.array(predicted, dtype=float)
        for name, arr in (("period", period), ("treated", treated),
                          ("actual", actual), ("predicted", predicted)):
            if arr.shape != (n,):
                raise DimensionError(f"{name} has shape {arr.shape}, expected ({n},)")
        if n and period.min() < 1:
            raise ParseError("periods must be >= 1")
        n_periods = int(period.max()) if n else 0
        if period_labels is None:
            period_labels = list(range(1, n_periods + 1))
        if len(period_labels) < n_periods:
            raise DimensionError("fewer period labels than periods")

        codes, uniques = pd.factorize(unit_ids, sort=False)
        key = codes.astype(np.int64) * max(n_periods, 1) + (period - 1)
        uniq_keys, first, counts = np.unique(key, return_index=True,
                                             return_counts=True)
        if (counts > 1).any():
            bad = np.flatnonzero(key == uniq_keys[counts > 1][0])[1]
            raise DuplicateKeyError(unit_ids[bad], period_labels[period[bad] - 1])

        self._unit_ids = _frozen(unit_ids)
        self._period = _frozen(period)
        self._treated = _frozen(treated)
        self._actual = _frozen(actual)
        self._predicted = _frozen(predicted)
        self._codes = _frozen(codes)
        self._units = _frozen(np.asarray(uniques))
        self._period_labels = tuple(period_labels)
        self._n_periods = n_periods

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_records(cls, records: Iterable[PanelRecord]) -> "PanelDataset":
        records = list(records)
        nan = float("nan")
        return cls(
            np.array([r.unit_id for r in records], dtype=object),
            [r.period for r in records],
            [bool(r.treated) for r in records],
            [nan if r.actual_outcome is None else r.actual_outcome for r in records],
            [nan if r.predicted_outcome is None else r.predicted_outcome
             for r in records],
        )

    @classmethod
    def from_wide(cls, actual, predicted=None, treated=None, unit_ids=None):
        """Build a balanced panel from ``(n_units, T)`` matrices (unit-major rows)."""
        actual = np.asarray(actual, dtype=float)
        if actual.ndim != 2:
            raise DimensionError("wide outcome matrices must be 2-D")
        n, T = actual.shape
        predicted = (np.full_like(actual, np.nan) if predicted is None
                     else np.asarray(predicted, dtype=float))
        treated = (np.zeros(actual.shape, dtype=bool) if treated is None
                   else np.broadcast_to(np.asarray(treated, dtype=bool), actual.shape))
        unit_ids = np.arange(n) if unit_ids is None else np.asarray(unit_ids)
        ds = cls(np.repeat(unit_ids, T), np.tile(np.arange(1, T + 1), n),
                 treated.ravel(), actual.ravel(), predicted.ravel())
        if np.isfinite(actual).all() and np.isfinite(predicted).all():
            ds.__dict__["_wide"] = WidePanel(_frozen(unit_ids.copy()),
                                             _frozen(actual.copy()),
                                             _frozen(predicted.copy()),
                                             _frozen(np.array(treated)))
        return ds

    # -- basic accessors ----------------------------------------------------

    def __len__(self):
        return len(self._unit_ids)

    def __repr__(self):
        return (f"PanelDataset(records={len(self)}, units={self.n_units}, "
                f"complete={self.n_complete}, T={self.n_periods})")

    @property
    def n_periods(self) -> int:
        return self._n_periods

    @property
    def period_labels(self) -> tuple:
        return self._period_labels

    @property
    def n_units(self) -> int:
        return len(self._units)

    @property
    def unit_ids(self) -> np.ndarray:
        """Distinct unit ids in order of first appearance."""
        return self._units

    @property
    def columns(self) -> dict[str, np.ndarray]:
        return {"unit_id": self._unit_ids, "period": self._period,
                "treated": self._treated, "actual_outcome": self._actual,
                "predicted_outcome": self._predicted}

    @cached_property
    def records(self) -> tuple[PanelRecord, ...]:
        out = []
        for u, t, d, a, p in zip(self._unit_ids, self._period, self._treated,
                                 self._actual, self._predicted):
            out.append(PanelRecord(u, int(t), bool(d),
                                   None if np.isnan(a) else float(a),
                                   None if np.isnan(p) else float(p)))
        return tuple(out)

    @cached_property
    def _complete_mask(self) -> np.ndarray:
        """Per-unit flag: record for every period with both outcomes."""
        ok = np.isfinite(self._actual) & np.isfinite(self._predicted)
        counts = np.bincount(self._codes[ok], minlength=self.n_units)
        return counts == self._n_periods

    @property
    def n_complete(self) -> int:
        return int(self._complete_mask.sum())

    @property
    def complete_unit_ids(self) -> np.ndarray:
        return self._units[self._complete_mask]

    @cached_property
    def _unit_treated(self) -> np.ndarray:
        return np.bincount(self._codes, weights=self._treated,
                           minlength=self.n_units) > 0

    @property
    def has_treated(self) -> bool:
        return bool(self._treated.any())

    @property
    def treatment_fixed_within_unit(self) -> bool:
        on = np.bincount(self._codes, weights=self._treated, minlength=self.n_units)
        rows = np.bincount(self._codes, minlength=self.n_units)
        return bool(((on == 0) | (on == rows)).all())

    def quality(self) -> dict:
        """Data-quality summary; incomplete units are excluded from estimation."""
        return {
            "n_records": len(self),
            "n_units": self.n_units,
            "n_periods": self.n_periods,
            "n_complete_units": self.n_complete,
            "n_incomplete_units": self.n_units - self.n_complete,
            "n_treated_units": int(self._unit_treated.sum()),
            "n_missing_actual": int(np.isnan(self._actual).sum()),
            "n_missing_predicted": int(np.isnan(self._predicted).sum()),
        }

    # -- derived views ------------------------------------------------------

    @cached_property
    def _wide(self) -> WidePanel:
        T = self._n_periods
        keep_units = self._complete_mask
        rank = np.cumsum(keep_units) - 1
        rows = keep_units[self._codes]
        rows &= np.isfinite(self._actual) & np.isfinite(self._predicted)
        n = int(keep_units.sum())
        A = np.empty((n, T))
        P = np.empty((n, T))
        D = np.zeros((n, T), dtype=bool)
        r, c = rank[self._codes[rows]], self._period[rows] - 1
        A[r, c] = self._actual[rows]
        P[r, c] = self._predicted[rows]
        D[r, c] = self._treated[rows]
        return WidePanel(_frozen(self._units[keep_units]), _frozen(A),
                         _frozen(P), _frozen(D))

    def wide(self) -> WidePanel:
        return self._wide

    def _select_units(self, unit_index, relabel: bool) -> "PanelDataset":
        unit_index = np.asarray(unit_index, dtype=np.int64)
        if "_wide" in self.__dict__ and self._complete_mask.all():
            return self._select_from_wide(unit_index, relabel)
        order = self._unit_order
        starts, counts = self._unit_starts, self._unit_counts
        lens = counts[unit_index]
        offsets = np.repeat(starts[unit_index] - np.cumsum(lens) + lens, lens)
        rows = order[offsets + np.arange(lens.sum())]
        k = len(unit_index)
        codes = np.repeat(np.arange(k), lens)
        units = np.arange(k) if relabel else self._units[unit_index]
        # selected units are distinct and keep their periods: no re-validation
        ds = object.__new__(PanelDataset)
        ds._unit_ids = _frozen(codes if relabel else np.take(self._unit_ids, rows))
        ds._period = _frozen(np.take(self._period, rows))
        ds._treated = _frozen(np.take(self._treated, rows))
        ds._actual = _frozen(np.take(self._actual, rows))
        ds._predicted = _frozen(np.take(self._predicted, rows))
        ds._codes = _frozen(codes)
        ds._units = _frozen(units)
        ds._period_labels = self._period_labels
        ds._n_periods = self._n_periods
        return ds

    def _select_from_wide(self, unit_index, relabel: bool) -> "PanelDataset":
        # balanced parent: gather rows of the wide view, long form is its ravel
        w = self._wide
        k, T = len(unit_index), self._n_periods
        units = np.arange(k) if relabel else np.take(w.unit_ids, unit_index)
        # np.take is much faster than fancy indexing for row gathers
        A = np.take(w.actual, unit_index, axis=0)
        P = np.take(w.predicted, unit_index, axis=0)
        D = np.take(w.treated, unit_index, axis=0)
        codes = np.repeat(np.arange(k), T)
        ds = object.__new__(PanelDataset)
        ds._unit_ids = _frozen(codes if relabel else np.repeat(units, T))
        ds._period = _frozen(np.tile(np.arange(1, T + 1), k))
        ds._treated = _frozen(D.reshape(-1))
        ds._actual = _frozen(A.reshape(-1))
        ds._predicted = _frozen(P.reshape(-1))
        ds._codes = _frozen(codes)
        ds._units = _frozen(units)
        ds._period_labels = self._period_labels
        ds._n_periods = T
        ds.__dict__["_wide"] = WidePanel(_frozen(units), _frozen(A), _frozen(P), _frozen(D))
        return ds

    @cached_property
    def _unit_order(self):
        return np.argsort(self._codes, kind="stable")

    @cached_property
    def _unit_counts(self):
        return np.bincount(self._codes, minlength=self.n_units)

    @cached_property
    def _unit_starts(self):
        return np.concatenate([[0], np.cumsum(self._unit_counts)[:-1]])

    def take_units(self, unit_index) -> "PanelDataset":
        """Dataset made of the given units (positions into ``unit_ids``).

        Repeated positions become distinct units, relabelled ``0..k-1``;
        this is the resampling step of the cluster bootstrap.
        """
        return self._select_units(unit_index, relabel=True)

    def subset_units(self, mask) -> "PanelDataset":
        """Units where ``mask`` (aligned with ``unit_ids``) is true, ids kept."""
        return self._select_units(np.flatnonzero(mask), relabel=False)

    def untreated(self) -> "PanelDataset":
        """Units that are untreated in every period."""
        return self.subset_units(~self._unit_treated)

    def with_predicted(self, predicted) -> "PanelDataset":
        return PanelDataset(self._unit_ids, self._period, self._treated,
                            self._actual, predicted, self._period_labels)


# -- within-unit transformations ---------------------------------------------

def make_deltas(data: PanelDataset) -> DeltaTable:
    """Period-2 minus period-1 outcome differences for complete units."""
    if data.n_periods != 2:
        raise DimensionError(
            f"deltas need exactly 2 periods, panel has {data.n_periods}; "
            "use center_panel for T > 2")
    w = data.wide()
    return DeltaTable(w.unit_ids,
                      _frozen(w.actual[:, 1] - w.actual[:, 0]),
                      _frozen(w.predicted[:, 1] - w.predicted[:, 0]))


def center_matrix(x: np.ndarray) -> np.ndarray:
    """Subtract each row's mean.

    The row's first value is removed before averaging, so a row of identical
    values centers to exact zeros.
    """
    shifted = x - x[:, :1]
    return shifted - shifted.mean(axis=1, keepdims=True)


def center_panel(data: PanelDataset) -> CenteredTable:
    """Within-unit demeaned outcomes for complete units (unit-major order)."""
    if data.n_periods < 2:
        raise InsufficientPeriodsError(
            f"centering needs at least 2 periods, panel has {data.n_periods}")
    w = data.wide()
    n, T = w.actual.shape
    return CenteredTable(
        unit_ids=_frozen(np.repeat(w.unit_ids, T)),
        unit_index=_frozen(np.repeat(np.arange(n), T)),
        periods=_frozen(np.tile(np.arange(1, T + 1), n)),
        centered_actual=_frozen(center_matrix(w.actual).ravel()),
        centered_predicted=_frozen(center_matrix(w.predicted).ravel()),
        n_units=n,
        n_periods=T,
    )


# -- delimited file I/O ---------------------------------------------------

def _open_text(source, mode):
    if isinstance(source, (str, os.PathLike)):
        return open(source, mode, encoding="utf-8", newline=""), True
    return source, False


def _read_table(source) -> tuple[list[str], list[list[str]]]:
    fh, owned = _open_text(source, "r")
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty file: header row required") from None
        rows = [row for row in reader if row]
    finally:
        if owned:
            fh.close()
    return header, rows


def _parse_float(cell: str, line: int, column: str) -> float:
    cell = cell.strip()
    if not cell:
        return float("nan")
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"line {line}: cannot parse {column}={cell!r} as a number") from None
    if not np.isfinite(value):
        raise ParseError(f"line {line}: non-finite {column}={cell!r}")
    return value


def _build(header, rows, schema, predicted_column=None) -> PanelDataset:
    pos = {name: i for i, name in enumerate(header)}
    for key in ("unit_id", "period", "treated"):
        if schema[key] not in pos:
            raise SchemaError(f"missing required column {schema[key]!r}")
    a_col = schema["actual_outcome"]
    p_col = predicted_column or schema["predicted_outcome"]
    if a_col not in pos and p_col not in pos:
        raise SchemaError(f"need at least one outcome column ({a_col!r} or {p_col!r})")

    iu, it, id_ = pos[schema["unit_id"]], pos[schema["period"]], pos[schema["treated"]]
    ia, ip = pos.get(a_col), pos.get(p_col)
    n = len(rows)
    units = np.empty(n, dtype=object)
    raw_period = np.empty(n, dtype=np.int64)
    treated = np.empty(n, dtype=bool)
    actual = np.full(n, np.nan)
    predicted = np.full(n, np.nan)
    for k, row in enumerate(rows):
        line = k + 2
        if len(row) != len(header):
            raise ParseError(f"line {line}: expected {len(header)} cells, got {len(row)}")
        units[k] = row[iu].strip()
        try:
            raw_period[k] = int(row[it].strip())
        except ValueError:
            raise ParseError(f"line {line}: period {row[it]!r} is not an integer") from None
        flag = row[id_].strip().lower()
        if flag in _TRUE_TOKENS:
            treated[k] = True
        elif flag in _FALSE_TOKENS:
            treated[k] = False
        else:
            raise ParseError(f"line {line}: treated flag {row[id_]!r} not in {{0,1,true,false}}")
        if ia is not None:
            actual[k] = _parse_float(row[ia], line, a_col)
        if ip is not None:
            predicted[k] = _parse_float(row[ip], line, p_col)

    labels = np.unique(raw_period)
    period = np.searchsorted(labels, raw_period) + 1
    return PanelDataset(units, period, treated, actual, predicted,
                        [int(v) for v in labels])


def _resolve_schema(schema):
    merged = dict(DEFAULT_SCHEMA)
    if schema:
        unknown = set(schema) - set(DEFAULT_SCHEMA)
        if unknown:
            raise SchemaError(f"unknown schema keys: {sorted(unknown)}")
        merged.update(schema)
    return merged


def load_panel(source, schema: Mapping[str, str] | None = None) -> PanelDataset:
    """
    Read a comma-separated panel file.

    Parameters
    ----------
    source : path or text file handle
        UTF-8 CSV with a header row.
    schema : mapping, optional
        Overrides for the column names in ``DEFAULT_SCHEMA``.

    Returns
    -------
    PanelDataset
        Rows with empty outcome cells are kept with that outcome missing.
    """
    schema = _resolve_schema(schema)
    header, rows = _read_table(source)
    return _build(header, rows, schema)


def load_model_panels(source, schema: Mapping[str, str] | None = None
                      ) -> dict[str, PanelDataset]:
    """One dataset per prediction column ``<predicted>_<model name>``.

    A plain predicted-outcome column (no suffix) is returned as model
    ``"default"`` when no suffixed columns exist.
    """
    schema = _resolve_schema(schema)
    header, rows = _read_table(source)
    prefix = schema["predicted_outcome"] + "_"
    models = [h[len(prefix):] for h in header if h.startswith(prefix) and len(h) > len(prefix)]
    if not models:
        if schema["predicted_outcome"] in header:
            return {"default": _build(header, rows, schema)}
        raise SchemaError(f"no prediction columns ({prefix}<name>) found")
    return {m: _build(header, rows, schema, prefix + m) for m in models}


def _fmt_float(x: float) -> str:
    return "" if np.isnan(x) else repr(float(x))


def export_panel(data: PanelDataset, target, schema: Mapping[str, str] | None = None):
    """Write ``data`` in the format read by :func:`load_panel`.

    Floats are written with their shortest round-trip representation, so
    export followed by load reproduces every value exactly.
    """
    schema = _resolve_schema(schema)
    cols = data.columns
    labels = data.period_labels
    fh, owned = _open_text(target, "w")
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([schema[k] for k in DEFAULT_SCHEMA])
        for u, t, d, a, p in zip(cols["unit_id"], cols["period"], cols["treated"],
                                 cols["actual_outcome"], cols["predicted_outcome"]):
            writer.writerow([u, labels[t - 1], int(d), _fmt_float(a), _fmt_float(p)])
    finally:
        if owned:
            fh.close()


def export_panel_string(data: PanelDataset, schema=None) -> str:
    buf = io.StringIO()
    export_panel(data, buf, schema)
    return buf.getvalue()
