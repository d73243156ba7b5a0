"""Data model for a fused experimental + observational sample."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np

from .errors import (
    DataError,
    DimensionMismatch,
    EmptyCell,
    NonBinaryIndicator,
    NonFiniteValue,
    PropensityOutOfRange,
)

OPTIONAL_COLUMNS = ("e_exp", "p_samp")


@dataclass(frozen=True)
class CellCounts:
    """Unit counts per (treatment, sample) cell."""

    t0s0: int
    t1s0: int
    t0s1: int
    t1s1: int

    def __getitem__(self, key: tuple[int, int]) -> int:
        t, s = key
        return getattr(self, f"t{int(t)}s{int(s)}")

    @property
    def total(self) -> int:
        return self.t0s0 + self.t1s0 + self.t0s1 + self.t1s1

    def as_dict(self) -> dict[str, int]:
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcome, treatment, sample indicator and covariates for ``n`` units.

    ``s == 1`` marks experimental units. ``known_e_exp`` and ``known_p`` are
    optional user-supplied experimental treatment propensities and sampling
    propensities. Arrays are read-only once constructed.
    """

    y: np.ndarray
    t: np.ndarray
    s: np.ndarray
    x: np.ndarray
    known_e_exp: Optional[np.ndarray] = None
    known_p: Optional[np.ndarray] = None
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.covariate_names:
            names = tuple(f"x{j + 1}" for j in range(self.x.shape[1]))
            object.__setattr__(self, "covariate_names", names)
        for name in ("y", "t", "s", "x", "known_e_exp", "known_p"):
            arr = getattr(self, name)
            if arr is not None:
                arr.flags.writeable = False

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def cell_counts(self) -> CellCounts:
        t, s = self.t, self.s
        return CellCounts(
            t0s0=int(np.sum((t == 0) & (s == 0))),
            t1s0=int(np.sum((t == 1) & (s == 0))),
            t0s1=int(np.sum((t == 0) & (s == 1))),
            t1s1=int(np.sum((t == 1) & (s == 1))),
        )

    def require_cells(self, levels: Iterable[int] = (0, 1), samples: Iterable[int] = (0, 1)) -> None:
        """Raise ``EmptyCell`` if any requested (t, s) cell has no units."""
        counts = self.cell_counts()
        for t in levels:
            for s in samples:
                if counts[t, s] == 0:
                    raise EmptyCell(f"no units with t={t}, s={s}")

    def subset(self, mask: np.ndarray) -> "Dataset":
        mask = np.asarray(mask)
        return Dataset(
            y=self.y[mask].copy(),
            t=self.t[mask].copy(),
            s=self.s[mask].copy(),
            x=self.x[mask].copy(),
            known_e_exp=None if self.known_e_exp is None else self.known_e_exp[mask].copy(),
            known_p=None if self.known_p is None else self.known_p[mask].copy(),
            covariate_names=self.covariate_names,
        )

    def with_outcome(self, y: np.ndarray) -> "Dataset":
        y = np.array(y, dtype=float)
        if y.shape != self.y.shape:
            raise DimensionMismatch(f"outcome has shape {y.shape}, expected {self.y.shape}")
        return dataclasses.replace(self, y=y)

    def columns(self) -> dict[str, np.ndarray]:
        cols = {"y": self.y, "t": self.t, "s": self.s}
        for j, name in enumerate(self.covariate_names):
            cols[name] = self.x[:, j]
        if self.known_e_exp is not None:
            cols["e_exp"] = self.known_e_exp
        if self.known_p is not None:
            cols["p_samp"] = self.known_p
        return cols

    def equals(self, other: "Dataset") -> bool:
        """Bit-exact comparison of every column."""
        if self.covariate_names != other.covariate_names:
            return False
        a, b = self.columns(), other.columns()
        return a.keys() == b.keys() and all(
            np.array_equal(a[k], b[k]) and a[k].dtype == b[k].dtype for k in a
        )


def _as_indicator(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"column {name!r} has non-finite entries")
    if not np.all((arr == 0) | (arr == 1)):
        bad = arr[(arr != 0) & (arr != 1)][0]
        raise NonBinaryIndicator(f"column {name!r} must be 0/1, found {bad!r}")
    return arr.astype(np.int8)


def _as_propensity(values, name: str, n: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != (n,):
        raise DimensionMismatch(f"column {name!r} has shape {arr.shape}, expected ({n},)")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"column {name!r} has non-finite entries")
    if np.any((arr <= 0) | (arr >= 1)):
        raise PropensityOutOfRange(f"column {name!r} must lie strictly inside (0, 1)")
    return arr


def _covariate_columns(raw: Mapping) -> list[str]:
    reserved = {"y", "t", "s", *OPTIONAL_COLUMNS}
    names = [k for k in raw if k not in reserved]
    if not names:
        raise DataError("no covariate columns found")
    return names


def validate_dataset(raw, require_levels: Optional[Iterable[int]] = None) -> Dataset:
    """Build a validated ``Dataset`` from a column mapping (or re-validate one).

    ``raw`` maps column names to 1-d sequences: ``y``, ``t``, ``s``, one or
    more covariate columns, and optionally ``e_exp`` / ``p_samp``. Every
    non-reserved column is treated as a covariate, in mapping order.

    Empty (t, s) cells are only an error for the treatment levels listed in
    ``require_levels``; pass ``None`` to skip the check entirely.
    """
    if isinstance(raw, Dataset):
        raw = raw.columns()
    missing = [c for c in ("y", "t", "s") if c not in raw]
    if missing:
        raise DataError(f"missing required columns: {missing}")

    y = np.array(raw["y"], dtype=float)
    if y.ndim != 1:
        raise DimensionMismatch("y must be one-dimensional")
    n = y.shape[0]
    if n == 0:
        raise DataError("dataset has no rows")
    if not np.all(np.isfinite(y)):
        raise NonFiniteValue("column 'y' has non-finite entries")

    t = _as_indicator(raw["t"], "t")
    s = _as_indicator(raw["s"], "s")
    names = _covariate_columns(raw)
    cols = []
    for name in names:
        col = np.asarray(raw[name], dtype=float)
        if col.shape != (n,):
            raise DimensionMismatch(f"column {name!r} has shape {col.shape}, expected ({n},)")
        cols.append(col)
    x = np.column_stack(cols).astype(float)
    for arr, name in ((t, "t"), (s, "s")):
        if arr.shape != (n,):
            raise DimensionMismatch(f"column {name!r} has shape {arr.shape}, expected ({n},)")
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue("covariates have non-finite entries")

    e_exp = _as_propensity(raw["e_exp"], "e_exp", n) if "e_exp" in raw else None
    p_samp = _as_propensity(raw["p_samp"], "p_samp", n) if "p_samp" in raw else None

    dataset = Dataset(
        y=y, t=t, s=s, x=x, known_e_exp=e_exp, known_p=p_samp, covariate_names=tuple(names)
    )
    if require_levels is not None:
        dataset.require_cells(require_levels)
    return dataset


def read_csv(path) -> Dataset:
    """Read a headered CSV (``y,t,s,x1,...,xd[,e_exp,p_samp]``) and validate it."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names")
    columns: dict[str, list[float]] = {h: [] for h in header}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for h, value in zip(header, row):
            value = value.strip()
            if value == "":
                raise NonFiniteValue(f"{path}:{lineno}: missing value in column {h!r}")
            try:
                columns[h].append(float(value))
            except ValueError:
                raise DataError(f"{path}:{lineno}: cannot parse {value!r} in column {h!r}") from None
    return validate_dataset(columns)


def _write_rows(dataset: Dataset, fh) -> None:
    cols = dataset.columns()
    header = list(cols)
    ints = {"t", "s"}
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for i in range(dataset.n):
        writer.writerow([str(int(cols[h][i])) if h in ints else repr(float(cols[h][i])) for h in header])


def write_csv(dataset: Dataset, dest) -> None:
    """Write ``dataset`` as headered CSV to a path or an open text stream."""
    if hasattr(dest, "write"):
        _write_rows(dataset, dest)
        return
    Path(dest).parent.mkdir(parents=True, exist_ok=True)
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        _write_rows(dataset, fh)
