"""Reading factor/portfolio return files into panels.

Layout: a header row, a ``date`` column of YYYYMM integers, factor columns
and one column of returns per portfolio. Lines starting with ``#`` are
comments. The values -99.99 and -999 mark missing cells.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .hier import PanelData

SENTINELS = (-99.99, -999.0)
DATA_DIR_ENV = "POWERWEIGHT_DATA_DIR"


class IngestError(ValueError):
    """The input file violates the panel layout."""


def resolve_path(path) -> Path:
    """Use the path as given if it exists, else look under ``$POWERWEIGHT_DATA_DIR``."""
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    base = os.environ.get(DATA_DIR_ENV)
    if base and (Path(base) / p).exists():
        return Path(base) / p
    return p


def read_table(path) -> pd.DataFrame:
    path = resolve_path(path)
    if not path.exists():
        raise IngestError(f"data file not found: {path}")
    try:
        frame = pd.read_csv(path, comment="#", skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise IngestError(f"cannot parse {path}: {exc}") from exc
    frame.columns = [str(c).strip() for c in frame.columns]
    if "date" not in frame.columns:
        raise IngestError("missing 'date' column")
    return frame


def _parse_dates(raw: pd.Series) -> np.ndarray:
    as_num = pd.to_numeric(raw, errors="coerce")
    bad = (as_num.isna() | (as_num != np.floor(as_num))).to_numpy()
    dates = as_num.fillna(0).astype(np.int64).to_numpy()
    month = dates % 100
    bad |= (month < 1) | (month > 12) | (dates < 100001) | (dates > 999912)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise IngestError(f"malformed date {raw.iloc[i]!r} on data row {i + 1}; expected YYYYMM")
    if np.any(np.diff(dates) <= 0):
        i = int(np.flatnonzero(np.diff(dates) <= 0)[0])
        raise IngestError(f"dates not strictly increasing at {dates[i]} -> {dates[i + 1]}")
    return dates


def ingest(
    path,
    factors: Sequence[str] = ("MKT",),
    portfolios: Optional[Sequence[str]] = None,
    rf: Optional[str] = None,
    excess: bool = False,
    scale: float = 1.0,
    start: Optional[int] = None,
    end: Optional[int] = None,
    intercept: bool = False,
) -> PanelData:
    """Panel with the chosen factors as common covariates and portfolios as groups.

    ``portfolios=None`` takes every column that is not the date, a factor or
    the risk-free column. ``excess`` subtracts the ``rf`` column from the
    portfolio returns. ``scale`` multiplies all return columns (0.01 turns
    percent into decimal). Rows outside ``[start, end]`` are dropped before
    the missing-value check.
    """
    frame = read_table(path)
    dates = _parse_dates(frame["date"])
    factors = list(factors)
    reserved = {"date", *factors} | ({rf} if rf else set())
    if portfolios is None:
        portfolios = [c for c in frame.columns if c not in reserved]
    portfolios = list(portfolios)
    wanted = factors + portfolios + ([rf] if excess else [])
    if excess and not rf:
        raise IngestError("excess returns need the risk-free column name")
    missing = [c for c in wanted if c not in frame.columns]
    if missing:
        raise IngestError(f"columns not found: {', '.join(missing)}")
    if not portfolios:
        raise IngestError("no portfolio columns selected")
    keep = np.ones(dates.size, dtype=bool)
    if start is not None:
        keep &= dates >= start
    if end is not None:
        keep &= dates <= end
    if not keep.any():
        raise IngestError("no rows in the requested date range")
    sub = frame.loc[keep, wanted].apply(pd.to_numeric, errors="coerce")
    dates = dates[keep]
    values = sub.to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    for s in SENTINELS:
        bad |= np.isclose(values, s, rtol=0.0, atol=1e-9)
    if bad.any():
        rows, cols = np.nonzero(bad)
        cells = [f"{dates[r]}:{wanted[c]}" for r, c in zip(rows[:20], cols[:20])]
        more = "" if rows.size <= 20 else f" (+{rows.size - 20} more)"
        raise IngestError(f"missing values in selected columns at {', '.join(cells)}{more}")
    values = values * scale
    F = values[:, : len(factors)]
    Y = values[:, len(factors) : len(factors) + len(portfolios)].T
    if excess:
        Y = Y - values[:, -1][None, :]
    names = tuple(factors)
    if intercept:
        F = np.column_stack([np.ones(F.shape[0]), F])
        names = ("const",) + names
    return PanelData.from_common(F, Y, dates=dates, covariates=names, groups=tuple(portfolios))
