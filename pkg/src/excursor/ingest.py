"""Loading, aligning, transforming and synthesising market series.

Everything downstream consumes :class:`StandardizedSeries`: zero-mean,
unit (population) variance sequences.  Thresholds used by the feature
detectors are therefore in units of the standard deviation of whatever
series is analysed, be it a full record or one window of it.
"""
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ._rng import derive_rng

__all__ = [
    "PriceTable",
    "ReturnSeries",
    "StandardizedSeries",
    "SegmentSet",
    "load_price_table",
    "write_price_table",
    "align",
    "log_returns",
    "standardize",
    "segment",
    "synth",
    "synth_price_table",
    "table_to_series",
]


@dataclass(frozen=True)
class PriceTable:
    """Daily index levels for several markets on one date grid.

    Attributes
    ----------
    dates : ndarray of datetime64[D]
        Strictly increasing observation dates.
    columns : dict
        Market label -> price array, each the same length as `dates`.
    """

    dates: np.ndarray
    columns: dict

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        object.__setattr__(self, "dates", dates)
        if dates.size > 1 and not np.all(dates[1:] > dates[:-1]):
            raise ValueError("dates must be strictly increasing")
        cols = {}
        for label, values in self.columns.items():
            values = np.asarray(values, dtype=float)
            if values.shape != dates.shape:
                raise ValueError(f"column {label!r} has {values.size} rows, expected {dates.size}")
            if np.isnan(values).any():
                k = int(np.flatnonzero(np.isnan(values))[0])
                raise ValueError(f"missing price for market {label!r} on {dates[k]}")
            if (values <= 0).any():
                k = int(np.flatnonzero(values <= 0)[0])
                raise ValueError(f"non-positive price for market {label!r} on {dates[k]}")
            values.setflags(write=False)
            cols[str(label)] = values
        object.__setattr__(self, "columns", cols)

    @property
    def labels(self):
        return list(self.columns)

    def __len__(self):
        return self.dates.size

    def to_frame(self):
        frame = pd.DataFrame(self.columns, index=pd.DatetimeIndex(self.dates, name="date"))
        return frame


@dataclass(frozen=True)
class ReturnSeries:
    values: np.ndarray
    label: str = ""
    origin_dates: np.ndarray = None


@dataclass(frozen=True)
class StandardizedSeries:
    """Zero-mean, unit-variance series.

    `scale` is the standard deviation that was divided out, kept for audit.
    `window_id` is set on segments produced by :func:`segment`.
    """

    values: np.ndarray
    scale: float = 1.0
    label: str = ""
    window_id: int = None

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class SegmentSet:
    segments: list = field(default_factory=list)
    window: int = 0
    discarded_tail: int = 0

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __getitem__(self, i):
        return self.segments[i]


def _parse_dates(raw, path):
    # numpy day resolution: no 1677-2262 window as with nanosecond timestamps
    try:
        dates = np.array(raw, dtype="datetime64").astype("datetime64[D]")
        if not np.isnat(dates).any():
            return dates
    except (ValueError, TypeError):
        pass
    for row, text in enumerate(raw):
        try:
            ok = isinstance(text, str) and not np.isnat(np.datetime64(text))
        except (ValueError, TypeError):
            ok = False
        if not ok:
            raise ValueError(f"{path}: unparseable date {text!r} in data row {row + 1}")
    raise ValueError(f"{path}: unparseable dates")


def load_price_table(path, date_column="date", delimiter=","):
    """Read a CSV of daily prices.

    The file must have a header row, one ISO 8601 date column and one
    numeric column per market.  Rows are returned sorted by date with
    columns in file order.

    Raises
    ------
    ValueError
        On unparseable dates (reported with their 1-based data row number),
        duplicate dates, missing or non-positive prices.
    """
    frame = pd.read_csv(path, sep=delimiter, dtype={date_column: str})
    if date_column not in frame.columns:
        raise ValueError(f"{path}: no date column {date_column!r}")
    raw = frame.pop(date_column).to_numpy()
    parsed = _parse_dates(raw, path)
    if frame.shape[1] == 0:
        raise ValueError(f"{path}: no price columns")
    for col in frame.columns:
        if not pd.api.types.is_numeric_dtype(frame[col]):
            frame[col] = pd.to_numeric(frame[col], errors="coerce")
    order = np.argsort(parsed, kind="stable")
    dates = parsed[order]
    if dates.size > 1 and np.any(dates[1:] == dates[:-1]):
        k = int(np.flatnonzero(dates[1:] == dates[:-1])[0])
        raise ValueError(f"{path}: duplicate date {dates[k]}")
    columns = {str(c): frame[c].to_numpy(dtype=float)[order] for c in frame.columns}
    return PriceTable(dates, columns)


def write_price_table(table, path, date_column="date", delimiter=",", float_format="%.10g"):
    frame = pd.DataFrame(table.columns, index=pd.Index(table.dates.astype(str), name=date_column))
    frame.to_csv(path, sep=delimiter, float_format=float_format, lineterminator="\n")


def align(tables, policy="intersect"):
    """Put several price tables on a common date grid.

    ``intersect`` keeps only dates present in every table.  ``forward-fill``
    uses the union of dates, carries each market's last price forward, and
    drops leading dates before the last market's first observation.
    """
    tables = list(tables)
    if not tables:
        raise ValueError("align needs at least one table")
    labels = [lab for t in tables for lab in t.labels]
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate market labels across tables")
    if policy == "intersect":
        grid = tables[0].dates
        for t in tables[1:]:
            grid = np.intersect1d(grid, t.dates)
        if grid.size == 0:
            raise ValueError("date intersection is empty")
        columns = {}
        for t in tables:
            keep = np.isin(t.dates, grid)
            for lab, vals in t.columns.items():
                columns[lab] = vals[keep]
        return PriceTable(grid, columns)
    if policy in ("forward-fill", "ffill"):
        grid = tables[0].dates
        for t in tables[1:]:
            grid = np.union1d(grid, t.dates)
        start = max(t.dates[0] for t in tables)
        grid = grid[grid >= start]
        columns = {}
        for t in tables:
            pos = np.searchsorted(t.dates, grid, side="right") - 1
            for lab, vals in t.columns.items():
                columns[lab] = vals[pos]
        return PriceTable(grid, columns)
    raise ValueError(f"unknown alignment policy {policy!r}")


def log_returns(prices, label="", dates=None):
    """``values[k] = ln(P[k+1] / P[k])``."""
    prices = np.asarray(prices, dtype=float)
    if prices.ndim != 1 or prices.size < 2:
        raise ValueError("log_returns needs at least two prices")
    if (prices <= 0).any():
        raise ValueError("prices must be strictly positive")
    values = np.diff(np.log(prices))
    if dates is not None:
        dates = np.asarray(dates)[1:]
    return ReturnSeries(values, label, dates)


def standardize(series, label=None, window_id=None):
    """Remove the mean and divide by the population standard deviation."""
    if isinstance(series, (ReturnSeries, StandardizedSeries)):
        label = series.label if label is None else label
        if window_id is None and isinstance(series, StandardizedSeries):
            window_id = series.window_id
        series = series.values
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("standardize needs a 1-d series of length >= 2")
    centred = x - x.mean()
    scale = float(np.sqrt(np.mean(centred**2)))
    if not scale > 0 or scale <= 1e-14 * max(1.0, float(np.abs(x).max())):
        raise ValueError("degenerate series: zero variance")
    values = centred / scale
    # second pass removes the rounding residue of the first
    values -= values.mean()
    values /= np.sqrt(np.mean(values**2))
    values.setflags(write=False)
    return StandardizedSeries(values, scale, label or "", window_id)


def segment(series, window):
    """Cut a series into contiguous, non-overlapping windows.

    Each window is re-standardized on its own; the trailing remainder of
    ``len(series) % window`` points is discarded.
    """
    window = int(window)
    x = np.asarray(series.values if hasattr(series, "values") else series, dtype=float)
    label = getattr(series, "label", "")
    if window < 10:
        raise ValueError("window must be >= 10")
    if window > x.size:
        raise ValueError(f"window {window} exceeds series length {x.size}")
    count = x.size // window
    segments = [
        standardize(x[i * window:(i + 1) * window], label=label, window_id=i)
        for i in range(count)
    ]
    return SegmentSet(segments, window, x.size - count * window)


def _gaussian_kernel(width):
    half = int(np.ceil(6 * width))
    k = np.arange(-half, half + 1)
    ker = np.exp(-0.5 * (k / width) ** 2)
    return ker / ker.sum()


def synth(kind, n, count=1, seed=0, width=None, groups=1, loading=0.5):
    """Generate seeded synthetic standardized series.

    Parameters
    ----------
    kind : {'white', 'smoothed', 'factor'}
        ``white``: iid standard normal.  ``smoothed``: white noise convolved
        with a unit-sum Gaussian kernel of standard deviation `width`
        samples.  ``factor``: ``sqrt(L) F_g + sqrt(1 - L) e`` with one
        common factor ``F_g`` per group.
    n : int
        Series length (>= 100).
    count : int
        Number of series.
    seed : int
        Master seed.  Series ``i`` draws from the stream ``(seed, i)``, so
        any subset can be regenerated independently.
    width : float
        Kernel standard deviation for ``smoothed``.
    groups : int or sequence of int
        Number of factor groups (assigned in contiguous blocks) or an
        explicit group id per series.
    loading : float or array of shape (n,)
        Factor loading in [0, 1).  A per-time array gives a regime-switching
        model.
    """
    n, count = int(n), int(count)
    if n < 100:
        raise ValueError("n must be >= 100")
    if count < 1:
        raise ValueError("count must be >= 1")
    out = []
    if kind == "white":
        for i in range(count):
            rng = derive_rng(seed, 0, i)
            out.append(standardize(rng.standard_normal(n), label=f"S{i:02d}"))
    elif kind == "smoothed":
        if width is None or width < 1:
            raise ValueError("smoothed synthesis needs width >= 1")
        ker = _gaussian_kernel(float(width))
        for i in range(count):
            rng = derive_rng(seed, 0, i)
            raw = rng.standard_normal(n + ker.size - 1)
            out.append(standardize(np.convolve(raw, ker, mode="valid"), label=f"S{i:02d}"))
    elif kind == "factor":
        load = np.broadcast_to(np.asarray(loading, dtype=float), (n,))
        if (load < 0).any() or (load >= 1).any():
            raise ValueError("loading must lie in [0, 1)")
        if np.ndim(groups) == 0:
            ngroups = int(groups)
            if not 1 <= ngroups <= count:
                raise ValueError("groups must be between 1 and count")
            membership = [i * ngroups // count for i in range(count)]
        else:
            membership = [int(g) for g in groups]
            if len(membership) != count:
                raise ValueError("one group id per series is required")
        factors = {g: derive_rng(seed, 1, g).standard_normal(n) for g in sorted(set(membership))}
        a, b = np.sqrt(load), np.sqrt(1.0 - load)
        for i, g in enumerate(membership):
            eps = derive_rng(seed, 0, i).standard_normal(n)
            out.append(standardize(a * factors[g] + b * eps, label=f"S{i:02d}"))
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    return out


def synth_price_table(series, start="1995-01-02", level=100.0, vol=0.01):
    """Turn standardized return series into a business-day price table.

    ``log_returns`` followed by ``standardize`` recovers the input series.
    """
    series = list(series)
    n = len(series[0])
    dates = np.busday_offset(np.datetime64(start, "D"), np.arange(n + 1), roll="forward")
    columns = {}
    for s in series:
        r = np.concatenate([[0.0], vol * np.asarray(s.values)])
        columns[s.label] = level * np.exp(np.cumsum(r))
    return PriceTable(dates, columns)


def table_to_series(table):
    """Log-returns of every column, standardized."""
    return [
        standardize(log_returns(vals, label=lab, dates=table.dates), label=lab)
        for lab, vals in table.columns.items()
    ]
