"""Discrete excursion and critical sets: peaks, troughs and up-crossings.

Conventions
-----------
* peak at k:    ``x[k-1] < x[k] > x[k+1]`` and ``x[k] >= theta``
* trough at k:  ``x[k-1] > x[k] < x[k+1]`` and ``x[k] <= theta``
* up-crossing at k: ``x[k] < theta <= x[k+1]``

Inequalities on the neighbours are strict, so plateaus host no extremum,
and the end points never do.  Densities are normalised per valid position:
``N - 2`` for extrema, ``N - 1`` for crossings.
"""
import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .ingest import standardize

__all__ = [
    "FeatureSpec",
    "FeatureCatalog",
    "DensityCurve",
    "find_peaks",
    "find_troughs",
    "find_upcrossings",
    "find_downcrossings",
    "find_features",
    "density_curve",
    "smooth",
]

KINDS = ("peak", "trough", "upcross")
_ALIASES = {"pk": "peak", "tr": "trough", "up": "upcross", "peaks": "peak",
            "troughs": "trough", "upcrossing": "upcross"}
_DEFAULT_MODE = {"peak": "above", "trough": "below", "upcross": "at"}


def canonical_kind(kind):
    kind = _ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError(f"unknown feature kind {kind!r}")
    return kind


@dataclass(frozen=True)
class FeatureSpec:
    """Which feature to extract and at what threshold (in units of sigma_0)."""

    kind: str = "peak"
    theta: float = 0.0
    mode: str = None
    band: float = None

    def __post_init__(self):
        kind = canonical_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "theta", float(self.theta))
        mode = self.mode or _DEFAULT_MODE[kind]
        if mode == "band":
            if self.band is None or not self.band > 0:
                raise ValueError("band mode needs a positive band width")
        elif mode != _DEFAULT_MODE[kind]:
            raise ValueError(f"mode {mode!r} is not valid for {kind}")
        object.__setattr__(self, "mode", mode)

    @property
    def short(self):
        return {"peak": "pk", "trough": "tr", "upcross": "up"}[self.kind]

    def to_dict(self):
        return {"kind": self.kind, "theta": self.theta, "mode": self.mode, "band": self.band}


@dataclass(frozen=True)
class FeatureCatalog:
    """Sorted time indices of one feature kind in one series."""

    indices: np.ndarray
    series_length: int
    spec: FeatureSpec = None
    label: str = ""
    heights: np.ndarray = None
    warning: str = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size > 1 and not np.all(np.diff(idx) > 0):
            raise ValueError("catalog indices must be strictly increasing")
        if idx.size and (idx[0] < 0 or idx[-1] >= self.series_length):
            raise ValueError("catalog index outside the series")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return self.indices.size

    @property
    def valid_positions(self):
        if self.spec is not None and self.spec.kind == "upcross":
            return max(self.series_length - 1, 0)
        if self.spec is None:
            return self.series_length
        return max(self.series_length - 2, 0)

    def to_json(self):
        return json.dumps({
            "label": self.label,
            "series_length": int(self.series_length),
            "spec": None if self.spec is None else self.spec.to_dict(),
            "indices": self.indices.tolist(),
        })

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        spec = FeatureSpec(**d["spec"]) if d["spec"] else None
        return cls(np.array(d["indices"], dtype=np.int64), d["series_length"], spec, d["label"])


def _values(series):
    return np.asarray(series.values if hasattr(series, "values") else series, dtype=float)


def _label(series):
    return getattr(series, "label", "") or ""


def _select(x, mask, k_offset, spec, series, keep):
    idx = np.flatnonzero(mask) + k_offset
    heights = x[idx]
    if spec.mode == "band":
        sel = (heights >= spec.theta) & (heights < spec.theta + spec.band)
    else:
        sel = keep(heights)
    idx = idx[sel]
    return FeatureCatalog(idx, x.size, spec, _label(series), x[idx])


def find_peaks(series, theta=-np.inf, spec=None):
    """Local maxima at or above `theta`."""
    x = _values(series)
    spec = spec or FeatureSpec("peak", theta)
    if x.size < 3:
        return FeatureCatalog(np.empty(0, np.int64), x.size, spec, _label(series),
                              np.empty(0), warning="series shorter than 3 points")
    mid = x[1:-1]
    mask = (x[:-2] < mid) & (mid > x[2:])
    return _select(x, mask, 1, spec, series, lambda h: h >= spec.theta)


def find_troughs(series, theta=np.inf, spec=None):
    """Local minima at or below `theta`."""
    x = _values(series)
    spec = spec or FeatureSpec("trough", theta)
    if x.size < 3:
        return FeatureCatalog(np.empty(0, np.int64), x.size, spec, _label(series),
                              np.empty(0), warning="series shorter than 3 points")
    mid = x[1:-1]
    mask = (x[:-2] > mid) & (mid < x[2:])
    return _select(x, mask, 1, spec, series, lambda h: h <= spec.theta)


def find_upcrossings(series, theta=0.0, spec=None):
    """Indices k with ``x[k] < theta <= x[k+1]``."""
    x = _values(series)
    if x.size < 2:
        raise ValueError("up-crossings need at least two points")
    spec = spec or FeatureSpec("upcross", theta)
    if spec.mode == "band":
        raise ValueError("up-crossings are counted at a level, not in a band")
    t = spec.theta
    idx = np.flatnonzero((x[:-1] < t) & (x[1:] >= t))
    return FeatureCatalog(idx, x.size, spec, _label(series), np.full(idx.size, t))


def find_downcrossings(series, theta=0.0):
    """Indices k with ``x[k] >= theta > x[k+1]``; the mirror of up-crossings."""
    x = _values(series)
    if x.size < 2:
        raise ValueError("down-crossings need at least two points")
    return np.flatnonzero((x[:-1] >= theta) & (x[1:] < theta))


def find_features(series, spec):
    finder = {"peak": find_peaks, "trough": find_troughs, "upcross": find_upcrossings}[spec.kind]
    return finder(series, spec.theta, spec=spec)


def smooth(series, width):
    """Gaussian pre-smoothing (kernel standard deviation `width` samples), re-standardized."""
    if width < 1:
        raise ValueError("smoothing width must be >= 1")
    x = gaussian_filter1d(_values(series), float(width), mode="nearest", truncate=6.0)
    return standardize(x, label=_label(series))


@dataclass(frozen=True)
class DensityCurve:
    theta: np.ndarray
    density: np.ndarray
    error: np.ndarray
    kind: str
    band: object = "cumulative"
    label: str = ""
    counts: np.ndarray = field(default=None, repr=False)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "density", "error"])
        for row in zip(self.theta, self.density, self.error):
            w.writerow([f"{v:.12g}" for v in row])
        return buf.getvalue()


def density_curve(series, kind, theta_grid, band="cumulative"):
    """Empirical one-point density of a feature versus threshold.

    Parameters
    ----------
    series : StandardizedSeries or array_like
    kind : {'peak', 'trough', 'upcross'}
    theta_grid : sorted array_like
    band : 'cumulative' or float
        ``'cumulative'`` counts peaks above / troughs below / crossings at
        each threshold.  A float ``dtheta`` gives the differential density
        of extremum heights in ``[theta, theta + dtheta)`` per unit theta.

    Returns
    -------
    DensityCurve
        Densities per valid position with binomial standard errors.
    """
    kind = canonical_kind(kind)
    grid = np.asarray(theta_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty threshold grid")
    if grid.size > 1 and np.any(np.diff(grid) < 0):
        raise ValueError("threshold grid must be sorted")
    x = _values(series)
    if kind == "upcross":
        if band != "cumulative":
            raise ValueError("up-crossing densities are cumulative (at-level) only")
        valid = x.size - 1
        lo, hi = x[:-1], x[1:]
        counts = np.array([np.count_nonzero((lo < t) & (hi >= t)) for t in grid])
        dtheta = None
    else:
        all_ext = find_peaks(x) if kind == "peak" else find_troughs(x)
        h = np.sort(all_ext.heights)
        valid = max(x.size - 2, 0)
        if band == "cumulative":
            dtheta = None
            if kind == "peak":
                counts = h.size - np.searchsorted(h, grid, side="left")
            else:
                counts = np.searchsorted(h, grid, side="right")
        else:
            dtheta = float(band)
            if not dtheta > 0:
                raise ValueError("band width must be positive")
            counts = (np.searchsorted(h, grid + dtheta, side="left")
                      - np.searchsorted(h, grid, side="left"))
    if valid <= 0:
        raise ValueError("series too short for a density estimate")
    p = counts / valid
    err = np.sqrt(p * (1 - p) / valid)
    if dtheta is not None:
        p, err = p / dtheta, err / dtheta
    return DensityCurve(grid, p, err, kind, band if dtheta is None else dtheta,
                        _label(series), np.asarray(counts))
