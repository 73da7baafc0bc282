"""Unweighted two-point (cross-)correlation of feature catalogs.

Pair counts are taken on integer lags.  In *auto* mode (one catalog) the
data-data and random-random counts are unordered distinct pairs at
separation ``|tau|``, lags ``0 .. tau_max``, and the data-random count runs
over every (data, random) pair.  In *cross* mode (two catalogs) lags are
signed, ``-tau_max .. tau_max``; a positive lag means the feature of the
second catalog comes later.

All counts are normalised by their total number of pairs before entering
the estimators::

    natural        dd / rr - 1
    landy-szalay   (dd - 2 dr + rr) / rr          (cross: dd - dr - rd + rr)
    hamilton       dd rr / dr^2 - 1               (cross: dd rr / (dr rd) - 1)

A single catalog of distinct indices cannot supply random pairs at lag 0,
so in auto mode ``rr(0)`` is the expected number of coincidences of
independent uniform placements, ``nR (nR - 1) / (2 N)``.  Together with
``dd(0) = 0`` this gives ``xi(0) = -1``.
"""
import csv
import io
import warnings
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import derive_rng
from .features import FeatureCatalog, FeatureSpec, find_features

__all__ = [
    "PairCounts",
    "CorrelationCurve",
    "InsufficientFeatures",
    "count_auto",
    "count_cross",
    "random_catalog",
    "random_batch",
    "pair_counts",
    "fold_lags",
    "estimate_xi",
    "xi_from_catalogs",
    "xi_pipeline",
    "xi_max",
    "autocorrelation",
]

ESTIMATORS = ("natural", "hamilton", "landy-szalay")
_EST_ALIASES = {"ls": "landy-szalay", "landy_szalay": "landy-szalay", "n": "natural",
                "h": "hamilton"}
MIN_FEATURES = 5
_GATHER_BUDGET = 4_000_000


class InsufficientFeatures(ValueError):
    pass


def canonical_estimator(name):
    name = _EST_ALIASES.get(name, name)
    if name not in ESTIMATORS:
        raise ValueError(f"unknown estimator {name!r}")
    return name


def _idx(catalog):
    return np.asarray(catalog.indices if hasattr(catalog, "indices") else catalog, dtype=np.int64)


def _hits(src, targets, length, lags):
    """``out[..., j] = #{(s, t) : t - s == lags[j]}`` for batched index sets.

    `src` and `targets` are ``(M, n)`` / ``(M, m)`` integer arrays (or 1-d).
    """
    src = np.atleast_2d(src)
    targets = np.atleast_2d(targets)
    if src.shape[0] != targets.shape[0]:
        if src.shape[0] == 1:
            src = np.broadcast_to(src, (targets.shape[0], src.shape[1]))
        elif targets.shape[0] == 1:
            targets = np.broadcast_to(targets, (src.shape[0], targets.shape[1]))
        else:
            raise ValueError("batch sizes differ")
    m, n = src.shape
    lags = np.asarray(lags, dtype=np.int64)
    pad = int(np.abs(lags).max()) if lags.size else 0
    width = length + 2 * pad
    out = np.zeros((m, lags.size), dtype=np.int64)
    if n == 0 or targets.shape[1] == 0:
        return out
    step = max(1, _GATHER_BUDGET // max(1, n * lags.size))
    for lo in range(0, m, step):
        hi = min(m, lo + step)
        k = hi - lo
        ind = np.zeros((k, width), dtype=np.int8)
        np.put_along_axis(ind, targets[lo:hi] + pad, 1, axis=1)
        flat = ind.ravel()
        base = (np.arange(k, dtype=np.int64) * width)[:, None] + src[lo:hi] + pad
        pos = base[:, :, None] + lags[None, None, :]
        out[lo:hi] = flat[pos].sum(axis=1, dtype=np.int64)
    return out


def count_auto(catalog, tau_max):
    """Unordered distinct pairs at separation ``tau = 0 .. tau_max``; ``dd[0] == 0``."""
    a = _idx(catalog)
    length = int(getattr(catalog, "series_length", a.max() + 1 if a.size else 1))
    lags = np.arange(int(tau_max) + 1)
    out = _hits(a, a, length, lags)[0]
    out[0] = 0
    return out


def _lag_array(tau_range):
    if np.ndim(tau_range) == 0:
        w = int(tau_range)
        return np.arange(-w, w + 1)
    lo, hi = tau_range
    return np.arange(int(lo), int(hi) + 1)


def count_cross(catalog_a, catalog_b, tau_range):
    """Signed-lag counts ``#{(a, b) : b - a == tau}``.

    Returns
    -------
    lags, counts : ndarray
    """
    if catalog_a.series_length != catalog_b.series_length:
        raise ValueError("catalogs come from series of different length")
    lags = _lag_array(tau_range)
    counts = _hits(_idx(catalog_a), _idx(catalog_b), catalog_a.series_length, lags)[0]
    return lags, counts


def random_catalog(n_features, series_length, seed):
    """Uniformly placed distinct indices (no exclusion between neighbours)."""
    n, length = int(n_features), int(series_length)
    if n > length:
        raise ValueError("more features than positions")
    if n < 0:
        raise ValueError("negative catalog size")
    rng = derive_rng(seed)
    idx = np.sort(rng.choice(length, size=n, replace=False))
    return FeatureCatalog(idx, length)


def random_batch(n_features, series_length, seed, key, realizations):
    """``(M, n)`` array of random catalogs; row ``r`` comes from stream ``(seed, key, r)``."""
    n, length = int(n_features), int(series_length)
    if n > length:
        raise ValueError("more features than positions")
    out = np.empty((int(realizations), n), dtype=np.int64)
    for r in range(out.shape[0]):
        rng = derive_rng(seed, key, r)
        out[r] = np.sort(rng.choice(length, size=n, replace=False))
    return out


def catalog_key(catalog):
    """Stable stream key derived from the catalog contents."""
    idx = _idx(catalog)
    h = zlib.crc32(idx.tobytes())
    return zlib.crc32(np.int64(catalog.series_length).tobytes(), h)


@dataclass(frozen=True)
class PairCounts:
    """Lag-indexed pair counts and the feature totals needed to normalise them.

    ``rr``, ``dr`` and ``rd`` are means over random realizations (or exact
    expectations in analytic mode).  ``rr_samples`` keeps the per-realization
    random-random counts.  ``null_*`` hold the counts obtained when random
    realization ``r`` plays the data, with its data-random counts at their
    expectation (the data estimate averages them over ``M`` catalogs); their
    scatter gives the error bars.
    """

    lags: np.ndarray
    dd: np.ndarray
    rr: np.ndarray
    dr: np.ndarray
    n_d: tuple
    n_r: tuple
    series_length: int
    mode: str = "auto"
    rr_mode: str = "monte-carlo"
    rd: np.ndarray = None
    realizations: int = 0
    rr_samples: np.ndarray = field(default=None, repr=False)
    null_dd: np.ndarray = field(default=None, repr=False)
    null_dr: np.ndarray = field(default=None, repr=False)
    null_rd: np.ndarray = field(default=None, repr=False)

    def totals(self):
        """Pair totals ``(P_dd, P_rr, P_dr, P_rd)`` used for normalisation."""
        if self.mode == "auto":
            (nd,), (nr,) = self.n_d, self.n_r
            return nd * (nd - 1) / 2.0, nr * (nr - 1) / 2.0, float(nd * nr), None
        (na, nb), (ra, rb) = self.n_d, self.n_r
        return float(na * nb), float(ra * rb), float(na * rb), float(ra * nb)

    def null_totals(self):
        """Pair totals for the null samples, whose data catalogs have the random sizes."""
        if self.mode == "auto":
            (nr,) = self.n_r
            return nr * (nr - 1) / 2.0, nr * (nr - 1) / 2.0, float(nr * nr), None
        (ra, rb) = self.n_r
        p = float(ra * rb)
        return p, p, p, p


def _auto_dr(data, randoms, length, tau_max):
    lags = np.arange(-tau_max, tau_max + 1)
    h = _hits(data, randoms, length, lags)
    pos = h[:, tau_max:].copy()
    pos[:, 1:] += h[:, :tau_max][:, ::-1]
    return pos


def _expected_hits(src, length, lags):
    """``sum_s #{t valid : t - s == tau}`` for each lag (one slot per position)."""
    src = np.asarray(src)
    t = src[:, None] + lags[None, :]
    return ((t >= 0) & (t < length)).sum(axis=0).astype(float)


def pair_counts(catalog_a, catalog_b=None, tau_max=10, realizations=100, seed=0,
                rr_mode="monte-carlo", random_a=None, random_b=None, n_random=None,
                with_dr=True):
    """Data-data, data-random and random-random counts for one catalog pair.

    Parameters
    ----------
    catalog_a, catalog_b : FeatureCatalog
        ``catalog_b=None`` selects auto mode.
    tau_max : int
    realizations : int
        Number of random catalogs ``M`` (monte-carlo mode).
    seed : int
        Random catalogs for a data catalog are drawn from streams keyed by
        the catalog contents, so swapping ``a`` and ``b`` reuses them and
        the cross curves satisfy ``xi_ab(tau) == xi_ba(-tau)`` exactly.
    rr_mode : {'monte-carlo', 'analytic'}
    random_a, random_b : ndarray, optional
        Precomputed ``(M, n)`` random batches (see :func:`random_batch`).
    n_random : int, optional
        Size of each random catalog; defaults to the data catalog size.
    with_dr : bool
        Skip the data-random counts when False (the natural estimator does
        not use them).
    """
    tau_max = int(tau_max)
    length = int(catalog_a.series_length)
    a = _idx(catalog_a)
    if rr_mode not in ("monte-carlo", "analytic"):
        raise ValueError(f"unknown rr mode {rr_mode!r}")

    if catalog_b is None:
        nd = a.size
        nr = nd if n_random is None else int(n_random)
        lags = np.arange(tau_max + 1)
        dd = count_auto(catalog_a, tau_max)
        rr0 = nr * (nr - 1) / (2.0 * length)
        if rr_mode == "analytic":
            rr = np.where(lags < length, nr * (nr - 1) * (length - lags) / (length * (length - 1.0)), 0.0)
            rr[0] = rr0
            dr = nr / length * _expected_hits(a, length, lags)
            dr[1:] += nr / length * _expected_hits(a, length, -lags[1:])
            return PairCounts(lags, dd, rr, dr, (nd,), (nr,), length, "auto", rr_mode)
        if random_a is None:
            random_a = random_batch(nr, length, seed, catalog_key(catalog_a), realizations)
        rs = _hits(random_a, random_a, length, lags).astype(float)
        null_dd = rs.copy()
        null_dd[:, 0] = 0.0
        rs[:, 0] = rr0
        dr = null_dr = None
        if with_dr:
            dr = _auto_dr(a, random_a, length, tau_max).mean(axis=0)
            null_dr = np.array([nr / length * (_expected_hits(r, length, lags)
                                               + np.r_[0.0, _expected_hits(r, length, -lags[1:])])
                                for r in random_a])
        return PairCounts(lags, dd, rs.mean(axis=0), dr, (nd,), (nr,), length, "auto", rr_mode,
                          realizations=rs.shape[0], rr_samples=rs, null_dd=null_dd,
                          null_dr=null_dr)

    if catalog_b.series_length != length:
        raise ValueError("catalogs come from series of different length")
    b = _idx(catalog_b)
    lags = np.arange(-tau_max, tau_max + 1)
    dd = _hits(a, b, length, lags)[0]
    na, nb = a.size, b.size
    ra = na if n_random is None else int(n_random)
    rb = nb if n_random is None else int(n_random)
    if rr_mode == "analytic":
        rr = ra * rb * (length - np.abs(lags)) / float(length) ** 2
        rr = np.clip(rr, 0.0, None)
        dr = rb / length * _expected_hits(a, length, lags)
        rd = ra / length * _expected_hits(b, length, -lags)
        return PairCounts(lags, dd, rr, dr, (na, nb), (ra, rb), length, "cross", rr_mode, rd=rd)
    if random_a is None or random_b is None:
        ka, kb = catalog_key(catalog_a), catalog_key(catalog_b)
        if random_a is None:
            random_a = random_batch(ra, length, seed, ka, realizations)
        if random_b is None:
            # identical catalogs in both slots still need independent randoms
            random_b = random_batch(rb, length, seed, kb if kb != ka else (kb, 1), realizations)
    rs = _hits(random_a, random_b, length, lags).astype(float)
    dr = rd = null_dr = null_rd = None
    if with_dr:
        dr = _hits(a, random_b, length, lags).mean(axis=0)
        rd = _hits(random_a, b, length, lags).mean(axis=0)
        null_dr = np.array([rb / length * _expected_hits(r, length, lags) for r in random_a])
        null_rd = np.array([ra / length * _expected_hits(r, length, -lags) for r in random_b])
    return PairCounts(lags, dd, rs.mean(axis=0), dr, (na, nb), (ra, rb), length, "cross",
                      rr_mode, rd=rd, realizations=rs.shape[0], rr_samples=rs, null_dd=rs,
                      null_dr=null_dr, null_rd=null_rd)


def fold_lags(pc):
    """Combine lags ``+tau`` and ``-tau`` of a cross count into separations ``|tau|``."""
    if pc.mode == "auto":
        return pc
    lags = pc.lags
    w = int(lags.max())
    if not np.array_equal(lags, np.arange(-w, w + 1)):
        raise ValueError("folding needs a symmetric lag range")

    def fold(v):
        if v is None:
            return None
        v = np.asarray(v)
        out = v[..., w:].copy()
        out[..., 1:] = out[..., 1:] + v[..., :w][..., ::-1]
        return out

    return replace(pc, lags=np.arange(w + 1), dd=fold(pc.dd), rr=fold(pc.rr), dr=fold(pc.dr),
                   rd=fold(pc.rd), rr_samples=fold(pc.rr_samples), null_dd=fold(pc.null_dd),
                   null_dr=fold(pc.null_dr), null_rd=fold(pc.null_rd))


def _xi(estimator, mode, dd, rr, dr, rd):
    with np.errstate(divide="ignore", invalid="ignore"):
        if estimator == "natural":
            xi = dd / rr - 1.0
        elif estimator == "landy-szalay":
            if mode == "auto":
                xi = (dd - 2.0 * dr + rr) / rr
            else:
                xi = (dd - dr - rd + rr) / rr
        else:
            denom = dr * dr if mode == "auto" else dr * rd
            xi = dd * rr / denom - 1.0
            xi = np.where(denom > 0, xi, np.nan)
    return np.where(rr > 0, xi, np.nan)


@dataclass(frozen=True)
class CorrelationCurve:
    """Estimated excess pair probability ``xi(tau)``; undefined lags are NaN."""

    lags: np.ndarray
    xi: np.ndarray
    err: np.ndarray
    estimator: str
    specs: tuple = (None, None)
    labels: tuple = ("", "")
    n_d: tuple = ()
    n_r: tuple = ()
    mode: str = "auto"

    @property
    def defined(self):
        return np.isfinite(self.xi)

    def at(self, tau):
        hit = np.flatnonzero(self.lags == tau)
        if not hit.size:
            raise KeyError(f"lag {tau} not in curve")
        return float(self.xi[hit[0]])

    def to_csv(self, header=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["lag", "xi", "err", "n_d", "n_r", "estimator", "labels"])
        nd = "/".join(str(int(v)) for v in self.n_d)
        nr = "/".join(str(int(v)) for v in self.n_r)
        lab = "/".join(str(v) for v in self.labels if v is not None)
        for t, x, e in zip(self.lags, self.xi, self.err):
            w.writerow([int(t), f"{x:.12g}", f"{e:.12g}", nd, nr, self.estimator, lab])
        return buf.getvalue()


def estimate_xi(pc, estimator="natural"):
    """Apply one of the natural / Hamilton / Landy-Szalay estimators to pair counts.

    The error is the null scatter of the estimator: its standard deviation
    when random realization ``r`` stands in for the data (monte-carlo mode),
    or ``1 / sqrt(expected dd)`` under uniform placement (analytic mode).
    It does not depend on ``dd``, so ``xi / err`` is a significance.
    """
    estimator = canonical_estimator(estimator)
    p_dd, p_rr, p_dr, p_rd = pc.totals()
    if p_dd <= 0 or p_rr <= 0:
        raise InsufficientFeatures("too few features to form pairs")
    if estimator != "natural" and pc.dr is None:
        raise ValueError(f"{estimator} estimator needs data-random counts")
    ddn = pc.dd / p_dd
    rrn = pc.rr / p_rr
    drn = pc.dr / p_dr if pc.dr is not None else None
    rdn = pc.rd / p_rd if pc.rd is not None else None
    xi = _xi(estimator, pc.mode, ddn, rrn, drn, rdn)
    if pc.null_dd is not None and pc.null_dd.shape[0] > 1:
        q_dd, _, q_dr, q_rd = pc.null_totals()
        xs = _xi(estimator, pc.mode, pc.null_dd / q_dd, rrn[None, :],
                 None if pc.null_dr is None else pc.null_dr / q_dr,
                 None if pc.null_rd is None else pc.null_rd / q_rd)
        xs = np.where(np.isfinite(xs), xs, np.nan)
        good = np.isfinite(xs).sum(axis=0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            err = np.nanstd(xs, axis=0, ddof=1)
        err = np.where(good >= 2, err, np.nan)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            err = 1.0 / np.sqrt(rrn * p_dd)
    err = np.where(np.isfinite(xi), err, np.nan)
    return CorrelationCurve(pc.lags.copy(), xi, err, estimator, n_d=pc.n_d, n_r=pc.n_r,
                            mode=pc.mode)


def xi_from_catalogs(catalog_a, catalog_b=None, tau_max=10, estimator="natural",
                     realizations=100, seed=0, rr_mode="monte-carlo",
                     min_features=MIN_FEATURES, **kwargs):
    for cat in (catalog_a, catalog_b):
        if cat is not None and len(cat) < min_features:
            raise InsufficientFeatures(
                f"insufficient features: {len(cat)} < {min_features} in {cat.label or 'catalog'}")
    pc = pair_counts(catalog_a, catalog_b, tau_max, realizations, seed, rr_mode, **kwargs)
    curve = estimate_xi(pc, estimator)
    specs = (catalog_a.spec, catalog_b.spec if catalog_b is not None else catalog_a.spec)
    labels = (catalog_a.label, catalog_b.label if catalog_b is not None else catalog_a.label)
    return replace(curve, specs=specs, labels=labels)


def xi_pipeline(series_a, series_b=None, spec_a=None, spec_b=None, tau_max=10,
                estimator="natural", realizations=100, seed=0, rr_mode="monte-carlo",
                theta=None):
    """Feature extraction, random catalogs and estimation in one call.

    ``series_b=None`` and ``spec_b=None`` give the auto-correlation of
    `spec_a` features in `series_a`.  Passing only ``spec_b`` correlates two
    feature kinds of the same series; passing only ``series_b`` correlates
    the same feature across two series.
    """
    if spec_a is None:
        spec_a = FeatureSpec("peak", 0.0 if theta is None else theta)
    elif isinstance(spec_a, str):
        spec_a = FeatureSpec(spec_a, 0.0 if theta is None else theta)
    if isinstance(spec_b, str):
        spec_b = FeatureSpec(spec_b, spec_a.theta if theta is None else theta)
    cat_a = find_features(series_a, spec_a)
    if series_b is None and spec_b is None:
        return xi_from_catalogs(cat_a, None, tau_max, estimator, realizations, seed, rr_mode)
    other = series_a if series_b is None else series_b
    cat_b = find_features(other, spec_b or spec_a)
    if len(np.asarray(other.values if hasattr(other, "values") else other)) != cat_a.series_length:
        raise ValueError("series must have equal length")
    return xi_from_catalogs(cat_a, cat_b, tau_max, estimator, realizations, seed, rr_mode)


def xi_max(curve, tau_window=None):
    """Largest defined ``xi`` in the lag window and the lag where it occurs.

    `tau_window` is ``(lo, hi)`` inclusive, or ``W`` meaning ``[0, W]`` for
    auto curves and ``[-W, W]`` for cross curves.  Ties go to the smaller
    ``|tau|``, then to the smaller ``tau``.
    """
    lags = curve.lags
    if tau_window is None:
        lo, hi = lags.min(), lags.max()
    elif np.ndim(tau_window) == 0:
        w = int(tau_window)
        lo, hi = (0, w) if curve.mode == "auto" else (-w, w)
    else:
        lo, hi = tau_window
    if lo < lags.min() or hi > lags.max():
        raise ValueError("tau window exceeds the curve's lags")
    sel = (lags >= lo) & (lags <= hi) & np.isfinite(curve.xi)
    if not sel.any():
        raise ValueError("no defined lags in window")
    cand = np.flatnonzero(sel)
    vals = curve.xi[cand]
    best = vals.max()
    tied = cand[vals == best]
    order = np.lexsort((lags[tied], np.abs(lags[tied])))
    k = tied[order[0]]
    return float(best), int(lags[k])


def autocorrelation(series, max_lag):
    """Plain (value-weighted) sample autocorrelation for lags ``0 .. max_lag``."""
    x = np.asarray(series.values if hasattr(series, "values") else series, dtype=float)
    x = x - x.mean()
    c0 = np.dot(x, x)
    if c0 == 0:
        raise ValueError("degenerate series: zero variance")
    return np.array([np.dot(x[: x.size - k], x[k:]) / c0 for k in range(int(max_lag) + 1)])
