"""Market-by-market feature clustering matrices and window similarity.

``Psi[l, m] = xi_lm + 1`` for a chosen feature pair, either at a fixed
separation or maximised over a lag window.  For a partitioned record, the
largest singular value of each window's Psi gives one number per window and
``Delta[i, j] = |lambda_max(i) - lambda_max(j)|`` compares windows.
"""
import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .features import FeatureSpec, find_features
from .ingest import segment
from .paircorr import (
    MIN_FEATURES,
    InsufficientFeatures,
    canonical_estimator,
    catalog_key,
    estimate_xi,
    fold_lags,
    pair_counts,
    random_batch,
    xi_max,
)

__all__ = [
    "PsiMatrix",
    "DeltaMatrix",
    "build_psi",
    "symmetrize",
    "lambda_max",
    "build_delta",
    "partition",
    "thread_count",
]


def thread_count(threads=None):
    """Worker threads: explicit value, else ``EXCURSOR_THREADS``, else 1."""
    if threads is None:
        threads = os.environ.get("EXCURSOR_THREADS", "1")
    try:
        threads = int(threads)
    except ValueError:
        raise ValueError(f"EXCURSOR_THREADS must be an integer, got {threads!r}") from None
    return max(1, threads)


def _matrix_csv(labels, values):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + [str(v) for v in labels])
    for lab, row in zip(labels, values):
        w.writerow([str(lab)] + [f"{v:.12g}" for v in row])
    return buf.getvalue()


def _long_csv(labels, values):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "col", "value"])
    for i, a in enumerate(labels):
        for j, b in enumerate(labels):
            w.writerow([str(a), str(b), f"{values[i, j]:.12g}"])
    return buf.getvalue()


def _json_floats(values):
    return [[None if not np.isfinite(v) else float(v) for v in row] for row in values]


@dataclass(frozen=True)
class PsiMatrix:
    """``xi + 1`` between every pair of markets; NaN marks undefined elements."""

    labels: list
    values: np.ndarray
    spec: dict
    err: np.ndarray = field(default=None, repr=False)
    window_id: int = None
    symmetrized: bool = False
    missing: list = field(default_factory=list)

    @property
    def complete(self):
        return bool(np.all(np.isfinite(self.values)))

    def to_csv(self):
        return _matrix_csv(self.labels, self.values)

    def to_long_csv(self):
        return _long_csv(self.labels, self.values)

    def to_json(self):
        return json.dumps({
            "labels": list(self.labels),
            "values": _json_floats(self.values),
            "err": None if self.err is None else _json_floats(self.err),
            "spec": self.spec,
            "window_id": self.window_id,
            "symmetrized": self.symmetrized,
            "missing": [list(m) for m in self.missing],
        }, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)

        def arr(v):
            return None if v is None else np.array(
                [[np.nan if x is None else x for x in row] for row in v], dtype=float)

        return cls(d["labels"], arr(d["values"]), d["spec"], arr(d["err"]), d["window_id"],
                   d["symmetrized"], [tuple(m) for m in d["missing"]])


@dataclass(frozen=True)
class DeltaMatrix:
    window_ids: list
    values: np.ndarray
    lambda_trace: np.ndarray

    def to_csv(self):
        return _matrix_csv(self.window_ids, self.values)

    def to_long_csv(self):
        return _long_csv(self.window_ids, self.values)

    def lambda_csv(self):
        lines = ["window,lambda_max"]
        lines += [f"{w},{v:.12g}" for w, v in zip(self.window_ids, self.lambda_trace)]
        return "\n".join(lines) + "\n"

    def to_json(self):
        return json.dumps({
            "window_ids": [int(w) for w in self.window_ids],
            "lambda_trace": [float(v) for v in self.lambda_trace],
            "values": _json_floats(self.values),
        }, indent=1, sort_keys=True)


def _as_spec(spec, theta):
    if spec is None:
        return None
    if isinstance(spec, FeatureSpec):
        return spec
    return FeatureSpec(spec, theta)


def build_psi(dataset, spec_a="peak", spec_b=None, theta=0.0, tau_mode="max", tau_window=10,
              estimator="natural", realizations=100, seed=0, rr_mode="monte-carlo",
              threads=None, window_id=None):
    """Assemble the Psi matrix of a set of equal-length standardized series.

    Parameters
    ----------
    dataset : list of StandardizedSeries
    spec_a, spec_b : FeatureSpec or kind name
        ``spec_b=None`` (or equal to `spec_a`) gives a same-feature matrix,
        symmetric by construction, whose diagonal is the auto-correlation.
        Otherwise element ``(l, m)`` correlates `spec_a` features of market
        ``l`` with `spec_b` features of market ``m`` and need not be
        symmetric.
    theta : float
        Threshold used when the specs are given by name.
    tau_mode : 'max' or int
        ``'max'``: largest xi over ``[0, W]`` (auto) or ``[-W, W]`` (cross).
        An integer ``tau``: xi at separation ``|tau|`` (lags ``+tau`` and
        ``-tau`` pooled for cross pairs).
    tau_window : int
        ``W`` for max mode.
    threads : int, optional
        Worker threads; defaults to ``EXCURSOR_THREADS``.  Output does not
        depend on it.

    Elements with too few features are NaN and listed in ``missing``.
    """
    series = list(dataset)
    if len(series) < 2:
        raise ValueError("build_psi needs at least two series")
    length = len(series[0])
    if any(len(s) != length for s in series):
        raise ValueError("all series must have the same length")
    estimator = canonical_estimator(estimator)
    spec_a = _as_spec(spec_a, theta)
    spec_b = _as_spec(spec_b, theta)
    same = spec_b is None or spec_b == spec_a
    if same:
        spec_b = spec_a
    labels = [getattr(s, "label", "") or f"S{i:02d}" for i, s in enumerate(series)]
    if len(set(labels)) != len(labels):
        labels = [f"{lab}#{i}" for i, lab in enumerate(labels)]
    fixed = None if tau_mode == "max" else abs(int(tau_mode))
    w = int(tau_window) if fixed is None else fixed
    with_dr = estimator != "natural"

    cats_a = [find_features(s, spec_a) for s in series]
    cats_b = cats_a if same else [find_features(s, spec_b) for s in series]
    keys_a = [catalog_key(c) for c in cats_a]
    keys_b = keys_a if same else [catalog_key(c) for c in cats_b]

    randoms = {}
    if rr_mode == "monte-carlo":
        for cat, key in list(zip(cats_a, keys_a)) + list(zip(cats_b, keys_b)):
            if key not in randoms and len(cat) >= MIN_FEATURES:
                randoms[key] = random_batch(len(cat), length, seed, key, realizations)

    if same:
        tasks = [(i, j) for i in range(len(series)) for j in range(i, len(series))]
    else:
        tasks = [(i, j) for i in range(len(series)) for j in range(len(series))]

    def element(task):
        i, j = task
        ca, cb = cats_a[i], cats_b[j]
        if len(ca) < MIN_FEATURES or len(cb) < MIN_FEATURES:
            short = labels[i] if len(ca) < MIN_FEATURES else labels[j]
            return task, np.nan, np.nan, f"insufficient features in {short}"
        auto = same and i == j
        kwargs = {}
        if rr_mode == "monte-carlo":
            kwargs["random_a"] = randoms[keys_a[i]]
            if not auto and keys_b[j] != keys_a[i]:
                kwargs["random_b"] = randoms[keys_b[j]]
        try:
            pc = pair_counts(ca, None if auto else cb, w, realizations, seed, rr_mode,
                             with_dr=with_dr, **kwargs)
            if fixed is not None:
                curve = estimate_xi(fold_lags(pc), estimator)
                k = np.flatnonzero(curve.lags == fixed)[0]
                xi, err = curve.xi[k], curve.err[k]
                if not np.isfinite(xi):
                    return task, np.nan, np.nan, f"xi undefined at tau={fixed}"
            else:
                curve = estimate_xi(pc, estimator)
                xi, tau_c = xi_max(curve, w)
                err = curve.err[np.flatnonzero(curve.lags == tau_c)[0]]
        except (InsufficientFeatures, ValueError) as exc:
            return task, np.nan, np.nan, str(exc)
        return task, xi + 1.0, err, None

    nthreads = thread_count(threads)
    if nthreads > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            results = list(pool.map(element, tasks))
    else:
        results = [element(t) for t in tasks]

    n = len(series)
    values = np.full((n, n), np.nan)
    errs = np.full((n, n), np.nan)
    missing = []
    for (i, j), v, e, why in results:
        values[i, j], errs[i, j] = v, e
        if same:
            values[j, i], errs[j, i] = v, e
        if why is not None:
            missing.append((labels[i], labels[j], why))
    spec = {
        "feature_a": spec_a.to_dict(),
        "feature_b": spec_b.to_dict(),
        "tau_mode": "max" if fixed is None else "fixed",
        "tau": fixed,
        "tau_window": None if fixed is not None else w,
        "estimator": estimator,
        "realizations": int(realizations),
        "seed": int(seed),
        "rr_mode": rr_mode,
    }
    return PsiMatrix(labels, values, spec, errs, window_id, False, missing)


def symmetrize(psi):
    """``(Psi + Psi^T) / 2``."""
    v = np.asarray(psi.values, dtype=float)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError("Psi must be square")
    err = None if psi.err is None else np.sqrt(psi.err**2 + psi.err.T**2) / 2
    return replace(psi, values=(v + v.T) / 2, err=err, symmetrized=True)


def lambda_max(psi):
    """Largest singular value (the spectral radius when Psi is symmetric)."""
    v = np.asarray(psi.values if hasattr(psi, "values") else psi, dtype=float)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError("Psi must be square")
    if not np.all(np.isfinite(v)):
        raise ValueError("Psi has undefined elements")
    return float(np.linalg.svd(v, compute_uv=False)[0])


def build_delta(psis, window_ids=None):
    """``Delta[i, j] = |lambda_max(i) - lambda_max(j)|`` over ordered windows."""
    psis = list(psis)
    if len(psis) < 2:
        raise ValueError("build_delta needs at least two windows")
    if window_ids is None:
        window_ids = [p.window_id if getattr(p, "window_id", None) is not None else k
                      for k, p in enumerate(psis)]
    failed = [wid for wid, p in zip(window_ids, psis)
              if not np.all(np.isfinite(np.asarray(getattr(p, "values", p))))]
    if failed:
        raise ValueError(f"windows with undefined Psi elements: {failed}")
    lam = np.array([lambda_max(p) for p in psis])
    return DeltaMatrix(list(window_ids), np.abs(lam[:, None] - lam[None, :]), lam)


def partition(dataset, window=100, spec_a="peak", spec_b=None, theta=0.0, **kwargs):
    """Per-window Psi matrices and their Delta matrix.

    Every series is cut into non-overlapping, individually re-standardized
    windows; window ``i`` of all markets forms one Psi.  Remaining keyword
    arguments go to :func:`build_psi`.

    Returns
    -------
    psis : list of PsiMatrix
    delta : DeltaMatrix
    """
    sets = [segment(s, window) for s in dataset]
    nwin = len(sets[0])
    psis = [
        build_psi([ss[i] for ss in sets], spec_a, spec_b, theta, window_id=i, **kwargs)
        for i in range(nwin)
    ]
    return psis, build_delta(psis)
