"""Agglomerative hierarchical clustering with Ward linkage.

Markets are embedded as the rows of a symmetric Psi matrix (each market's
profile of clustering strengths with all others) and merged bottom-up.
The inter-cluster dissimilarity is

    d(A, B) = sqrt(2 |A| |B| / (|A| + |B|)) * ||c_A - c_B||

and after merging I and J it is updated for every other cluster K with the
Lance-Williams recurrence on squared dissimilarities:

    d(I+J, K)^2 = ((n_I + n_K) d(I,K)^2 + (n_J + n_K) d(J,K)^2 - n_K d(I,J)^2)
                  / (n_I + n_J + n_K)
"""
import json
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dendrogram",
    "embed",
    "ward_distance",
    "lance_williams_update",
    "ward_linkage",
    "ahc",
    "export_dendrogram",
    "load_dendrogram",
]


@dataclass(frozen=True)
class Dendrogram:
    """Merge history: ``merges[k] = (id_a, id_b, height, size)``.

    Leaves are ids ``0 .. n-1``; merge ``k`` creates cluster ``n + k``.
    """

    merges: list
    leaf_labels: list

    @property
    def n_leaves(self):
        return len(self.leaf_labels)

    @property
    def heights(self):
        return np.array([m[2] for m in self.merges])

    def to_linkage(self):
        """SciPy-style ``(n-1, 4)`` linkage array, e.g. for plotting."""
        return np.array([[a, b, h, s] for a, b, h, s in self.merges], dtype=float)

    def cut(self, k):
        """Flat cluster labels after undoing the last ``k - 1`` merges.

        Labels are numbered by first appearance in leaf order.
        """
        n = self.n_leaves
        if not 1 <= k <= n:
            raise ValueError(f"k must be between 1 and {n}")
        parent = list(range(2 * n - 1))

        def root(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for step, (a, b, _, _) in enumerate(self.merges[: n - k]):
            parent[root(a)] = n + step
            parent[root(b)] = n + step
        names, out = {}, []
        for leaf in range(n):
            out.append(names.setdefault(root(leaf), len(names)))
        return np.array(out)


def embed(psi):
    """One point per market: its row of the (symmetric, complete) Psi matrix."""
    v = np.asarray(psi.values if hasattr(psi, "values") else psi, dtype=float)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError("Psi must be square")
    if not np.all(np.isfinite(v)):
        raise ValueError("Psi has missing entries; clustering refuses to impute them")
    if not np.allclose(v, v.T, rtol=0, atol=1e-12 * max(1.0, np.abs(v).max())):
        raise ValueError("Psi is not symmetric; symmetrize it first")
    return v.copy()


def ward_distance(cluster_a, cluster_b):
    """Ward dissimilarity between two point sets (rows are points)."""
    a = np.atleast_2d(np.asarray(cluster_a, dtype=float))
    b = np.atleast_2d(np.asarray(cluster_b, dtype=float))
    na, nb = a.shape[0], b.shape[0]
    if na == 0 or nb == 0:
        raise ValueError("clusters must be non-empty")
    gap = np.linalg.norm(a.mean(axis=0) - b.mean(axis=0))
    return float(np.sqrt(2.0 * na * nb / (na + nb)) * gap)


def lance_williams_update(d_ik, d_jk, d_ij, n_i, n_j, n_k, squared=True):
    """Ward dissimilarity between ``I + J`` and ``K`` from the current ones.

    ``squared=False`` applies the recurrence to the dissimilarities
    themselves rather than their squares; that variant does not reproduce
    centroid distances and is kept only for comparison.
    """
    p = (d_ik, d_jk, d_ij) if not squared else (d_ik * d_ik, d_jk * d_jk, d_ij * d_ij)
    rad = ((n_i + n_k) * p[0] + (n_j + n_k) * p[1] - n_k * p[2]) / (n_i + n_j + n_k)
    scale = max(1.0, p[0], p[1], p[2])
    if rad < -1e-12 * scale:
        raise ValueError(f"negative Lance-Williams radicand {rad:.3g}: corrupted dissimilarities")
    return float(np.sqrt(max(rad, 0.0)))


def ward_linkage(points, labels=None, squared=True):
    """Ward clustering of row vectors with incremental Lance-Williams updates.

    Ties between equally close pairs go to the lexicographically smallest
    ``(id_a, id_b)``.
    """
    x = np.asarray(points, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise ValueError("clustering needs at least two points")
    labels = [str(v) for v in (labels if labels is not None else range(n))]
    size = 2 * n - 1
    d = np.full((size, size), np.inf)
    d[:n, :n] = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=-1))
    counts = np.zeros(size, dtype=np.int64)
    counts[:n] = 1
    active = list(range(n))
    merges = []
    for step in range(n - 1):
        ids = np.array(active)
        sub = d[np.ix_(ids, ids)]
        iu = np.triu_indices(ids.size, k=1)
        flat = sub[iu]
        k = int(np.argmin(flat))  # row-major over sorted ids == lexicographic
        a, b = int(ids[iu[0][k]]), int(ids[iu[1][k]])
        h = float(flat[k])
        new = n + step
        for c in active:
            if c in (a, b):
                continue
            val = lance_williams_update(d[a, c], d[b, c], h, counts[a], counts[b], counts[c],
                                        squared=squared)
            d[new, c] = d[c, new] = val
        counts[new] = counts[a] + counts[b]
        active = [c for c in active if c not in (a, b)] + [new]
        merges.append((a, b, h, int(counts[new])))
    return Dendrogram(merges, labels)


def ahc(psi, squared=True):
    """Ward AHC of the markets in a Psi matrix (embedded by rows)."""
    points = embed(psi)
    labels = getattr(psi, "labels", None)
    return ward_linkage(points, labels, squared=squared)


_NEWICK_SPECIAL = re.compile(r"[\s(),:;\[\]']")


def _newick_label(lab):
    if _NEWICK_SPECIAL.search(lab):
        return "'" + lab.replace("'", "''") + "'"
    return lab


def _fmt(v):
    return f"{v:.12g}"


def export_dendrogram(dendro, format="merge-list-json"):
    """Serialise a dendrogram as merge-list JSON (lossless) or Newick."""
    if format in ("merge-list-json", "json"):
        return json.dumps({
            "leaf_labels": list(dendro.leaf_labels),
            "merges": [[int(a), int(b), float(h), int(s)] for a, b, h, s in dendro.merges],
        }, indent=1)
    if format != "newick":
        raise ValueError(f"unknown dendrogram format {format!r}")
    n = dendro.n_leaves
    heights = {i: 0.0 for i in range(n)}
    text = {i: _newick_label(lab) for i, lab in enumerate(dendro.leaf_labels)}
    for step, (a, b, h, _) in enumerate(dendro.merges):
        node = n + step
        heights[node] = h
        text[node] = f"({text[a]}:{_fmt(h - heights[a])},{text[b]}:{_fmt(h - heights[b])})"
    return text[2 * n - 2] + ";"


def load_dendrogram(text):
    d = json.loads(text)
    merges = [(int(a), int(b), float(h), int(s)) for a, b, h, s in d["merges"]]
    return Dendrogram(merges, list(d["leaf_labels"]))
