"""Small-feature clustering for the sign-statistics filter.

Rows are a handful of bounded features per client (3 or 4 dims), so the
O(n^2) flat-kernel mean shift below is plenty fast at federation scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gradients import Array


@dataclass(frozen=True)
class FeatureRow:
    """Feature vector for one client, tagged with the client's index."""

    values: Array
    client_index: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("feature row must be a nonempty 1-D vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature row contains non-finite values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ClusterAssignment:
    """Cluster labels per row plus the cluster mode points.

    labels are dense in [0, n_clusters); client_indices mirrors the input
    row order so callers can map labels back to clients.
    """

    labels: Array
    mode_points: Array
    client_indices: tuple

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.intp)
        modes = np.asarray(self.mode_points, dtype=np.float64)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "mode_points", modes)
        if labels.size != len(self.client_indices):
            raise ValueError("labels and client_indices length mismatch")
        k = modes.shape[0]
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise ValueError("labels reference a missing mode")

    @property
    def n_clusters(self) -> int:
        return self.mode_points.shape[0]

    def members(self, label: int) -> tuple:
        return tuple(ci for ci, lab in zip(self.client_indices, self.labels)
                     if lab == label)


def _row_matrix(rows) -> tuple[Array, tuple]:
    if not rows:
        raise ValueError("need at least one feature row")
    mat = np.stack([r.values for r in rows])
    idx = tuple(r.client_index for r in rows)
    return mat, idx


def estimate_bandwidth(rows, quantile: float = 0.5) -> float:
    """Bandwidth from the pairwise-distance distribution of the rows.

    Returns the smallest distance d such that at least ceil(q * K) of the
    K pairwise distances are <= d (an order statistic, no interpolation).
    A degenerate zero bandwidth falls back to 1e-3.
    """
    if not 0.0 < quantile <= 1.0:
        raise ValueError("quantile must be in (0, 1]")
    mat, _ = _row_matrix(rows)
    n = mat.shape[0]
    if n < 2:
        raise ValueError("need at least 2 rows to estimate a bandwidth")
    diffs = mat[:, None, :] - mat[None, :, :]
    dist = np.sqrt((diffs ** 2).sum(axis=2))
    pair = dist[np.triu_indices(n, k=1)]
    pair.sort()
    pick = max(0, int(np.ceil(quantile * pair.size)) - 1)
    bw = float(pair[pick])
    return bw if bw > 0.0 else 1e-3


def mean_shift(rows, bandwidth: float, tol: float = 1e-6, max_iter: int = 300,
               kernel: str = "flat") -> ClusterAssignment:
    """Mean-shift clustering with an adaptive number of clusters.

    Every row is shifted to the (kernel-weighted) mean of the original rows
    within `bandwidth` until it moves less than tol or max_iter is hit.
    Converged points within bandwidth/2 of an earlier mode join it; labels
    go to the nearest mode (ties to the lowest mode id).
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be > 0")
    if kernel not in ("flat", "gaussian"):
        raise ValueError(f"unknown kernel {kernel!r}")
    mat, idx = _row_matrix(rows)
    pts = mat.copy()
    bw2 = bandwidth * bandwidth
    # Shifts pull toward the original rows, so each point's trajectory is
    # independent; a point freezes at its own first sub-tol move (after
    # applying it), not when the slowest point settles.
    active = np.ones(pts.shape[0], dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        diffs = pts[active][:, None, :] - mat[None, :, :]
        d2 = (diffs ** 2).sum(axis=2)
        if kernel == "flat":
            # Compare in distance space, not squared: the bandwidth is often
            # itself one of the pairwise distances (see estimate_bandwidth),
            # and squaring both sides can flip that exact-boundary pair.
            w = (np.sqrt(d2) <= bandwidth).astype(np.float64)
        else:
            w = np.exp(-0.5 * d2 / bw2)
        shifted = (w @ mat) / w.sum(axis=1, keepdims=True)
        move = np.linalg.norm(shifted - pts[active], axis=1)
        rows_active = np.flatnonzero(active)
        pts[rows_active] = shifted
        active[rows_active[move < tol]] = False

    modes: list[Array] = []
    merge = 0.5 * bandwidth
    for p in pts:
        if not any(np.linalg.norm(p - m) <= merge for m in modes):
            modes.append(p)
    mode_mat = np.stack(modes)
    d_to_modes = np.linalg.norm(pts[:, None, :] - mode_mat[None, :, :], axis=2)
    labels = d_to_modes.argmin(axis=1)
    return ClusterAssignment(labels=labels, mode_points=mode_mat, client_indices=idx)


_EXACT_KMEANS_MAX_ROWS = 12


def _exact_two_partition(mat: Array, idx: tuple) -> ClusterAssignment:
    """Globally SSE-optimal 2-partition by exhaustive enumeration.

    Row 0 is fixed to label 0; masks are scanned in ascending order and only
    strict improvements are kept, so ties resolve deterministically. An empty
    side (all rows identical) collapses to a single cluster.
    """
    n = mat.shape[0]

    def sse_of(side: Array) -> float:
        if not side.any():
            return 0.0
        pts = mat[side]
        return float(((pts - pts.mean(axis=0)) ** 2).sum())

    best_sse = np.inf
    best_side = None
    for mask in range(1 << (n - 1)):
        side0 = np.zeros(n, dtype=bool)
        side0[0] = True
        for b in range(n - 1):
            if mask >> b & 1:
                side0[b + 1] = True
        total = sse_of(side0) + sse_of(~side0)
        if total < best_sse:
            best_sse = total
            best_side = side0
    # No split strictly better than leaving everything together (identical
    # rows, or all-in-one is already optimal): report a single cluster.
    if best_side.all() or best_sse >= sse_of(np.ones(n, dtype=bool)):
        return ClusterAssignment(labels=np.zeros(n, dtype=np.intp),
                                 mode_points=mat.mean(axis=0)[None, :],
                                 client_indices=idx)
    labels = np.where(best_side, 0, 1).astype(np.intp)
    centers = np.stack([mat[best_side].mean(axis=0),
                        mat[~best_side].mean(axis=0)])
    return ClusterAssignment(labels=labels, mode_points=centers,
                             client_indices=idx)


def kmeans2(rows, seed: int = 0, max_iter: int = 100) -> ClusterAssignment:
    """Two-cluster k-means partition.

    Small inputs (up to 12 rows) are solved exactly by exhaustive
    enumeration, which the single-start heuristic cannot match: Lloyd
    iteration from the deterministic farthest-pair start lands in a
    suboptimal local minimum on roughly a third of small random inputs.
    Larger inputs use that Lloyd iteration.

    The seed parameter is accepted for interface symmetry with mean_shift
    but unused: both paths are pure functions of the rows.
    """
    del seed
    mat, idx = _row_matrix(rows)
    n = mat.shape[0]
    if n < 2:
        raise ValueError("kmeans2 needs at least 2 rows")
    if n <= _EXACT_KMEANS_MAX_ROWS:
        return _exact_two_partition(mat, idx)
    diffs = mat[:, None, :] - mat[None, :, :]
    d2 = (diffs ** 2).sum(axis=2)
    best = (0, 1)
    best_d = -1.0
    for i in range(n):
        for j in range(i + 1, n):
            if d2[i, j] > best_d:
                best_d = d2[i, j]
                best = (i, j)
    centers = np.stack([mat[best[0]], mat[best[1]]])
    labels = np.zeros(n, dtype=np.intp)
    for _ in range(max_iter):
        d_to_c = np.linalg.norm(mat[:, None, :] - centers[None, :, :], axis=2)
        new_labels = d_to_c.argmin(axis=1)
        new_centers = centers.copy()
        for c in (0, 1):
            members = mat[new_labels == c]
            if members.shape[0]:
                new_centers[c] = members.mean(axis=0)
        if np.array_equal(new_labels, labels) and np.allclose(new_centers, centers):
            break
        labels, centers = new_labels, new_centers

    for empty in (1, 0):
        if not np.any(labels == empty):
            # Degenerate outcome (e.g. all rows identical): collapse to a
            # single cluster around the surviving center so labels stay
            # dense in [0, n_clusters).
            keep = 1 - empty
            return ClusterAssignment(labels=np.zeros(n, dtype=np.intp),
                                     mode_points=centers[keep:keep + 1],
                                     client_indices=idx)
    return ClusterAssignment(labels=labels, mode_points=centers, client_indices=idx)


def largest_cluster(assign: ClusterAssignment) -> set:
    """Client indices of the most populous cluster.

    Size ties prefer the cluster whose mode has the highest sum of its
    first and third features (the positive plus negative sign fractions
    when rows come from the sign-statistics filter), then the lowest id.
    """
    labels = assign.labels
    k = assign.n_clusters
    counts = np.bincount(labels, minlength=k)

    def key(c: int):
        mode = assign.mode_points[c]
        activity = mode[0] + mode[2] if mode.size >= 3 else float(mode.sum())
        return (-counts[c], -activity, c)

    winner = min(range(k), key=key)
    return set(assign.members(winner))
