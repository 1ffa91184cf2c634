"""Baseline robust aggregation rules the defense pipeline is compared against."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from . import gradients
from .gradients import Array

if TYPE_CHECKING:
    from .signguard import SignGuardConfig

DEFENSE_KINDS = (
    "mean",
    "trmean",
    "median",
    "geomed",
    "multikrum",
    "bulyan",
    "signguard",
    "signguard_sim",
    "signguard_dist",
)

_KIND_ALIASES = {
    "signguardsim": "signguard_sim",
    "signguard-sim": "signguard_sim",
    "signguarddist": "signguard_dist",
    "signguard-dist": "signguard_dist",
}


@dataclass(frozen=True)
class DefenseSpec:
    """Declarative description of one aggregation rule.

    byz_count_hint is the Byzantine count handed to baselines that require
    one (trmean trimming, multikrum/bulyan); the signguard kinds never read
    it. trim_k overrides the hint for trmean only.
    """

    kind: str = "mean"
    byz_count_hint: int | None = None
    trim_k: int | None = None
    weiszfeld_tol: float = 1e-8
    weiszfeld_max_iter: int = 200
    signguard: "SignGuardConfig | None" = None

    def __post_init__(self):
        kind = self.kind.lower()
        kind = _KIND_ALIASES.get(kind, kind)
        object.__setattr__(self, "kind", kind)
        if kind not in DEFENSE_KINDS:
            raise ValueError(f"unknown defense kind {self.kind!r}")
        if self.byz_count_hint is not None and self.byz_count_hint < 0:
            raise ValueError("byz_count_hint must be >= 0")
        if self.trim_k is not None and self.trim_k < 0:
            raise ValueError("trim_k must be >= 0")
        if self.weiszfeld_tol <= 0 or self.weiszfeld_max_iter < 1:
            raise ValueError("invalid weiszfeld solver parameters")
        if self.signguard is not None:
            if not self.is_signguard():
                raise ValueError(f"{kind!r} takes no signguard options")
            # the kind suffix owns the variant; normalize any stored config
            variant = {"signguard": "plain", "signguard_sim": "sim",
                       "signguard_dist": "dist"}[kind]
            if self.signguard.variant != variant:
                object.__setattr__(self, "signguard",
                                   replace(self.signguard, variant=variant))

    def is_signguard(self) -> bool:
        return self.kind.startswith("signguard")

    @classmethod
    def from_dict(cls, raw: dict) -> "DefenseSpec":
        """Build from a flat mapping; signguard tuning keys ride alongside.

        The variant is carried by the kind (signguard / signguard_sim /
        signguard_dist); an explicit variant key is rejected.
        """
        from .signguard import SignGuardConfig

        own = {"kind", "byz_count_hint", "trim_k", "weiszfeld_tol",
               "weiszfeld_max_iter"}
        sg_fields = {"norm_lower", "norm_upper", "coord_ratio",
                     "bandwidth_quantile", "seed", "enable_thresholding",
                     "enable_clustering", "enable_clipping", "clusterer",
                     "reference", "zero_eps"}
        unknown = set(raw) - own - sg_fields
        if unknown:
            raise ValueError(f"unknown defense keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in raw.items() if k in own}
        sg_kwargs = {k: v for k, v in raw.items() if k in sg_fields}
        spec = cls(**kwargs)
        if sg_kwargs:
            if not spec.is_signguard():
                raise ValueError(
                    f"{spec.kind!r} takes no signguard options: {sorted(sg_kwargs)}")
            return cls(signguard=SignGuardConfig(**sg_kwargs), **kwargs)
        return spec

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.byz_count_hint is not None:
            out["byz_count_hint"] = self.byz_count_hint
        if self.trim_k is not None:
            out["trim_k"] = self.trim_k
        if self.weiszfeld_tol != 1e-8:
            out["weiszfeld_tol"] = self.weiszfeld_tol
        if self.weiszfeld_max_iter != 200:
            out["weiszfeld_max_iter"] = self.weiszfeld_max_iter
        if self.signguard is not None:
            merged = self.signguard.to_dict()
            merged.pop("variant", None)  # the kind suffix carries it
            out.update(merged)
        return out


def agg_mean(gs) -> Array:
    """Plain coordinate-wise average."""
    return gradients.mean(gs)


def agg_trimmed_mean(gs, k: int) -> Array:
    """Drop the k largest and k smallest values per coordinate, average the rest."""
    mat = gradients.stack_gradients(gs)
    n = mat.shape[0]
    if k < 0:
        raise ValueError("k must be >= 0")
    if 2 * k >= n:
        raise ValueError(f"cannot trim 2k={2 * k} values out of n={n}")
    if k == 0:
        return mat.mean(axis=0)
    return np.sort(mat, axis=0)[k:n - k].mean(axis=0)


def agg_coordwise_median(gs) -> Array:
    """Per-coordinate median; even counts average the two middle values."""
    return np.median(gradients.stack_gradients(gs), axis=0)


def agg_geomed(gs, tol: float = 1e-8, max_iter: int = 200) -> Array:
    """Approximate geometric median by smoothed Weiszfeld iteration.

    Starts from the coordinate-wise mean; each step reweights points by
    inverse distance (plus 1e-12 so an iterate sitting on a data point
    cannot divide by zero). Always returns the final iterate.
    """
    mat = gradients.stack_gradients(gs)
    if mat.shape[0] == 1:
        return mat[0].copy()
    x = mat.mean(axis=0)
    for _ in range(max_iter):
        dist = np.linalg.norm(mat - x, axis=1) + 1e-12
        w = 1.0 / dist
        x_new = (w[:, None] * mat).sum(axis=0) / w.sum()
        if np.linalg.norm(x_new - x) < tol:
            return x_new
        x = x_new
    return x


def _krum_scores(mat: Array, m: int, clamp: bool = False) -> Array:
    """Sum of squared distances to each row's n-m-2 nearest other rows.

    clamp=True scores against all other rows instead of erroring, for the
    shrinking subsets of repeated-Krum selection. Scoring against a single
    nearest row would not do: the mutually-closest pair ties exactly, making
    the pick depend on input order.
    """
    n = mat.shape[0]
    closest = n - m - 2
    if closest < 1:
        if not clamp:
            raise ValueError(f"need n - m - 2 >= 1, got n={n}, m={m}")
        closest = n - 1
    diffs = mat[:, None, :] - mat[None, :, :]
    sq = (diffs ** 2).sum(axis=2)
    np.fill_diagonal(sq, np.inf)
    part = np.sort(sq, axis=1)[:, :closest]
    return part.sum(axis=1)


def _score_order(mat: Array, scores: Array) -> Array:
    """Row order by (score, row value lexicographic, original index).

    Krum scores tie exactly on mutually-nearest pairs whenever the neighbor
    count is 1, so breaking ties by row value keeps the chosen set a function
    of the values alone; the index only separates exact duplicate rows.
    """
    keys = [np.arange(mat.shape[0])]
    keys.extend(mat[:, j] for j in range(mat.shape[1] - 1, -1, -1))
    keys.append(scores)
    return np.lexsort(tuple(keys))


def multikrum_selection(gs, m: int, k_select: int | None = None) -> Array:
    """Indices of the k_select lowest-scoring gradients.

    Ordering: ascending score, ties by row value, then original index.
    """
    mat = gradients.stack_gradients(gs)
    n = mat.shape[0]
    if k_select is None:
        k_select = n - m
    if not 1 <= k_select <= n:
        raise ValueError(f"k_select must be in [1, {n}], got {k_select}")
    order = _score_order(mat, _krum_scores(mat, m))
    return np.sort(order[:k_select])


def agg_multikrum(gs, m: int, k_select: int | None = None) -> Array:
    """Average of the k_select gradients with the lowest Krum scores."""
    mat = gradients.stack_gradients(gs)
    return mat[multikrum_selection(mat, m, k_select)].mean(axis=0)


def bulyan_selection(gs, m: int) -> Array:
    """First-stage Bulyan selection: theta = n - 2m rows picked by repeated Krum."""
    mat = gradients.stack_gradients(gs)
    n = mat.shape[0]
    if m < 0:
        raise ValueError("m must be >= 0")
    if n < 4 * m + 3:
        raise ValueError(f"bulyan needs n >= 4m + 3, got n={n}, m={m}")
    theta = n - 2 * m
    remaining = list(range(n))
    selected: list[int] = []
    while len(selected) < theta:
        if len(remaining) == 1:
            best = remaining[0]
        else:
            # Subsets of size < m + 3 score against all their other rows so
            # selection stays a function of the row values alone, never of
            # input order.
            sub = mat[remaining]
            order = _score_order(sub, _krum_scores(sub, m, clamp=True))
            best = remaining[int(order[0])]
        selected.append(best)
        remaining.remove(best)
    return np.sort(np.asarray(selected))


def agg_bulyan(gs, m: int) -> Array:
    """Repeated-Krum selection, then per-coordinate trimmed averaging.

    Per coordinate, the beta = theta - 2m selected values closest to the
    coordinate median are averaged (ties by distance, then value, then
    original index, so symmetric median offsets resolve the same way under
    any input order).
    """
    mat = gradients.stack_gradients(gs)
    chosen = mat[bulyan_selection(mat, m)]
    theta = chosen.shape[0]
    beta = theta - 2 * m
    med = np.median(chosen, axis=0)
    gap = np.abs(chosen - med)
    idx = np.arange(theta)
    out = np.empty(chosen.shape[1])
    for j in range(chosen.shape[1]):
        order = np.lexsort((idx, chosen[:, j], gap[:, j]))[:beta]
        out[j] = chosen[order, j].mean()
    return out
