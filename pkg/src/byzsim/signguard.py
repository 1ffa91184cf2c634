"""Sign-statistics defense pipeline: norm filter, sign clustering, clipped mean.

The aggregation proceeds in three stages, each of which can be toggled for
ablation studies:

  1. thresholding  keep clients whose norm is within [L*M, R*M] of the
                   median norm M
  2. clustering    cluster per-client sign statistics (plus an optional
                   similarity or distance feature) and keep the largest
                   cluster
  3. clipping      average the surviving gradients after clipping each to
                   norm at most M

Skipped stages contribute the full client set (or skip the clipping).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import aggregators, clustering, gradients
from .clustering import ClusterAssignment, FeatureRow
from .gradients import Array, CoordinateSubset

VARIANTS = ("plain", "sim", "dist")
CLUSTERERS = ("mean_shift", "kmeans2")
REFERENCES = ("prev_global", "pairwise_median")


class EmptyTrustedError(RuntimeError):
    """Raised when every client is filtered out; callers fall back to a median."""


@dataclass(frozen=True)
class SignGuardConfig:
    norm_lower: float = 0.1
    norm_upper: float = 3.0
    coord_ratio: float = 0.1
    variant: str = "plain"
    bandwidth_quantile: float = 0.5
    seed: int = 0
    enable_thresholding: bool = True
    enable_clustering: bool = True
    enable_clipping: bool = True
    clusterer: str = "mean_shift"
    reference: str = "prev_global"
    zero_eps: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variant", self.variant.lower())
        if not 0.0 < self.norm_lower <= 1.0 <= self.norm_upper:
            raise ValueError("need 0 < norm_lower <= 1 <= norm_upper")
        if not 0.0 < self.coord_ratio <= 1.0:
            raise ValueError("coord_ratio must be in (0, 1]")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0.0 < self.bandwidth_quantile <= 1.0:
            raise ValueError("bandwidth_quantile must be in (0, 1]")
        if self.clusterer not in CLUSTERERS:
            raise ValueError(f"unknown clusterer {self.clusterer!r}")
        if self.reference not in REFERENCES:
            raise ValueError(f"unknown reference policy {self.reference!r}")
        if self.zero_eps < 0:
            raise ValueError("zero_eps must be >= 0")

    def to_dict(self) -> dict:
        out = {}
        defaults = SignGuardConfig()
        for name in ("norm_lower", "norm_upper", "coord_ratio", "variant",
                     "bandwidth_quantile", "seed", "enable_thresholding",
                     "enable_clustering", "enable_clipping", "clusterer",
                     "reference", "zero_eps"):
            v = getattr(self, name)
            if v != getattr(defaults, name):
                out[name] = v
        return out


@dataclass(frozen=True)
class FilterOutcome:
    """Which clients each stage kept, plus the features the decision used."""

    s1: frozenset
    s2: frozenset
    trusted: frozenset
    median_norm: float
    features: tuple

    def __post_init__(self):
        if not self.trusted <= self.s1 or not self.trusted <= self.s2:
            raise ValueError("trusted set must be contained in s1 and s2")


def norm_filter(gs, lower: float, upper: float) -> tuple[set, float]:
    """Clients whose norm ratio to the median norm lies in [lower, upper].

    Returns (kept indices, median norm M). A degenerate M of 0 keeps
    exactly the zero-norm clients.
    """
    mat = gradients.stack_gradients(gs)
    norms = np.linalg.norm(mat, axis=1)
    m_norm = float(np.median(norms))
    if m_norm == 0.0:
        kept = {i for i, v in enumerate(norms) if v == 0.0}
    else:
        ratio = norms / m_norm
        kept = {i for i, r in enumerate(ratio) if lower <= r <= upper}
    return kept, m_norm


def _reference_gradient(mat: Array, prev_global, policy: str) -> Array:
    if prev_global is not None:
        return gradients.as_gradient(prev_global)
    if policy == "pairwise_median" and mat.shape[0] >= 3:
        return pairwise_median_reference(mat)
    return aggregators.agg_coordwise_median(mat)


def _safe_cosine(a: Array, b: Array) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def build_features(gs, subset: CoordinateSubset, variant: str = "plain",
                   prev_global=None, median_norm: float | None = None,
                   reference_policy: str = "prev_global",
                   zero_eps: float = 0.0) -> list[FeatureRow]:
    """Per-client rows of (pos, zero, neg) sign fractions on the subset.

    The sim variant appends the cosine similarity between the full gradient
    and the reference (the previous round's aggregate, or a median bootstrap
    at round 0); dist appends the Euclidean distance to the reference,
    divided by the median norm for scale. Zero-norm gradients get
    similarity 0.
    """
    variant = variant.lower()
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    mat = gradients.stack_gradients(gs)
    idx = subset.as_array()
    if subset.dimension != mat.shape[1]:
        raise ValueError("subset dimension does not match the gradients")

    ref = None
    if variant in ("sim", "dist"):
        ref = _reference_gradient(mat, prev_global, reference_policy)
    if variant == "dist":
        if median_norm is None:
            median_norm = float(np.median(np.linalg.norm(mat, axis=1)))
        scale = median_norm if median_norm > 0 else 1.0

    rows = []
    for i in range(mat.shape[0]):
        sub = mat[i, idx]
        n = sub.size
        pos = int(np.count_nonzero(sub > zero_eps))
        neg = int(np.count_nonzero(sub < -zero_eps))
        feats = [pos / n, (n - pos - neg) / n, neg / n]
        if variant == "sim":
            feats.append(_safe_cosine(mat[i], ref))
        elif variant == "dist":
            feats.append(float(np.linalg.norm(mat[i] - ref)) / scale)
        rows.append(FeatureRow(values=np.array(feats), client_index=i))
    return rows


def pairwise_median_reference(gs) -> Array:
    """The gradient most aligned with the cohort by median cosine similarity.

    For each gradient, take the median of its cosine similarities to all
    others, and return the gradient maximizing that median (ties to the
    lowest index). Zero-norm pairs count as similarity 0.
    """
    mat = gradients.stack_gradients(gs)
    n = mat.shape[0]
    if n < 3:
        raise ValueError("pairwise median reference needs n >= 3")
    norms = np.linalg.norm(mat, axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    unit = mat / safe[:, None]
    cos = unit @ unit.T
    cos[norms == 0, :] = 0.0
    cos[:, norms == 0] = 0.0
    med = np.empty(n)
    for i in range(n):
        others = np.delete(cos[i], i)
        med[i] = np.median(others)
    return mat[int(np.argmax(med))].copy()


def _cluster(rows, cfg: SignGuardConfig) -> ClusterAssignment:
    if len(rows) == 1:
        return ClusterAssignment(labels=np.zeros(1, dtype=np.intp),
                                 mode_points=rows[0].values[None, :],
                                 client_indices=(rows[0].client_index,))
    if cfg.clusterer == "kmeans2":
        return clustering.kmeans2(rows)
    bw = clustering.estimate_bandwidth(rows, cfg.bandwidth_quantile)
    return clustering.mean_shift(rows, bandwidth=bw)


def signguard_aggregate(gs, cfg: SignGuardConfig, prev_global=None,
                        subset_seed: int | None = None) -> tuple[Array, FilterOutcome]:
    """Run the enabled filter stages and aggregate the trusted gradients.

    Returns the aggregate and a FilterOutcome recording each stage's
    survivors. Raises EmptyTrustedError ("all clients filtered") when the
    stage intersection is empty; the caller decides the fallback.
    """
    mat = gradients.stack_gradients(gs)
    n, d = mat.shape
    everyone = set(range(n))

    norms = np.linalg.norm(mat, axis=1)
    m_norm = float(np.median(norms))

    if cfg.enable_thresholding:
        s1, m_norm = norm_filter(mat, cfg.norm_lower, cfg.norm_upper)
    else:
        s1 = set(everyone)

    features: list[FeatureRow] = []
    if cfg.enable_clustering:
        seed = cfg.seed if subset_seed is None else subset_seed
        subset = gradients.sample_coordinates(d, cfg.coord_ratio, seed)
        features = build_features(mat, subset, cfg.variant, prev_global,
                                  median_norm=m_norm,
                                  reference_policy=cfg.reference,
                                  zero_eps=cfg.zero_eps)
        assign = _cluster(features, cfg)
        s2 = clustering.largest_cluster(assign)
    else:
        s2 = set(everyone)

    trusted = s1 & s2
    if not trusted:
        raise EmptyTrustedError("all clients filtered")

    chosen = sorted(trusted)
    if cfg.enable_clipping:
        # min(1, M / |g|); a norm above M implies a strictly positive norm.
        factors = np.ones(len(chosen))
        for k, i in enumerate(chosen):
            if norms[i] > m_norm:
                factors[k] = m_norm / norms[i]
        out = (mat[chosen] * factors[:, None]).mean(axis=0)
    else:
        out = mat[chosen].mean(axis=0)

    outcome = FilterOutcome(s1=frozenset(s1), s2=frozenset(s2),
                            trusted=frozenset(trusted), median_norm=m_norm,
                            features=tuple(features))
    return out, outcome
