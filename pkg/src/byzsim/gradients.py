"""Gradient vector statistics shared by attacks, defenses, and verifiers.

A gradient is a flat 1-D float64 array of model-parameter dimension d.
Collections of gradients are passed around as sequences of such arrays
(or equivalently 2-D arrays of shape (n, d)); helpers here validate and
stack them once so downstream code can stay vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Array = np.ndarray


def as_gradient(values) -> Array:
    """Coerce to a nonempty 1-D float64 vector."""
    g = np.asarray(values, dtype=np.float64)
    if g.ndim != 1:
        raise ValueError(f"gradient must be 1-D, got shape {g.shape}")
    if g.size == 0:
        raise ValueError("gradient must be nonempty")
    return g


def stack_gradients(gradients) -> Array:
    """Stack a sequence of equal-length gradients into an (n, d) matrix."""
    if isinstance(gradients, np.ndarray) and gradients.ndim == 2:
        if gradients.shape[0] == 0 or gradients.shape[1] == 0:
            raise ValueError("empty gradient collection")
        return np.asarray(gradients, dtype=np.float64)
    rows = [as_gradient(g) for g in gradients]
    if not rows:
        raise ValueError("empty gradient collection")
    d = rows[0].size
    for i, r in enumerate(rows):
        if r.size != d:
            raise ValueError(f"gradient {i} has dimension {r.size}, expected {d}")
    return np.stack(rows)


@dataclass(frozen=True)
class SignStats:
    """Fractions of positive, negative, and zero entries of a vector."""

    pos_frac: float
    neg_frac: float
    zero_frac: float

    def __post_init__(self):
        for name, v in (("pos_frac", self.pos_frac),
                        ("neg_frac", self.neg_frac),
                        ("zero_frac", self.zero_frac)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        total = self.pos_frac + self.neg_frac + self.zero_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"sign fractions sum to {total}, expected 1")


@dataclass(frozen=True)
class CoordinateSubset:
    """A deterministic subset of coordinate indices, shared across clients.

    The subset is fully determined by (seed, d, ratio); all parties that
    derive it with the same inputs obtain the same indices.
    """

    indices: tuple
    dimension: int
    seed: int

    def __post_init__(self):
        if len(self.indices) == 0:
            raise ValueError("coordinate subset must be nonempty")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("coordinate subset has duplicate indices")
        if any(i < 0 or i >= self.dimension for i in self.indices):
            raise ValueError("coordinate index out of range")

    def as_array(self) -> Array:
        return np.asarray(self.indices, dtype=np.intp)


def sample_coordinates(d: int, ratio: float, seed: int) -> CoordinateSubset:
    """Draw ceil(ratio * d) distinct coordinates of [0, d), sorted.

    ratio must lie in (0, 1]. The draw is a pure function of (d, ratio, seed).
    """
    if d <= 0:
        raise ValueError(f"dimension must be positive, got {d}")
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    k = int(np.ceil(ratio * d))
    k = min(max(k, 1), d)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, d, k]))
    idx = np.sort(rng.choice(d, size=k, replace=False))
    return CoordinateSubset(indices=tuple(int(i) for i in idx), dimension=d, seed=int(seed))


def l2_norm(g) -> float:
    """Euclidean norm of a gradient."""
    return float(np.linalg.norm(as_gradient(g)))


def sign_stats(g, subset: CoordinateSubset | None = None, zero_eps: float = 0.0) -> SignStats:
    """Sign composition of a gradient, optionally restricted to a subset.

    An entry counts as zero iff |x| <= zero_eps; the default eps of 0.0
    means only exact floating-point zeros land in the zero bucket.
    """
    if zero_eps < 0.0:
        raise ValueError("zero_eps must be nonnegative")
    v = as_gradient(g)
    if subset is not None:
        if subset.dimension != v.size:
            raise ValueError(f"subset dimension {subset.dimension} != gradient dimension {v.size}")
        v = v[subset.as_array()]
    n = v.size
    pos = int(np.count_nonzero(v > zero_eps))
    neg = int(np.count_nonzero(v < -zero_eps))
    zero = n - pos - neg
    return SignStats(pos_frac=pos / n, neg_frac=neg / n, zero_frac=zero / n)


def cosine_similarity(a, b) -> float:
    """cos(a, b) = <a, b> / (|a| |b|), clipped into [-1, 1].

    Raises if either vector has zero norm: the angle is undefined there.
    """
    va, vb = as_gradient(a), as_gradient(b)
    if va.size != vb.size:
        raise ValueError("vectors must have equal dimension")
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vector")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def mean(gradients) -> Array:
    """Coordinate-wise mean of a nonempty gradient collection."""
    return stack_gradients(gradients).mean(axis=0)


def coordwise_std(gradients) -> Array:
    """Coordinate-wise population standard deviation (divide by n, not n-1).

    Requires at least two gradients; a single vector has no spread to measure.
    """
    mat = stack_gradients(gradients)
    if mat.shape[0] < 2:
        raise ValueError("need at least 2 gradients for a standard deviation")
    return mat.std(axis=0, ddof=0)
