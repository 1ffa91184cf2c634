"""Malicious gradient crafting under a full-knowledge threat model.

Every attack sees the benign gradients of the current round (an
AttackContext) and produces the vectors the Byzantine cohort submits.
Crafting is deterministic given (context, spec, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import gradients
from .gradients import Array

ATTACK_KINDS = (
    "none",
    "random",
    "noise",
    "signflip",
    "labelflip",
    "lie",
    "byzmean",
    "minmax",
    "minsum",
)

# Attacks whose malicious submission is a single shared vector; these are the
# legal choices for the ByzMean payload group.
SINGLE_VECTOR_KINDS = ("lie", "random", "noise", "signflip", "minmax", "minsum")

_CRAFT_DEFAULTS = {"z": 0.3, "noise_mu": 0.0, "noise_sigma": 0.5,
                   "flip_scale": 1.0, "gamma_tol": 1e-5}


@dataclass(frozen=True)
class AttackSpec:
    """Declarative description of one attack strategy.

    kind         one of ATTACK_KINDS
    z            attack factor for "lie" (amount of std subtracted)
    noise_mu     Gaussian location for "random" / "noise"
    noise_sigma  Gaussian scale for "random" / "noise"
    flip_scale   r in -r*g for "signflip" (1 = plain reversal)
    gamma_tol    relative tolerance of the "minmax"/"minsum" gamma search
    inner        payload attack for "byzmean" (defaults to lie with z=0.3)
    """

    kind: str = "none"
    z: float = 0.3
    noise_mu: float = 0.0
    noise_sigma: float = 0.5
    flip_scale: float = 1.0
    gamma_tol: float = 1e-5
    inner: "AttackSpec | None" = None

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.z < 0:
            raise ValueError("z must be >= 0")
        if self.noise_sigma <= 0:
            raise ValueError("noise_sigma must be > 0")
        if self.gamma_tol <= 0:
            raise ValueError("gamma_tol must be > 0")
        if self.inner is not None:
            if kind != "byzmean":
                raise ValueError("inner attack is only meaningful for byzmean")
            if self.inner.kind not in SINGLE_VECTOR_KINDS:
                raise ValueError(
                    f"byzmean payload must be a single-vector attack, got {self.inner.kind!r}")
        if kind in ("none", "labelflip"):
            # These act outside the gradient-crafting layer and must not
            # smuggle crafting parameters in.
            for name, default in _CRAFT_DEFAULTS.items():
                if getattr(self, name) != default:
                    raise ValueError(f"{kind} attack carries no {name} parameter")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for f in fields(self):
            if f.name in ("kind", "inner"):
                continue
            v = getattr(self, f.name)
            if v != _CRAFT_DEFAULTS.get(f.name):
                out[f.name] = v
        if self.inner is not None:
            out["inner"] = self.inner.to_dict()
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "AttackSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown attack keys: {sorted(unknown)}")
        kwargs = dict(raw)
        if "inner" in kwargs and kwargs["inner"] is not None:
            kwargs["inner"] = cls.from_dict(kwargs["inner"])
        return cls(**kwargs)


@dataclass(frozen=True)
class AttackContext:
    """What the attacker knows: the benign submissions and the cohort sizes."""

    honest: Array  # (n - m, d) benign gradients
    n: int
    m: int

    def __post_init__(self):
        mat = gradients.stack_gradients(self.honest)
        object.__setattr__(self, "honest", mat)
        if not 0 <= self.m < self.n / 2:
            raise ValueError(f"need 0 <= m < n/2, got m={self.m}, n={self.n}")
        if mat.shape[0] != self.n - self.m:
            raise ValueError(
                f"expected {self.n - self.m} honest gradients, got {mat.shape[0]}")

    @property
    def d(self) -> int:
        return self.honest.shape[1]


def _rng(seed, *tags) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *tags]))


def craft_lie(ctx: AttackContext, z: float) -> Array:
    """Mean-shift-by-std vector: (g_m)_j = mu_j - z * sigma_j.

    mu and sigma are the coordinate-wise mean and population std of the
    gradients in the context. All Byzantine clients submit this one vector.
    To estimate over a different population (e.g. every client in a round
    with no attack), build the context with that population as `honest`.
    """
    if ctx.honest.shape[0] < 2:
        raise ValueError("need at least 2 honest gradients to estimate std")
    if z < 0:
        raise ValueError("z must be >= 0")
    mu = ctx.honest.mean(axis=0)
    sigma = ctx.honest.std(axis=0, ddof=0)
    return mu - z * sigma


def standard_normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def lie_z_max(n: int, m: int) -> float:
    """Largest z whose CDF stays below (n - floor(n/2 + 1)) / (n - m).

    Numeric inversion of the standard normal CDF by bisection; the returned
    value sits within 1e-9 below the exact quantile, so the defining strict
    inequality holds for the returned z and fails by z + 1e-6.
    """
    if not 0 < m < n:
        raise ValueError(f"need 0 < m < n, got n={n}, m={m}")
    ratio = (n - (n // 2 + 1)) / (n - m)
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"quantile argument {ratio} outside (0, 1)")
    lo, hi = -15.0, 15.0
    # Invariant: Phi(lo) < ratio <= Phi(hi).
    if not standard_normal_cdf(lo) < ratio <= standard_normal_cdf(hi):
        raise ValueError(f"quantile argument {ratio} out of invertible range")
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if standard_normal_cdf(mid) < ratio:
            lo = mid
        else:
            hi = mid
    return lo - 5e-10


def byzmean_pair(ctx: AttackContext, payload) -> tuple[Array, Array, int, int]:
    """Split the cohort into payload and compensating groups.

    m1 = m // 2 clients send the payload vector g_m1; the other m2 = m - m1
    send g_m2 = ((n - m1) * g_m1 - sum(honest)) / m2, which makes the average
    of all n submissions exactly g_m1. That identity is re-checked after the
    fact and must hold to 1e-9 per coordinate.
    """
    if ctx.m < 2:
        raise ValueError("byzmean needs m >= 2 so both groups are nonempty")
    g1 = gradients.as_gradient(payload)
    if g1.size != ctx.d:
        raise ValueError("payload dimension mismatch")
    m1 = ctx.m // 2
    m2 = ctx.m - m1
    g2 = ((ctx.n - m1) * g1 - ctx.honest.sum(axis=0)) / m2
    total = ctx.honest.sum(axis=0) + m1 * g1 + m2 * g2
    err = np.max(np.abs(total / ctx.n - g1))
    if err > 1e-9:
        raise ArithmeticError(f"byzmean mean identity violated by {err}")
    return g1, g2, m1, m2


def craft_byzmean(ctx: AttackContext, inner: AttackSpec | None = None,
                  seed: int = 0) -> tuple[Array, Array, int, int]:
    """Two-group attack forcing the all-client mean to equal its payload.

    The payload defaults to a lie attack with z = 0.3.
    """
    if inner is None:
        inner = AttackSpec(kind="lie", z=0.3)
    if ctx.m < 2:
        raise ValueError("byzmean needs m >= 2 so both groups are nonempty")
    return byzmean_pair(ctx, _craft_single(inner, ctx, seed))


def _largest_feasible_gamma(feasible, tol: float) -> float:
    """Largest gamma passing `feasible`, via doubling then bisection.

    Assumes feasible(0) holds and the feasible set is an interval [0, g*].
    The result is the certified-feasible lower end of a bracket of relative
    width tol.
    """
    gamma = 1e-6
    if feasible(gamma):
        doublings = 0
        while feasible(gamma * 2):
            gamma *= 2
            doublings += 1
            if doublings > 64:
                raise RuntimeError("gamma bracketing failed after 64 doublings")
        lo, hi = gamma, gamma * 2
    else:
        lo, hi = 0.0, gamma
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _aggregate_perturbed(ctx: AttackContext, perturbation, tol: float, constraint) -> Array:
    if ctx.honest.shape[0] < 2:
        raise ValueError("need at least 2 honest gradients")
    if perturbation is None:
        perturbation = -ctx.honest.std(axis=0, ddof=0)
    p = gradients.as_gradient(perturbation)
    if p.size != ctx.d:
        raise ValueError("perturbation dimension mismatch")
    if not np.any(p):
        raise ValueError("perturbation must be nonzero")
    avg = ctx.honest.mean(axis=0)
    gamma = _largest_feasible_gamma(lambda g: constraint(avg + g * p), tol)
    return avg + gamma * p


def craft_minmax(ctx: AttackContext, perturbation=None, tol: float = 1e-5) -> Array:
    """Perturbed aggregate staying within the honest clique diameter.

    g_m = avg(honest) + gamma* . p with the largest gamma such that the
    distance from g_m to every honest gradient stays at most the maximum
    honest pairwise distance. Default p is the negated coordinate-wise std.
    """
    mat = ctx.honest
    diffs = mat[:, None, :] - mat[None, :, :]
    max_pair = float(np.sqrt((diffs ** 2).sum(axis=2)).max())

    def ok(candidate: Array) -> bool:
        dists = np.linalg.norm(mat - candidate, axis=1)
        return bool(dists.max() <= max_pair)

    return _aggregate_perturbed(ctx, perturbation, tol, ok)


def craft_minsum(ctx: AttackContext, perturbation=None, tol: float = 1e-5) -> Array:
    """As craft_minmax, but bounded by the worst honest sum of squared distances."""
    mat = ctx.honest
    diffs = mat[:, None, :] - mat[None, :, :]
    sq = (diffs ** 2).sum(axis=2)
    max_sum = float(sq.sum(axis=1).max())

    def ok(candidate: Array) -> bool:
        return bool(((mat - candidate) ** 2).sum() <= max_sum)

    return _aggregate_perturbed(ctx, perturbation, tol, ok)


def craft_random(d: int, mu: float = 0.0, sigma: float = 0.5, seed: int = 0) -> Array:
    """I.i.d. Gaussian vector, N(mu, sigma^2) per coordinate."""
    if d <= 0:
        raise ValueError("d must be positive")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return _rng(seed, 1).normal(mu, sigma, size=d)


def craft_noise(honest_g, mu: float = 0.0, sigma: float = 0.5, seed: int = 0) -> Array:
    """Honest gradient plus i.i.d. Gaussian noise."""
    g = gradients.as_gradient(honest_g)
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return g + _rng(seed, 2).normal(mu, sigma, size=g.size)


def craft_signflip(honest_g, r: float = 1.0) -> Array:
    """Reversed gradient -r * g; r > 1 additionally scales it up."""
    if r <= 0:
        raise ValueError("r must be > 0")
    return -r * gradients.as_gradient(honest_g)


def _craft_single(spec: AttackSpec, ctx: AttackContext, seed: int) -> Array:
    """One shared malicious vector for the single-vector attack kinds."""
    if spec.kind == "lie":
        return craft_lie(ctx, spec.z)
    if spec.kind == "random":
        return craft_random(ctx.d, spec.noise_mu, spec.noise_sigma, seed)
    if spec.kind == "noise":
        return craft_noise(ctx.honest.mean(axis=0), spec.noise_mu, spec.noise_sigma, seed)
    if spec.kind == "signflip":
        return craft_signflip(ctx.honest.mean(axis=0), spec.flip_scale)
    if spec.kind == "minmax":
        return craft_minmax(ctx, None, spec.gamma_tol)
    if spec.kind == "minsum":
        return craft_minsum(ctx, None, spec.gamma_tol)
    raise ValueError(f"{spec.kind!r} does not craft a single shared vector")


def craft_attack(spec: AttackSpec, ctx: AttackContext, seed: int = 0) -> Array | None:
    """All m malicious submissions for one round, as an (m, d) matrix.

    Returns None for "none" and "labelflip": those cohorts submit their own
    locally computed updates (labelflip poisons the data layer instead).
    Random and noise rows get independent draws per Byzantine client; the
    other attacks submit identical copies of one crafted vector.
    """
    if spec.kind in ("none", "labelflip"):
        return None
    if ctx.m == 0:
        raise ValueError("no Byzantine clients to craft for")
    if spec.kind == "random":
        return np.stack([craft_random(ctx.d, spec.noise_mu, spec.noise_sigma,
                                      seed=_child_seed(seed, i)) for i in range(ctx.m)])
    if spec.kind == "noise":
        base = ctx.honest.mean(axis=0)
        return np.stack([craft_noise(base, spec.noise_mu, spec.noise_sigma,
                                     seed=_child_seed(seed, i)) for i in range(ctx.m)])
    if spec.kind == "byzmean":
        g1, g2, m1, m2 = craft_byzmean(ctx, spec.inner, seed)
        return np.vstack([np.tile(g1, (m1, 1)), np.tile(g2, (m2, 1))])
    single = _craft_single(spec, ctx, seed)
    return np.tile(single, (ctx.m, 1))


def _child_seed(seed: int, index: int) -> int:
    # Stable per-row derivation so each Byzantine client's draw is independent
    # yet reproducible.
    return (int(seed) & 0xFFFFFFFF) * 1000003 + index
