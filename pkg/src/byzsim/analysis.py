"""Numeric verifiers for the claims the defense design rests on.

Four questions are checked by direct computation rather than trusted on
faith: whether a mean-shifted crafted gradient really hides among honest
ones under distance and cosine metrics (verify_prop1), at what attack
strength median and mean aggregation flip a coordinate's sign
(sign_flip_threshold_check), how far the average of a benign-client
subset can drift from the global gradient (verify_lemma1), and what the
convergence-rate constants of filtered aggregation evaluate to
(theorem1_constants). sign_trace extracts per-round sign statistics from
experiment reports for the CSV/plotting path.

Verifiers use only public `gradients` and `attacks` operations, so they
double as integration tests of those modules.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import attacks, gradients
from .attacks import AttackContext
from .gradients import SignStats

SUBSET_MODES = ("random", "adversarial")

# Exhaustive subset search grows as C(n, beta*n); past 12 clients the
# enumeration stops being a desk-scale computation.
ADVERSARIAL_MAX_CLIENTS = 12


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed & 0xFFFFFFFF, *tags]))


@dataclass(frozen=True)
class Prop1Report:
    """Trial-averaged proximity of a mean-shifted crafted gradient.

    Distances are squared Euclidean distances to the all-client average
    (crafted submissions included); cosines are similarities with that
    same average. Per-honest-client lists are index-aligned. xi values
    are norm ratios against the average. The `closer`/`less_similar`
    fractions count trials where some honest gradient was beaten
    outright; the `exists_*` flags apply the same test to the
    trial-averaged quantities.
    """

    z: float
    trials: int
    dist_malicious: float
    dist_attacker_identity: float
    identity_max_rel_err: float
    dist_honest: tuple
    cos_malicious: float
    cos_honest: tuple
    bound_dist: float
    xi_m: float
    xi_honest: tuple
    exists_closer: bool
    exists_less_similar: bool
    closer_fraction: float
    less_similar_fraction: float
    xi_condition_violations: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        k = len(self.dist_honest)
        if len(self.cos_honest) != k or len(self.xi_honest) != k:
            raise ValueError("per-client lists must have equal length")
        if self.dist_malicious < 0 or self.bound_dist < 0:
            raise ValueError("squared distances must be >= 0")
        for frac in (self.closer_fraction, self.less_similar_fraction):
            if not 0.0 <= frac <= 1.0:
                raise ValueError("trial fractions must lie in [0, 1]")
        if self.xi_condition_violations < 0:
            raise ValueError("violation count must be >= 0")


def verify_prop1(ctx: AttackContext, z: float, trials: int = 100,
                 seed: int = 0) -> Prop1Report:
    """Measure how well a mean-shifted crafted gradient blends in.

    The honest rows of `ctx` define the population: each trial redraws
    n - m honest gradients from the coordinate-wise Gaussian fitted to
    them, crafts the attack vector from the fresh rows, and compares its
    distance to and cosine with the all-n average (the m crafted
    submissions included) against every honest gradient's.

    Two distance conventions are reported: dist_malicious measures
    against the all-n average, dist_attacker_identity against the
    attacker's own population mean, where the squared distance equals
    z^2 times the summed coordinate variances by construction;
    identity_max_rel_err is the worst per-trial relative gap between
    the measured distance and that closed form.

    Each trial also cross-checks the geometric argument behind the
    cosine claim: whenever the crafted norm ratio exceeds an honest one
    that is itself >= 1 and the crafted distance does not exceed the
    honest one, the crafted cosine must come out larger; counterexamples
    are counted in xi_condition_violations (always 0 unless the cosine
    law itself is misimplemented).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if z < 0:
        raise ValueError("z must be >= 0")
    if ctx.honest.shape[0] < 2:
        raise ValueError("need at least 2 honest gradients to fit a generator")
    n, m, k = ctx.n, ctx.m, ctx.honest.shape[0]
    mu_fit = ctx.honest.mean(axis=0)
    sigma_fit = ctx.honest.std(axis=0)

    dist_m = np.empty(trials)
    identity = np.empty(trials)
    dist_h = np.empty((trials, k))
    cos_m = np.empty(trials)
    cos_h = np.empty((trials, k))
    xi_m = np.empty(trials)
    xi_h = np.empty((trials, k))
    pop_var = np.empty(trials)
    closer = 0
    less_similar = 0
    violations = 0
    identity_err = 0.0

    for t in range(trials):
        rng = _rng(seed, 13, t)
        honest = mu_fit + sigma_fit * rng.standard_normal((k, ctx.d))
        trial_ctx = AttackContext(honest=honest, n=n, m=m)
        g_m = attacks.craft_lie(trial_ctx, z)
        full = np.vstack([honest, np.tile(g_m, (m, 1))])
        g_tilde = full.mean(axis=0)

        diffs = honest - g_tilde
        dist_h[t] = np.einsum("ij,ij->i", diffs, diffs)
        dist_m[t] = float((g_m - g_tilde) @ (g_m - g_tilde))
        mu_hat = honest.mean(axis=0)
        identity[t] = float((g_m - mu_hat) @ (g_m - mu_hat))
        var_sum = float(np.sum(honest.var(axis=0)))
        closed_form = z * z * var_sum
        if closed_form > 0.0:
            rel_err = abs(identity[t] - closed_form) / closed_form
        else:
            rel_err = 0.0 if identity[t] == 0.0 else math.inf
        identity_err = max(identity_err, rel_err)
        pop_var[t] = float(np.mean(
            np.einsum("ij,ij->i", honest - mu_hat, honest - mu_hat)))

        cos_m[t] = gradients.cosine_similarity(g_m, g_tilde)
        cos_h[t] = [gradients.cosine_similarity(row, g_tilde)
                    for row in honest]
        ref_norm = gradients.l2_norm(g_tilde)
        xi_m[t] = gradients.l2_norm(g_m) / ref_norm
        xi_h[t] = np.linalg.norm(honest, axis=1) / ref_norm

        closer += bool(np.any(dist_m[t] < dist_h[t]))
        less_similar += bool(np.any(cos_m[t] > cos_h[t]))
        applies = (xi_h[t] >= 1.0) & (xi_m[t] > xi_h[t]) \
            & (dist_m[t] <= dist_h[t])
        violations += int(np.count_nonzero(
            applies & (cos_m[t] <= cos_h[t] - 1e-12)))

    mean_dist_h = dist_h.mean(axis=0)
    mean_cos_h = cos_h.mean(axis=0)
    return Prop1Report(
        z=z,
        trials=trials,
        dist_malicious=float(dist_m.mean()),
        dist_attacker_identity=float(identity.mean()),
        identity_max_rel_err=identity_err,
        dist_honest=tuple(float(v) for v in mean_dist_h),
        cos_malicious=float(cos_m.mean()),
        cos_honest=tuple(float(v) for v in mean_cos_h),
        bound_dist=(1.0 + 1.0 / n) * z * z * float(pop_var.mean()),
        xi_m=float(xi_m.mean()),
        xi_honest=tuple(float(v) for v in xi_h.mean(axis=0)),
        exists_closer=bool(np.any(dist_m.mean() < mean_dist_h)),
        exists_less_similar=bool(np.any(cos_m.mean() > mean_cos_h)),
        closer_fraction=closer / trials,
        less_similar_fraction=less_similar / trials,
        xi_condition_violations=violations,
    )


@dataclass(frozen=True)
class ThresholdCheck:
    """Sign-flip verdicts for median and mean aggregation.

    Unpacks as the pair (median_flips, mean_flips); the remaining fields
    carry the concrete aggregates of the constructed confirmation
    instances and whether each aggregate's sign agreed with its verdict.
    """

    median_flips: bool
    mean_flips: bool
    median_aggregate: float
    mean_aggregate: float
    median_confirmed: bool
    mean_confirmed: bool

    def __iter__(self):
        return iter((self.median_flips, self.mean_flips))


def sign_flip_threshold_check(mu_j: float, sigma_j: float, z: float,
                              n: int, m: int) -> ThresholdCheck:
    """Decide whether attack strength z reverses a positive coordinate.

    A crafted coordinate mu - z*sigma beats the median once z exceeds
    mu/sigma (assuming the median lands on a crafted copy) and beats the
    mean once z exceeds n*mu/(m*sigma); both inequalities are strict.
    Each verdict is confirmed on a concrete scalar population: for the
    median, honest values are arranged so the crafted copies occupy the
    middle ranks (an extra client is added when n is even and m == 1,
    where no such arrangement exists); for the mean, honest values pair
    symmetrically around mu so the population mean is exactly
    mu - z*(m/n)*sigma.
    """
    if mu_j <= 0 or sigma_j <= 0:
        raise ValueError("need mu_j > 0 and sigma_j > 0")
    if z < 0:
        raise ValueError("z must be >= 0")
    if not 1 <= m < n:
        raise ValueError(f"need 1 <= m < n, got n={n}, m={m}")
    crafted = mu_j - z * sigma_j
    median_flips = z > mu_j / sigma_j
    mean_flips = z > n * mu_j / (m * sigma_j)

    n_med = n if (n % 2 == 1 or m >= 2) else n + 1
    lo = min(max(n_med // 2 - m + 1, 0), (n_med - 1) // 2)
    hi = n_med - m - lo
    instance = np.concatenate([
        np.full(lo, crafted - sigma_j),
        np.full(m, crafted),
        np.full(hi, crafted + sigma_j),
    ])
    median_aggregate = float(np.median(instance))

    k = n - m
    honest = np.concatenate([
        np.full(k // 2, mu_j - sigma_j),
        np.full(k // 2, mu_j + sigma_j),
        np.full(k % 2, mu_j),
    ])
    mean_aggregate = float(np.mean(np.concatenate(
        [honest, np.full(m, crafted)])))

    return ThresholdCheck(
        median_flips=median_flips,
        mean_flips=mean_flips,
        median_aggregate=median_aggregate,
        mean_aggregate=mean_aggregate,
        median_confirmed=(median_aggregate < 0.0) == median_flips,
        mean_confirmed=(mean_aggregate < 0.0) == mean_flips,
    )


@dataclass(frozen=True)
class Lemma1Report:
    """Measured drift of a benign-subset average against its bound.

    kappa_hat and sigma_hat are measured from the generated population,
    so `bound` reflects the population actually simulated rather than
    the requested nominal constants.
    """

    beta: float
    kappa_hat: float
    sigma_hat: float
    empirical_dev: float
    bound: float
    subset: str
    trials: int

    def __post_init__(self):
        if self.empirical_dev < 0 or self.bound < 0:
            raise ValueError("deviation and bound must be >= 0")
        if self.subset not in SUBSET_MODES:
            raise ValueError(f"unknown subset mode {self.subset!r}")


def verify_lemma1(n: int, beta: float, sigma: float, kappa: float,
                  trials: int = 200, seed: int = 0, d: int = 10,
                  subset: str = "random") -> Lemma1Report:
    """Measure how far the kept-subset average drifts from the truth.

    The population has n clients whose mean gradients sit within kappa
    of the global gradient (and average exactly to it), plus per-draw
    noise of root-mean-square norm sigma. Each trial redraws the noise,
    drops beta*n clients, and records the squared distance between the
    kept average and the global gradient. With subset="random" the
    excluded set is uniform per trial and the trials are averaged;
    subset="adversarial" enumerates every excluded set, averages each
    one's drift over the trials, and reports the worst set's average
    (the adversary commits to a subset, not to a noise realization).
    Enumeration restricts adversarial mode to n at most 12.

    The reported bound beta^2*kappa^2/(1-beta)^2 + sigma^2/((1-beta)n)
    is evaluated with the measured kappa_hat and sigma_hat.
    """
    if n < 1:
        raise ValueError("need at least one client")
    if not 0.0 <= beta < 0.5:
        raise ValueError("beta must be in [0, 0.5)")
    if sigma < 0 or kappa < 0:
        raise ValueError("sigma and kappa must be >= 0")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if d < 1:
        raise ValueError("d must be >= 1")
    if subset not in SUBSET_MODES:
        raise ValueError(f"subset must be one of {SUBSET_MODES}")
    n_excl = int(round(beta * n))
    if abs(n_excl - beta * n) > 1e-9:
        raise ValueError("beta * n must be a whole number of clients")
    if subset == "adversarial" and n > ADVERSARIAL_MAX_CLIENTS:
        raise ValueError(
            f"adversarial subsets enumerate all splits; n must be "
            f"<= {ADVERSARIAL_MAX_CLIENTS}")

    # client means centered on the global gradient (taken as the origin):
    # centered random directions rescaled so the largest deviation is kappa
    if kappa > 0.0 and n > 1:
        directions = _rng(seed, 14).standard_normal((n, d))
        directions -= directions.mean(axis=0)
        largest = float(np.linalg.norm(directions, axis=1).max())
        client_means = kappa * directions / largest
    else:
        client_means = np.zeros((n, d))
    kappa_hat = float(np.linalg.norm(client_means, axis=1).max())

    n_keep = n - n_excl
    selector = None
    if subset == "adversarial":
        excluded_sets = list(itertools.combinations(range(n), n_excl))
        selector = np.full((len(excluded_sets), n), 1.0 / n_keep)
        for s_idx, excluded in enumerate(excluded_sets):
            selector[s_idx, list(excluded)] = 0.0
        subset_sums = np.zeros(len(excluded_sets))

    devs = np.empty(trials)
    noise_sq = np.zeros(n)
    for t in range(trials):
        rng = _rng(seed, 15, t)
        noise = rng.standard_normal((n, d)) * (sigma / math.sqrt(d))
        rows = client_means + noise
        noise_sq += np.einsum("ij,ij->i", noise, noise)
        if selector is not None:
            means = selector @ rows
            subset_sums += np.einsum("ij,ij->i", means, means)
        else:
            keep = rng.choice(n, size=n_keep, replace=False)
            mean = rows[keep].mean(axis=0)
            devs[t] = float(mean @ mean)

    empirical = float(subset_sums.max() / trials) if selector is not None \
        else float(devs.mean())
    sigma_hat = math.sqrt(float(noise_sq.max()) / trials)
    bound = (beta ** 2) * kappa_hat ** 2 / (1.0 - beta) ** 2 \
        + sigma_hat ** 2 / ((1.0 - beta) * n)
    return Lemma1Report(
        beta=beta,
        kappa_hat=kappa_hat,
        sigma_hat=sigma_hat,
        empirical_dev=empirical,
        bound=bound,
        subset=subset,
        trials=trials,
    )


@dataclass(frozen=True)
class TheoremConstants:
    """Convergence-rate constants of filtered aggregation.

    delta1 scales the learning-rate-proportional error term; delta2 is
    the irreducible floor from attackers that slip the filter and from
    heterogeneous data. max_learning_rate and learning_rate_ok are set
    when a smoothness estimate was supplied.
    """

    c: float
    b: float
    delta: float
    beta: float
    sigma: float
    kappa: float
    n: int
    smoothness: float | None
    learning_rate: float | None
    delta1: float
    delta2: float
    max_learning_rate: float | None
    learning_rate_ok: bool | None

    def mean_grad_sq_bound(self, loss_gap: float, rounds: int) -> float:
        """Bound on the average squared full-gradient norm over a run.

        loss_gap is the initial objective value minus its minimum.
        """
        if self.learning_rate is None or self.smoothness is None:
            raise ValueError(
                "bound needs both learning_rate and smoothness")
        if loss_gap < 0:
            raise ValueError("loss_gap must be >= 0")
        if rounds < 1:
            raise ValueError("rounds must be >= 1")
        return (2.0 * loss_gap / (self.learning_rate * rounds)
                + 2.0 * self.smoothness * self.learning_rate * self.delta1
                + self.delta2)


def theorem1_constants(*, c: float = 0.0, b: float = 0.0,
                       delta: float = 0.0, beta: float = 0.0,
                       sigma: float = 0.0, kappa: float = 0.0, n: int = 1,
                       smoothness: float | None = None,
                       learning_rate: float | None = None,
                       ) -> TheoremConstants:
    """Evaluate the convergence constants for one parameter point.

    c and b bound the aggregator's bias and variance, delta is the
    fraction of clients whose malicious submissions evade filtering,
    beta the Byzantine fraction, sigma and kappa the within-client and
    across-client gradient spreads, n the client count. Passing a
    smoothness estimate (and optionally a learning rate) also evaluates
    the step-size ceiling (2 - sqrt(delta) - 2*beta) / (4 * smoothness).
    """
    for name, value in (("c", c), ("b", b), ("delta", delta),
                        ("beta", beta), ("sigma", sigma),
                        ("kappa", kappa)):
        if value < 0:
            raise ValueError(f"{name} must be >= 0")
    if beta >= 0.5:
        raise ValueError("beta must be < 0.5")
    if delta > beta:
        raise ValueError("delta cannot exceed beta")
    if n < 1:
        raise ValueError("n must be >= 1")
    if smoothness is not None and smoothness < 0:
        raise ValueError("smoothness must be >= 0")
    if learning_rate is not None:
        if learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if smoothness is None:
            raise ValueError(
                "checking a learning rate needs a smoothness estimate")

    var_sum = sigma ** 2 + kappa ** 2
    shrink = (1.0 - beta) ** 2
    delta1 = (4.0 * c * delta * var_sum + 2.0 * b ** 2
              + 2.0 * beta ** 2 * kappa ** 2 / shrink
              + 2.0 * sigma ** 2 / ((1.0 - beta) * n))
    delta2 = 4.0 * c * math.sqrt(delta) * var_sum \
        + beta * kappa ** 2 / shrink

    max_lr = None
    lr_ok = None
    if smoothness is not None:
        headroom = 2.0 - math.sqrt(delta) - 2.0 * beta
        max_lr = math.inf if smoothness == 0.0 \
            else headroom / (4.0 * smoothness)
        if learning_rate is not None:
            lr_ok = learning_rate <= max_lr
    return TheoremConstants(
        c=c, b=b, delta=delta, beta=beta, sigma=sigma, kappa=kappa, n=n,
        smoothness=smoothness, learning_rate=learning_rate,
        delta1=delta1, delta2=delta2,
        max_learning_rate=max_lr, learning_rate_ok=lr_ok,
    )


@dataclass(frozen=True)
class SignTraceRow:
    """One round's sign composition: honest mean vs attack vectors."""

    round_index: int
    honest: SignStats
    malicious: SignStats | None


def sign_trace(reports) -> list[SignTraceRow]:
    """Extract the per-round sign-statistics trace from round reports.

    The honest entry describes the mean of the honest submissions; the
    malicious entry averages the attack vectors' statistics and is None
    for rounds without attack vectors.
    """
    return [SignTraceRow(round_index=r.round_index, honest=r.honest_sign,
                         malicious=r.malicious_sign)
            for r in reports]


def window_means(values, window: int) -> list[float]:
    """Means of consecutive fixed-size windows; the tail remainder is
    dropped so every window averages the same count."""
    if window < 1:
        raise ValueError("window must be >= 1")
    vals = [float(v) for v in values]
    n_windows = len(vals) // window
    return [sum(vals[i * window:(i + 1) * window]) / window
            for i in range(n_windows)]
