"""Synchronous federated training over simulated clients.

One round: every client computes a mini-batch gradient (with weight decay
and client-side momentum), Byzantine clients substitute crafted vectors,
the server aggregates under the configured defense and broadcasts the
parameter update. All randomness derives from the experiment seed, so runs
are bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import aggregators, attacks, gradients
from .aggregators import DefenseSpec
from .attacks import AttackContext, AttackSpec
from .datasets import DatasetSpec
from .gradients import Array, SignStats
from .signguard import EmptyTrustedError, SignGuardConfig, signguard_aggregate

MODEL_KINDS = ("logreg", "mlp")

_SIGNGUARD_VARIANTS = {
    "signguard": "plain",
    "signguard_sim": "sim",
    "signguard_dist": "dist",
}


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed & 0xFFFFFFFF, *tags]))


def _derived_seed(seed: int, *tags: int) -> int:
    seq = np.random.SeedSequence([seed & 0xFFFFFFFF, *tags])
    return int(seq.generate_state(1)[0])


@dataclass(frozen=True)
class ModelSpec:
    """Which classifier to train: `logreg` or `mlp` with hidden layer sizes."""

    kind: str = "logreg"
    hidden: tuple = ()

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        hidden = tuple(int(h) for h in self.hidden)
        object.__setattr__(self, "hidden", hidden)
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if kind == "logreg" and hidden:
            raise ValueError("logreg takes no hidden layers")
        if kind == "mlp" and not hidden:
            raise ValueError("mlp needs at least one hidden layer")
        if any(h < 1 for h in hidden):
            raise ValueError("hidden layer sizes must be >= 1")

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelSpec":
        unknown = set(raw) - {"kind", "hidden"}
        if unknown:
            raise ValueError(f"unknown model keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.hidden:
            out["hidden"] = list(self.hidden)
        return out

    def build(self, d_in: int, n_classes: int) -> "FeedForwardClassifier":
        return FeedForwardClassifier(d_in, n_classes, hidden=self.hidden)


class FeedForwardClassifier:
    """Multinomial classifier whose last-class logit is pinned to zero.

    Pinning one logit removes the softmax translation degeneracy. A full
    C-row parameterization would leave a gauge direction (adding the same
    vector to every class row shifts all logits equally and changes no
    prediction), and for C=2 its gradient rows are exact mirror images,
    so any coordinate-symmetric perturbation of the submissions would be
    functionally invisible. With no hidden layers this is multinomial
    logistic regression with (C-1)(d_in+1) parameters; C=2 reduces to a
    single sigmoid unit. Parameters travel as one flat float64 vector.
    """

    def __init__(self, d_in: int, n_classes: int, hidden: tuple = ()):
        if d_in < 1 or n_classes < 2:
            raise ValueError("need d_in >= 1 and n_classes >= 2")
        self.d_in = d_in
        self.n_classes = n_classes
        self.hidden = tuple(int(h) for h in hidden)
        dims = [d_in, *self.hidden, n_classes - 1]
        self._shapes = [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]
        self.n_params = sum(o * i + o for o, i in self._shapes)

    def _unpack(self, x: Array) -> list:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {x.shape}")
        layers = []
        pos = 0
        for out_dim, in_dim in self._shapes:
            w = x[pos:pos + out_dim * in_dim].reshape(out_dim, in_dim)
            pos += out_dim * in_dim
            b = x[pos:pos + out_dim]
            pos += out_dim
            layers.append((w, b))
        return layers

    def init_params(self, seed: int = 0) -> Array:
        if not self.hidden:
            return np.zeros(self.n_params)
        rng = _rng(seed, 12)
        parts = []
        for out_dim, in_dim in self._shapes:
            parts.append(rng.normal(size=out_dim * in_dim) / math.sqrt(in_dim))
            parts.append(np.zeros(out_dim))
        return np.concatenate(parts)

    def _forward(self, x: Array, feats: Array):
        acts = [np.asarray(feats, dtype=np.float64)]
        layers = self._unpack(x)
        h = acts[0]
        for w, b in layers[:-1]:
            h = np.tanh(h @ w.T + b)
            acts.append(h)
        w, b = layers[-1]
        partial = h @ w.T + b
        logits = np.concatenate(
            [partial, np.zeros((partial.shape[0], 1))], axis=1)
        return layers, acts, logits

    @staticmethod
    def _log_softmax(logits: Array) -> Array:
        shifted = logits - logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def loss(self, x: Array, feats: Array, labels: Array) -> float:
        _, _, logits = self._forward(x, feats)
        logp = self._log_softmax(logits)
        labels = np.asarray(labels, dtype=np.intp)
        return float(-logp[np.arange(labels.size), labels].mean())

    def loss_and_grad(self, x: Array, feats: Array, labels: Array):
        layers, acts, logits = self._forward(x, feats)
        labels = np.asarray(labels, dtype=np.intp)
        batch = labels.size
        logp = self._log_softmax(logits)
        loss = float(-logp[np.arange(batch), labels].mean())
        p = np.exp(logp)
        p[np.arange(batch), labels] -= 1.0
        # last logit is constant zero: only the first C-1 columns backprop
        delta = p[:, :-1] / batch
        grads = []
        for i in range(len(layers) - 1, -1, -1):
            w, _ = layers[i]
            grads.append((delta.T @ acts[i], delta.sum(axis=0)))
            if i:
                delta = (delta @ w) * (1.0 - acts[i] ** 2)
        grads.reverse()
        flat = np.concatenate(
            [np.concatenate([gw.ravel(), gb]) for gw, gb in grads])
        return loss, flat

    def predict(self, x: Array, feats: Array) -> Array:
        _, _, logits = self._forward(x, feats)
        return logits.argmax(axis=1)

    def accuracy(self, x: Array, feats: Array, labels: Array) -> float:
        labels = np.asarray(labels, dtype=np.intp)
        return float((self.predict(x, feats) == labels).mean())


def local_gradient(model: FeedForwardClassifier, params: Array,
                   batch_x: Array, batch_y: Array,
                   flip_labels: bool = False,
                   weight_decay: float = 0.0) -> Array:
    """Mini-batch cross-entropy gradient with an L2 penalty term.

    flip_labels maps every label l to C-1-l before the forward pass (the
    data-layer Byzantine role).
    """
    y = np.asarray(batch_y, dtype=np.intp)
    if flip_labels:
        y = model.n_classes - 1 - y
    _, grad = model.loss_and_grad(params, batch_x, y)
    if weight_decay:
        grad = grad + weight_decay * np.asarray(params, dtype=np.float64)
    return grad


def regularized_loss(model: FeedForwardClassifier, params: Array,
                     feats: Array, labels: Array,
                     weight_decay: float = 0.0) -> float:
    base = model.loss(params, feats, labels)
    if weight_decay:
        base += 0.5 * weight_decay * float(params @ params)
    return base


def partition_data(dataset: DatasetSpec, n: int, s: float | None,
                   seed: int) -> list:
    """Split sample indices into n disjoint covering shards.

    An s-fraction is dealt out uniformly; the remainder is sorted by label,
    cut into 2n consecutive pieces, and each client receives two of them.
    Pieces are paired largest-with-smallest before the random assignment so
    every client's shard size stays within one sample of the mean; s absent
    or 1.0 is the pure IID split.
    """
    total = dataset.n_samples
    if total < n:
        raise ValueError("dataset smaller than the client count")
    if s is None:
        s = 1.0
    if not 0.0 <= s <= 1.0:
        raise ValueError("noniid_s must be in [0, 1]")
    rng = _rng(seed, 4)
    perm = rng.permutation(total)
    if s == 1.0:
        return [np.sort(chunk) for chunk in np.array_split(perm, n)]

    iid_count = min(total, int(round(s * total / n)) * n)
    iid_chunks = np.array_split(perm[:iid_count], n)
    rest = perm[iid_count:]
    rest = rest[np.argsort(dataset.labels[rest], kind="stable")]
    pieces = np.array_split(rest, 2 * n)

    order = rng.permutation(2 * n)
    order = order[np.argsort([pieces[i].size for i in order], kind="stable")]
    pair_of = rng.permutation(n)
    shards = []
    for client in range(n):
        k = pair_of[client]
        a, b = order[k], order[2 * n - 1 - k]
        shards.append(np.sort(np.concatenate(
            [iid_chunks[client], pieces[a], pieces[b]])))
    return shards


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines one training run."""

    dataset: DatasetSpec
    n_clients: int = 50
    byz_fraction: float = 0.2
    attack: AttackSpec = AttackSpec(kind="none")
    defense: DefenseSpec = DefenseSpec(kind="mean")
    model: ModelSpec = ModelSpec()
    rounds: int = 100
    learning_rate: float = 0.1
    momentum: float = 0.9
    momentum_side: str = "client"
    weight_decay: float = 5e-4
    batch_size: int = 32
    noniid_s: float | None = None
    seed: int = 0
    time_varying_attacks: tuple = ()

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError("need at least one client")
        if not 0.0 <= self.byz_fraction < 0.5:
            raise ValueError("byz_fraction must be in [0, 0.5)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.momentum_side not in ("client", "server"):
            raise ValueError("momentum_side must be 'client' or 'server'")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.noniid_s is not None and not 0.0 <= self.noniid_s <= 1.0:
            raise ValueError("noniid_s must be in [0, 1]")
        tv = tuple(self.time_varying_attacks)
        for spec in tv:
            if not isinstance(spec, AttackSpec):
                raise ValueError("time_varying_attacks entries must be attack specs")
        object.__setattr__(self, "time_varying_attacks", tv)

    @property
    def byz_count(self) -> int:
        return int(self.byz_fraction * self.n_clients)

    _SCALARS = ("n_clients", "byz_fraction", "rounds", "learning_rate",
                "momentum", "momentum_side", "weight_decay", "batch_size",
                "noniid_s", "seed")

    @classmethod
    def from_dict(cls, raw: dict, dataset: DatasetSpec,
                  attack: AttackSpec | None = None,
                  defense: DefenseSpec | None = None) -> "ExperimentConfig":
        unknown = set(raw) - set(cls._SCALARS) - {"model"}
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in raw.items() if k in cls._SCALARS}
        if "model" in raw:
            kwargs["model"] = ModelSpec.from_dict(raw["model"])
        if attack is not None:
            kwargs["attack"] = attack
        if defense is not None:
            kwargs["defense"] = defense
        return cls(dataset=dataset, **kwargs)


@dataclass
class ClientState:
    """One participant: its role, data shard, and momentum buffer."""

    id: int
    role: str
    shard: Array
    momentum: Array

    @property
    def is_byzantine(self) -> bool:
        return self.role == "byzantine"


@dataclass(frozen=True)
class RoundReport:
    """Everything the server observed in one round."""

    round_index: int
    attack_kind: str
    trusted: tuple
    honest_selected_rate: float
    malicious_selected_rate: float
    train_loss: float
    test_accuracy: float
    global_grad_norm: float
    full_grad_norm: float
    honest_sign: SignStats
    malicious_sign: SignStats | None
    fallback: bool = False

    def __post_init__(self):
        for name in ("honest_selected_rate", "malicious_selected_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


@dataclass
class ExperimentState:
    """Mutable loop state threaded through run_round."""

    config: ExperimentConfig
    model: FeedForwardClassifier
    clients: list
    params: Array
    prev_global: Array | None = None
    last_submissions: Array | None = None
    last_global: Array | None = None
    server_momentum: Array | None = None


def init_experiment(cfg: ExperimentConfig) -> ExperimentState:
    model = cfg.model.build(cfg.dataset.d_in, cfg.dataset.n_classes)
    shards = partition_data(cfg.dataset, cfg.n_clients, cfg.noniid_s, cfg.seed)
    m = cfg.byz_count
    clients = [
        ClientState(id=i,
                    role="byzantine" if i >= cfg.n_clients - m else "benign",
                    shard=shards[i],
                    momentum=np.zeros(model.n_params))
        for i in range(cfg.n_clients)
    ]
    params = model.init_params(_derived_seed(cfg.seed, 5))
    return ExperimentState(config=cfg, model=model, clients=clients,
                           params=params)


def _attack_for_round(cfg: ExperimentConfig, round_idx: int) -> AttackSpec:
    if cfg.time_varying_attacks:
        pick = _rng(cfg.seed, 11, round_idx).integers(
            len(cfg.time_varying_attacks))
        return cfg.time_varying_attacks[int(pick)]
    return cfg.attack


def _draw_batch(cfg: ExperimentConfig, client: ClientState,
                round_idx: int) -> Array:
    rng = _rng(cfg.seed, 8, round_idx, client.id)
    replace_draw = client.shard.size < cfg.batch_size
    return rng.choice(client.shard, size=cfg.batch_size, replace=replace_draw)


def _mean_sign_stats(mat: Array) -> SignStats:
    rows = [gradients.sign_stats(r) for r in mat]
    return SignStats(
        pos_frac=float(np.mean([r.pos_frac for r in rows])),
        neg_frac=float(np.mean([r.neg_frac for r in rows])),
        zero_frac=float(np.mean([r.zero_frac for r in rows])),
    )


def _signguard_config(spec: DefenseSpec) -> SignGuardConfig:
    base = spec.signguard if spec.signguard is not None else SignGuardConfig()
    return replace(base, variant=_SIGNGUARD_VARIANTS[spec.kind])


def apply_defense(subs: Array, spec: DefenseSpec, byz_hint: int,
                  prev_global: Array | None = None,
                  subset_seed: int | None = None):
    """Aggregate submissions under `spec`.

    Returns (aggregate, selected ids or None for coordinate-wise rules,
    fallback flag). byz_hint fills in the Byzantine count for rules that
    need one when the spec does not pin it.
    """
    n = subs.shape[0]
    hint = spec.byz_count_hint if spec.byz_count_hint is not None else byz_hint
    if spec.is_signguard():
        cfg = _signguard_config(spec)
        try:
            out, outcome = signguard_aggregate(
                subs, cfg, prev_global=prev_global, subset_seed=subset_seed)
            return out, set(outcome.trusted), False
        except EmptyTrustedError:
            return aggregators.agg_coordwise_median(subs), set(), True
    if spec.kind == "mean":
        return aggregators.agg_mean(subs), None, False
    if spec.kind == "trmean":
        k = spec.trim_k if spec.trim_k is not None else hint
        return aggregators.agg_trimmed_mean(subs, k), None, False
    if spec.kind == "median":
        return aggregators.agg_coordwise_median(subs), None, False
    if spec.kind == "geomed":
        return aggregators.agg_geomed(subs, spec.weiszfeld_tol,
                                      spec.weiszfeld_max_iter), None, False
    if spec.kind == "multikrum":
        sel = aggregators.multikrum_selection(subs, hint)
        return subs[sel].mean(axis=0), set(int(i) for i in sel), False
    if spec.kind == "bulyan":
        sel = aggregators.bulyan_selection(subs, hint)
        return aggregators.agg_bulyan(subs, hint), set(int(i) for i in sel), False
    raise ValueError(f"unknown defense kind {spec.kind!r}")


def run_round(state: ExperimentState, round_idx: int) -> RoundReport:
    """Advance the experiment by one synchronous round.

    With momentum_side "client" each client submits its momentum buffer;
    with "server" clients submit raw gradients and one buffer is kept on
    the aggregate instead.
    """
    cfg = state.config
    model = state.model
    x = state.params
    n, m = cfg.n_clients, cfg.byz_count
    attack = _attack_for_round(cfg, round_idx)
    flip = attack.kind == "labelflip"

    client_side = cfg.momentum_side == "client"
    subs = np.empty((n, model.n_params))
    for client in state.clients:
        batch = _draw_batch(cfg, client, round_idx)
        grad = local_gradient(
            model, x, cfg.dataset.features[batch], cfg.dataset.labels[batch],
            flip_labels=flip and client.is_byzantine,
            weight_decay=cfg.weight_decay)
        if client_side:
            client.momentum = cfg.momentum * client.momentum + grad
            subs[client.id] = client.momentum
        else:
            subs[client.id] = grad

    benign_ids = [c.id for c in state.clients if not c.is_byzantine]
    byz_ids = [c.id for c in state.clients if c.is_byzantine]
    honest_rows = subs[benign_ids]

    if m and attack.kind not in ("none", "labelflip"):
        ctx = AttackContext(honest=honest_rows, n=n, m=m)
        crafted = attacks.craft_attack(
            attack, ctx, seed=_derived_seed(cfg.seed, 6, round_idx))
        subs[byz_ids] = crafted

    honest_sign = gradients.sign_stats(honest_rows.mean(axis=0))
    malicious_sign = None
    if m and attack.kind != "none":
        malicious_sign = _mean_sign_stats(subs[byz_ids])

    g_tilde, selected, fallback = apply_defense(
        subs, cfg.defense, m, prev_global=state.prev_global,
        subset_seed=_derived_seed(cfg.seed, 7, round_idx))
    selected_set = set(range(n)) if selected is None else selected

    train_loss = regularized_loss(model, x, cfg.dataset.features,
                                  cfg.dataset.labels, cfg.weight_decay)
    _, full_grad = model.loss_and_grad(x, cfg.dataset.features,
                                       cfg.dataset.labels)
    full_grad = full_grad + cfg.weight_decay * x

    applied = g_tilde
    if not client_side and cfg.momentum > 0.0:
        if state.server_momentum is None:
            state.server_momentum = np.zeros(model.n_params)
        state.server_momentum = cfg.momentum * state.server_momentum + g_tilde
        applied = state.server_momentum

    state.params = x - cfg.learning_rate * applied
    state.prev_global = g_tilde
    state.last_submissions = subs
    state.last_global = applied

    if cfg.dataset.test_features.shape[0]:
        acc = model.accuracy(state.params, cfg.dataset.test_features,
                             cfg.dataset.test_labels)
    else:
        acc = model.accuracy(state.params, cfg.dataset.features,
                             cfg.dataset.labels)

    return RoundReport(
        round_index=round_idx,
        attack_kind=attack.kind,
        trusted=tuple(sorted(selected_set)),
        honest_selected_rate=len(selected_set & set(benign_ids)) / len(benign_ids),
        malicious_selected_rate=(len(selected_set & set(byz_ids)) / len(byz_ids)
                                 if byz_ids else 0.0),
        train_loss=train_loss,
        test_accuracy=acc,
        global_grad_norm=gradients.l2_norm(applied),
        full_grad_norm=float(np.linalg.norm(full_grad)),
        honest_sign=honest_sign,
        malicious_sign=malicious_sign,
        fallback=fallback,
    )


@dataclass(frozen=True)
class ExperimentResult:
    """Round trace plus headline numbers for one configuration."""

    config: ExperimentConfig
    reports: tuple
    final_accuracy: float
    best_accuracy: float
    baseline_accuracy: float | None
    attack_impact: float | None
    params: Array

    def summary(self) -> dict:
        out = {
            "attack": self.config.attack.to_dict(),
            "defense": self.config.defense.to_dict(),
            "rounds": self.config.rounds,
            "final_accuracy": self.final_accuracy,
            "best_accuracy": self.best_accuracy,
            "final_train_loss": self.reports[-1].train_loss,
            "fallback_rounds": sum(1 for r in self.reports if r.fallback),
            "mean_honest_selected_rate": float(
                np.mean([r.honest_selected_rate for r in self.reports])),
            "mean_malicious_selected_rate": float(
                np.mean([r.malicious_selected_rate for r in self.reports])),
        }
        if self.baseline_accuracy is not None:
            out["baseline_accuracy"] = self.baseline_accuracy
            out["attack_impact"] = self.attack_impact
        return out


def _is_attack_free(cfg: ExperimentConfig) -> bool:
    if cfg.time_varying_attacks:
        return all(s.kind == "none" for s in cfg.time_varying_attacks)
    return cfg.attack.kind == "none" or cfg.byz_count == 0


def run_experiment(cfg: ExperimentConfig,
                   baseline_accuracy: float | None = None,
                   compute_baseline: bool = True) -> ExperimentResult:
    """Run all rounds; optionally measure the same-seed no-attack baseline.

    The attack impact is the drop in best test accuracy relative to plain
    mean aggregation with no attack on the same seed. Pass
    baseline_accuracy to reuse a stored baseline run, or
    compute_baseline=False to skip the comparison.
    """
    state = init_experiment(cfg)
    reports = [run_round(state, t) for t in range(cfg.rounds)]
    best = max(r.test_accuracy for r in reports)
    final = reports[-1].test_accuracy

    baseline = baseline_accuracy
    if baseline is None and compute_baseline:
        if _is_attack_free(cfg) and cfg.defense.kind == "mean":
            baseline = best
        else:
            base_cfg = replace(cfg, attack=AttackSpec(kind="none"),
                               defense=DefenseSpec(kind="mean"),
                               time_varying_attacks=())
            baseline = run_experiment(base_cfg,
                                      compute_baseline=False).best_accuracy
    impact = None if baseline is None else baseline - best
    return ExperimentResult(
        config=cfg,
        reports=tuple(reports),
        final_accuracy=final,
        best_accuracy=best,
        baseline_accuracy=baseline,
        attack_impact=impact,
        params=state.params,
    )


def estimate_smoothness(model: FeedForwardClassifier, feats: Array,
                        labels: Array, weight_decay: float = 0.0,
                        seed: int = 0, n_pairs: int = 25,
                        radius: float = 1.0) -> float:
    """Empirical Lipschitz constant of the full-batch gradient.

    Max over sampled parameter pairs of the gradient difference divided by
    the parameter distance; an underestimate of the true constant, which is
    all the learning-rate sanity check needs.
    """
    rng = _rng(seed, 9)

    def full_grad(x):
        _, g = model.loss_and_grad(x, feats, labels)
        return g + weight_decay * x

    best = 0.0
    for _ in range(n_pairs):
        a = rng.normal(scale=radius, size=model.n_params)
        b = rng.normal(scale=radius, size=model.n_params)
        gap = float(np.linalg.norm(a - b))
        if gap == 0.0:
            continue
        best = max(best, float(np.linalg.norm(full_grad(a) - full_grad(b))) / gap)
    return best
