import numpy as np
from byzsim.datasets import make_synthetic_dataset
from byzsim.simulation import (ExperimentConfig, run_experiment,
                               estimate_smoothness, ModelSpec)
from byzsim.attacks import AttackSpec
from byzsim.aggregators import DefenseSpec

ds = make_synthetic_dataset(20, 500, 2, 6.0, seed=11, scale=0.05)
model = ModelSpec().build(ds.d_in, ds.n_classes)
L = estimate_smoothness(model, ds.features, ds.labels,
                        weight_decay=5e-4, seed=0)
eta_max = (2 - 0 - 0) / (4 * L)
eta = min(0.1, 0.5 * eta_max)
print(f"L_hat={L:.4f} eta_max={eta_max:.4f} eta={eta:.4f}")

cfg = ExperimentConfig(
    dataset=ds, n_clients=50, byz_fraction=0.0, rounds=200,
    learning_rate=eta, batch_size=8, momentum=0.0, weight_decay=5e-4,
    seed=0, attack=AttackSpec(kind="none"), defense=DefenseSpec(kind="mean"),
)
res = run_experiment(cfg, compute_baseline=False)
sq = np.array([r.full_grad_norm for r in res.reports]) ** 2
wins = [float(sq[i * 50:(i + 1) * 50].mean()) for i in range(4)]
print("windows:", [f"{w:.6f}" for w in wins])
print("non-increasing:", all(wins[i] >= wins[i + 1] for i in range(3)))
print("final acc:", res.final_accuracy)
