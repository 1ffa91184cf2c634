import time
import numpy as np
from byzsim.datasets import make_synthetic_dataset
from byzsim.simulation import ExperimentConfig, run_experiment
from byzsim.attacks import AttackSpec
from byzsim.aggregators import DefenseSpec
from byzsim.signguard import SignGuardConfig


def cell(ds, attack, defense, rseed=0):
    cfg = ExperimentConfig(
        dataset=ds, n_clients=50, byz_fraction=0.2, rounds=300,
        learning_rate=0.1, batch_size=1, momentum=0.0, weight_decay=5e-4,
        seed=rseed, attack=attack, defense=defense,
    )
    res = run_experiment(cfg, compute_baseline=False)
    mal_max = max(r.malicious_selected_rate for r in res.reports)
    mal_mean = float(np.mean([r.malicious_selected_rate for r in res.reports]))
    hon = float(np.mean([r.honest_selected_rate for r in res.reports]))
    fb = sum(1 for r in res.reports if r.fallback)
    return res.final_accuracy, mal_max, mal_mean, hon, fb


def sgconf(**kw):
    return SignGuardConfig(coord_ratio=1.0, **kw)


ds = make_synthetic_dataset(20, 500, 2, 6.0, seed=11, scale=0.05)
NONE = AttackSpec(kind="none")
LIE = AttackSpec(kind="lie", z=0.3)
BM = AttackSpec(kind="byzmean", z=0.3)
SF = AttackSpec(kind="signflip")
SF100 = AttackSpec(kind="signflip", flip_scale=100.0)

t0 = time.time()
base, *_ = cell(ds, NONE, DefenseSpec(kind="mean"))
bm, *_ = cell(ds, BM, DefenseSpec(kind="mean"))
a1, m1x, m1m, h1, f1 = cell(ds, BM, DefenseSpec(kind="signguard", signguard=sgconf()))
a2, m2x, m2m, h2, f2 = cell(ds, LIE, DefenseSpec(kind="signguard", signguard=sgconf()))
a3, m3x, m3m, h3, f3 = cell(ds, LIE, DefenseSpec(kind="signguard_sim", signguard=sgconf()))
a4, m4x, m4m, h4, f4 = cell(ds, SF, DefenseSpec(kind="signguard_sim", signguard=sgconf()))
t9 = time.time() - t0
print(f"crit9 [{t9:.0f}s] base={base:.3f} bm={bm:.3f}")
print(f"  bm+sg  acc={a1:.3f} malmax={m1x:.2f} hon={h1:.3f} fb={f1}")
print(f"  lie+sg acc={a2:.3f} malmax={m2x:.2f} hon={h2:.3f} fb={f2}")
print(f"  lie+sim acc={a3:.3f} malmax={m3x:.2f} hon={h3:.3f} fb={f3}")
print(f"  sf+sim  acc={a4:.3f} malmax={m4x:.2f} hon={h4:.3f} fb={f4}")

t0 = time.time()
clus_only = DefenseSpec(kind="signguard", signguard=sgconf(
    enable_thresholding=False, enable_clipping=False))
clus_clip = DefenseSpec(kind="signguard", signguard=sgconf(
    enable_thresholding=False))
clus_thr = DefenseSpec(kind="signguard", signguard=sgconf(
    enable_clipping=False))
b1, n1x, n1m, g1, e1 = cell(ds, SF, clus_only)
b2, n2x, n2m, g2, e2 = cell(ds, SF100, clus_clip)
b3, n3x, n3m, g3, e3 = cell(ds, SF100, clus_thr)
t10 = time.time() - t0
print(f"crit10 [{t10:.0f}s]")
print(f"  clusonly+sf acc={b1:.3f} malmean={n1m:.3f} malmax={n1x:.2f} hon={g1:.3f} fb={e1}")
print(f"  clus+clip+sf100 acc={b2:.3f} malmean={n2m:.3f} hon={g2:.3f} fb={e2}")
print(f"  clus+thr+sf100  acc={b3:.3f} malmean={n3m:.3f} hon={g3:.3f} fb={e3}")
