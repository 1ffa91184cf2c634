import time
import numpy as np
from byzsim.datasets import make_synthetic_dataset
from byzsim.simulation import ExperimentConfig, run_experiment
from byzsim.attacks import AttackSpec
from byzsim.aggregators import DefenseSpec
from byzsim.signguard import SignGuardConfig


def cell(ds, attack, defense, bs, mom, rseed=0):
    cfg = ExperimentConfig(
        dataset=ds, n_clients=50, byz_fraction=0.2, rounds=300,
        learning_rate=0.1, batch_size=bs, momentum=mom, weight_decay=5e-4,
        seed=rseed, attack=attack, defense=defense,
    )
    res = run_experiment(cfg, compute_baseline=False)
    mal_mean = float(np.mean([r.malicious_selected_rate for r in res.reports]))
    hon = float(np.mean([r.honest_selected_rate for r in res.reports]))
    fb = sum(1 for r in res.reports if r.fallback)
    return res.final_accuracy, mal_mean, hon, fb


def sgconf(**kw):
    return SignGuardConfig(coord_ratio=1.0, **kw)


SF100 = AttackSpec(kind="signflip", flip_scale=100.0)
clus_clip = DefenseSpec(kind="signguard", signguard=sgconf(enable_thresholding=False))
clus_thr = DefenseSpec(kind="signguard", signguard=sgconf(enable_clipping=False))

for tau in (0.1, 0.2, 0.5):
    ds = make_synthetic_dataset(20, 500, 2, 6.0, seed=11, scale=tau)
    t0 = time.time()
    base, *_ = cell(ds, AttackSpec(kind="none"), DefenseSpec(kind="mean"), 32, 0.9)
    b2, n2m, g2, e2 = cell(ds, SF100, clus_clip, 32, 0.9)
    b3, n3m, g3, e3 = cell(ds, SF100, clus_thr, 32, 0.9)
    el = time.time() - t0
    print(f"tau={tau} [{el:.0f}s] base={base:.3f}")
    print(f"  clus+clip+sf100 acc={b2:.3f} malmean={n2m:.3f} hon={g2:.3f} fb={e2}")
    print(f"  clus+thr+sf100  acc={b3:.3f} malmean={n3m:.3f} hon={g3:.3f} fb={e3}")
