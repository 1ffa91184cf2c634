import time
import numpy as np
from byzsim.datasets import make_synthetic_dataset
from byzsim.simulation import ExperimentConfig, run_experiment
from byzsim.attacks import AttackSpec
from byzsim.aggregators import DefenseSpec
from byzsim.signguard import SignGuardConfig


def cell(ds, attack, defense, rseed):
    cfg = ExperimentConfig(
        dataset=ds, n_clients=50, byz_fraction=0.2, rounds=300,
        learning_rate=0.1, batch_size=1, momentum=0.0, weight_decay=5e-4,
        seed=rseed, attack=attack, defense=defense,
    )
    res = run_experiment(cfg, compute_baseline=False)
    acc = res.final_accuracy
    mal = max(r.malicious_selected_rate for r in res.reports)
    hon = float(np.mean([r.honest_selected_rate for r in res.reports]))
    return acc, mal, hon


SG = DefenseSpec(kind="signguard", signguard=SignGuardConfig(coord_ratio=1.0))
SIM = DefenseSpec(kind="signguard_sim", signguard=SignGuardConfig(coord_ratio=1.0))
MEAN = DefenseSpec(kind="mean")
NONE = AttackSpec(kind="none")
LIE = AttackSpec(kind="lie", z=0.3)
BM = AttackSpec(kind="byzmean", z=0.3)
SF = AttackSpec(kind="signflip")

for sn in (0.15, 0.25, 0.5):
    for dseed, rseed in ((11, 0), (3, 2)):
        ds = make_synthetic_dataset(20, 500, 2, 6.0, seed=dseed,
                                    scale=0.05, noise_scale=sn)
        t0 = time.time()
        base, _, _ = cell(ds, NONE, MEAN, rseed)
        bm, _, _ = cell(ds, BM, MEAN, rseed)
        bmsg, m1, h1 = cell(ds, BM, SG, rseed)
        liesg, m2, h2 = cell(ds, LIE, SG, rseed)
        liesim, m3, h3 = cell(ds, LIE, SIM, rseed)
        sfsim, m4, h4 = cell(ds, SF, SIM, rseed)
        el = time.time() - t0
        print(f"sn={sn} ds={dseed} run={rseed} [{el:.0f}s] "
              f"base={base:.3f} bm={bm:.3f} "
              f"bm+sg={bmsg:.3f}(m={m1:.2f},h={h1:.3f}) "
              f"lie+sg={liesg:.3f}(m={m2:.2f},h={h2:.3f}) "
              f"lie+sim={liesim:.3f}(m={m3:.2f},h={h3:.3f}) "
              f"sf+sim={sfsim:.3f}(m={m4:.2f},h={h4:.3f})", flush=True)
