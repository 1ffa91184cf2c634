import numpy as np
from byzsim.datasets import make_synthetic_dataset
from byzsim import simulation
from byzsim.simulation import ExperimentConfig, init_experiment, run_round
from byzsim.attacks import AttackSpec
from byzsim.aggregators import DefenseSpec
from byzsim.signguard import SignGuardConfig, signguard_aggregate

ds = make_synthetic_dataset(20, 500, 2, 6.0, seed=11, scale=0.05)
for kind in ("lie", "signflip"):
    cfg = ExperimentConfig(
        dataset=ds, n_clients=50, byz_fraction=0.2, rounds=40,
        learning_rate=0.1, batch_size=1, momentum=0.0, weight_decay=5e-4,
        seed=0, attack=AttackSpec(kind=kind, z=0.3),
        defense=DefenseSpec(kind="signguard_sim",
                            signguard=SignGuardConfig(coord_ratio=1.0)),
    )
    state = init_experiment(cfg)
    print(f"=== attack={kind} ===")
    for t in range(40):
        rep = run_round(state, t)
        subs = state.last_submissions
        scfg = cfg.defense.signguard
        import dataclasses
        scfg = dataclasses.replace(scfg, variant="sim")
        _, out = signguard_aggregate(
            subs, scfg,
            prev_global=state.prev_global,
            subset_seed=simulation._derived_seed(cfg.seed, 7, t))
        feats = {r.client_index: r.values for r in out.features}
        hon_cos = np.array([feats[i][-1] for i in range(40) if i in feats])
        mal_cos = np.array([feats[i][-1] for i in range(40, 50) if i in feats])
        if t % 4 == 0 or t < 6:
            print(f"t={t:3d} acc={rep.test_accuracy:.3f} "
                  f"fb={int(rep.fallback)} |tr|={len(rep.trusted)} "
                  f"hon={rep.honest_selected_rate:.2f} "
                  f"mal={rep.malicious_selected_rate:.2f} "
                  f"honcos[{hon_cos.min():+.2f},{np.median(hon_cos):+.2f},"
                  f"{hon_cos.max():+.2f}] "
                  f"malcos[{mal_cos.min():+.2f},{mal_cos.max():+.2f}]")
