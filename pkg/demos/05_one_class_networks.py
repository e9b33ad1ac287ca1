"""
One-class networks: reconstruction error and center distance
============================================================

Windows encode as flat vectors (one-hot place type per slot plus 3D unit
coordinates).  Two small tanh networks score them:

* DAE    -- an autoencoder; badly reconstructed test windows are suspicious.
* DSVDD  -- an encoder pulled toward a fixed center; far embeddings are
            suspicious.

Per-agent models (each agent trained only on its own history) are the right
tool for imposter detection: a swapped-in tail is perfectly normal for the
population, but alien to the agent's own model.
"""

import time

from mobanom import InjectConfig, SimConfig, inject_imposter, make_report, simulate
from mobanom.detectors import NetHyper, SplitSpec, build_windows, dae_score, dsvdd_score

base = simulate(SimConfig(n_agents=40, weeks=4, n_hunger=0, n_social=0, n_work=0, seed=2))
ds, labels = inject_imposter(base.dataset, InjectConfig(n_outlier_pairs=8, switch_fraction=0.8, seed=2))
print(f"{len(ds.trajectories)} agents, {labels.n_outliers()} imposters")

split = SplitSpec.from_labels(ds, labels, fallback_fraction=0.8)
feat = build_windows(ds, split, window_days=1.0, L=16)
print(f"feature dim {feat.dim} ({feat.window_len} slots x {len(feat.vocab) + 3})")

hyper = NetHyper(learning_rate=0.01, epochs=300, seed=2)
started = time.time()
dae = dae_score(feat, hyper, scope="per_agent")
dsvdd = dsvdd_score(feat, hyper, scope="per_agent")
print(f"trained {2 * len(dae.scores)} per-agent models in {time.time() - started:.1f}s")

print(make_report([dae, dsvdd], labels, ks=[8, 16]).to_text())

# Population-scope models (one network for everyone) are the default for
# behavior-change outliers; compare how they fare on imposters:
pop = dae_score(feat, hyper, scope="population")
print(make_report([pop], labels, ks=[8, 16]).to_text())
