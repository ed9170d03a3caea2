"""
Posterior collapse, made visible
================================

Latent-variable sequence models with strong autoregressive decoders tend
to stop using their latent: the decoder can explain each step from the
observed prefix alone, so the encoder's output carries no information.
Reconstruction loss looks fine; the pathology is invisible unless you
measure how much each generated step actually depends on the latent.

That is what the dependency profile does. For every step t of a generated
series it attributes the decoder representation h_t across its inputs:
m_{t,0} is the share credited to the latent z ("global" dependency) and
m_{t,t-1} the share credited to the immediately preceding observation
("local" dependency). This script trains a vanilla latent-diffusion model
and the collapse-resistant framework on the same data with the same budget
and compares their profiles. Expect a few minutes of CPU time.
"""

import numpy as np

from tslatent.datasets import shuffle_series
from tslatent.depmeas import aggregate_profiles
from tslatent.experiment import (
    ModelBundle,
    build_dataset,
    desk_config,
    profile_population,
    sample_population,
    split_dataset,
    train_bundle,
)


def profile_run(variant, shuffle, ae_iters=4000):
    cfg = desk_config(variant=variant, dataset_kind="ar1", T=12, D=5,
                      n_series=500, dataset_params={"phi": 0.8},
                      seed=0, ae_iters=ae_iters, diff_iters=2000,
                      population=100)
    rng = np.random.default_rng(cfg.seed)
    ds = build_dataset(cfg)
    if shuffle:
        ds = shuffle_series(ds, seed=1)
    train_ds, _ = split_dataset(ds, cfg.heldout_frac)
    bundle = ModelBundle(cfg, rng)
    train_bundle(bundle, train_ds, rng)
    samples = sample_population(bundle, cfg.population, ds.T, rng)
    profiles = profile_population(bundle, samples, cfg.profile_samples, seed=0)
    return aggregate_profiles(profiles)


def show(label, summary):
    g = summary.global_mean
    loc = summary.local_mean
    print(f"\n{label}")
    print("   t:      " + "".join(f"{t:>8d}" for t in (2, 4, 8, 12)))
    print("   m_t0:   " + "".join(f"{g[t]:>8.3f}" for t in (2, 4, 8, 12)))
    print("   m_t,t-1:" + "".join(f"{loc[t]:>8.3f}" for t in (2, 4, 8, 12)))


# ---------------------------------------------------------------------------
# 1. Ordered AR(1) data. Mid-training, the vanilla model's global
# dependency m_{t,0} decays with t: early steps still consult the latent
# (no prefix exists yet), later steps ignore it. By convergence the
# collapse is complete -- the profile is ~0 at every step. The new
# framework keeps m_{t,0} well above zero at the horizon.

print("training vanilla latent diffusion on ar1 (partial budget) ...",
      flush=True)
vanilla_mid = profile_run("vanilla", shuffle=False, ae_iters=1500)
show("vanilla latent diffusion (ordered ar1, mid-training):", vanilla_mid)

print("\ntraining vanilla latent diffusion to convergence ...", flush=True)
vanilla = profile_run("vanilla", shuffle=False)
show("vanilla latent diffusion (ordered ar1, converged):", vanilla)

print("\ntraining the collapse-resistant framework ...", flush=True)
new = profile_run("new_framework", shuffle=False)
show("new framework (ordered ar1):", new)

print(f"\nterminal global dependency m_12,0: "
      f"vanilla {vanilla.global_mean[12]:.3f} vs "
      f"new framework {new.global_mean[12]:.3f}")

# ---------------------------------------------------------------------------
# 2. The dependency illusion. Shuffle the time order of every series so
# there is genuinely nothing to learn from the prefix. The vanilla model
# still reports substantial local dependency m_{t,t-1} -- an artifact of
# the collapsed posterior forcing the decoder to lean on whatever inputs
# remain -- while the new framework's local dependency collapses toward
# zero, correctly reflecting that the prefix is uninformative.

print("\ntraining both variants on shuffled ar1 ...", flush=True)
vanilla_sh = profile_run("vanilla", shuffle=True)
new_sh = profile_run("new_framework", shuffle=True)
show("vanilla (shuffled):", vanilla_sh)
show("new framework (shuffled):", new_sh)

v_loc = float(np.nanmean(vanilla_sh.local_mean[6:13]))
n_loc = float(np.nanmean(new_sh.local_mean[6:13]))
print(f"\nmean local dependency over t in [6,12] on shuffled data: "
      f"vanilla {v_loc:.3f} (illusory) vs new framework {n_loc:.3f}")
