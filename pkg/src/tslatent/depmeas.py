"""Dependency measures for autoregressive decoders.

Attributes the representation h_t to its inputs (the latent vector in
position 0 and the observed prefix) by integrating input gradients along
the straight line from the all-zeros baseline to the actual input, then
projecting each input's contribution onto the gap h_t - h_baseline. The
measures are signed and sum to one over the inputs; the Monte Carlo
residual of that sum is recorded per step, never dropped.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DegenerateBaselineError, InputError
from .series import TimeSeries

__all__ = [
    "MeasureRequest",
    "DependencyProfile",
    "ProfileSummary",
    "baseline_representation",
    "dependency_measure",
    "dependency_profile",
    "aggregate_profiles",
    "profile_to_json_dict",
    "write_summary_csv",
]

# The gap norm below which measures would blow up; scaled by the
# representation dimension when applied.
DEGENERATE_TOL_PER_DIM = 1e-12


@dataclass(frozen=True)
class MeasureRequest:
    """Inputs of one dependency-measure evaluation at a single step t.

    ``inputs`` lists the decoder's input vectors [z, x_1, .., x_{t-1}]
    (the latent vector first). ``indices`` selects which j to report;
    internally all j are evaluated since one backward sweep yields every
    input gradient at once.
    """

    decoder: object
    inputs: list
    indices: tuple
    n_samples: int = 64
    mode: str = "uniform"  # or "grid" (midpoint rule)
    seed: int = 0

    def __post_init__(self):
        t = len(self.inputs)
        if t < 1:
            raise ContractError("need at least the latent input")
        if self.n_samples < 1:
            raise ContractError(f"need at least one path sample, got {self.n_samples}")
        if self.mode not in ("uniform", "grid"):
            raise ContractError(f"unknown sampling mode {self.mode!r}")
        for j in self.indices:
            if not 0 <= j <= t - 1:
                raise ContractError(f"index {j} outside [0, {t - 1}]")


@dataclass
class DependencyProfile:
    """Per-step measures for one series, with Monte Carlo metadata.

    ``global_dep[t]`` is m_{t,0} for t in 1..T, ``local_dep[t]`` is
    m_{t,t-1} for t >= 2, and ``residual[t]`` is sum_j m_{t,j} - 1.
    Steps whose baseline was degenerate are simply absent from the maps.
    """

    T: int
    n_samples: int
    seed: int
    global_dep: dict = field(default_factory=dict)
    local_dep: dict = field(default_factory=dict)
    residual: dict = field(default_factory=dict)
    degenerate_steps: list = field(default_factory=list)


@dataclass(frozen=True)
class ProfileSummary:
    """Population mean/deviation of the measures at every step."""

    T: int
    n_profiles: int
    global_mean: np.ndarray
    global_sigma: np.ndarray
    local_mean: np.ndarray
    local_sigma: np.ndarray


def _rep_value(decoder, xs_arrays):
    return decoder.representation([ad.tensor(x) for x in xs_arrays]).value


def baseline_representation(decoder, t, latent_dim=None, data_dim=None):
    """Decoder output at the all-zeros input of length t."""
    if t < 1:
        raise ContractError(f"need t >= 1, got {t}")
    d_z = latent_dim if latent_dim is not None else decoder.latent_dim
    d_x = data_dim
    if t > 1 and d_x is None:
        d_x = decoder.data_dim
    xs = [np.zeros(d_z)] + [np.zeros(d_x) for _ in range(t - 1)]
    return _rep_value(decoder, xs)


def _path_samples(req: MeasureRequest):
    if req.mode == "grid":
        return (np.arange(req.n_samples) + 0.5) / req.n_samples
    rng = np.random.default_rng(req.seed)
    return rng.uniform(0.0, 1.0, size=req.n_samples)


def _all_measures(req: MeasureRequest):
    """m_{t,j} for every j in [0, t-1], sharing one path-sample set."""
    xs = [np.asarray(x, dtype=np.float64) for x in req.inputs]
    h_t = _rep_value(req.decoder, xs)
    h_base = baseline_representation(
        req.decoder, len(xs),
        latent_dim=xs[0].shape[0],
        data_dim=xs[1].shape[0] if len(xs) > 1 else None)
    gap = h_t - h_base
    denom = float(gap @ gap)
    if denom <= DEGENERATE_TOL_PER_DIM * gap.shape[0]:
        raise DegenerateBaselineError(float(np.sqrt(denom)))

    samples = _path_samples(req)
    grad_sums = [np.zeros_like(x) for x in xs]
    for s in samples:
        leaves = [ad.tensor(s * x) for x in xs]
        out = req.decoder.representation(leaves)
        acc = ad.gradients(out, seed=gap)
        for j, leaf in enumerate(leaves):
            g = acc.get(id(leaf))
            if g is not None:
                grad_sums[j] += g
    inv = 1.0 / len(samples)
    return np.array([float(x @ (gs * inv)) / denom
                     for x, gs in zip(xs, grad_sums)])


def dependency_measure(req: MeasureRequest):
    """Measures for the requested indices as ``{j: m_{t,j}}``."""
    all_m = _all_measures(req)
    return {j: float(all_m[j]) for j in req.indices}


def dependency_profile(decoder, z, X: TimeSeries, n_samples=64, seed=0,
                       mode="uniform") -> DependencyProfile:
    """Global and first-order local measures for every step of a series.

    Degenerate steps are skipped and recorded rather than aborting the
    whole profile.
    """
    z = np.asarray(z, dtype=np.float64)
    profile = DependencyProfile(T=X.T, n_samples=n_samples, seed=seed)
    for t in range(1, X.T + 1):
        inputs = [z] + [X.values[i] for i in range(t - 1)]
        req = MeasureRequest(decoder=decoder, inputs=inputs,
                             indices=tuple(range(t)), n_samples=n_samples,
                             mode=mode, seed=seed + t)
        try:
            all_m = _all_measures(req)
        except DegenerateBaselineError:
            profile.degenerate_steps.append(t)
            continue
        profile.global_dep[t] = float(all_m[0])
        if t >= 2:
            profile.local_dep[t] = float(all_m[t - 1])
        profile.residual[t] = float(all_m.sum() - 1.0)
    return profile


def aggregate_profiles(profiles) -> ProfileSummary:
    """Per-step sample mean and standard deviation over a population."""
    profiles = list(profiles)
    if len(profiles) < 2:
        raise InputError("need at least two profiles to aggregate")
    T = profiles[0].T
    if any(p.T != T for p in profiles):
        raise InputError("profiles must share T")

    def stats(getter, t):
        vals = [getter(p).get(t) for p in profiles]
        vals = np.array([v for v in vals if v is not None])
        if vals.size < 2:
            return np.nan, np.nan
        return float(vals.mean()), float(vals.std(ddof=1))

    gm, gs, lm, ls = (np.full(T + 1, np.nan) for _ in range(4))
    for t in range(1, T + 1):
        gm[t], gs[t] = stats(lambda p: p.global_dep, t)
        lm[t], ls[t] = stats(lambda p: p.local_dep, t)
    return ProfileSummary(T=T, n_profiles=len(profiles),
                          global_mean=gm, global_sigma=gs,
                          local_mean=lm, local_sigma=ls)


def profile_to_json_dict(profile: DependencyProfile):
    return {
        "T": profile.T,
        "n_samples": profile.n_samples,
        "seed": profile.seed,
        "global_dep": {str(t): v for t, v in sorted(profile.global_dep.items())},
        "local_dep": {str(t): v for t, v in sorted(profile.local_dep.items())},
        "residual": {str(t): v for t, v in sorted(profile.residual.items())},
        "degenerate_steps": profile.degenerate_steps,
    }


def write_summary_csv(summary: ProfileSummary, path):
    """Emit `t,measure,mean,sigma,n` rows for the global and local measures."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "measure", "mean", "sigma", "n"])
        for t in range(1, summary.T + 1):
            w.writerow([t, "global", repr(float(summary.global_mean[t])),
                        repr(float(summary.global_sigma[t])), summary.n_profiles])
        for t in range(2, summary.T + 1):
            w.writerow([t, "local1", repr(float(summary.local_mean[t])),
                        repr(float(summary.local_sigma[t])), summary.n_profiles])


def write_profile_json(profile: DependencyProfile, path):
    with open(path, "w") as fh:
        json.dump(profile_to_json_dict(profile), fh, indent=2, sort_keys=True)
