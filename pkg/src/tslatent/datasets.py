"""Synthetic dataset generation, CSV ingestion and the shuffle protocol."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, ParseError
from .series import TimeSeries

__all__ = [
    "Dataset",
    "gen_synthetic",
    "shuffle_series",
    "load_csv",
    "save_csv",
]

SYNTHETIC_KINDS = ("ar1", "sine_mixture", "regime_switch")


@dataclass
class Dataset:
    """A named collection of equally shaped series plus normalization stats."""

    name: str
    series: list
    provenance: str = "synthetic-spec"
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None

    def __post_init__(self):
        if not self.series:
            raise InputError("dataset must contain at least one series")
        T, D = self.series[0].T, self.series[0].D
        for s in self.series:
            if s.T != T or s.D != D:
                raise InputError("all series must share T and D")

    def __len__(self):
        return len(self.series)

    def __getitem__(self, i):
        return self.series[i]

    @property
    def T(self):
        return self.series[0].T

    @property
    def D(self):
        return self.series[0].D

    def as_array(self):
        return np.stack([s.values for s in self.series])

    def normalized(self):
        """Z-normalize per feature; statistics are stored for inversion."""
        arr = self.as_array()
        mean = arr.reshape(-1, self.D).mean(axis=0)
        std = arr.reshape(-1, self.D).std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        series = [TimeSeries((s.values - mean) / std) for s in self.series]
        return Dataset(name=self.name, series=series, provenance=self.provenance,
                       norm_mean=mean, norm_std=std)

    def denormalize_series(self, X: TimeSeries) -> TimeSeries:
        if self.norm_mean is None:
            return X
        return TimeSeries(X.values * self.norm_std + self.norm_mean)


def _gen_ar1(rng, T, D, n, params):
    phi = float(params.get("phi", 0.8))
    noise_std = float(params.get("noise_std", 1.0))
    if not -1.0 < phi < 1.0:
        raise ConfigError(f"ar1 needs |phi| < 1, got {phi}")
    # stationary start so the lag-1 autocorrelation is phi from t=1 on
    stat_std = noise_std / np.sqrt(1.0 - phi * phi)
    out = np.empty((n, T, D))
    out[:, 0] = rng.standard_normal((n, D)) * stat_std
    for t in range(1, T):
        out[:, t] = phi * out[:, t - 1] + noise_std * rng.standard_normal((n, D))
    return out


def _gen_sine_mixture(rng, T, D, n, params):
    n_components = int(params.get("components", 3))
    noise_std = float(params.get("noise_std", 0.1))
    t_axis = np.arange(T)
    out = np.zeros((n, T, D))
    for i in range(n):
        for k in range(n_components):
            freq = rng.uniform(0.5, 3.0) / T
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.5, 1.5)
            out[i] += amp * np.sin(2 * np.pi * freq * t_axis + phase)[:, None]
    out += noise_std * rng.standard_normal(out.shape)
    return out


def _gen_regime_switch(rng, T, D, n, params):
    """Two-mean regime process; its marginals are a visibly bimodal mixture."""
    offset = float(params.get("offset", 2.0))
    switch_p = float(params.get("switch_prob", 0.3))
    noise_std = float(params.get("noise_std", 0.3))
    if not 0.0 < switch_p <= 1.0:
        raise ConfigError(f"switch_prob must be in (0, 1], got {switch_p}")
    out = np.empty((n, T, D))
    regime = rng.integers(0, 2, size=n).astype(float)
    for t in range(T):
        means = np.where(regime[:, None] > 0.5, offset, -offset)
        out[:, t] = means + noise_std * rng.standard_normal((n, D))
        flip = rng.random(n) < switch_p
        regime = np.where(flip, 1.0 - regime, regime)
    return out


_GENERATORS = {
    "ar1": _gen_ar1,
    "sine_mixture": _gen_sine_mixture,
    "regime_switch": _gen_regime_switch,
}


def gen_synthetic(kind, T, D, n, params=None, seed=0) -> Dataset:
    """Reproducible synthetic dataset of ``n`` series of shape T x D."""
    if kind not in SYNTHETIC_KINDS:
        raise ConfigError(f"unknown synthetic kind {kind!r}")
    if n < 1 or T < 1 or D < 1:
        raise ConfigError(f"need n, T, D >= 1, got n={n}, T={T}, D={D}")
    rng = np.random.default_rng(seed)
    arr = _GENERATORS[kind](rng, T, D, n, params or {})
    series = [TimeSeries(arr[i]) for i in range(n)]
    return Dataset(name=f"{kind}", series=series, provenance="synthetic-spec")


def shuffle_series(dataset: Dataset, seed=0) -> Dataset:
    """Permute the time steps of every series independently."""
    rng = np.random.default_rng(seed)
    series = [TimeSeries(s.values[rng.permutation(s.T)]) for s in dataset.series]
    return Dataset(name=f"{dataset.name}-shuffled", series=series,
                   provenance=dataset.provenance,
                   norm_mean=dataset.norm_mean, norm_std=dataset.norm_std)


def save_csv(dataset: Dataset, path):
    """Write `series_id,step,f1..fD` rows sorted by (series_id, step)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "step"] + [f"f{k + 1}" for k in range(dataset.D)])
        for sid, s in enumerate(dataset.series):
            for t in range(s.T):
                w.writerow([sid, t] + [repr(float(v)) for v in s.values[t]])


def load_csv(path, T=None, D=None, normalize=True, top_variance_features=None
             ) -> Dataset:
    """Parse a series CSV, validate its shape and z-normalize per feature.

    ``top_variance_features`` keeps only the k features with the highest
    variance before normalization.
    """
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise ParseError(f"cannot open {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if len(header) < 3 or header[:2] != ["series_id", "step"]:
            raise ParseError(f"{path}: header must start with series_id,step")
        n_feat = len(header) - 2
        if D is not None and n_feat != D:
            raise ParseError(f"{path}: expected {D} features, found {n_feat}")
        by_series = {}
        for row_num, cells in enumerate(reader, start=2):
            if len(cells) != n_feat + 2:
                raise ParseError(
                    f"{path}: row {row_num} has {len(cells)} cells, "
                    f"expected {n_feat + 2}")
            try:
                sid = int(cells[0])
                step = int(cells[1])
                vals = [float(c) for c in cells[2:]]
            except ValueError:
                raise ParseError(
                    f"{path}: row {row_num} contains a non-numeric cell") from None
            by_series.setdefault(sid, {})[step] = vals

    if not by_series:
        raise ParseError(f"{path}: no data rows")
    series = []
    for sid in sorted(by_series):
        steps = by_series[sid]
        n_steps = len(steps)
        if sorted(steps) != list(range(n_steps)):
            raise ParseError(f"{path}: series {sid} has non-contiguous steps")
        if T is not None and n_steps != T:
            raise ParseError(
                f"{path}: series {sid} has {n_steps} steps, expected {T}")
        series.append(TimeSeries(np.array([steps[t] for t in range(n_steps)])))
    ds = Dataset(name=str(path), series=series, provenance=str(path))

    if top_variance_features is not None:
        arr = ds.as_array()
        variances = arr.reshape(-1, ds.D).var(axis=0)
        keep = np.sort(np.argsort(variances)[::-1][:top_variance_features])
        ds = Dataset(name=ds.name,
                     series=[TimeSeries(s.values[:, keep]) for s in ds.series],
                     provenance=ds.provenance)
    return ds.normalized() if normalize else ds
