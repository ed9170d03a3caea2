"""Shared test utilities: finite-difference oracles and tiny decoders."""

import numpy as np
import pytest

from tslatent import autodiff as ad


def central_fd(fn, x, h=1e-6):
    """Central finite-difference gradient of a scalar function of a vector
    or matrix argument, evaluated elementwise."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy(); xp[idx] += h
        xm = x.copy(); xm[idx] -= h
        g[idx] = (fn(xp) - fn(xm)) / (2.0 * h)
    return g


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def check_grad(build_scalar, x0, tol=1e-5, h=1e-6):
    """Assert autodiff gradient of ``build_scalar(leaf)`` matches central FD.

    ``build_scalar`` maps a leaf Tensor to a scalar node.
    """
    leaf = ad.tensor(x0)
    out = build_scalar(leaf)
    acc = ad.gradients(out)
    g_auto = acc.get(id(leaf))
    if g_auto is None:
        g_auto = np.zeros_like(np.asarray(x0, dtype=np.float64))
    g_fd = central_fd(lambda v: float(build_scalar(ad.tensor(v)).value), x0, h=h)
    err = rel_err(g_auto, g_fd)
    assert err < tol, f"gradient mismatch: rel err {err:.3e}"


class LinearDecoder:
    """h_t = A_0 z + sum_i A_i x_i; exact for the linear-attribution oracles."""

    def __init__(self, mats, latent_dim, data_dim):
        self.mats = [np.asarray(m, dtype=np.float64) for m in mats]
        self.latent_dim = latent_dim
        self.data_dim = data_dim

    def representation(self, xs):
        out = ad.matmul(ad.constant(self.mats[0]), xs[0])
        for m, x in zip(self.mats[1:], xs[1:]):
            out = out + ad.matmul(ad.constant(m), x)
        return out


class TanhDecoder:
    """Random 2-layer tanh decoder over the concatenated inputs."""

    def __init__(self, t, latent_dim, data_dim, hidden, rep, rng):
        in_dim = latent_dim + (t - 1) * data_dim
        self.W1 = rng.uniform(-1, 1, (hidden, in_dim)) / np.sqrt(in_dim)
        self.W2 = rng.uniform(-1, 1, (rep, hidden)) / np.sqrt(hidden)
        self.latent_dim = latent_dim
        self.data_dim = data_dim

    def representation(self, xs):
        x = ad.concat(xs)
        return ad.matmul(ad.constant(self.W2),
                         ad.tanh(ad.matmul(ad.constant(self.W1), x)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
