"""Sequence networks: encoder, autoregressive decoders and Gaussian heads.

The decoders share one calling convention that the dependency diagnostics
rely on: ``representation(xs)`` takes a list of input vectors where
``xs[0]`` plays the role of the latent variable and ``xs[1:]`` are the
observations ``x_1 .. x_{t-1}``, and returns the representation ``h_t``.
Teacher-forced evaluation over a whole series is available through
``representations(z, X)``.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InputError, ShapeError
from .series import TimeSeries

__all__ = [
    "LSTMCell",
    "Encoder",
    "VariationalHead",
    "RecurrentDecoder",
    "AttentionDecoder",
    "GenerationHead",
    "gen_log_likelihood",
    "autoregressive_sample",
]

LOG_STD_MIN = -7.0
LOG_STD_MAX = 7.0
LOG_2PI = float(np.log(2.0 * np.pi))


def _uniform_init(rng, rows, cols=None):
    """Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    fan_in = rows if cols is None else cols
    bound = 1.0 / np.sqrt(fan_in)
    shape = (rows,) if cols is None else (rows, cols)
    return rng.uniform(-bound, bound, size=shape)


def _as_vec(x, dim, what):
    if isinstance(x, Tensor):
        if x.value.shape != (dim,):
            raise ShapeError(f"{what}: expected shape ({dim},), got {x.value.shape}")
        return x
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape != (dim,):
        raise ShapeError(f"{what}: expected shape ({dim},), got {arr.shape}")
    return ad.tensor(arr)


class LSTMCell:
    """Single gated recurrent cell with the customary i/f/g/o gate block."""

    def __init__(self, input_dim, hidden_dim, rng, name="lstm"):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        h = hidden_dim
        self.W = ad.parameter(_uniform_init(rng, 4 * h, input_dim + h), f"{name}.W")
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0  # forget-gate bias keeps early memories alive
        self.b = ad.parameter(b, f"{name}.b")

    def params(self):
        return [self.W, self.b]

    def step(self, x, h, c):
        hd = self.hidden_dim
        gates = ad.affine(self.W, ad.concat([x, h]), self.b)
        i = ad.sigmoid(ad.segment(gates, 0, hd))
        f = ad.sigmoid(ad.segment(gates, hd, 2 * hd))
        g = ad.tanh(ad.segment(gates, 2 * hd, 3 * hd))
        o = ad.sigmoid(ad.segment(gates, 3 * hd, 4 * hd))
        c_new = f * c + i * g
        h_new = o * ad.tanh(c_new)
        return h_new, c_new


class Encoder:
    """Summarizes a T x D series into a latent-dimension vector."""

    def __init__(self, data_dim, latent_dim, hidden_dim, rng):
        self.data_dim = data_dim
        self.latent_dim = latent_dim
        self.hidden_dim = hidden_dim
        self.cell = LSTMCell(data_dim, hidden_dim, rng, name="enc.lstm")
        self.W_out = ad.parameter(
            _uniform_init(rng, latent_dim, hidden_dim), "enc.W_out")
        self.b_out = ad.parameter(np.zeros(latent_dim), "enc.b_out")

    def params(self):
        return self.cell.params() + [self.W_out, self.b_out]

    def encode_node(self, X: TimeSeries) -> Tensor:
        h = ad.constant(np.zeros(self.hidden_dim))
        c = ad.constant(np.zeros(self.hidden_dim))
        for t in range(X.T):
            x = ad.tensor(X.values[t])
            h, c = self.cell.step(x, h, c)
        return ad.affine(self.W_out, h, self.b_out)

    def encode(self, X: TimeSeries) -> np.ndarray:
        return self.encode_node(X).value


class VariationalHead:
    """Gaussian posterior parameters mu = W_mu v, sigma = exp(W_sigma v)."""

    def __init__(self, latent_dim, rng):
        self.latent_dim = latent_dim
        self.W_mu = ad.parameter(_uniform_init(rng, latent_dim, latent_dim), "vi.W_mu")
        self.W_sigma = ad.parameter(
            _uniform_init(rng, latent_dim, latent_dim), "vi.W_sigma")

    def params(self):
        return [self.W_mu, self.W_sigma]

    def posterior(self, v):
        """Return (mu, sigma) nodes for a latent summary ``v``."""
        v = _as_vec(v, self.latent_dim, "variational head input")
        mu = ad.matmul(self.W_mu, v)
        log_sigma = ad.clip(ad.matmul(self.W_sigma, v), LOG_STD_MIN, LOG_STD_MAX)
        return mu, ad.exp(log_sigma)

    def vi_sample(self, v, eps):
        """Reparameterized draw z = mu + diag(sigma) eps; returns (z, mu, sigma)."""
        mu, sigma = self.posterior(v)
        eps = _as_vec(eps, self.latent_dim, "posterior noise")
        z = mu + sigma * eps
        return z, mu, sigma


class RecurrentDecoder:
    """Gated recurrent decoder whose initial state is a learned map of z.

    With ``skip_z=True`` the latent vector is additionally concatenated to
    the input at every step (the skip-connection mitigation baseline).
    """

    kind = "recurrent"

    def __init__(self, data_dim, latent_dim, hidden_dim, rep_dim, rng,
                 skip_z=False):
        self.data_dim = data_dim
        self.latent_dim = latent_dim
        self.hidden_dim = hidden_dim
        self.rep_dim = rep_dim
        self.skip_z = skip_z
        in_dim = data_dim + (latent_dim if skip_z else 0)
        self.cell = LSTMCell(in_dim, hidden_dim, rng, name="dec.lstm")
        self.W_h0 = ad.parameter(_uniform_init(rng, hidden_dim, latent_dim), "dec.W_h0")
        self.b_h0 = ad.parameter(np.zeros(hidden_dim), "dec.b_h0")
        self.W_c0 = ad.parameter(_uniform_init(rng, hidden_dim, latent_dim), "dec.W_c0")
        self.b_c0 = ad.parameter(np.zeros(hidden_dim), "dec.b_c0")
        self.W_f1 = ad.parameter(_uniform_init(rng, hidden_dim, hidden_dim), "dec.W_f1")
        self.W_f2 = ad.parameter(_uniform_init(rng, rep_dim, hidden_dim), "dec.W_f2")

    def params(self):
        return self.cell.params() + [
            self.W_h0, self.b_h0, self.W_c0, self.b_c0, self.W_f1, self.W_f2]

    def _project(self, s):
        return ad.matmul(self.W_f2, ad.tanh(ad.matmul(self.W_f1, s)))

    def _run(self, z, xs, steps):
        """h_1..h_steps given latent z and observations xs = [x_1, ...]."""
        h = ad.tanh(ad.affine(self.W_h0, z, self.b_h0))
        c = ad.tanh(ad.affine(self.W_c0, z, self.b_c0))
        zero = ad.constant(np.zeros(self.data_dim))
        out = []
        for t in range(1, steps + 1):
            x_prev = xs[t - 2] if t >= 2 else zero
            if self.skip_z:
                x_prev = ad.concat([x_prev, z])
            h, c = self.cell.step(x_prev, h, c)
            out.append(self._project(h))
        return out

    def representation(self, xs):
        z = _as_vec(xs[0], self.latent_dim, "decoder latent")
        obs = [_as_vec(x, self.data_dim, "decoder input") for x in xs[1:]]
        return self._run(z, obs, len(xs))[-1]

    def representations(self, z, X: TimeSeries):
        z = _as_vec(z, self.latent_dim, "decoder latent")
        obs = [ad.tensor(X.values[t]) for t in range(X.T - 1)]
        return self._run(z, obs, X.T)


def _sinusoid_positions(n, dim):
    pos = np.arange(n)[:, None]
    k = np.arange(dim)[None, :]
    angles = pos / np.power(10000.0, (2 * (k // 2)) / dim)
    enc = np.where(k % 2 == 0, np.sin(angles), np.cos(angles))
    return enc


class AttentionDecoder:
    """One causal self-attention layer over [z, x_1, .., x_{t-1}] tokens.

    The latent vector and the observations live in different dimensions, so
    each is mapped to a common model width by a learned input projection
    before position encodings are added.
    """

    kind = "attention"

    def __init__(self, data_dim, latent_dim, hidden_dim, rep_dim, rng,
                 skip_z=False, max_steps=512):
        self.data_dim = data_dim
        self.latent_dim = latent_dim
        self.hidden_dim = hidden_dim
        self.rep_dim = rep_dim
        self.skip_z = skip_z
        dm = hidden_dim
        self.W_zin = ad.parameter(_uniform_init(rng, dm, latent_dim), "dec.W_zin")
        self.W_xin = ad.parameter(_uniform_init(rng, dm, data_dim), "dec.W_xin")
        self.b_in = ad.parameter(np.zeros(dm), "dec.b_in")
        self.W_q = ad.parameter(_uniform_init(rng, dm, dm), "dec.W_q")
        self.W_k = ad.parameter(_uniform_init(rng, dm, dm), "dec.W_k")
        self.W_v = ad.parameter(_uniform_init(rng, dm, dm), "dec.W_v")
        self.W_f1 = ad.parameter(_uniform_init(rng, dm, dm), "dec.W_f1")
        self.W_f2 = ad.parameter(_uniform_init(rng, rep_dim, dm), "dec.W_f2")
        self._posenc = _sinusoid_positions(max_steps, dm)

    def params(self):
        return [self.W_zin, self.W_xin, self.b_in, self.W_q, self.W_k,
                self.W_v, self.W_f1, self.W_f2]

    def _tokens(self, z, obs):
        toks = [ad.affine(self.W_zin, z, self.b_in) + ad.constant(self._posenc[0])]
        for i, x in enumerate(obs, start=1):
            tok = ad.affine(self.W_xin, x, self.b_in) + ad.constant(self._posenc[i])
            if self.skip_z:
                tok = tok + ad.matmul(self.W_zin, z)
            toks.append(tok)
        return ad.stack(toks)

    def _attend(self, z, obs):
        M = self._tokens(z, obs)
        Q = ad.matmul(M, ad.transpose(self.W_q))
        K = ad.matmul(M, ad.transpose(self.W_k))
        V = ad.matmul(M, ad.transpose(self.W_v))
        scores = ad.matmul(Q, ad.transpose(K)) / np.sqrt(self.hidden_dim)
        return ad.matmul(ad.causal_softmax(scores), V)

    def _project(self, s):
        return ad.matmul(self.W_f2, ad.tanh(ad.matmul(self.W_f1, s)))

    def representation(self, xs):
        z = _as_vec(xs[0], self.latent_dim, "decoder latent")
        obs = [_as_vec(x, self.data_dim, "decoder input") for x in xs[1:]]
        S = self._attend(z, obs)
        return self._project(ad.row(S, len(obs)))

    def representations(self, z, X: TimeSeries):
        z = _as_vec(z, self.latent_dim, "decoder latent")
        obs = [ad.tensor(X.values[t]) for t in range(X.T - 1)]
        S = self._attend(z, obs)
        return [self._project(ad.row(S, t)) for t in range(X.T)]


class GenerationHead:
    """Projects a representation to per-step Gaussian mean and log-std."""

    def __init__(self, rep_dim, data_dim, rng):
        self.rep_dim = rep_dim
        self.data_dim = data_dim
        self.W_m = ad.parameter(_uniform_init(rng, data_dim, rep_dim), "gen.W_m")
        self.b_m = ad.parameter(np.zeros(data_dim), "gen.b_m")
        self.W_s = ad.parameter(_uniform_init(rng, data_dim, rep_dim), "gen.W_s")
        self.b_s = ad.parameter(np.zeros(data_dim), "gen.b_s")

    def params(self):
        return [self.W_m, self.b_m, self.W_s, self.b_s]

    def mean_log_std(self, h):
        h = _as_vec(h, self.rep_dim, "generation head input")
        mean = ad.affine(self.W_m, h, self.b_m)
        log_std = ad.clip(ad.affine(self.W_s, h, self.b_s),
                          LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std


def gen_log_likelihood(head: GenerationHead, hs, X: TimeSeries):
    """Sum over steps of the diagonal-Gaussian log density of x_t.

    ``hs`` are the decoder representations h_1..h_T aligned with ``X``.
    Returns a scalar node.
    """
    if len(hs) != X.T:
        raise ShapeError(f"got {len(hs)} representations for T={X.T}")
    total = None
    for t in range(X.T):
        mean, log_std = head.mean_log_std(hs[t])
        x = ad.tensor(X.values[t])
        diff = x - mean
        inv_var = ad.exp(log_std * (-2.0))
        term = ad.ssum(log_std) * (-1.0) \
            - ad.ssum(diff * diff * inv_var) * 0.5 \
            - 0.5 * LOG_2PI * X.D
        total = term if total is None else total + term
    return total


def autoregressive_sample(decoder, head: GenerationHead, z, T, noise=None,
                          rng=None) -> TimeSeries:
    """Draw x_t ~ N(mean_t, std_t^2) sequentially, conditioning on z.

    Either a (T, D) ``noise`` array or an ``rng`` must be supplied; all-zero
    noise yields the mode path.
    """
    if T < 1:
        raise InputError(f"need T >= 1, got {T}")
    D = decoder.data_dim
    if noise is None:
        if rng is None:
            raise InputError("supply either a noise array or an rng")
        noise = rng.standard_normal((T, D))
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (T, D):
        raise ShapeError(f"noise must have shape ({T}, {D}), got {noise.shape}")

    z = np.asarray(z, dtype=np.float64)
    xs = [z]
    out = np.empty((T, D))
    for t in range(1, T + 1):
        h = decoder.representation([ad.tensor(v) for v in xs])
        mean, log_std = head.mean_log_std(h)
        x = mean.value + np.exp(log_std.value) * noise[t - 1]
        out[t - 1] = x
        xs.append(x)
    return TimeSeries(out)
