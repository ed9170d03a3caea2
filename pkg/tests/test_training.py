"""Objectives, optimizer, and training-loop checks."""

import numpy as np
import pytest

from tslatent import autodiff as ad
from tslatent.diffusion import make_schedule
from tslatent.errors import ConfigError, ContractError, TrainingError
from tslatent.nets import (Encoder, GenerationHead, RecurrentDecoder,
                           VariationalHead)
from tslatent.series import TimeSeries
from tslatent.training import (Adam, BaselineConfig, NewFrameworkConfig,
                               force_collapsed_posterior, kl_anneal_weight,
                               kl_diag_gaussian, loss_cs, loss_vi, mask_inputs,
                               train_autoencoder_baseline,
                               train_autoencoder_new, vae_loss)

from conftest import central_fd, rel_err

D, DZ, H, R = 3, 4, 8, 6


def _models(rng):
    enc = Encoder(D, DZ, H, rng)
    head = VariationalHead(DZ, rng)
    dec = RecurrentDecoder(D, DZ, H, R, rng)
    gen = GenerationHead(R, D, rng)
    return enc, head, dec, gen


def _data(rng, n=6, T=5):
    return [TimeSeries(rng.standard_normal((T, D))) for _ in range(n)]


# -- configs ---------------------------------------------------------------


def test_new_framework_config_validation():
    NewFrameworkConfig(L=100, N=5, M=10, gamma_mult=2)
    with pytest.raises(ConfigError):
        NewFrameworkConfig(L=100, N=0, M=10)
    with pytest.raises(ConfigError):
        NewFrameworkConfig(L=100, N=20, M=10)  # M <= N
    with pytest.raises(ConfigError):
        NewFrameworkConfig(L=100, N=60, M=70, gamma_mult=2)  # gamma N > L
    with pytest.raises(ConfigError):
        NewFrameworkConfig(L=100, N=5, M=10, eta_div=0.5)
    desk = NewFrameworkConfig.desk()
    assert (desk.L, desk.N, desk.M) == (100, 5, 10)
    paper = NewFrameworkConfig.paper_scale()
    assert (paper.L, paper.N, paper.M) == (1000, 50, 100)


def test_baseline_config_validation():
    for v in ("vanilla", "kl_anneal", "var_mask", "skip_conn"):
        BaselineConfig(variant=v)
    with pytest.raises(ConfigError):
        BaselineConfig(variant="nope")
    with pytest.raises(ConfigError):
        BaselineConfig(mask_ratio=1.0)


# -- Adam ------------------------------------------------------------------


def test_adam_first_step_magnitude():
    """The very first Adam update moves each touched coordinate by ~lr."""
    p = ad.parameter(np.array([1.0, 2.0]), "p")
    opt = Adam([p], lr=0.1)
    loss = ad.ssum(p * p)
    opt.step(ad.grad_wrt_params(loss))
    np.testing.assert_allclose(p.value, [0.9, 1.9], atol=1e-6)


def test_adam_converges_on_quadratic():
    target = np.array([3.0, -2.0])
    p = ad.parameter(np.zeros(2), "p")
    opt = Adam([p], lr=0.1)
    for _ in range(500):
        diff = p - ad.constant(target)
        opt.step(ad.grad_wrt_params(ad.ssum(diff * diff)))
    np.testing.assert_allclose(p.value, target, atol=1e-3)


def test_adam_state_roundtrip():
    p = ad.parameter(np.ones(3), "p")
    opt = Adam([p], lr=0.01)
    for _ in range(5):
        opt.step(ad.grad_wrt_params(ad.ssum(p * p)))
    state = {k: v.copy() for k, v in opt.state_arrays().items()}
    opt2 = Adam([p], lr=0.01)
    opt2.load_state_arrays(state)
    assert opt2.t == opt.t
    np.testing.assert_array_equal(opt2.m[id(p)], opt.m[id(p)])
    np.testing.assert_array_equal(opt2.v[id(p)], opt.v[id(p)])


# -- KL and ELBO -----------------------------------------------------------


def test_kl_closed_forms():
    # KL(N(0,I) || N(0,I)) = 0
    assert float(kl_diag_gaussian(np.zeros(4), np.ones(4)).value) == 0.0
    # KL(N(1, 1) || N(0,1)) = 1/2 per dimension
    v = float(kl_diag_gaussian(np.ones(3), np.ones(3)).value)
    assert abs(v - 1.5) < 1e-12
    # KL(N(0, sigma^2) || N(0,1)) = (sigma^2 - 1 - 2 ln sigma)/2
    sig = 2.0
    v = float(kl_diag_gaussian(np.zeros(1), np.array([sig])).value)
    assert abs(v - 0.5 * (sig ** 2 - 1 - 2 * np.log(sig))) < 1e-12
    with pytest.raises(ContractError):
        kl_diag_gaussian(np.zeros(2), np.array([1.0, 0.0]))


def test_kl_gradient_matches_fd(rng):
    mu0 = rng.standard_normal(4)
    sig0 = rng.uniform(0.5, 2.0, 4)
    leaf = ad.tensor(mu0)
    g = ad.gradients(kl_diag_gaussian(leaf, ad.tensor(sig0)))[id(leaf)]
    g_fd = central_fd(
        lambda v: float(kl_diag_gaussian(ad.tensor(v), ad.tensor(sig0)).value),
        mu0)
    assert rel_err(g, g_fd) < 1e-5


def test_vae_loss_anneal_weight_isolates_kl(rng):
    enc, head, dec, gen = _models(rng)
    X = _data(rng, n=1)[0]
    eps = rng.standard_normal(DZ)
    l0 = float(vae_loss(X, enc, head, dec, gen, eps, anneal_weight=0.0).value)
    l1 = float(vae_loss(X, enc, head, dec, gen, eps, anneal_weight=1.0).value)
    v = enc.encode(X)
    _, mu, sigma = head.vi_sample(v, eps)
    kl = float(kl_diag_gaussian(mu.value, sigma.value).value)
    assert abs((l1 - l0) - kl) < 1e-9
    with pytest.raises(ContractError):
        vae_loss(X, enc, head, dec, gen, eps, anneal_weight=1.5)


def test_kl_anneal_weight_ramp():
    assert kl_anneal_weight(0, 10) == 0.0
    assert kl_anneal_weight(5, 10) == 0.5
    assert kl_anneal_weight(15, 10) == 1.0
    assert kl_anneal_weight(3, 0) == 1.0


def test_mask_inputs_binomial_oracle():
    rng = np.random.default_rng(0)
    X = TimeSeries(np.ones((2000, 1)))
    masked = mask_inputs(X, 0.3, rng)
    frac = 1.0 - masked.values.mean()
    # binomial standard error at n=2000 is ~0.0102
    assert abs(frac - 0.3) < 4 * 0.0103
    with pytest.raises(ConfigError):
        mask_inputs(X, 1.0, rng)


# -- new-framework losses --------------------------------------------------


def test_loss_vi_weight_and_index_contracts(rng):
    enc, _, dec, gen = _models(rng)
    X = _data(rng, n=1)[0]
    sched = make_schedule(100, 1e-4, 0.2)
    cfg = NewFrameworkConfig.desk()
    eps = rng.standard_normal(DZ)
    # j = 0: plain negative log-likelihood at weight alpha_bar(0) = 1
    l0 = float(loss_vi(X, enc, dec, gen, sched, cfg, 0, eps).value)
    v = enc.encode(X)
    hs = dec.representations(v, X)
    from tslatent.nets import gen_log_likelihood
    ll = float(gen_log_likelihood(gen, hs, X).value)
    assert abs(l0 - (-ll)) < 1e-9
    with pytest.raises(ContractError):
        loss_vi(X, enc, dec, gen, sched, cfg, cfg.N + 1, eps)


def test_loss_vi_weight_uses_gamma_times_j(rng):
    """The likelihood weight is alpha_bar(gamma * j), not alpha_bar(j)."""
    enc, _, dec, gen = _models(rng)
    X = _data(rng, n=1)[0]
    sched = make_schedule(100, 1e-4, 0.2)
    cfg = NewFrameworkConfig.desk()  # gamma_mult = 2
    j, eps = 3, np.zeros(DZ)
    got = float(loss_vi(X, enc, dec, gen, sched, cfg, j, eps).value)
    # reconstruct by hand: z_j = sqrt(ab_j) v (zero noise), weight ab_{2j}
    from tslatent.nets import gen_log_likelihood
    v = enc.encode(X)
    z = np.sqrt(sched.alpha_bar(j)) * v
    ll = float(gen_log_likelihood(gen, dec.representations(z, X), X).value)
    assert abs(got - (-sched.alpha_bar(2 * j) * ll)) < 1e-9


def test_loss_cs_ceiling_and_hinge(rng):
    """eta divides the weight index with a ceiling: k=5, eta=2 -> ab(3);
    and the penalty vanishes below the trivial-predictor floor."""
    enc, _, dec, gen = _models(rng)
    X = _data(rng, n=1)[0]
    sched = make_schedule(100, 1e-4, 0.2)
    cfg = NewFrameworkConfig(L=100, N=2, M=5, gamma_mult=1, eta_div=2.0)
    eps = np.zeros(DZ)
    got = float(loss_cs(X, enc, dec, gen, sched, cfg, 5, eps).value)
    from tslatent.nets import gen_log_likelihood
    from tslatent.training import _cs_floor
    v = enc.encode(X)
    z = np.sqrt(sched.alpha_bar(5)) * v
    ll = float(gen_log_likelihood(gen, dec.representations(z, X), X).value)
    floor = _cs_floor(X)
    expected = (1.0 - sched.alpha_bar(3)) * max(ll - floor, 0.0)
    assert abs(got - expected) < 1e-9
    with pytest.raises(ContractError):
        loss_cs(X, enc, dec, gen, sched, cfg, 4, eps)  # k < M


def test_cs_floor_is_standard_normal_loglik():
    from tslatent.training import _cs_floor
    X = TimeSeries(np.zeros((2, 3)))
    assert abs(_cs_floor(X) - (-0.5 * 6 * np.log(2 * np.pi))) < 1e-12


def test_loss_vi_gradient_reaches_encoder(rng):
    """The encoder must receive gradient through the noised latent."""
    enc, _, dec, gen = _models(rng)
    X = _data(rng, n=1)[0]
    sched = make_schedule(100, 1e-4, 0.2)
    cfg = NewFrameworkConfig.desk()
    loss = loss_vi(X, enc, dec, gen, sched, cfg, 2, rng.standard_normal(DZ))
    grads = ad.grad_wrt_params(loss)
    for p in enc.params():
        assert np.any(grads[p] != 0.0), p.name


def test_force_collapsed_posterior(rng):
    head = VariationalHead(DZ, rng)
    collapsed = force_collapsed_posterior(head)
    v = rng.standard_normal(DZ)
    mu, sigma = collapsed.posterior(v)
    np.testing.assert_array_equal(mu.value, np.zeros(DZ))
    np.testing.assert_array_equal(sigma.value, np.ones(DZ))
    # original head untouched
    assert np.any(head.W_mu.value != 0.0)


# -- training loops --------------------------------------------------------


@pytest.mark.parametrize("variant", ["vanilla", "kl_anneal", "var_mask",
                                     "skip_conn"])
def test_baseline_training_reduces_loss(variant, rng):
    enc = Encoder(D, DZ, H, rng)
    head = VariationalHead(DZ, rng)
    dec = RecurrentDecoder(D, DZ, H, R, rng, skip_z=(variant == "skip_conn"))
    gen = GenerationHead(R, D, rng)
    data = _data(rng, n=8)
    cfg = BaselineConfig(variant=variant, mask_ratio=0.3)
    log = []
    train_autoencoder_baseline(data, enc, head, dec, gen, cfg, iters=150,
                               rng=rng, lr=3e-3, loss_log=log)
    assert len(log) == 150
    assert np.mean(log[-30:]) < np.mean(log[:30])


def test_new_framework_training_reduces_loss(rng):
    enc, _, dec, gen = _models(rng)
    data = _data(rng, n=8)
    sched = make_schedule(100, 1e-4, 0.2)
    cfg = NewFrameworkConfig.desk()
    log = []
    train_autoencoder_new(data, enc, dec, gen, sched, cfg, iters=150, rng=rng,
                          lr=3e-3, loss_log=log)
    assert np.mean(log[-30:]) < np.mean(log[:30])


def test_new_framework_training_validates_schedule(rng):
    enc, _, dec, gen = _models(rng)
    with pytest.raises(ConfigError):
        train_autoencoder_new(_data(rng), enc, dec, gen, make_schedule(50),
                              NewFrameworkConfig.desk(), 1, rng)
    with pytest.raises(ConfigError):
        train_autoencoder_baseline([], enc, VariationalHead(DZ, rng), dec,
                                   gen, BaselineConfig(), 1, rng)


def test_training_error_on_divergence(rng):
    """A non-finite loss aborts the loop with a TrainingError."""
    enc, head, dec, gen = _models(rng)
    data = _data(rng, n=4)
    gen.b_m.value[:] = np.inf  # poisoned state -> infinite reconstruction loss
    with pytest.raises(TrainingError, match="diverged"):
        train_autoencoder_baseline(data, enc, head, dec, gen,
                                   BaselineConfig(), iters=5, rng=rng)
