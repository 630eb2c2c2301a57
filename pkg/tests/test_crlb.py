import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimosync import crlb as c
from mimosync import model as m

from .conftest import crandn

DELTA = 1e-6


def instance(seed, n_tx=2, n_rx=2, n=16, taps=3, theta_max=2):
    rng = np.random.default_rng(seed)
    cfg = m.SystemConfig(n, n_tx, n_rx, taps, theta_max, taps + theta_max + 1)
    tr = m.generate_training(cfg, seed)
    ch = m.ChannelState(crandn(rng, n_rx, n_tx, taps))
    imp = m.Impairments(rng.uniform(-0.45, 0.45), rng.uniform(-3e-3, 3e-3),
                        int(rng.integers(-theta_max, theta_max + 1)))
    return cfg, tr, imp, ch


def mu(cfg, tr, imp, ch):
    # independent of the crlb factors: builds A literally
    return m.build_A(cfg, tr, imp.eps, imp.eta, imp.theta) @ ch.stacked()


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# -- C1 / C2 ---------------------------------------------------------------------

def test_C1():
    cfg = m.SystemConfig(3, 1, 1, 1, 0, 2)
    assert np.array_equal(c.build_C1(cfg), np.diag([0, 1, 2]))
    cfg8 = m.SystemConfig(8, 1, 1, 1, 0, 2)
    assert np.trace(c.build_C1(cfg8)).real == 28
    assert np.array_equal(c.build_C1(cfg8) @ np.ones(8), np.arange(8))


def test_C2_literal_expression():
    cfg = m.SystemConfig(3, 1, 1, 1, 0, 2)
    c2 = c.build_C2(cfg)
    assert np.array_equal(c2, [[0, 0, 0], [0, 1, 2], [0, 2, 4]])
    cfg9 = m.SystemConfig(9, 1, 1, 1, 0, 2)
    c2 = c.build_C2(cfg9)
    assert np.array_equal(c2, c2.T)
    assert not c2[0].any() and not c2[:, 0].any()
    assert np.array_equal(c2, np.outer(np.arange(9), np.arange(9)))


def test_dF1_deta_uses_C2():
    cfg = m.SystemConfig(8, 1, 1, 1, 0, 2)
    eta = 4e-3
    fd = (m.build_F1(cfg, eta + DELTA) - m.build_F1(cfg, eta - DELTA)) / (2 * DELTA)
    analytic = 2j * np.pi / 8 * c.build_C2(cfg) * m.build_F1(cfg, eta)
    assert rel(fd, analytic) < 1e-6


# -- partial derivatives -------------------------------------------------------------

@pytest.mark.parametrize("seed", range(6))
def test_partials_match_finite_differences(seed):
    n_ant = 1 if seed % 2 else 2
    cfg, tr, imp, ch = instance(seed, n_ant, n_ant)
    fd_e = (mu(cfg, tr, dataclasses.replace(imp, eps=imp.eps + DELTA), ch)
            - mu(cfg, tr, dataclasses.replace(imp, eps=imp.eps - DELTA), ch)) / (2 * DELTA)
    fd_n = (mu(cfg, tr, dataclasses.replace(imp, eta=imp.eta + DELTA), ch)
            - mu(cfg, tr, dataclasses.replace(imp, eta=imp.eta - DELTA), ch)) / (2 * DELTA)
    assert rel(c.d_mu_d_eps(cfg, tr, imp, ch), fd_e) < 1e-6
    assert rel(c.d_mu_d_eta(cfg, tr, imp, ch), fd_n) < 1e-6
    # channel partials: perturb one real / imaginary coordinate at a time
    b = c.d_mu_d_h(cfg, tr, imp)
    h = ch.stacked()
    for k in (0, len(h) - 1):
        e = np.zeros_like(h)
        e[k] = DELTA
        up = mu(cfg, tr, imp, m.ChannelState.unstack(h + e, cfg))
        dn = mu(cfg, tr, imp, m.ChannelState.unstack(h - e, cfg))
        assert rel(b[:, k], (up - dn) / (2 * DELTA)) < 1e-6
        up = mu(cfg, tr, imp, m.ChannelState.unstack(h + 1j * e, cfg))
        dn = mu(cfg, tr, imp, m.ChannelState.unstack(h - 1j * e, cfg))
        assert rel(1j * b[:, k], (up - dn) / (2 * DELTA)) < 1e-6


def test_mean_vector_matches_model():
    cfg, tr, imp, ch = instance(11)
    assert rel(c.mean_vector(cfg, tr, imp, ch), mu(cfg, tr, imp, ch)) < 1e-12


def test_partials_trivial_cases():
    cfg, tr, imp, ch = instance(3)
    zero = m.ChannelState(np.zeros_like(ch.taps))
    assert not c.d_mu_d_eps(cfg, tr, imp, zero).any()
    assert not c.d_mu_d_eta(cfg, tr, imp, zero).any()
    # eps = 0 removes the dD/deta term; only D dF1/deta G X1 h remains
    imp0 = dataclasses.replace(imp, eps=0.0)
    f1 = m.build_F1(cfg, imp0.eta)
    dfh = m.build_D(cfg, 0.0, imp0.eta) @ (2j * np.pi / cfg.n_subcarriers
                                            * c.build_C2(cfg) * f1) @ m.build_G(cfg, imp0.theta)
    x1 = tr.as_block() @ np.kron(np.eye(2), m.build_F2(cfg, cfg.max_taps))
    expect = np.kron(np.eye(2), dfh @ x1) @ ch.stacked()
    assert rel(c.d_mu_d_eta(cfg, tr, imp0, ch), expect) < 1e-12


def test_deps_one_plus_eta_factor():
    cfg, tr, imp, ch = instance(4)
    # eps-partial divided by its (1 + eta) prefactor with D fixed: C1-weighted mean
    d = m.build_D(cfg, imp.eps, imp.eta)
    inner = np.kron(np.eye(2), d @ c.build_C1(cfg) @ m.build_F1(cfg, imp.eta)
                    @ m.build_G(cfg, imp.theta) @ tr.as_block()
                    @ np.kron(np.eye(2), m.build_F2(cfg, 3))) @ ch.stacked()
    scale = 2j * np.pi * (1 + imp.eta) / cfg.n_subcarriers
    assert rel(c.d_mu_d_eps(cfg, tr, imp, ch), scale * inner) < 1e-12


# -- Fisher information ------------------------------------------------------------

def jacobian_fim(cfg, tr, imp, ch, noise_var):
    j = c.jacobian(cfg, tr, imp, ch)
    return 2.0 / noise_var * np.real(j.conj().T @ j)


@pytest.mark.parametrize("seed", range(20))
def test_closed_form_fim_matches_jacobian(seed):
    n_ant = 1 if seed < 10 else 2
    cfg, tr, imp, ch = instance(seed, n_ant, n_ant)
    blocks = c.fim_wc(cfg, tr, imp, ch, 0.7)
    ref = jacobian_fim(cfg, tr, imp, ch, 0.7)
    assert rel(blocks.wc, ref) < 1e-8
    assert rel(c.fim_woc(cfg, tr, imp, ch, 0.7), ref[:2, :2]) < 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_fim_structure(seed):
    cfg, tr, imp, ch = instance(seed)
    blocks = c.fim_wc(cfg, tr, imp, ch, 0.3)
    gamma = blocks.wc
    assert np.allclose(gamma, gamma.T, rtol=0, atol=1e-9 * np.abs(gamma).max())
    assert np.linalg.eigvalsh(gamma).min() >= -1e-8 * np.linalg.norm(gamma)
    assert np.array_equal(gamma[:2, :2], blocks.woc)
    om = blocks.complex_matrix()
    n = blocks.g_hh.shape[0]
    hr, hi = slice(2, 2 + n), slice(2 + n, 2 + 2 * n)
    assert np.allclose(om[hr, hr], om[hi, hi])
    assert np.allclose(om[hr, hr], -1j * om[hr, hi])
    assert np.allclose(om[hr, hr], 1j * om[hi, hr])
    # Gamma_{h_R, h_R} = I ⊗ X1^H G^H F1^H F1 G X1
    b = c.d_mu_d_h(cfg, tr, imp)
    assert np.allclose(blocks.g_hh, b.conj().T @ b)


def test_fim_scaling_and_errors():
    cfg, tr, imp, ch = instance(2)
    a = c.fim_woc(cfg, tr, imp, ch, 1.0)
    assert np.allclose(c.fim_woc(cfg, tr, imp, ch, 0.5), 2 * a, rtol=1e-14)
    zero = m.ChannelState(np.zeros_like(ch.taps))
    assert not c.fim_woc(cfg, tr, imp, zero, 1.0).any()
    with pytest.raises(ValueError):
        c.fim_woc(cfg, tr, imp, ch, 0.0)
    with pytest.raises(ValueError):
        c.fim_wc(cfg, tr, imp, ch, -1.0)


# -- bounds ------------------------------------------------------------------------

def test_decoupled_woc():
    g = np.array([[4.0, 0.0], [0.0, 5.0]])
    assert c.crlb_woc(g) == (0.25, 0.2)
    with pytest.raises(c.SingularFim):
        c.crlb_woc(np.array([[1.0, 1.0], [1.0, 1.0]]))


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.1, 10), b=st.floats(0.1, 10), t=st.floats(-0.99, 0.99))
def test_2x2_inverse_matches_general(a, b, t):
    off = t * np.sqrt(a * b)
    g = np.array([[a, off], [off, b]])
    inv = np.linalg.inv(g)
    e, n = c.crlb_woc(g)
    assert abs(e - inv[0, 0]) <= 1e-10 * abs(inv[0, 0])
    assert abs(n - inv[1, 1]) <= 1e-10 * abs(inv[1, 1])


def test_report_matches_general_inverse():
    cfg, tr, imp, ch = instance(8)
    blocks = c.fim_wc(cfg, tr, imp, ch, 0.2)
    rep = c.crlb_report(blocks)
    inv = np.linalg.inv(blocks.wc)
    assert np.isclose(rep.eps_wc, inv[0, 0], rtol=1e-8)
    assert np.isclose(rep.eta_wc, inv[1, 1], rtol=1e-8)
    assert np.isclose(rep.h_trace, np.trace(inv[2:, 2:]), rtol=1e-8)
    inv2 = np.linalg.inv(blocks.woc)
    assert np.isclose(rep.eps_woc, inv2[0, 0], rtol=1e-10)


def test_singular_full_fim():
    cfg, tr, imp, ch = instance(1)
    # one antenna silent on every subcarrier: its taps are unidentifiable
    dead = m.TrainingMatrix(tr.symbols * np.array([[1.0], [0.0]]))
    with pytest.raises(c.SingularFim):
        c.crlb_report(c.fim_wc(cfg, dead, imp, ch, 1.0))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), antennas=st.sampled_from([1, 2]))
def test_nuisance_monotonicity(seed, antennas):
    cfg, tr, imp, ch = instance(seed, antennas, antennas)
    rep = c.crlb_report(c.fim_wc(cfg, tr, imp, ch, 1.0))
    assert rep.eps_wc >= rep.eps_woc * (1 - 1e-9)
    assert rep.eta_wc >= rep.eta_woc * (1 - 1e-9)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), s=st.floats(1e-4, 1e3))
def test_noise_variance_linearity(seed, s):
    cfg, tr, imp, ch = instance(seed)
    one = c.crlb_report(c.fim_wc(cfg, tr, imp, ch, 1.0))
    scaled = c.crlb_report(c.fim_wc(cfg, tr, imp, ch, s))
    for f in dataclasses.fields(one):
        assert np.isclose(getattr(scaled, f.name), s * getattr(one, f.name), rtol=1e-8)


# -- channel averaging ---------------------------------------------------------------

def test_average_single_draw_and_linearity(small_cfg):
    tr = m.generate_training(small_cfg, 0)
    imp = m.Impairments(0.1, 1e-3, 1)
    root = np.random.SeedSequence(42)
    first = np.random.SeedSequence(root.entropy, spawn_key=(0,))
    single = c.crlb_report(c.fim_wc(small_cfg, tr, imp,
                                    m.generate_channel(small_cfg, seed=first), 1.0))
    [avg] = c.crlb_averaged(small_cfg, tr, imp, [1.0], 1, seed=42)
    assert avg == single
    reps = c.crlb_averaged(small_cfg, tr, imp, [1.0, 0.1], 6, seed=42)
    assert np.isclose(reps[1].eps_wc, 0.1 * reps[0].eps_wc, rtol=1e-14)
    a, b = (c.crlb_averaged(small_cfg, tr, imp, [1.0], 3, seed=s)[0] for s in (1, 2))
    both = c.CrlbReport.mean([a, b])
    assert np.isclose(both.eta_wc, (a.eta_wc + b.eta_wc) / 2)
    with pytest.raises(ValueError):
        c.crlb_averaged(small_cfg, tr, imp, [1.0], 0)


def test_average_standard_error(small_cfg):
    tr = m.generate_training(small_cfg, 0)
    imp = m.Impairments(0.1, 1e-3, 1)
    root = np.random.SeedSequence(5)
    vals = np.array([c.crlb_report(c.fim_wc(small_cfg, tr, imp, m.generate_channel(
        small_cfg, seed=np.random.SeedSequence(root.entropy, spawn_key=(i,))), 1.0)).eps_wc
        for i in range(1000)])
    boot = np.random.default_rng(0).choice(vals, (200, vals.size)).mean(axis=1)
    assert boot.std() / vals.mean() < 0.05
    [avg] = c.crlb_averaged(small_cfg, tr, imp, [1.0], 1000, seed=5)
    assert np.isclose(avg.eps_wc, vals.mean(), rtol=1e-12)
