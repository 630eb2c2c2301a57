"""Fisher information and Cramér-Rao bounds for (eps, eta) and the channel.

The unknowns are ``alpha = [eps, eta, h_R, h_I]``; the timing error is a
discrete parameter and enters only through ``G(theta)`` at its true value.
All closed forms are written per receive antenna with

    M0 = F1 G X1,   M1 = C1 M0,   M2 = (C2 ∘ F1) G X1,   X1 = X (I ⊗ F2)

since ``D`` is a unitary diagonal commuting with ``C1`` and cancels from
every inner product.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy import linalg

from .model import (
    ChannelProfile,
    ChannelState,
    Impairments,
    SystemConfig,
    TrainingMatrix,
    _f1,
    block_matrix,
    cfo_ramp,
    generate_channel,
    timing_ramp,
)
from .numerics import hadamard, herm, kron


class SingularFim(np.linalg.LinAlgError):
    pass


def build_C1(cfg: SystemConfig) -> np.ndarray:
    """``diag(0, 1, ..., N-1)``."""
    return np.diag(np.arange(cfg.n_subcarriers, dtype=float)).astype(np.complex128)


def build_C2(cfg: SystemConfig) -> np.ndarray:
    """``(diag(I) ⊗ diag(C1)^T) ∘ (diag(I)^T ⊗ diag(C1))``.

    ``diag(I_N)`` is the all-ones column, so the two Kronecker factors are
    the column-index and row-index grids and ``[C2]_{n,k} = n k``.
    """
    n = cfg.n_subcarriers
    ones = np.diag(np.eye(n))[:, None]
    c1 = np.diag(build_C1(cfg))[:, None]
    return hadamard(kron(ones, c1.T), kron(ones.T, c1))


def _factors(cfg: SystemConfig, training: TrainingMatrix, imp: Impairments):
    n = cfg.n_subcarriers
    imp.check(cfg)
    f1 = _f1(n, imp.eta)
    gx1 = timing_ramp(n, imp.theta)[:, None] * block_matrix(cfg, training, np.arange(cfg.max_taps))
    m0 = f1 @ gx1
    m1 = np.arange(n)[:, None] * m0
    m2 = hadamard(build_C2(cfg), f1) @ gx1
    return m0, m1, m2


def _per_rx(ch: ChannelState) -> np.ndarray:
    # rows are h_v, v = 1..N_R
    return ch.taps.reshape(ch.taps.shape[0], -1)


def _quad(h_rows: np.ndarray, k: np.ndarray) -> complex:
    """``h^H (I ⊗ K) h``."""
    return complex(np.einsum("vi,ij,vj->", h_rows.conj(), k, h_rows))


def mean_vector(cfg, training, imp, ch) -> np.ndarray:
    """``mu = (I ⊗ D F1 G X1) h``."""
    m0, _, _ = _factors(cfg, training, imp)
    d = cfo_ramp(cfg.n_subcarriers, imp.eps, imp.eta)
    return (d[:, None] * (m0 @ _per_rx(ch).T)).T.reshape(-1)


def d_mu_d_eps(cfg, training, imp, ch) -> np.ndarray:
    n = cfg.n_subcarriers
    _, m1, _ = _factors(cfg, training, imp)
    d = cfo_ramp(n, imp.eps, imp.eta)
    scale = 2j * np.pi * (1.0 + imp.eta) / n
    return (scale * d[:, None] * (m1 @ _per_rx(ch).T)).T.reshape(-1)


def d_mu_d_eta(cfg, training, imp, ch) -> np.ndarray:
    n = cfg.n_subcarriers
    _, m1, m2 = _factors(cfg, training, imp)
    d = cfo_ramp(n, imp.eps, imp.eta)
    h = _per_rx(ch).T
    dd = (2j * np.pi * imp.eps / n) * (m1 @ h)      # dD/deta F1 G X1 h
    df = (2j * np.pi / n) * (m2 @ h)                # D dF1/deta G X1 h, D applied below
    return (d[:, None] * (dd + df)).T.reshape(-1)


def d_mu_d_h(cfg, training, imp) -> np.ndarray:
    """``d mu / d h_R = I ⊗ (D F1 G X1)``; ``d mu / d h_I`` is ``j`` times it."""
    m0, _, _ = _factors(cfg, training, imp)
    d = cfo_ramp(cfg.n_subcarriers, imp.eps, imp.eta)
    return kron(np.eye(cfg.n_rx), d[:, None] * m0)


def jacobian(cfg, training, imp, ch) -> np.ndarray:
    """Stacked ``[d mu/d eps, d mu/d eta, d mu/d h_R, d mu/d h_I]``."""
    b = d_mu_d_h(cfg, training, imp)
    return np.column_stack([d_mu_d_eps(cfg, training, imp, ch),
                            d_mu_d_eta(cfg, training, imp, ch), b, 1j * b])


@dataclass
class FisherBlocks:
    """Complex inner-product blocks; the FIM is ``(2 / noise_var) Re[...]``.

    ``g_e_hR`` and ``g_n_hR`` are the row blocks ``Gamma_{eps,h_R}`` and
    ``Gamma_{eta,h_R}``.  The ``h_I`` blocks follow from ``d mu/d h_I = j d mu/d h_R``.
    """

    g_ee: complex
    g_en: complex
    g_ne: complex
    g_nn: complex
    g_e_hR: np.ndarray
    g_n_hR: np.ndarray
    g_hh: np.ndarray
    noise_var: float

    @property
    def woc(self) -> np.ndarray:
        g = np.array([[self.g_ee, self.g_en], [self.g_ne, self.g_nn]])
        return 2.0 / self.noise_var * np.real(g)

    def complex_matrix(self) -> np.ndarray:
        n = self.g_hh.shape[0]
        om = np.zeros((2 + 2 * n, 2 + 2 * n), dtype=np.complex128)
        om[:2, :2] = [[self.g_ee, self.g_en], [self.g_ne, self.g_nn]]
        rows = np.vstack([self.g_e_hR, self.g_n_hR])
        om[:2, 2:2 + n] = rows
        om[:2, 2 + n:] = 1j * rows
        om[2:2 + n, :2] = herm(rows)
        om[2 + n:, :2] = -1j * herm(rows)
        om[2:2 + n, 2:2 + n] = self.g_hh
        om[2:2 + n, 2 + n:] = 1j * self.g_hh
        om[2 + n:, 2:2 + n] = -1j * self.g_hh
        om[2 + n:, 2 + n:] = self.g_hh
        return om

    @property
    def wc(self) -> np.ndarray:
        return 2.0 / self.noise_var * np.real(self.complex_matrix())


def _check_noise(noise_var: float) -> None:
    if not noise_var > 0:
        raise ValueError("noise_var must be positive for a Fisher information")


def _gammas(cfg, imp, m0, m1, m2, h_rows):
    n = cfg.n_subcarriers
    eps, eta = imp.eps, imp.eta
    g_ee = (2 * np.pi * (1 + eta) / n) ** 2 * _quad(h_rows, herm(m1) @ m1)
    g_en = (4 * np.pi ** 2 * (1 + eta) / n ** 2) * _quad(h_rows, herm(m1) @ (eps * m1 + m2))
    # four-term expansion of (eps C1 F1 + C2∘F1)^H (eps C1 F1 + C2∘F1)
    k_nn = (eps * herm(m0) @ (np.arange(n)[:, None] * m2)
            + herm(m2) @ m2
            + eps ** 2 * herm(m1) @ m1
            + eps * herm(m2) @ m1)
    g_nn = (2 * np.pi / n) ** 2 * _quad(h_rows, k_nn)
    return g_ee, g_en, np.conj(g_en), g_nn


def fim_woc(cfg, training, imp, ch, noise_var: float) -> np.ndarray:
    """2x2 FIM of (eps, eta) with the channel known."""
    _check_noise(noise_var)
    m0, m1, m2 = _factors(cfg, training, imp)
    g_ee, g_en, g_ne, g_nn = _gammas(cfg, imp, m0, m1, m2, _per_rx(ch))
    g = np.array([[g_ee, g_en], [g_ne, g_nn]])
    return 2.0 / noise_var * np.real(g)


def fim_wc(cfg, training, imp, ch, noise_var: float) -> FisherBlocks:
    """Blocks of the full FIM of ``[eps, eta, h_R, h_I]``."""
    _check_noise(noise_var)
    n = cfg.n_subcarriers
    m0, m1, m2 = _factors(cfg, training, imp)
    h_rows = _per_rx(ch)
    g_ee, g_en, g_ne, g_nn = _gammas(cfg, imp, m0, m1, m2, h_rows)

    eye = np.eye(cfg.n_rx)
    k_e = (-2j * np.pi * (1 + imp.eta) / n) * herm(m1) @ m0
    g_e_hR = h_rows.conj().reshape(-1) @ kron(eye, k_e)
    k_n = (2j * np.pi / n) * herm(m0) @ (imp.eps * m1 + m2)
    g_hR_n = kron(eye, k_n) @ h_rows.reshape(-1)
    g_hh = kron(eye, herm(m0) @ m0)
    return FisherBlocks(g_ee, g_en, g_ne, g_nn, g_e_hR, np.conj(g_hR_n), g_hh, noise_var)


@dataclass
class CrlbReport:
    eps_woc: float
    eps_wc: float
    eta_woc: float
    eta_wc: float
    h_trace: float

    def scaled(self, factor: float) -> "CrlbReport":
        return CrlbReport(*(factor * getattr(self, f.name) for f in fields(self)))

    @staticmethod
    def mean(reports) -> "CrlbReport":
        reports = list(reports)
        if not reports:
            raise ValueError("no reports to average")
        return CrlbReport(*(float(np.mean([getattr(r, f.name) for r in reports]))
                            for f in fields(CrlbReport)))


def crlb_woc(woc: np.ndarray) -> tuple[float, float]:
    """CRLBs of eps and eta from the 2x2 FIM via the explicit inverse."""
    g_ee, g_en, g_ne, g_nn = woc[0, 0], woc[0, 1], woc[1, 0], woc[1, 1]
    det = g_ee * g_nn - g_ne * g_en
    if not det > 0:
        raise SingularFim(f"2x2 Fisher information is singular (det={det:.3e})")
    return float(g_nn / det), float(g_ee / det)


def crlb_report(blocks: FisherBlocks) -> CrlbReport:
    eps_woc, eta_woc = crlb_woc(blocks.woc)
    gamma = blocks.wc
    try:
        chol = linalg.cho_factor(gamma)
    except linalg.LinAlgError as exc:
        raise SingularFim("full Fisher information is not positive definite") from exc
    inv = linalg.cho_solve(chol, np.eye(gamma.shape[0]))
    return CrlbReport(eps_woc, float(inv[0, 0]), eta_woc, float(inv[1, 1]),
                      float(np.trace(inv[2:, 2:])))


def crlb_averaged(cfg: SystemConfig, training: TrainingMatrix, imp: Impairments,
                  noise_vars, n_realizations: int, seed=None,
                  profile: ChannelProfile | None = None) -> list[CrlbReport]:
    """Channel-averaged CRLBs, one report per entry of `noise_vars`.

    Every bound is linear in the noise variance, so each draw is evaluated
    once at unit variance and rescaled.
    """
    if n_realizations < 1:
        raise ValueError("n_realizations must be at least 1")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    # explicit child keys instead of spawn(), which mutates `root`
    seeds = [np.random.SeedSequence(root.entropy, spawn_key=root.spawn_key + (i,))
             for i in range(n_realizations)]
    unit = [crlb_report(fim_wc(cfg, training, imp, generate_channel(cfg, profile, s), 1.0))
            for s in seeds]
    avg = CrlbReport.mean(unit)
    return [avg.scaled(float(v)) for v in noise_vars]
