"""Grid-search ML, modified ML (MML) and stage-wise ML (SML) estimators.

All three algorithms maximize the energy of ``r`` captured by a candidate
model subspace, ``||P_A r||^2``.  The subspaces only depend on the
training and on one of (eta, theta), while the CFO enters as a diagonal
phase ramp that can be moved onto ``r``:

    ||P_{(I ⊗ D) B} r||^2 = sum_v ||Q_B^H D^H r_v||^2.

`SearchCache` therefore precomputes orthonormal bases per eta (ML, MML)
and per theta (SML) once per (config, training, grid) and reuses them for
every CFO hypothesis and every received vector.  The results are identical
to evaluating the cost functions point by point.
"""

from __future__ import annotations

import dataclasses

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .model import (
    ChannelState,
    SystemConfig,
    TrainingMatrix,
    _f1,
    block_matrix,
    build_A,
    build_A1,
    cfo_ramp,
    timing_ramp,
    window_delays,
)
from .numerics import COND_CEILING, RankDeficient, herm, orth_basis, pinv, proj_norm_sq

log = logging.getLogger(__name__)

# |eps| beyond which the first-order expansion behind MML is not trusted.
MML_EPS_VALIDITY = 0.10
ALGORITHMS = ("ML", "MML", "SML")


class EmptyGrid(ValueError):
    pass


class ZeroDenominator(ArithmeticError):
    pass


def _lattice(lo: float, hi: float, step: float) -> np.ndarray:
    if step <= 0:
        raise EmptyGrid(f"grid step must be positive, got {step}")
    if lo > hi:
        raise EmptyGrid(f"grid minimum {lo} exceeds maximum {hi}")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


@dataclass(frozen=True)
class GridSpec:
    """Search lattices ``(min, max, step)`` for eps and eta, ``(min, max)`` for theta.

    `window` is the timing window ``(lo, hi)`` of the zero-padded model used
    by the CFO/SFO searches; ``None`` means the configuration default
    ``(0, theta_max)``.  It is independent of the theta search range.
    """

    eps: tuple[float, float, float]
    eta: tuple[float, float, float]
    theta: tuple[int, int]
    window: tuple[int, int] | None = None

    @property
    def eps_points(self) -> np.ndarray:
        return _lattice(*self.eps)

    @property
    def eta_points(self) -> np.ndarray:
        return _lattice(*self.eta)

    @property
    def theta_points(self) -> np.ndarray:
        lo, hi = self.theta
        if int(lo) != lo or int(hi) != hi:
            raise EmptyGrid("theta bounds must be integers")
        if lo > hi:
            raise EmptyGrid(f"theta minimum {lo} exceeds maximum {hi}")
        return np.arange(int(lo), int(hi) + 1)

    @property
    def counts(self) -> tuple[int, int, int]:
        return len(self.eps_points), len(self.eta_points), len(self.theta_points)

    def check(self, cfg: SystemConfig) -> None:
        lo, hi = self.theta
        if min(lo, hi) < -cfg.theta_max or max(lo, hi) > cfg.theta_max:
            raise ValueError(f"theta grid {self.theta} exceeds +-theta_max={cfg.theta_max}")
        window_delays(cfg, self.window)
        self.counts  # raises EmptyGrid

    @classmethod
    def symmetric(cls, eps_max, eps_step, eta_max, eta_step, theta_max,
                  window=None) -> "GridSpec":
        return cls((-eps_max, eps_max, eps_step), (-eta_max, eta_max, eta_step),
                   (-theta_max, theta_max), window)


def search_points(algorithm: str, grid: GridSpec) -> int:
    """Number of cost evaluations an algorithm spends on `grid`."""
    g_eps, g_eta, g_theta = grid.counts
    return {"ML": g_eps * g_eta + g_theta,
            "MML": g_eta + g_theta,
            "SML": g_eps * g_theta + g_eta}[algorithm.upper()]


@dataclass
class EstimationResult:
    algorithm: str
    eps: float
    eta: float
    theta: int
    h: ChannelState
    costs: dict = field(default_factory=dict)
    n_evals: int = 0
    n_skipped: int = 0
    flags: list = field(default_factory=list)
    surface: dict = field(default_factory=dict, repr=False)
    elapsed: float = 0.0

    def to_dict(self) -> dict:
        h = self.h.stacked()
        return {
            "algorithm": self.algorithm,
            "eps": self.eps,
            "eta": self.eta,
            "theta": self.theta,
            "h_real": h.real.tolist(),
            "h_imag": h.imag.tolist(),
            "costs": self.costs,
            "n_evals": self.n_evals,
            "n_skipped": self.n_skipped,
            "flags": list(self.flags),
        }


# -- point-wise cost functions ------------------------------------------------

def _check_r(cfg: SystemConfig, r) -> np.ndarray:
    r = np.asarray(r, dtype=np.complex128).reshape(-1)
    if r.size != cfg.n_subcarriers * cfg.n_rx:
        raise ValueError(f"received vector has {r.size} entries, expected "
                         f"{cfg.n_subcarriers * cfg.n_rx}")
    return r


def cost_J1(cfg, training, r, eps, eta, window=None) -> float:
    """``||P_{A1(eps, eta)} r||^2``."""
    return proj_norm_sq(build_A1(cfg, training, eps, eta, window), _check_r(cfg, r))


def cost_J2(cfg, training, r, eps, eta, theta) -> float:
    """``||P_{A(eps, eta, theta)} r||^2``; also the SML costs J4 and J5."""
    return proj_norm_sq(build_A(cfg, training, eps, eta, theta), _check_r(cfg, r))


cost_J4 = cost_J2
cost_J5 = cost_J2


def exact_mml_cost(cfg, training, r, eps, eta, window=None) -> float:
    """Residual energy ``d^T C C^H d*`` that the MML quadratic approximates."""
    r = _check_r(cfg, r)
    return float(np.real(np.vdot(r, r))) - cost_J1(cfg, training, r, eps, eta, window)


def mml_ramp(cfg: SystemConfig, eta: float, ramp_origin: float | None = None) -> np.ndarray:
    """Per-antenna ``c1 = 2 pi (1 + eta)/N (n - ramp_origin)``.

    ``ramp_origin=0`` expands ``d ≈ 1 + j eps c1`` about the first sample,
    i.e. ``c1`` is built from ``diag(C1)`` as written.  The exact cost is
    unchanged by a common phase on ``d`` (it is absorbed by the channel), so
    the default mid-block origin ``(N-1)/2`` describes the same model with a
    linearization error about four times smaller.
    """
    n = cfg.n_subcarriers
    if ramp_origin is None:
        ramp_origin = (n - 1) / 2.0
    return 2 * np.pi * (1 + eta) / n * (np.arange(n) - ramp_origin)


def mml_eps_given_eta(cfg, training, r, eta, window=None,
                      ramp_origin: float | None = None) -> tuple[float, float]:
    """Closed-form CFO estimate at a given SFO and the MML cost ``J3(eta)``.

    With ``C = R^H (I - I ⊗ P_{A2})`` and ``c1 = 2 pi (1 + eta)/N diag(I ⊗ C1)``:

        eps_hat = c1^T Im(C C^H) 1 / c1^T Re(C C^H) c1
        J3 = 1^T C C^H 1 + eps_hat^2 c1^T Re(C C^H) c1 - 2 eps_hat c1^T Im(C C^H) 1
    """
    r = _check_r(cfg, r)
    a2 = _f1(cfg.n_subcarriers, eta) @ block_matrix(cfg, training, window_delays(cfg, window))
    q = orth_basis(a2)
    rows = r.reshape(cfg.n_rx, -1)
    return _mml_terms(q, rows, mml_ramp(cfg, eta, ramp_origin))


def _mml_quadratic(q, rows, c1):
    """``(1^T CC^H 1, c1^T Im(CC^H) 1, c1^T Re(CC^H) c1)`` without forming ``C``."""
    x = np.concatenate([rows, c1 * rows])           # (2 n_rx, N)
    resid = x - (x @ q.conj()) @ q.T                # rows of (I - P) x
    n_rx = rows.shape[0]
    r_res, c_res = resid[:n_rx], resid[n_rx:]
    ones_q = np.real(np.sum(rows.conj() * r_res))            # 1^T CC^H 1 = r^H (I-P) r
    im_q = np.sum(c1 * np.imag(rows.conj() * r_res))         # c1^T Im(CC^H) 1
    re_q = np.real(np.sum((c1 * rows).conj() * c_res))       # c1^T Re(CC^H) c1
    return float(ones_q), float(im_q), float(re_q)


def mml_quadratic_cost(cfg, training, r, eps, eta, window=None,
                       ramp_origin: float | None = None) -> float:
    """Second-order approximation of `exact_mml_cost` at an arbitrary `eps`.

    ``1^T CC^H 1 + eps^2 c1^T Re(CC^H) c1 - 2 eps c1^T Im(CC^H) 1``, which
    equals ``J3`` when evaluated at the closed-form estimate.
    """
    r = _check_r(cfg, r)
    a2 = _f1(cfg.n_subcarriers, eta) @ block_matrix(cfg, training, window_delays(cfg, window))
    ones_q, im_q, re_q = _mml_quadratic(orth_basis(a2), r.reshape(cfg.n_rx, -1),
                                        mml_ramp(cfg, eta, ramp_origin))
    return ones_q + eps ** 2 * re_q - 2 * eps * im_q


def _mml_terms(q, rows, c1):
    ones_q, im_q, re_q = _mml_quadratic(q, rows, c1)
    scale = max(float(np.real(np.vdot(rows, rows))), np.finfo(float).tiny)
    if not re_q > 1e-13 * scale * float(np.max(np.abs(c1))) ** 2:
        raise ZeroDenominator("c1^T Re(CC^H) c1 vanishes; received vector is degenerate")
    eps_hat = im_q / re_q
    j3 = ones_q + eps_hat ** 2 * re_q - 2 * eps_hat * im_q
    return float(eps_hat), float(j3)


# -- cached search machinery --------------------------------------------------

def _bases_or_skip(stack: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases for a stack of matrices; ill-posed members are masked."""
    q, rr = np.linalg.qr(stack)
    cond = np.linalg.cond(rr) ** 2
    ok = np.isfinite(cond) & (cond <= COND_CEILING)
    for lab in np.asarray(labels)[~ok]:
        log.warning("skipping grid point %s: model matrix is rank deficient", lab)
    return q, ok


def _energy(q: np.ndarray, rows: np.ndarray, ramps: np.ndarray) -> np.ndarray:
    """``sum_v ||q^H diag(ramp)^H r_v||^2`` for every ramp in `ramps`."""
    y = ramps.conj()[:, None, :] * rows[None, :, :]
    z = y.reshape(-1, rows.shape[1]) @ q.conj()
    return np.sum(np.abs(z) ** 2, axis=1).reshape(len(ramps), -1).sum(axis=1)


class SearchCache:
    """Per-(config, training, grid) precomputation shared across received vectors."""

    def __init__(self, cfg: SystemConfig, training: TrainingMatrix, grid: GridSpec):
        grid.check(cfg)
        self.cfg, self.training, self.grid = cfg, training, grid
        self.window = cfg.default_window() if grid.window is None else tuple(grid.window)
        self.delays = window_delays(cfg, self.window)
        # delays covered by every theta hypothesis, for the timing search
        self.span = tuple(int(t) for t in grid.theta)
        self.span_delays = np.arange(self.span[0], self.span[1] + cfg.max_taps)
        self._eta_bases = None
        self._theta_bases = None

    @property
    def eta_bases(self):
        """Bases of ``A2(eta)`` for every eta on the grid."""
        if self._eta_bases is None:
            n = self.cfg.n_subcarriers
            x_pad = block_matrix(self.cfg, self.training, self.delays)
            etas = self.grid.eta_points
            stack = np.stack([_f1(n, eta) @ x_pad for eta in etas])
            self._eta_bases = _bases_or_skip(stack, [f"eta={e:.6g}" for e in etas])
        return self._eta_bases

    @property
    def theta_bases(self):
        """Bases of ``F1(0) G(theta) X1`` for every theta on the grid (SML stage 1)."""
        if self._theta_bases is None:
            n = self.cfg.n_subcarriers
            f1 = _f1(n, 0.0)
            x1 = block_matrix(self.cfg, self.training, np.arange(self.cfg.max_taps))
            thetas = self.grid.theta_points
            stack = np.stack([f1 @ (timing_ramp(n, t)[:, None] * x1) for t in thetas])
            self._theta_bases = _bases_or_skip(stack, [f"theta={t}" for t in thetas])
        return self._theta_bases

    def timing_subspaces(self, eta: float) -> tuple[np.ndarray, np.ndarray]:
        """Bases of ``F1(eta) G(theta) X1`` for all theta.

        ``G(theta) F2`` is the DFT block of delays ``theta, ..., theta + L_m - 1``,
        so every hypothesis is a column pick of one block spanning the search range.
        """
        n, taps = self.cfg.n_subcarriers, self.cfg.max_taps
        width = len(self.span_delays)
        a2 = _f1(n, eta) @ block_matrix(self.cfg, self.training, self.span_delays)
        thetas = self.grid.theta_points
        lo = self.span[0]
        cols = [np.concatenate([u * width + np.arange(t - lo, t - lo + taps)
                                for u in range(self.cfg.n_tx)]) for t in thetas]
        return _bases_or_skip(np.stack([a2[:, c] for c in cols]),
                              [f"theta={t}" for t in thetas])


def _argmax_first(values: np.ndarray, ok: np.ndarray) -> int:
    masked = np.where(ok, values, -np.inf)
    if not np.any(np.isfinite(masked)):
        raise RankDeficient(np.inf)
    return int(np.argmax(masked))   # first maximum in scan order


def _timing_search(cache: SearchCache, rows, eps, eta):
    q, ok = cache.timing_subspaces(eta)
    ramp = cfo_ramp(cache.cfg.n_subcarriers, eps, eta)[None, :]
    j2 = np.array([_energy(q[k], rows, ramp)[0] if ok[k] else -np.inf
                   for k in range(len(q))])
    k = _argmax_first(j2, ok)
    return int(cache.grid.theta_points[k]), j2, int(np.sum(~ok))


def _channel_ls(cfg, training, rows, eps, eta, theta) -> ChannelState:
    """``h_hat = pinv(A_hat) r``, solved antenna by antenna."""
    n = cfg.n_subcarriers
    x1 = block_matrix(cfg, training, np.arange(cfg.max_taps))
    b = cfo_ramp(n, eps, eta)[:, None] * (_f1(n, eta) @ (timing_ramp(n, theta)[:, None] * x1))
    h = pinv(b) @ rows.T
    return ChannelState(h.T.reshape(cfg.n_rx, cfg.n_tx, cfg.max_taps))


def _finish(cache, rows, algorithm, eps, eta, extra_evals, skipped, t0, surface, costs):
    theta, j2, skip_t = _timing_search(cache, rows, eps, eta)
    h = _channel_ls(cache.cfg, cache.training, rows, eps, eta, theta)
    surface["J2"] = j2
    costs["J2"] = float(np.max(j2))
    return EstimationResult(
        algorithm=algorithm, eps=float(eps), eta=float(eta), theta=theta, h=h,
        costs=costs, n_evals=extra_evals + len(j2), n_skipped=skipped + skip_t,
        surface=surface, elapsed=time.perf_counter() - t0)


def _same_geometry(a: SystemConfig, b: SystemConfig) -> bool:
    # bases do not depend on the noise level
    return dataclasses.replace(a, noise_var=0.0) == dataclasses.replace(b, noise_var=0.0)


def _prepare(cfg, training, r, grid, cache):
    if cache is None:
        cache = SearchCache(cfg, training, grid)
    elif (cache.grid != grid or not _same_geometry(cache.cfg, cfg)
          or cache.training is not training):
        raise ValueError("search cache was built for a different configuration")
    r = _check_r(cfg, r)
    return cache, r.reshape(cfg.n_rx, cfg.n_subcarriers)


def ml_estimate(cfg: SystemConfig, training: TrainingMatrix, r, grid: GridSpec,
                cache: SearchCache | None = None) -> EstimationResult:
    """Joint ML: 2-D (eps, eta) search on J1, 1-D theta search on J2, LS channel."""
    t0 = time.perf_counter()
    cache, rows = _prepare(cfg, training, r, grid, cache)
    eps_pts, eta_pts = grid.eps_points, grid.eta_points
    q, ok = cache.eta_bases
    j1 = np.full((len(eps_pts), len(eta_pts)), -np.inf)
    for j, eta in enumerate(eta_pts):
        if ok[j]:
            j1[:, j] = _energy(q[j], rows, cfo_ramp(cfg.n_subcarriers, eps_pts, eta))
    ok2 = np.broadcast_to(ok[None, :], j1.shape)
    i, j = np.unravel_index(_argmax_first(j1.ravel(), ok2.ravel()), j1.shape)
    skipped = int(np.sum(~ok2))
    return _finish(cache, rows, "ML", eps_pts[i], eta_pts[j], j1.size, skipped, t0,
                   {"J1": j1}, {"J1": float(j1[i, j])})


def mml_estimate(cfg: SystemConfig, training: TrainingMatrix, r, grid: GridSpec,
                 cache: SearchCache | None = None,
                 ramp_origin: float | None = None) -> EstimationResult:
    """Modified ML: 1-D eta search on J3 with closed-form eps, then as ML.

    `ramp_origin` is forwarded to `mml_ramp`; pass ``0.0`` for the ramp
    anchored at the first sample.
    """
    t0 = time.perf_counter()
    cache, rows = _prepare(cfg, training, r, grid, cache)
    eta_pts = grid.eta_points
    q, ok = cache.eta_bases
    ok = ok.copy()
    eps_hat = np.zeros(len(eta_pts))
    j3 = np.full(len(eta_pts), np.inf)
    for j, eta in enumerate(eta_pts):
        if not ok[j]:
            continue
        try:
            eps_hat[j], j3[j] = _mml_terms(q[j], rows, mml_ramp(cfg, eta, ramp_origin))
        except ZeroDenominator:
            log.warning("skipping eta=%.6g: MML denominator vanishes", eta)
            ok[j] = False
    if not np.any(ok):
        raise ZeroDenominator("no eta grid point gave a usable MML cost")
    j = _argmax_first(-j3, ok)
    flags = []
    if abs(eps_hat[j]) > MML_EPS_VALIDITY:
        flags.append("eps_outside_small_offset_range")
    res = _finish(cache, rows, "MML", eps_hat[j], eta_pts[j], len(eta_pts),
                  int(np.sum(~ok)), t0, {"J3": j3, "eps_of_eta": eps_hat},
                  {"J3": float(j3[j])})
    res.flags.extend(flags)
    return res


def sml_estimate(cfg: SystemConfig, training: TrainingMatrix, r, grid: GridSpec,
                 cache: SearchCache | None = None) -> EstimationResult:
    """Stage-wise ML: (eps, theta) with eta = 0, then eta at those estimates."""
    t0 = time.perf_counter()
    cache, rows = _prepare(cfg, training, r, grid, cache)
    n = cfg.n_subcarriers
    eps_pts, eta_pts, theta_pts = grid.eps_points, grid.eta_points, grid.theta_points
    q, ok = cache.theta_bases
    ramps = cfo_ramp(n, eps_pts, 0.0)
    j4 = np.full((len(eps_pts), len(theta_pts)), -np.inf)
    for k in range(len(theta_pts)):
        if ok[k]:
            j4[:, k] = _energy(q[k], rows, ramps)
    ok4 = np.broadcast_to(ok[None, :], j4.shape)
    i, k = np.unravel_index(_argmax_first(j4.ravel(), ok4.ravel()), j4.shape)
    eps_hat, theta_hat = float(eps_pts[i]), int(theta_pts[k])

    x1 = block_matrix(cfg, training, np.arange(cfg.max_taps))
    gx1 = timing_ramp(n, theta_hat)[:, None] * x1
    q5, ok5 = _bases_or_skip(np.stack([_f1(n, eta) @ gx1 for eta in eta_pts]),
                             [f"eta={e:.6g}" for e in eta_pts])
    j5 = np.array([_energy(q5[j], rows, cfo_ramp(n, eps_hat, eta)[None, :])[0]
                   if ok5[j] else -np.inf for j, eta in enumerate(eta_pts)])
    j = _argmax_first(j5, ok5)
    eta_hat = float(eta_pts[j])
    h = _channel_ls(cfg, training, rows, eps_hat, eta_hat, theta_hat)
    return EstimationResult(
        algorithm="SML", eps=eps_hat, eta=eta_hat, theta=theta_hat, h=h,
        costs={"J4": float(j4[i, k]), "J5": float(j5[j])},
        n_evals=j4.size + len(j5), n_skipped=int(np.sum(~ok4) + np.sum(~ok5)),
        surface={"J4": j4, "J5": j5}, elapsed=time.perf_counter() - t0)


ESTIMATORS = {"ML": ml_estimate, "MML": mml_estimate, "SML": sml_estimate}


def estimate(algorithm: str, cfg, training, r, grid, cache=None) -> EstimationResult:
    try:
        fn = ESTIMATORS[algorithm.upper()]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}") from None
    return fn(cfg, training, r, grid, cache)


def p_tf(results, true_theta: int, p: int = 1) -> float:
    """Fraction of results with ``|theta_hat - theta| >= p``."""
    if p < 1:
        raise ValueError("p must be at least 1")
    thetas = [res.theta if hasattr(res, "theta") else res for res in results]
    if not thetas:
        raise ValueError("p_tf needs at least one result")
    return float(np.mean([abs(t - true_theta) >= p for t in thetas]))
