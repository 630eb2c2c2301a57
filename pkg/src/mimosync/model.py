"""Structured matrices of the impaired MIMO-OFDM training block.

The received training block, stacked over the ``N_R`` receive antennas, is

    r = A(eps, eta, theta) h + w,
    A = I_{N_R} ⊗ (D(eps, eta) F1(eta) G(theta) X (I_{N_T} ⊗ F2))

with ``D`` the CFO phase ramp (scaled by the SFO), ``F1`` the SFO-stretched
inverse DFT, ``G`` the timing phase ramp, ``X`` the block of diagonal
frequency-domain training matrices and ``F2`` the truncated DFT that maps
the ``L_m`` channel taps to the channel frequency response.

The zero-padded representation used by the estimators replaces
``G(theta) F2`` by a wider DFT block whose columns are the delays
``lo, ..., hi + L_m - 1`` of a timing window ``[lo, hi]``; any timing error
inside the window is then a column selection of that block.  The default
window is ``[0, theta_max]`` (``L_m + theta_max`` columns per transmit
antenna).  Negative timing errors are covered by shifting the window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import kron

QPSK_PHASES = np.pi / 4 * np.array([1, 3, 5, 7])


@dataclass(frozen=True)
class SystemConfig:
    """Dimensions of the training block and the receiver noise level.

    Attributes
    ----------
    n_subcarriers : int
        Subcarriers per antenna, ``N``.
    n_tx, n_rx : int
        Transmit / receive antenna counts.
    max_taps : int
        Maximum channel length ``L_m`` in samples.
    theta_max : int
        Largest timing error magnitude; hypotheses span ``[-theta_max, theta_max]``.
    cp_len : int
        Cyclic prefix length, must exceed ``L_m + theta_max``.
    noise_var : float
        Complex noise variance per received sample.
    """

    n_subcarriers: int
    n_tx: int
    n_rx: int
    max_taps: int
    theta_max: int
    cp_len: int
    noise_var: float = 0.0

    def __post_init__(self):
        for name in ("n_subcarriers", "n_tx", "n_rx", "max_taps", "cp_len"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.theta_max < 0:
            raise ValueError("theta_max must be nonnegative")
        if self.noise_var < 0:
            raise ValueError("noise_var must be nonnegative")
        if self.cp_len <= self.max_taps + self.theta_max:
            raise ValueError(
                f"cp_len={self.cp_len} must exceed max_taps + theta_max "
                f"= {self.max_taps + self.theta_max}"
            )
        if self.n_subcarriers < self.n_tx * self.padded_taps:
            raise ValueError(
                f"n_subcarriers={self.n_subcarriers} is smaller than "
                f"n_tx * (max_taps + theta_max) = {self.n_tx * self.padded_taps}; "
                "the padded model would not have full column rank"
            )

    @property
    def padded_taps(self) -> int:
        """Columns per transmit antenna of the zero-padded model."""
        return self.max_taps + self.theta_max

    @property
    def n_channel(self) -> int:
        """Length of the stacked channel vector, ``N_R N_T L_m``."""
        return self.n_rx * self.n_tx * self.max_taps

    def default_window(self) -> tuple[int, int]:
        """Padding window ``[0, theta_max]`` used when none is given."""
        return (0, self.theta_max)


@dataclass(frozen=True)
class Impairments:
    """Normalized CFO ``eps``, SFO ``eta`` and integer timing error ``theta``."""

    eps: float
    eta: float
    theta: int

    def __post_init__(self):
        if not (np.isfinite(self.eps) and np.isfinite(self.eta)):
            raise ValueError("eps and eta must be finite")
        if int(self.theta) != self.theta:
            raise ValueError("theta must be an integer number of samples")
        object.__setattr__(self, "theta", int(self.theta))

    def check(self, cfg: SystemConfig) -> None:
        if abs(self.theta) > cfg.theta_max:
            raise ValueError(f"|theta|={abs(self.theta)} exceeds theta_max={cfg.theta_max}")


@dataclass
class ChannelState:
    """Channel taps indexed ``taps[v, u, l]`` (rx antenna, tx antenna, delay)."""

    taps: np.ndarray

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.complex128)
        if self.taps.ndim != 3:
            raise ValueError("taps must have shape (n_rx, n_tx, n_taps)")

    def stacked(self) -> np.ndarray:
        """``[h_1; ...; h_{N_R}]`` with ``h_v = [h_{1,v}; ...; h_{N_T,v}]``."""
        return self.taps.reshape(-1).copy()

    @classmethod
    def unstack(cls, h, cfg: SystemConfig) -> "ChannelState":
        h = np.asarray(h, dtype=np.complex128)
        if h.size != cfg.n_channel:
            raise ValueError(f"expected {cfg.n_channel} channel entries, got {h.size}")
        return cls(h.reshape(cfg.n_rx, cfg.n_tx, cfg.max_taps))


@dataclass(frozen=True)
class ChannelProfile:
    """Average power of each channel tap."""

    powers: tuple[float, ...]

    def __post_init__(self):
        if len(self.powers) == 0:
            raise ValueError("channel profile is empty")
        if any(p < 0 for p in self.powers):
            raise ValueError("tap powers must be nonnegative")

    @classmethod
    def exponential(cls, n_taps: int, decay_db_per_tap: float = 1.0) -> "ChannelProfile":
        """Exponentially decaying profile normalized to unit total power."""
        p = 10.0 ** (-decay_db_per_tap * np.arange(n_taps) / 10.0)
        return cls(tuple(float(x) for x in p / p.sum()))


@dataclass
class TrainingMatrix:
    """Frequency-domain training symbols ``symbols[u, k]``."""

    symbols: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.complex128)
        if self.symbols.ndim != 2:
            raise ValueError("symbols must have shape (n_tx, n_subcarriers)")

    def as_block(self) -> np.ndarray:
        """``X = [X_1, ..., X_{N_T}]`` with ``X_u = diag(symbols[u])``."""
        n_tx, n = self.symbols.shape
        x = np.zeros((n, n * n_tx), dtype=np.complex128)
        for u in range(n_tx):
            x[:, u * n:(u + 1) * n] = np.diag(self.symbols[u])
        return x


# -- elementary factors ------------------------------------------------------

def _f1(n: int, eta: float) -> np.ndarray:
    idx = np.arange(n)
    return np.exp(2j * np.pi * np.outer(idx * (1.0 + eta), idx) / n) / n


def _dft_cols(n: int, delays) -> np.ndarray:
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, np.asarray(delays)) / n)


def cfo_ramp(n: int, eps, eta) -> np.ndarray:
    """Diagonal of ``D(eps, eta)``; broadcasts over array-valued `eps`."""
    eps = np.asarray(eps, dtype=float)
    return np.exp(2j * np.pi * np.multiply.outer(eps * (1.0 + eta), np.arange(n)) / n)


def timing_ramp(n: int, theta: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(n) * theta / n)


def build_F1(cfg: SystemConfig, eta: float) -> np.ndarray:
    """``[F1]_{n,k} = exp(j 2 pi k n (1 + eta) / N) / N``."""
    return _f1(cfg.n_subcarriers, eta)


def build_F2(cfg: SystemConfig, cols: int, start: int = 0) -> np.ndarray:
    """``N x cols`` truncated DFT with delays ``start, ..., start + cols - 1``."""
    return _dft_cols(cfg.n_subcarriers, np.arange(start, start + cols))


def build_D(cfg: SystemConfig, eps: float, eta: float) -> np.ndarray:
    return np.diag(cfo_ramp(cfg.n_subcarriers, eps, eta))


def build_G(cfg: SystemConfig, theta: int) -> np.ndarray:
    if abs(theta) > cfg.theta_max:
        raise ValueError(f"|theta|={abs(theta)} exceeds theta_max={cfg.theta_max}")
    return np.diag(timing_ramp(cfg.n_subcarriers, theta))


def block_matrix(cfg: SystemConfig, training: TrainingMatrix, delays) -> np.ndarray:
    """``X (I_{N_T} ⊗ F)`` where ``F`` holds the DFT columns for `delays`."""
    f = _dft_cols(cfg.n_subcarriers, delays)
    # X_u is diagonal, so X_u F is a row scaling of F.
    return np.hstack([training.symbols[u][:, None] * f for u in range(cfg.n_tx)])


def per_antenna_A(cfg: SystemConfig, training: TrainingMatrix,
                  eps: float, eta: float, theta: int) -> np.ndarray:
    """Single-antenna factor ``D F1 G X (I ⊗ F2)`` of ``A``."""
    n = cfg.n_subcarriers
    x1 = block_matrix(cfg, training, np.arange(cfg.max_taps))
    m = _f1(n, eta) @ (timing_ramp(n, theta)[:, None] * x1)
    return cfo_ramp(n, eps, eta)[:, None] * m


def build_A(cfg: SystemConfig, training: TrainingMatrix,
            eps: float, eta: float, theta: int) -> np.ndarray:
    if abs(theta) > cfg.theta_max:
        raise ValueError(f"|theta|={abs(theta)} exceeds theta_max={cfg.theta_max}")
    return kron(np.eye(cfg.n_rx), per_antenna_A(cfg, training, eps, eta, theta))


def window_delays(cfg: SystemConfig, window=None) -> np.ndarray:
    """Tap delays ``lo, ..., hi + L_m - 1`` spanned by the window ``(lo, hi)``."""
    lo, hi = cfg.default_window() if window is None else window
    if int(lo) != lo or int(hi) != hi:
        raise ValueError("timing window bounds must be integers")
    if lo > hi or min(lo, hi) < -cfg.theta_max or max(lo, hi) > cfg.theta_max:
        raise ValueError(f"timing window {window} outside +-theta_max={cfg.theta_max}")
    width = int(hi - lo) + cfg.max_taps
    if cfg.n_tx * width > cfg.n_subcarriers:
        raise ValueError(f"timing window {window} needs n_tx*{width} = {cfg.n_tx * width} "
                         f"columns but only {cfg.n_subcarriers} subcarriers exist")
    return np.arange(int(lo), int(hi) + cfg.max_taps)


def build_A2(cfg: SystemConfig, training: TrainingMatrix, eta: float,
             window=None) -> np.ndarray:
    """``A2 = F1(eta) X (I ⊗ F2pad)``, one receive antenna."""
    delays = window_delays(cfg, window)
    return _f1(cfg.n_subcarriers, eta) @ block_matrix(cfg, training, delays)


def build_A1(cfg: SystemConfig, training: TrainingMatrix, eps: float, eta: float,
             window=None) -> np.ndarray:
    """``A1 = I_{N_R} ⊗ (D A2)``; independent of the timing error."""
    a2 = build_A2(cfg, training, eta, window)
    return kron(np.eye(cfg.n_rx), cfo_ramp(cfg.n_subcarriers, eps, eta)[:, None] * a2)


def pad_channel(cfg: SystemConfig, ch: ChannelState, theta: int, window=None) -> np.ndarray:
    """Stacked zero-padded channel ``h_theta`` such that ``A h = A1 h_theta``.

    Each link gets ``theta - lo`` leading zeros and ``hi - theta`` trailing
    zeros, where ``(lo, hi)`` is the timing window.
    """
    lo, hi = cfg.default_window() if window is None else window
    if not lo <= theta <= hi:
        raise ValueError(f"theta={theta} outside timing window [{lo}, {hi}]")
    taps = ch.taps
    padded = np.zeros(taps.shape[:2] + (taps.shape[2] + hi - lo,), dtype=np.complex128)
    padded[:, :, theta - lo:theta - lo + taps.shape[2]] = taps
    return padded.reshape(-1)


# -- random draws ------------------------------------------------------------

def generate_training(cfg: SystemConfig, seed=None) -> TrainingMatrix:
    """I.i.d. unit-modulus QPSK training symbols."""
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, 4, size=(cfg.n_tx, cfg.n_subcarriers))
    return TrainingMatrix(np.exp(1j * QPSK_PHASES[idx]))


def generate_channel(cfg: SystemConfig, profile: ChannelProfile | None = None,
                     seed=None) -> ChannelState:
    """Independent Rayleigh taps with variances given by `profile`."""
    if profile is None:
        profile = ChannelProfile.exponential(cfg.max_taps)
    p = np.asarray(profile.powers, dtype=float)
    if p.size > cfg.max_taps:
        raise ValueError(f"profile has {p.size} taps, max_taps is {cfg.max_taps}")
    p = np.concatenate([p, np.zeros(cfg.max_taps - p.size)])
    rng = np.random.default_rng(seed)
    shape = (cfg.n_rx, cfg.n_tx, cfg.max_taps)
    g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return ChannelState(g * np.sqrt(p / 2.0))


def noiseless(cfg: SystemConfig, training: TrainingMatrix, imp: Impairments,
              ch: ChannelState) -> np.ndarray:
    """Mean ``A h`` of the received vector, computed antenna by antenna."""
    imp.check(cfg)
    a = per_antenna_A(cfg, training, imp.eps, imp.eta, imp.theta)
    h = ch.taps.reshape(cfg.n_rx, -1)
    return (a @ h.T).T.reshape(-1)


def synthesize(cfg: SystemConfig, training: TrainingMatrix, imp: Impairments,
               ch: ChannelState, seed=None) -> np.ndarray:
    """Received vector ``r = A h + w`` of length ``N N_R``.

    ``w`` is circularly symmetric complex Gaussian with variance
    ``cfg.noise_var`` per entry.  Identical seeds give identical output.
    """
    mu = noiseless(cfg, training, imp, ch)
    if cfg.noise_var == 0:
        return mu
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(mu.size) + 1j * rng.standard_normal(mu.size)
    return mu + np.sqrt(cfg.noise_var / 2.0) * w
