"""Dense complex linear algebra used by the model builders and estimators.

Matrices are plain ``complex128`` numpy arrays in C order.  Everything here
is a pure function of its inputs.
"""

from __future__ import annotations

import numpy as np

# Largest condition number of A^H A accepted before a solve is refused.
COND_CEILING = 1e12
# Relative residual ||A pinv(A) A - A|| tolerated by pinv.
SOLVE_RTOL = 1e-9


class RankDeficient(np.linalg.LinAlgError):
    """Raised when a model matrix is too ill-conditioned to project onto."""

    def __init__(self, cond: float, ceiling: float = COND_CEILING):
        self.cond = cond
        self.ceiling = ceiling
        super().__init__(
            f"condition number of A^H A is {cond:.3e} (ceiling {ceiling:.1e}); "
            "training design is degenerate for this model"
        )


def as_cmatrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def kron(a, b) -> np.ndarray:
    """Kronecker product ``a ⊗ b``."""
    return np.kron(as_cmatrix(a), as_cmatrix(b))


def hadamard(a, b) -> np.ndarray:
    """Entrywise product of two equally sized matrices."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise ValueError(f"hadamard: dimension mismatch {a.shape} vs {b.shape}")
    return a * b


def herm(a) -> np.ndarray:
    """Conjugate transpose of the trailing two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def _check_gram(gram: np.ndarray, ceiling: float) -> None:
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > ceiling:
        raise RankDeficient(float(cond), ceiling)


def pinv(a, cond_ceiling: float = COND_CEILING) -> np.ndarray:
    """Left pseudo-inverse ``(A^H A)^{-1} A^H`` of a tall full-column-rank matrix.

    Raises
    ------
    RankDeficient
        If ``cond(A^H A)`` exceeds `cond_ceiling` or `a` is wide.
    """
    a = as_cmatrix(a)
    if a.shape[0] < a.shape[1]:
        raise RankDeficient(np.inf, cond_ceiling)
    gram = herm(a) @ a
    _check_gram(gram, cond_ceiling)
    return np.linalg.solve(gram, herm(a))


def orth_basis(a, cond_ceiling: float = COND_CEILING) -> np.ndarray:
    """Orthonormal basis of the column space of `a` (reduced QR).

    Accepts a stack of matrices ``(..., m, n)``; the condition check is
    applied to every member of the stack.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.shape[-2] < a.shape[-1]:
        raise RankDeficient(np.inf, cond_ceiling)
    q, r = np.linalg.qr(a)
    # cond(A^H A) = cond(R)^2
    cond = np.linalg.cond(r) ** 2
    worst = np.max(cond) if np.ndim(cond) else cond
    if not np.isfinite(worst) or worst > cond_ceiling:
        raise RankDeficient(float(worst), cond_ceiling)
    return q


def proj_norm_sq(a, r, cond_ceiling: float = COND_CEILING) -> float:
    """Energy ``||P_A r||^2`` of `r` inside the column space of `a`.

    The projection matrix is never formed; the norm is taken on the
    coordinates ``Q^H r`` of the least-squares fit.
    """
    a = as_cmatrix(a)
    r = np.asarray(r, dtype=np.complex128)
    if a.shape[0] != r.shape[0]:
        raise ValueError(f"proj_norm_sq: A has {a.shape[0]} rows, r has {r.shape[0]}")
    q = orth_basis(a, cond_ceiling)
    coords = herm(q) @ r
    return float(np.real(np.vdot(coords, coords)))
