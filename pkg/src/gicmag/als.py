"""Asymmetric least squares baseline fitting.

The fixed-weight step is a Whittaker smoother: minimize
``sum(w * (a - z)**2) + lam * sum(diff(z, d)**2)``. Its normal equations
``(W + lam * D'D) z = W a`` are banded with half-bandwidth ``d`` and are
solved with a banded Cholesky factorization. The asymmetric outer loop
reweights points above the current baseline by ``p`` and points on or
below it by ``1 - p``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded


class SingularSystemError(ValueError):
    """The penalized normal equations are not positive definite."""


@dataclass(frozen=True)
class AlsParams:
    lam: float = 1e6
    p: float = 0.01
    d: int = 2
    max_iter: int = 50
    tol: float = 1e-3

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not 0 < self.p < 1:
            raise ValueError(f"p must be in (0, 1), got {self.p}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be an integer >= 1, got {self.d}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be an integer >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")


@dataclass(frozen=True, eq=False)
class BaselineResult:
    z: np.ndarray
    w: np.ndarray
    iterations: int
    converged: bool


def difference_stencil(d: int) -> np.ndarray:
    """Coefficients of the order-``d`` forward difference, e.g. (1, -2, 1)."""
    return np.array([(-1) ** (d - k) * comb(d, k) for k in range(d + 1)], dtype=np.float64)


def penalty_banded(n: int, d: int) -> np.ndarray:
    """``D'D`` for the order-``d`` difference operator, lower banded layout.

    Row ``s`` holds the ``s``-th subdiagonal: ``out[s, i] = (D'D)[i + s, i]``.
    """
    if n <= d:
        raise ValueError(f"series length {n} must exceed difference order {d}")
    c = difference_stencil(d)
    out = np.zeros((d + 1, n))
    rows = n - d
    # every row of D touches columns j..j+d with weights c
    for a in range(d + 1):
        for b in range(a, d + 1):
            out[b - a, a:a + rows] += c[a] * c[b]
    return out


def diff_transpose(v: np.ndarray, d: int) -> np.ndarray:
    """Apply ``D'`` for the order-``d`` difference operator."""
    for _ in range(d):
        out = np.zeros(len(v) + 1)
        out[:-1] -= v
        out[1:] += v
        v = out
    return v


def whittaker_solve(a, w, lam: float, d: int = 2) -> np.ndarray:
    """Minimize the weighted, difference-penalized least-squares objective.

    Parameters
    ----------
    a : array-like, shape (N,)
        Data values.
    w : array-like, shape (N,)
        Non-negative weights; at least ``d + 1`` must be positive.
    lam : float
        Roughness penalty. ``lam == 0`` returns ``a`` unchanged.
    d : int
        Difference order of the penalty.

    Returns
    -------
    numpy.ndarray, shape (N,)
        The exact minimizer for the given weights.

    Raises
    ------
    SingularSystemError
        If the system is singular, e.g. all weights zero.
    """
    a = np.asarray(a, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n = len(a)
    if a.ndim != 1 or w.shape != a.shape:
        raise ValueError(f"data and weights must be 1-d of equal length ({a.shape} vs {w.shape})")
    if n <= d:
        raise ValueError(f"series length {n} must exceed difference order {d}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if (w < 0).any():
        raise ValueError("weights must be non-negative")
    if np.count_nonzero(w > 0) < d + 1:
        raise SingularSystemError(f"need at least {d + 1} positive weights")
    if lam == 0:
        if (w == 0).any():
            raise SingularSystemError("zero weight with zero penalty")
        return a.copy()

    ab = lam * penalty_banded(n, d)
    ab[0] += w
    # solve for the correction z - a; right-hand side is exactly zero for
    # data already in the penalty's null space
    rhs = -lam * diff_transpose(np.diff(a, d), d)
    try:
        r = solveh_banded(ab, rhs, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise SingularSystemError(f"normal equations not positive definite: {exc}") from None
    return a + r


def als_fit(a, params: AlsParams = AlsParams()) -> BaselineResult:
    """Fit an asymmetric least squares baseline under ``a``.

    Starts from unit weights; each iteration solves the Whittaker system and
    reassigns weights (``p`` where ``a > z``, else ``1 - p``). Stops once the
    fraction of reassigned weights is at most ``tol``. Hitting ``max_iter``
    is not an error; ``converged`` is then False.
    """
    a = np.asarray(a, dtype=np.float64)
    if len(a) <= params.d:
        raise ValueError(f"series length {len(a)} must exceed difference order {params.d}")
    if not np.isfinite(a).all():
        raise ValueError("data contains non-finite values")
    w = np.ones_like(a)
    converged = False
    for it in range(1, params.max_iter + 1):
        z = whittaker_solve(a, w, params.lam, params.d)
        new_w = np.where(a > z, params.p, 1.0 - params.p)
        changed = np.count_nonzero(new_w != w) / len(a)
        w = new_w
        if changed <= params.tol:
            converged = True
            break
    return BaselineResult(z=z, w=w, iterations=it, converged=converged)


def subtract_baseline(a, z) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if a.shape != z.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {z.shape}")
    return a - z
