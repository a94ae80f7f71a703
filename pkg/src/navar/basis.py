"""Orthonormal basis expansion and lagged design matrices."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate

from .process_sim import ComponentFunction, TimeSeriesPanel

__all__ = [
    "FourierBasis",
    "IdentityBasis",
    "DesignCache",
    "eval_basis",
    "build_design",
    "default_c0",
    "project_function",
    "gauss_legendre_gram",
]


@dataclass(frozen=True)
class FourierBasis:
    """Trigonometric basis orthonormal on ``[-c0, c0]`` (Lebesgue measure).

    Element 1 is the constant ``1/sqrt(2 c0)``; elements ``2m`` and ``2m+1``
    are ``cos(m pi x / c0)`` and ``sin(m pi x / c0)`` scaled by ``1/sqrt(c0)``.
    Inputs outside the support are clamped to its boundary.
    """

    L: int
    c0: float = math.pi

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError("L must be a positive integer")
        if not self.c0 > 0:
            raise ValueError("c0 must be positive")

    kind = "fourier"

    @property
    def bound(self) -> float:
        if self.L == 1:
            return 1.0 / math.sqrt(2.0 * self.c0)
        return 1.0 / math.sqrt(self.c0)

    def evaluate(self, x) -> np.ndarray:
        """Return an array of shape ``x.shape + (L,)``."""
        x = np.clip(np.asarray(x, dtype=float), -self.c0, self.c0)
        out = np.empty(x.shape + (self.L,))
        out[..., 0] = 1.0 / math.sqrt(2.0 * self.c0)
        if self.L > 1:
            m = np.arange(1, self.L // 2 + 1)
            arg = x[..., None] * (m * math.pi / self.c0)
            scale = 1.0 / math.sqrt(self.c0)
            cos = np.cos(arg) * scale
            sin = np.sin(arg) * scale
            out[..., 1::2] = cos[..., : len(range(1, self.L, 2))]
            out[..., 2::2] = sin[..., : len(range(2, self.L, 2))]
        return out


@dataclass(frozen=True)
class IdentityBasis:
    """Single feature ``psi(x) = x``: turns the estimator into a linear VAR lasso."""

    L: int = 1
    c0: float = math.inf
    kind = "identity"

    def evaluate(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float)[..., None]


Basis = Union[FourierBasis, IdentityBasis]


def eval_basis(basis: Basis, l: int, x):
    """Value of the ``l``-th (1-based) basis function at ``x``."""
    if not 1 <= l <= basis.L:
        raise IndexError(f"basis index {l} outside 1..{basis.L}")
    return basis.evaluate(x)[..., l - 1]


def default_c0(data: np.ndarray) -> float:
    """Support half-width covering every column's mean +/- 3 std."""
    data = np.asarray(data, dtype=float)
    c0 = float(np.max(np.abs(data.mean(axis=0)) + 3.0 * data.std(axis=0)))
    return c0 if c0 > 0 else 1.0


@dataclass(frozen=True, eq=False)
class DesignCache:
    """Lagged basis design for one panel.

    ``psi[k]`` is ``(n-1, L)`` with row ``t`` equal to ``psi(X[t, k])``; the
    matching target row is ``Y[t] = X[t+1]``. ``gram[k]`` is
    ``psi[k].T @ psi[k] / (n-1)``; ``ridge[k]`` is the floor added to it
    before any inverse square root is taken (0 when well conditioned).
    """

    basis: Basis
    psi: np.ndarray  # (p, n-1, L)
    Y: np.ndarray  # (n-1, p)
    gram: np.ndarray  # (p, L, L)
    eigvals: np.ndarray  # (p, L), ascending
    eigvecs: np.ndarray  # (p, L, L)
    ridge: np.ndarray  # (p,)

    @property
    def n(self) -> int:
        """Effective sample size (number of lag pairs)."""
        return self.Y.shape[0]

    @property
    def p(self) -> int:
        return self.Y.shape[1]

    @property
    def L(self) -> int:
        return self.psi.shape[2]

    @property
    def degenerate(self) -> frozenset:
        return frozenset(int(k) for k in np.flatnonzero(self.ridge > 0))

    def gram_power(self, k: int, power: float, ridged: bool = True) -> np.ndarray:
        """``(gram[k] + ridge[k] I) ** power`` from the cached eigendecomposition."""
        w = self.eigvals[k] + (self.ridge[k] if ridged else 0.0)
        if power < 0 and np.any(w <= 0):
            raise np.linalg.LinAlgError("degenerate Gram")
        V = self.eigvecs[k]
        wp = np.where(w > 0, np.abs(w) ** power, 0.0) if power > 0 else w**power
        return (V * wp) @ V.T

    @cached_property
    def inv_sqrt(self) -> np.ndarray:
        return np.stack([self.gram_power(k, -0.5) for k in range(self.p)])

    @cached_property
    def sqrt(self) -> np.ndarray:
        return np.stack([self.gram_power(k, 0.5) for k in range(self.p)])

    @cached_property
    def flat_design(self) -> np.ndarray:
        """``(n-1, p*L)`` design with covariate blocks side by side."""
        return np.concatenate(list(self.psi), axis=1)

    def features(self, x: np.ndarray) -> np.ndarray:
        """Basis features for states ``x`` of shape ``(..., p)`` -> ``(..., p, L)``."""
        return self.basis.evaluate(np.asarray(x, dtype=float))


def build_design(panel: TimeSeriesPanel, basis: Basis, ridge_floor: float = 1e-8) -> DesignCache:
    data = panel.data if isinstance(panel, TimeSeriesPanel) else np.asarray(panel, dtype=float)
    if not np.all(np.isfinite(data)):
        raise ValueError("non-finite values in panel")
    n_lag = data.shape[0] - 1
    if n_lag < 1:
        raise ValueError("need at least two time points")
    if n_lag < basis.L + 1:
        warnings.warn(f"only {n_lag} lag pairs for L={basis.L}; Gram matrices may be singular",
                      RuntimeWarning, stacklevel=2)
    feats = basis.evaluate(data[:-1])  # (n-1, p, L)
    psi = np.ascontiguousarray(np.moveaxis(feats, 1, 0))
    Y = np.array(data[1:])
    gram = np.einsum("kti,ktj->kij", psi, psi) / n_lag
    gram = 0.5 * (gram + np.swapaxes(gram, 1, 2))
    eigvals, eigvecs = np.linalg.eigh(gram)
    ridge = np.where(eigvals[:, 0] < ridge_floor, ridge_floor, 0.0)
    for arr in (psi, Y, gram, eigvals, eigvecs, ridge):
        arr.setflags(write=False)
    return DesignCache(basis, psi, Y, gram, eigvals, eigvecs, ridge)


def gauss_legendre_gram(basis: FourierBasis, nodes: int = 256) -> np.ndarray:
    """``int psi_a psi_b`` over the support by Gauss-Legendre quadrature."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    x = basis.c0 * t
    F = basis.evaluate(x)
    return (F * (w * basis.c0)[:, None]).T @ F


def project_function(
    f: Union[ComponentFunction, Callable],
    basis: FourierBasis,
    L_star: Optional[int] = None,
    grid_size: int = 20001,
):
    """Project ``f`` on the first ``L_star`` basis functions over ``[-c0, c0]``.

    Returns ``(coefficients, remainder_sup, remainder_l2)``; the remainders
    measure ``f`` minus its truncated expansion on the support.
    """
    L_star = basis.L if L_star is None else L_star
    if not 1 <= L_star <= basis.L:
        raise ValueError(f"L_star must lie in 1..{basis.L}")
    fn = f.eval if isinstance(f, ComponentFunction) else f
    c0 = basis.c0
    coefs = np.empty(L_star)
    for l in range(L_star):
        val, err = integrate.quad(lambda x: float(fn(x)) * float(basis.evaluate(x)[l]),
                                  -c0, c0, limit=400, epsabs=1e-13, epsrel=1e-12)
        if not np.isfinite(val) or err > 1e-8:
            raise ArithmeticError(f"quadrature did not converge for basis element {l + 1}")
        coefs[l] = val

    def resid(x):
        x = np.asarray(x, dtype=float)
        return np.asarray(fn(x), dtype=float) - basis.evaluate(x)[..., :L_star] @ coefs

    grid = np.linspace(-c0, c0, grid_size)
    r_sup = float(np.max(np.abs(resid(grid))))
    # composite Gauss-Legendre for the L2 norm of the remainder
    t, w = np.polynomial.legendre.leggauss(64)
    edges = np.linspace(-c0, c0, 4 * L_star + 65)
    half = np.diff(edges) / 2
    mids = (edges[:-1] + edges[1:]) / 2
    xs = (mids[:, None] + half[:, None] * t).ravel()
    ws = (half[:, None] * w).ravel()
    r_l2 = float(math.sqrt(max(np.sum(ws * resid(xs) ** 2), 0.0)))
    return coefs, r_sup, r_l2
