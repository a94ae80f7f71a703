"""Sparse additive nonlinear VAR(1) processes.

A process is ``X_t = h(X_{t-1}) + eps_t`` with ``h_j(x) = sum_k h_jk(x_k)``.
Indices are 0-based throughout the package: entry ``(j, k)`` is the effect of
variable ``k`` at time ``t-1`` on variable ``j`` at time ``t``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.special import ndtr

__all__ = [
    "ComponentKind",
    "ComponentFunction",
    "F1",
    "F2",
    "F3",
    "F4",
    "F5",
    "ZERO",
    "PAPER_FUNCTIONS",
    "linear",
    "custom",
    "NoiseKind",
    "AdditiveVarSpec",
    "TimeSeriesPanel",
    "PatternKind",
    "PatternSpec",
    "NonstationaryError",
    "lipschitz_matrix",
    "stability_margin",
    "simulate",
    "simulate_batch",
    "coupling_decay",
    "generate_pattern",
    "spec_from_adjacency",
    "paper_design",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class NonstationaryError(ValueError):
    """Raised when the Lipschitz matrix does not contract."""


class ComponentKind(enum.Enum):
    F1_LINEAR = "f1"
    F2_SINE = "f2"
    F3_GAUSS_CDF = "f3"
    F4_GAUSS_BUMP = "f4"
    F5_LOG_ABS = "f5"
    ZERO = "zero"
    LINEAR_COEF = "linear"
    CUSTOM = "custom"


def _f1(x):
    return 0.2 * x


def _f2(x):
    return -0.15 * np.sin(1.5 * x)


def _f3(x):
    return -0.5 * ndtr(x - 0.5)


def _f4(x):
    return 0.2 * x * np.exp(-0.5 * x * x)


def _f5(x):
    return 0.15 * np.log(np.abs(x) + 2.0)


# sup |f'| for each named component, derived by hand
_NAMED = {
    ComponentKind.F1_LINEAR: (_f1, 0.2),
    ComponentKind.F2_SINE: (_f2, 0.15 * 1.5),
    ComponentKind.F3_GAUSS_CDF: (_f3, 0.5 * _INV_SQRT_2PI),
    ComponentKind.F4_GAUSS_BUMP: (_f4, 0.2),
    ComponentKind.F5_LOG_ABS: (_f5, 0.15 / 2.0),
}


@dataclass(frozen=True)
class ComponentFunction:
    """A univariate component ``h_jk`` with a known Lipschitz constant.

    Use the module constants ``F1`` ... ``F5`` and ``ZERO``, or the
    :func:`linear` and :func:`custom` constructors.
    """

    kind: ComponentKind
    coef: float = 0.0
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    lipschitz: Optional[float] = None

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind in _NAMED:
            return _NAMED[self.kind][0](x)
        if self.kind is ComponentKind.ZERO:
            return np.zeros_like(x)
        if self.kind is ComponentKind.LINEAR_COEF:
            return self.coef * x
        out = self.func(x)
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape)

    def lipschitz_constant(self) -> float:
        if self.kind in _NAMED:
            return _NAMED[self.kind][1]
        if self.kind is ComponentKind.ZERO:
            return 0.0
        if self.kind is ComponentKind.LINEAR_COEF:
            return abs(self.coef)
        if self.lipschitz is None or not np.isfinite(self.lipschitz):
            raise ValueError("unbounded component: custom function has no declared Lipschitz constant")
        return float(self.lipschitz)

    @property
    def name(self) -> str:
        if self.kind is ComponentKind.LINEAR_COEF:
            return f"linear:{self.coef!r}"
        return self.kind.value


F1 = ComponentFunction(ComponentKind.F1_LINEAR)
F2 = ComponentFunction(ComponentKind.F2_SINE)
F3 = ComponentFunction(ComponentKind.F3_GAUSS_CDF)
F4 = ComponentFunction(ComponentKind.F4_GAUSS_BUMP)
F5 = ComponentFunction(ComponentKind.F5_LOG_ABS)
ZERO = ComponentFunction(ComponentKind.ZERO)
PAPER_FUNCTIONS = (F1, F2, F3, F4, F5)


def linear(coef: float) -> ComponentFunction:
    return ComponentFunction(ComponentKind.LINEAR_COEF, coef=float(coef))


def custom(func: Callable, lipschitz: Optional[float] = None) -> ComponentFunction:
    """Wrap a vectorised callable. ``lipschitz`` must be given to simulate."""
    if lipschitz is not None and lipschitz < 0:
        raise ValueError("Lipschitz constant must be nonnegative")
    return ComponentFunction(ComponentKind.CUSTOM, func=func, lipschitz=lipschitz)


def component_from_name(name: str) -> ComponentFunction:
    """Inverse of ``ComponentFunction.name`` for serialisable kinds."""
    name = name.strip()
    if name.startswith("linear:"):
        return linear(float(name.split(":", 1)[1]))
    for kind in ComponentKind:
        if kind.value == name and kind not in (ComponentKind.CUSTOM, ComponentKind.LINEAR_COEF):
            return ComponentFunction(kind)
    raise ValueError(f"unknown component function {name!r}")


class NoiseKind(enum.Enum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"
    STUDENT_T = "student_t"


@dataclass(frozen=True)
class AdditiveVarSpec:
    """Generative model for a sparse additive VAR(1).

    ``noise_scale`` is the innovation standard deviation; laplace and
    student-t draws are standardised to unit variance before scaling
    (student-t therefore needs ``noise_df > 2``).
    """

    p: int
    entries: Mapping[tuple, ComponentFunction]
    noise_scale: float = 0.2
    noise_kind: NoiseKind = NoiseKind.GAUSSIAN
    noise_df: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("p must be a positive integer")
        if not self.noise_scale > 0:
            raise ValueError("noise_scale must be positive")
        if not isinstance(self.noise_kind, NoiseKind):
            object.__setattr__(self, "noise_kind", NoiseKind(self.noise_kind))
        if self.noise_kind is NoiseKind.STUDENT_T and not self.noise_df > 2:
            raise ValueError("student_t noise needs df > 2 for a finite variance")
        clean = {}
        for (j, k), f in dict(self.entries).items():
            j, k = int(j), int(k)
            if not (0 <= j < self.p and 0 <= k < self.p):
                raise ValueError(f"entry ({j}, {k}) outside a {self.p}x{self.p} model")
            if not isinstance(f, ComponentFunction):
                raise TypeError(f"entry ({j}, {k}) is not a ComponentFunction")
            if f.kind is not ComponentKind.ZERO:
                clean[(j, k)] = f
        object.__setattr__(self, "entries", dict(sorted(clean.items())))

    @property
    def s(self) -> int:
        return len(self.entries)

    @property
    def s0(self) -> int:
        counts = np.zeros(self.p, dtype=int)
        for j, _ in self.entries:
            counts[j] += 1
        return int(counts.max(initial=0))

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.p, self.p), dtype=int)
        for j, k in self.entries:
            A[j, k] = 1
        return A

    def transition(self) -> "Transition":
        return Transition(self)

    def draw_noise(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.noise_kind is NoiseKind.GAUSSIAN:
            e = rng.standard_normal(size)
        elif self.noise_kind is NoiseKind.LAPLACE:
            e = rng.laplace(0.0, 1.0 / math.sqrt(2.0), size)
        else:
            df = self.noise_df
            e = rng.standard_t(df, size) * math.sqrt((df - 2.0) / df)
        return self.noise_scale * e


class Transition:
    """Vectorised evaluation of ``h`` on arrays of shape ``(..., p)``."""

    def __init__(self, spec: AdditiveVarSpec):
        self.p = spec.p
        groups: dict = {}
        for (j, k), f in spec.entries.items():
            key = f.kind if f.kind is not ComponentKind.CUSTOM else ("custom", id(f.func))
            groups.setdefault(key, []).append((j, k, f))
        self._groups = []
        for members in groups.values():
            rows = np.array([m[0] for m in members])
            cols = np.array([m[1] for m in members])
            scatter = np.zeros((len(members), spec.p))
            scatter[np.arange(len(members)), rows] = 1.0
            f = members[0][2]
            coefs = np.array([m[2].coef for m in members]) if f.kind is ComponentKind.LINEAR_COEF else None
            self._groups.append((f, cols, scatter, coefs))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (self.p,))
        for f, cols, scatter, coefs in self._groups:
            xs = x[..., cols]
            vals = xs * coefs if coefs is not None else f.eval(xs)
            out += vals @ scatter
        return out


@dataclass(frozen=True)
class TimeSeriesPanel:
    """Observed series, rows are time points and columns are variables."""

    data: np.ndarray
    labels: Optional[tuple] = None

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError("panel data must be a 2-D array (time x variables)")
        if data.shape[0] < 2:
            raise ValueError("panel needs at least two time points")
        if not np.all(np.isfinite(data)):
            bad = np.argwhere(~np.isfinite(data))[0]
            raise ValueError(f"non-finite value at row {bad[0]}, column {bad[1]}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        labels = self.labels
        if labels is None:
            labels = tuple(f"x{k + 1}" for k in range(data.shape[1]))
        labels = tuple(str(lab) for lab in labels)
        if len(labels) != data.shape[1]:
            raise ValueError("one label per column required")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def slice(self, start: int, stop: int) -> "TimeSeriesPanel":
        return TimeSeriesPanel(self.data[start:stop], self.labels)


def lipschitz_matrix(spec: AdditiveVarSpec) -> np.ndarray:
    H = np.zeros((spec.p, spec.p))
    for (j, k), f in spec.entries.items():
        H[j, k] = f.lipschitz_constant()
    return H


def stability_margin(H: np.ndarray, m_max: int = 20) -> float:
    """``min_{1<=m<=m_max} ||H^m||_inf^(1/m)``; the process contracts if < 1."""
    H = np.asarray(H, dtype=float)
    if np.any(H < 0):
        raise ValueError("Lipschitz matrix must be nonnegative")
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    best = np.inf
    Hm = np.eye(H.shape[0])
    for m in range(1, m_max + 1):
        Hm = Hm @ H
        norm = np.abs(Hm).sum(axis=1).max(initial=0.0)
        best = min(best, norm ** (1.0 / m))
        if best == 0.0:
            break
    return float(best)


def _check_stable(spec: AdditiveVarSpec, m_max: int) -> float:
    rho = stability_margin(lipschitz_matrix(spec), m_max)
    if rho >= 1.0:
        raise NonstationaryError(f"nonstationary specification: stability margin {rho:.4g} >= 1")
    return rho


def simulate_batch(
    spec: AdditiveVarSpec,
    n: int,
    reps: int,
    burn_in: int = 500,
    seed: Optional[int] = None,
    x0: Optional[np.ndarray] = None,
    m_max: int = 20,
) -> np.ndarray:
    """Simulate ``reps`` independent paths at once, shape ``(reps, n, p)``."""
    rho = _check_stable(spec, m_max)
    if rho > 0 and rho ** burn_in >= 1e-8:
        warnings.warn(f"burn_in={burn_in} too short for margin {rho:.3f}", RuntimeWarning, stacklevel=2)
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    h = spec.transition()
    x = np.zeros((reps, spec.p)) if x0 is None else np.broadcast_to(np.asarray(x0, float), (reps, spec.p)).copy()
    out = np.empty((reps, n, spec.p))
    for t in range(burn_in + n):
        x = h(x) + spec.draw_noise(rng, (reps, spec.p))
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state at time index {t}")
        if t >= burn_in:
            out[:, t - burn_in] = x
    return out


def simulate(
    spec: AdditiveVarSpec,
    n: int,
    burn_in: int = 500,
    seed: Optional[int] = None,
    m_max: int = 20,
) -> TimeSeriesPanel:
    """Iterate the recursion from ``X_0 = 0`` and keep ``n`` rows after burn-in."""
    if n < 2:
        raise ValueError("n must be at least 2")
    data = simulate_batch(spec, n, 1, burn_in=burn_in, seed=seed, m_max=m_max)[0]
    return TimeSeriesPanel(data)


def coupling_decay(
    spec: AdditiveVarSpec,
    horizon: int,
    reps: int,
    seed: Optional[int] = None,
    x0: Optional[np.ndarray] = None,
    x0_prime: Optional[np.ndarray] = None,
    m_max: int = 20,
) -> np.ndarray:
    """Mean sup-norm gap between two paths driven by the same innovations.

    Defaults start one copy at 0 and the other at the all-ones vector.
    Entry ``t - 1`` of the result is the gap at time ``t``.
    """
    _check_stable(spec, m_max)
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    h = spec.transition()
    a = np.zeros((reps, spec.p)) if x0 is None else np.broadcast_to(np.asarray(x0, float), (reps, spec.p)).copy()
    b = np.ones((reps, spec.p)) if x0_prime is None else np.broadcast_to(np.asarray(x0_prime, float), (reps, spec.p)).copy()
    decay = np.empty(horizon)
    for t in range(horizon):
        eps = spec.draw_noise(rng, (reps, spec.p))
        a = h(a) + eps
        b = h(b) + eps
        decay[t] = np.abs(a - b).max(axis=1).mean()
    return decay


class PatternKind(enum.Enum):
    RANDOM = "random"
    BAND = "band"
    CLUSTER = "cluster"


CLUSTER_BLOCK = 10


@dataclass(frozen=True)
class PatternSpec:
    kind: PatternKind
    p: int
    per_row_nonzeros: int = 5
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.kind, PatternKind):
            object.__setattr__(self, "kind", PatternKind(self.kind))
        if self.p < 1 or self.per_row_nonzeros < 1:
            raise ValueError("p and per_row_nonzeros must be positive")
        if self.per_row_nonzeros > self.p:
            raise ValueError(f"{self.per_row_nonzeros} nonzeros per row do not fit in p={self.p}")
        if self.kind is PatternKind.CLUSTER:
            if self.p % CLUSTER_BLOCK:
                raise ValueError(f"cluster pattern needs p divisible by {CLUSTER_BLOCK}, got {self.p}")
            if self.per_row_nonzeros > CLUSTER_BLOCK:
                raise ValueError("cluster blocks cannot hold that many nonzeros per row")


def generate_pattern(pattern: PatternSpec) -> np.ndarray:
    """Binary ``p x p`` adjacency with ``per_row_nonzeros`` ones in every row."""
    p, w = pattern.p, pattern.per_row_nonzeros
    rng = np.random.default_rng(pattern.seed)
    A = np.zeros((p, p), dtype=int)
    if pattern.kind is PatternKind.RANDOM:
        for j in range(p):
            A[j, rng.choice(p, size=w, replace=False)] = 1
    elif pattern.kind is PatternKind.BAND:
        # window centred on the diagonal, shifted inward at the edges
        for j in range(p):
            start = min(max(j - (w - 1) // 2, 0), p - w)
            A[j, start:start + w] = 1
    else:
        for j in range(p):
            base = (j // CLUSTER_BLOCK) * CLUSTER_BLOCK
            A[j, base + rng.choice(CLUSTER_BLOCK, size=w, replace=False)] = 1
    return A


def spec_from_adjacency(
    adjacency: np.ndarray,
    functions: Sequence[ComponentFunction] = PAPER_FUNCTIONS,
    noise_scale: float = 0.2,
    noise_kind: NoiseKind = NoiseKind.GAUSSIAN,
    seed: int = 0,
) -> AdditiveVarSpec:
    """Place ``functions`` in order along each row's sorted nonzero columns (cycling)."""
    A = np.asarray(adjacency)
    entries = {}
    for j in range(A.shape[0]):
        for i, k in enumerate(np.flatnonzero(A[j])):
            entries[(j, int(k))] = functions[i % len(functions)]
    return AdditiveVarSpec(A.shape[0], entries, noise_scale=noise_scale, noise_kind=noise_kind, seed=seed)


def paper_design(kind, p: int, seed: int = 0, noise_scale: float = 0.2) -> AdditiveVarSpec:
    """Simulation design with f1..f5 placed on a random/band/cluster pattern."""
    A = generate_pattern(PatternSpec(PatternKind(kind), p, 5, seed))
    return spec_from_adjacency(A, noise_scale=noise_scale, seed=seed)
