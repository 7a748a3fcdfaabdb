"""Exact minimization of separable quadratic risks over monotone step kernels.

Both the cross-validation criterion and the MISE are, for a step kernel, sums
of independent per-bin quadratics ``(a_k v_k^2 - b_k v_k) h / pi``.  Under the
constraints ``1 = v_0 >= v_1 >= ... >= v_{m-1} >= 0`` the first bin is fixed
and the rest is solved by pool-adjacent-violators with box-constrained pool
minimizers.  When every a_k > 0 this equals the weighted antitonic regression
of the targets ``b_k / (2 a_k)`` clipped to [0, 1]: clipping a monotone
sequence satisfies the KKT conditions of the bounded problem, because every
pool touching a bound has its unclipped mean on the far side of that bound.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .criteria import EmpiricalSpectrum, coarsen, cv_value, empirical_spectrum
from .densities import DensityModel, SampleSet
from .spectral import FrequencyGrid, SpectralKernel, build_grid

__all__ = [
    "antitonic_regression",
    "SeparableObjective",
    "cv_objective",
    "mise_objective",
    "cv_optimal_kernel",
    "oracle_kernel",
    "minimax_transform",
    "minimax_kernel",
    "TraceEntry",
    "RefinementTrace",
    "refine",
]


def antitonic_regression(targets, weights) -> np.ndarray:
    """Weighted least-squares projection onto nonincreasing sequences (PAVA).

    Zero-weight entries do not influence any pool; each takes the value of the
    nearest preceding positive-weight entry (the larger admissible neighbour),
    or of the first pool when nothing precedes it.
    """
    y = np.asarray(targets, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if y.shape != w.shape:
        raise ValueError(f"targets and weights differ in length ({y.size} vs {w.size})")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    pos = np.flatnonzero(w > 0)
    if pos.size == 0:
        raise ValueError("antitonic regression needs at least one positive weight")
    if not np.all(np.isfinite(y[pos])):
        raise ValueError("targets with positive weight must be finite")

    # pools keep their weighted mean directly; a singleton pool is its target exactly
    mean, sw, cnt = [], [], []
    for i in pos:
        mean.append(y[i])
        sw.append(w[i])
        cnt.append(1)
        while len(mean) > 1 and mean[-2] < mean[-1]:
            b_m, b_w, b_c = mean.pop(), sw.pop(), cnt.pop()
            tot = sw[-1] + b_w
            mean[-1] = (sw[-1] / tot) * mean[-1] + (b_w / tot) * b_m
            sw[-1] = tot
            cnt[-1] += b_c
    means = np.repeat(np.asarray(mean), cnt)

    out = np.empty_like(y)
    out[pos] = means
    # forward fill zero-weight entries from the preceding positive entry
    idx = np.where(w > 0, np.arange(y.size), -1)
    idx = np.maximum.accumulate(idx)
    idx[idx < 0] = pos[0]
    return out[idx]


@dataclass(frozen=True)
class SeparableObjective:
    """sum_k (a_k v_k^2 - b_k v_k) h / pi + const over a frequency grid."""

    grid: FrequencyGrid
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    const: float = 0.0

    def __post_init__(self):
        if np.any(np.asarray(self.a) < 0):
            raise ValueError("quadratic weights must be non-negative")

    def value(self, v) -> np.ndarray | float:
        v = np.asarray(v, dtype=float)
        q = (v * v) @ self.a - v @ self.b if v.ndim > 1 else np.dot(self.a, v * v) - np.dot(self.b, v)
        return q * self.grid.width / np.pi + self.const

    def minimize(self) -> SpectralKernel:
        """Exact minimizer over {1 = v_0 >= v_1 >= ... >= 0}."""
        v = np.ones(self.grid.m)
        v[1:] = _box_antitonic(self.a[1:], self.b[1:])
        return SpectralKernel(self.grid, v)


def _pool_value(A: float, B: float) -> float:
    """argmin over [0, 1] of A v^2 - B v (A = 0 means a linear pull toward a bound)."""
    if A > 0:
        return min(1.0, max(0.0, B / (2 * A)))
    return 1.0 if B > 0 else 0.0


def _box_antitonic(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimize sum_k a_k v_k^2 - b_k v_k over nonincreasing v in [0, 1].

    Pool-adjacent-violators where each pool takes the box-constrained
    minimizer of its summed quadratic.  This is exact for separable convex
    terms and covers bins with a_k = 0 but b_k != 0, which a weighted
    least-squares projection cannot express.  Bins with a_k = b_k = 0 are
    indifferent; they copy the preceding pool, or 1 ahead of the first pool.
    """
    out = np.ones(a.size)
    active = np.flatnonzero((a > 0) | (b != 0))
    if active.size == 0:
        return out
    A, B, val, cnt = [], [], [], []
    for i in active:
        A.append(float(a[i]))
        B.append(float(b[i]))
        val.append(_pool_value(A[-1], B[-1]))
        cnt.append(1)
        while len(val) > 1 and val[-2] < val[-1]:
            A2, B2, c2 = A.pop(), B.pop(), cnt.pop()
            val.pop()
            A[-1] += A2
            B[-1] += B2
            cnt[-1] += c2
            val[-1] = _pool_value(A[-1], B[-1])
    out[active] = np.repeat(np.asarray(val), cnt)
    idx = np.where((a > 0) | (b != 0), np.arange(a.size), -1)
    idx = np.maximum.accumulate(idx)
    filled = out[np.maximum(idx, 0)]
    filled[idx < 0] = 1.0
    return filled


def cv_objective(spec: EmpiricalSpectrum) -> SeparableObjective:
    n = spec.n
    if n < 2:
        raise ValueError(f"cross-validation needs n >= 2, got n={n}")
    s = spec.s_sq
    return SeparableObjective(spec.grid, s / n**2, 2.0 * (s - n) / (n * (n - 1)))


def mise_objective(model: DensityModel, n: int, grid: FrequencyGrid) -> SeparableObjective:
    p = model.power(grid.midpoints)
    a = p + (1 - p) / n
    const = float(np.sum(p) * grid.width / np.pi + model.tail_energy(grid.W))
    return SeparableObjective(grid, a, 2 * p, const)


def cv_optimal_kernel(spec: EmpiricalSpectrum) -> SpectralKernel:
    """Data-driven kernel: argmin of the CV criterion over the monotone step class."""
    return cv_objective(spec).minimize()


def oracle_kernel(model: DensityModel, n: int, grid: FrequencyGrid) -> SpectralKernel:
    """Monotone oracle: argmin of the MISE over the same class (needs the true density)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return mise_objective(model, n, grid).minimize()


def minimax_transform(beta: float, omega) -> np.ndarray:
    """(1 - |w|^beta)_+."""
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(omega, dtype=float)) ** beta)


def minimax_kernel(beta: float, grid: FrequencyGrid) -> SpectralKernel:
    if not beta > 0:
        raise ValueError("beta must be positive")
    v = minimax_transform(beta, grid.midpoints)
    v[0] = 1.0
    return SpectralKernel(grid, v)


@dataclass(frozen=True)
class TraceEntry:
    t: int
    m: int
    cv: float
    guaranteed_gap: float


@dataclass
class RefinementTrace:
    entries: list[TraceEntry] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,m,cv,guaranteed_gap\n")
        for e in self.entries:
            buf.write(f"{e.t},{e.m},{e.cv!r},{e.guaranteed_gap!r}\n")
        return buf.getvalue()


def discretization_gap(t: int) -> float:
    return 2.0 / np.pi * 2.0**-t


def _coarsest_t(W: float) -> int:
    for t in range(41):
        try:
            build_grid(W, t)
            return t
        except ValueError:
            continue
    raise ValueError(f"W={W!r} is not a dyadic rational")


def refine(sample: SampleSet, W: float, t_max: int = 12, eps: float = 1e-4, oversample: int = 0):
    """CV-optimal kernels on dyadic grids t = t0, t0+1, ... until the gap bound drops below ``eps``.

    The spectrum is computed once at the final resolution and aggregated for
    the coarser levels, so every level minimizes the same quadrature of the
    criterion over nested classes and the reported CV values are nonincreasing.
    """
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    if not eps > 0:
        raise ValueError("eps must be positive")
    t0 = _coarsest_t(W)
    if t_max < t0:
        raise ValueError(f"W={W!r} needs resolution t >= {t0}, but t_max={t_max}")
    t_stop = t0
    while discretization_gap(t_stop) >= eps and t_stop < t_max:
        t_stop += 1
    fine = empirical_spectrum(sample, build_grid(W, t_stop), oversample=oversample)
    trace = RefinementTrace()
    kernel = None
    for t in range(t0, t_stop + 1):
        spec = coarsen(fine, t_stop - t)
        kernel = cv_optimal_kernel(spec)
        trace.entries.append(TraceEntry(t, spec.grid.m, cv_value(kernel, spec), discretization_gap(t)))
    return kernel, trace
