"""Risk functionals of band-limited kernel estimators, in frequency form.

All integrals over [-W, W] are folded onto [0, W) (factor 2) and evaluated bin
by bin.  The kernel factor is exact per bin; |S|^2 and |fhat|^2 use the
midpoint rule (optionally a composite midpoint rule, see ``oversample``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .densities import DensityModel, SampleSet
from .spectral import FrequencyGrid, SpectralKernel, build_grid, evaluate_kernel, kernel_l2_norm_sq

__all__ = [
    "EmpiricalSpectrum",
    "RiskReport",
    "char_sum",
    "empirical_spectrum",
    "coarsen",
    "cv_value",
    "mise_value",
    "ise_value",
    "estimate_density",
    "low_frequency_bias",
    "u_statistic",
]

_BLOCK = 64


def char_sum(x: np.ndarray, omega0: float, step: float, m: int) -> np.ndarray:
    """S(w) = sum_j exp(i w x_j) at w = omega0 + step * k, k = 0..m-1.

    Exact direct summation, factored as exp(i w_block x) * exp(i step p x) so
    the O(n m) work is a single complex matrix product.
    """
    x = np.asarray(x, dtype=float)
    B = min(_BLOCK, m)
    nb = -(-m // B)
    starts = omega0 + step * B * np.arange(nb)
    base = np.exp(1j * np.outer(x, starts))
    powers = np.exp(1j * np.outer(x, step * np.arange(B)))
    return (base.T @ powers).reshape(-1)[:m]


@dataclass(frozen=True)
class EmpiricalSpectrum:
    """Per-bin |S|^2 of a sample, S(w) = sum_j exp(i w X_j).

    ``s_sq[k]`` is the average of |S|^2 over ``2**oversample`` equally spaced
    sub-bin midpoints of bin k (plain midpoint rule when ``oversample == 0``).
    """

    grid: FrequencyGrid
    s_sq: np.ndarray = field(repr=False)
    n: int
    oversample: int = 0

    def __post_init__(self):
        s = np.array(self.s_sq, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "s_sq", s)


def empirical_spectrum(sample: SampleSet, grid: FrequencyGrid, oversample: int = 0) -> EmpiricalSpectrum:
    x = sample.values if isinstance(sample, SampleSet) else np.asarray(sample, dtype=float)
    if x.size == 0:
        raise ValueError("empirical spectrum of an empty sample")
    fine = build_grid(grid.W, grid.t + oversample)
    S = char_sum(x, 0.5 * fine.width, fine.width, fine.m)
    p = S.real**2 + S.imag**2
    p = p.reshape(grid.m, 1 << oversample).mean(axis=1)
    return EmpiricalSpectrum(grid, p, int(x.size), oversample)


def coarsen(spec: EmpiricalSpectrum, dt: int = 1) -> EmpiricalSpectrum:
    """Spectrum on the grid ``dt`` levels coarser, by exact averaging of sub-bins."""
    if dt < 0 or dt > spec.grid.t:
        raise ValueError(f"cannot coarsen resolution {spec.grid.t} by {dt}")
    grid = spec.grid.coarsened(dt)
    s = spec.s_sq.reshape(grid.m, 1 << dt).mean(axis=1)
    return EmpiricalSpectrum(grid, s, spec.n, spec.oversample + dt)


def _check_grid(K: SpectralKernel, grid: FrequencyGrid):
    if K.grid != grid:
        raise ValueError(f"kernel grid {K.grid} does not match spectrum grid {grid}")


def cv_value(K: SpectralKernel, spec: EmpiricalSpectrum) -> float:
    """Least-squares cross-validation criterion of the kernel estimator.

    int fhat_K^2 - 2/(n(n-1)) sum_{i != j} K(X_i - X_j), both terms through
    Parseval: the double sum is (1/2pi) int K-hat (|S|^2 - n).
    """
    n = spec.n
    if n < 2:
        raise ValueError(f"cross-validation needs n >= 2, got n={n}")
    _check_grid(K, spec.grid)
    v, s = K.v, spec.s_sq
    terms = v * v * s / n**2 - (2.0 / (n * (n - 1))) * v * (s - n)
    return float(np.sum(terms) * spec.grid.width / np.pi)


def _power_at(model: DensityModel, grid: FrequencyGrid) -> np.ndarray:
    return model.power(grid.midpoints)


def mise_value(K: SpectralKernel, model: DensityModel, n: int) -> float:
    """Mean integrated squared error: squared bias plus variance, per frequency.

    E|v phi_n - fhat|^2 = |fhat|^2 (1 - v)^2 + v^2 (1 - |fhat|^2) / n, since
    E phi_n = fhat and E|phi_n|^2 = |fhat|^2 + (1 - |fhat|^2) / n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    p = _power_at(model, K.grid)
    v = K.v
    band = np.sum(p * (1 - v) ** 2 + v * v * (1 - p) / n) * K.grid.width / np.pi
    return float(band + model.tail_energy(K.grid.W))


def ise_value(K: SpectralKernel, sample: SampleSet, model: DensityModel) -> float:
    x = sample.values
    g = K.grid
    phi = char_sum(x, 0.5 * g.width, g.width, g.m) / x.size
    d = K.v * phi - model.cf(g.midpoints)
    band = np.sum(d.real**2 + d.imag**2) * g.width / np.pi
    return float(band + model.tail_energy(g.W))


def estimate_density(K: SpectralKernel, sample: SampleSet, points) -> np.ndarray:
    """Kernel estimator (1/n) sum_i K(X_i - x) at each point."""
    x = sample.values
    if x.size == 0:
        raise ValueError("density estimate from an empty sample")
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    out = np.empty(pts.size)
    step = max(1, 200_000 // max(x.size, 1))
    for lo in range(0, pts.size, step):
        chunk = pts[lo : lo + step]
        out[lo : lo + step] = evaluate_kernel(K, x[None, :] - chunk[:, None]).mean(axis=1)
    return out


def _folded_ft(values: np.ndarray, grid: FrequencyGrid, x) -> np.ndarray:
    # (1/pi) sum_k h Re[values_k exp(-i w_k x)]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ph = np.exp(-1j * np.outer(x, grid.midpoints))
    return (ph @ values).real * grid.width / np.pi


def low_frequency_bias(K: SpectralKernel, model: DensityModel, x):
    """b_K + h_f = (1/2pi) int_{|w|<W} fhat (K-hat - 1) exp(-iwx) dw."""
    scalar = np.ndim(x) == 0
    fh = model.cf(K.grid.midpoints)
    out = _folded_ft(fh * (K.v - 1.0), K.grid, x)
    return float(out[0]) if scalar else out


def smoothed_density(K: SpectralKernel, model: DensityModel, x):
    """(f * K)(x) = E K(x - X)."""
    scalar = np.ndim(x) == 0
    out = _folded_ft(model.cf(K.grid.midpoints) * K.v, K.grid, x)
    return float(out[0]) if scalar else out


def expected_kernel(K: SpectralKernel, model: DensityModel) -> float:
    """E K(X - Y) for independent X, Y ~ f."""
    return float(np.sum(K.v * _power_at(model, K.grid)) * K.grid.width / np.pi)


def u_statistic(K: SpectralKernel, model: DensityModel, x, y):
    """Degenerate kernel U_K(x, y) = K(x-y) - (f*K)(x) - (f*K)(y) + E K(X-Y)."""
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0
    x, y = np.broadcast_arrays(np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float)))
    fx = smoothed_density(K, model, x.reshape(-1)).reshape(x.shape)
    fy = smoothed_density(K, model, y.reshape(-1)).reshape(y.shape)
    out = evaluate_kernel(K, x - y) - fx - fy + expected_kernel(K, model)
    return float(out.reshape(-1)[0]) if scalar else out


@dataclass
class RiskReport:
    kernel: SpectralKernel
    n: int
    tail_correction: float
    cv: float | None = None
    ise: float | None = None
    mise: float | None = None

    def __post_init__(self):
        for name in ("ise", "mise"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ValueError(f"{name} must be non-negative")

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "tail_correction": self.tail_correction,
            "kernel": {"W": self.kernel.grid.W, "t": self.kernel.grid.t, "v": [float(a) for a in self.kernel.v]},
            "kernel_l2_norm_sq": kernel_l2_norm_sq(self.kernel),
        }
        for name in ("cv", "ise", "mise"):
            val = getattr(self, name)
            if val is not None and math.isfinite(val):
                out[name] = val
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())
