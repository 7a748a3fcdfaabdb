"""Band-limited kernels with a nonincreasing, piecewise constant Fourier transform.

A kernel is stored through its Fourier transform on the half band [0, W):
``v[k]`` is the value of K-hat on the bin [k h, (k + 1) h) with ``h = 2**-t``.
Negative frequencies are implied by symmetry and never stored.

Conventions: ``fhat(w) = int f(x) exp(i w x) dx`` and
``f(x) = (1 / 2 pi) int fhat(w) exp(-i w x) dw``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "FrequencyGrid",
    "SpectralKernel",
    "build_grid",
    "kernel_l2_norm_sq",
    "evaluate_kernel",
    "kernel_to_json",
    "kernel_from_json",
]


@dataclass(frozen=True)
class FrequencyGrid:
    """Dyadic partition of [0, W) into ``m = W * 2**t`` bins of width ``2**-t``."""

    W: float
    t: int
    m: int

    @property
    def width(self) -> float:
        return 2.0 ** -self.t

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.width

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.m) + 0.5) * self.width

    def refined(self, dt: int = 1) -> "FrequencyGrid":
        return build_grid(self.W, self.t + dt)

    def coarsened(self, dt: int = 1) -> "FrequencyGrid":
        return build_grid(self.W, self.t - dt)


def build_grid(W: float, t: int) -> FrequencyGrid:
    """Grid with ``W * 2**t`` bins; rejects band limits that do not divide evenly."""
    if int(t) != t or t < 0:
        raise ValueError(f"resolution t must be a non-negative integer, got t={t!r}")
    t = int(t)
    if not np.isfinite(W) or W <= 0:
        raise ValueError(f"band limit must be positive, got W={W!r} (t={t})")
    m = Fraction(W).limit_denominator(1 << 40) * (1 << t)
    if m.denominator != 1 or float(m) != W * 2.0**t:
        raise ValueError(
            f"W * 2**t must be a positive integer; got W={W!r}, t={t} (W * 2**t = {W * 2.0**t!r})"
        )
    return FrequencyGrid(W=float(W), t=t, m=int(m))


@dataclass(frozen=True)
class SpectralKernel:
    """Kernel represented by its Fourier transform values on a frequency grid.

    Invariants (checked unless ``strict=False``): values in [0, 1],
    nonincreasing, and ``v[0] == 1`` so that the kernel integrates to one.
    """

    grid: FrequencyGrid
    v: np.ndarray = field(repr=False)
    strict: bool = field(default=True, compare=False)

    def __post_init__(self):
        v = np.array(self.v, dtype=float).reshape(-1)
        if v.size != self.grid.m:
            raise ValueError(f"expected {self.grid.m} values for the grid, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("kernel values must be finite")
        if self.strict:
            if np.any(v < 0) or np.any(v > 1):
                raise ValueError("kernel Fourier values must lie in [0, 1]")
            if np.any(np.diff(v) > 0):
                raise ValueError("kernel Fourier values must be nonincreasing")
            if v[0] != 1.0:
                raise ValueError(f"v[0] must equal 1 (unit mass), got {v[0]!r}")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)

    @classmethod
    def indicator(cls, grid: FrequencyGrid, cutoff: float) -> "SpectralKernel":
        """K-hat = 1 on bins starting below ``cutoff`` and 0 elsewhere."""
        v = (grid.edges[:-1] < cutoff).astype(float)
        v[0] = 1.0
        return cls(grid, v)

    def lifted(self, t: int) -> "SpectralKernel":
        """Same function on the finer grid of resolution ``t``."""
        if t < self.grid.t:
            raise ValueError("can only lift to a finer grid")
        r = 1 << (t - self.grid.t)
        return SpectralKernel(build_grid(self.grid.W, t), np.repeat(self.v, r), strict=self.strict)

    def __eq__(self, other):
        if not isinstance(other, SpectralKernel):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.v, other.v)

    def __hash__(self):
        return hash((self.grid, self.v.tobytes()))


def kernel_l2_norm_sq(K: SpectralKernel) -> float:
    """int K(x)^2 dx via Parseval: (1/pi) * sum v_k^2 h."""
    return float(np.sum(K.v**2) * K.grid.width / np.pi)


def evaluate_kernel(K: SpectralKernel, x) -> np.ndarray | float:
    """Exact inverse Fourier transform of the step function, at points ``x``."""
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = _step_inverse_ft(K.v, K.grid.width, x)
    return float(out[0]) if scalar else out


def _step_inverse_ft(v: np.ndarray, h: float, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
    # Summation by parts: sum_k v_k [sin(w_{k+1} x) - sin(w_k x)] equals
    # sum_k (v_{k-1} - v_k) sin(w_k x) + v_{m-1} sin(w_m x); only jumps contribute.
    m = v.size
    jumps = np.empty(m + 1)
    jumps[0] = -v[0]
    jumps[1:m] = v[:-1] - v[1:]
    jumps[m] = v[-1]
    # jumps[0] multiplies sin(0) = 0
    nz = np.flatnonzero(jumps[1:]) + 1
    w = nz * h
    c = jumps[nz]

    flat = x.reshape(-1)
    out = np.empty(flat.size)
    small = np.abs(flat) < 1e-8
    total_mass = np.sum(v) * h
    for lo in range(0, flat.size, chunk):
        xs = flat[lo : lo + chunk]
        s = np.sin(np.outer(xs, w)) @ c
        with np.errstate(divide="ignore", invalid="ignore"):
            out[lo : lo + chunk] = s / xs
    # near zero the sine sum cancels; use a second-order Taylor expansion instead
    if np.any(small):
        second = np.sum(v * ((np.arange(1, m + 1) * h) ** 3 - (np.arange(m) * h) ** 3)) / 3.0
        xs = flat[small]
        out[small] = total_mass - 0.5 * xs**2 * second
    return out.reshape(x.shape) / np.pi


def kernel_to_json(K: SpectralKernel) -> str:
    return json.dumps({"W": K.grid.W, "t": K.grid.t, "v": [float(a) for a in K.v]})


def kernel_from_json(text: str, strict: bool = True) -> SpectralKernel:
    data = json.loads(text)
    try:
        grid = build_grid(float(data["W"]), int(data["t"]))
        return SpectralKernel(grid, np.asarray(data["v"], dtype=float), strict=strict)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed kernel JSON: {exc}") from exc
