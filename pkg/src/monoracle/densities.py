"""Analytic test densities with closed-form characteristic functions.

Every model exposes ``pdf``, ``cf`` (``fhat(w) = E exp(i w X)``), ``l2_norm_sq``,
``sup_norm``, ``tail_energy(W) = (1/2 pi) int_{|w|>W} |fhat|^2`` and a seeded
sampler.  Models are built from spec strings such as ``"gaussian:0,1"`` or
``"mix:0.5*gaussian:-2,1+0.5*gaussian:2,1"``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, optimize, special

__all__ = [
    "DensityModel",
    "Gaussian",
    "Laplace",
    "Cauchy",
    "Uniform",
    "GaussianMixture",
    "Mixture",
    "SampleSet",
    "parse_model",
    "characteristic_function",
    "l2_norm_sq",
    "sample",
    "replication_seed",
    "SpectralEnergy",
    "read_sample_file",
    "write_sample_file",
]

_SQRT_PI = np.sqrt(np.pi)


def _fmt(x: float) -> str:
    return repr(float(x))


class DensityModel:
    """Base class; subclasses fill in the closed forms."""

    kind: str = ""

    def pdf(self, x):
        raise NotImplementedError

    def cf(self, omega):
        raise NotImplementedError

    @property
    def l2_norm_sq(self) -> float:
        raise NotImplementedError

    @property
    def sup_norm(self) -> float:
        raise NotImplementedError

    def tail_energy(self, W: float) -> float:
        raise NotImplementedError

    def _draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> str:
        raise NotImplementedError

    def power(self, omega) -> np.ndarray:
        """|fhat(w)|^2."""
        c = self.cf(omega)
        return c.real**2 + c.imag**2

    def breakpoints(self) -> list[float]:
        """Points where the pdf is not smooth or has most of its mass (quadrature hints)."""
        return []

    def __str__(self):
        return self.spec()


@dataclass(frozen=True)
class Gaussian(DensityModel):
    mu: float = 0.0
    sigma: float = 1.0
    kind = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("gaussian scale must be positive")

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * np.sqrt(2 * np.pi))

    def cf(self, omega):
        w = np.asarray(omega, dtype=float)
        return np.exp(1j * self.mu * w - 0.5 * (self.sigma * w) ** 2)

    @property
    def l2_norm_sq(self):
        return 1.0 / (2.0 * self.sigma * _SQRT_PI)

    @property
    def sup_norm(self):
        return 1.0 / (self.sigma * np.sqrt(2 * np.pi))

    def tail_energy(self, W):
        # (1/pi) int_W^inf exp(-sigma^2 w^2) dw
        return float(special.erfc(self.sigma * W) / (2.0 * self.sigma * _SQRT_PI))

    def _draw(self, rng, n):
        return self.mu + self.sigma * rng.standard_normal(n)

    def breakpoints(self):
        return [self.mu]

    def spec(self):
        return f"gaussian:{_fmt(self.mu)},{_fmt(self.sigma)}"


@dataclass(frozen=True)
class Laplace(DensityModel):
    mu: float = 0.0
    b: float = 1.0
    kind = "laplace"

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("laplace scale must be positive")

    def pdf(self, x):
        return np.exp(-np.abs(np.asarray(x, dtype=float) - self.mu) / self.b) / (2 * self.b)

    def cf(self, omega):
        w = np.asarray(omega, dtype=float)
        return np.exp(1j * self.mu * w) / (1.0 + (self.b * w) ** 2)

    @property
    def l2_norm_sq(self):
        return 1.0 / (4.0 * self.b)

    @property
    def sup_norm(self):
        return 1.0 / (2.0 * self.b)

    def tail_energy(self, W):
        # int 1/(1+u^2)^2 du = (u/(1+u^2) + arctan u)/2
        u = self.b * W
        rest = np.pi / 4 - 0.5 * (u / (1 + u * u) + np.arctan(u))
        if u > 100:
            # cancellation-free asymptotic series of the remainder
            rest = 1 / (3 * u**3) - 2 / (5 * u**5) + 3 / (7 * u**7)
        return float(rest / (np.pi * self.b))

    def _draw(self, rng, n):
        u = rng.random(n) - 0.5
        return self.mu - self.b * np.sign(u) * np.log1p(-2 * np.abs(u))

    def breakpoints(self):
        return [self.mu]

    def spec(self):
        return f"laplace:{_fmt(self.mu)},{_fmt(self.b)}"


@dataclass(frozen=True)
class Cauchy(DensityModel):
    mu: float = 0.0
    gamma: float = 1.0
    kind = "cauchy"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("cauchy scale must be positive")

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.gamma
        return 1.0 / (np.pi * self.gamma * (1 + z * z))

    def cf(self, omega):
        w = np.asarray(omega, dtype=float)
        return np.exp(1j * self.mu * w - self.gamma * np.abs(w))

    @property
    def l2_norm_sq(self):
        return 1.0 / (2.0 * np.pi * self.gamma)

    @property
    def sup_norm(self):
        return 1.0 / (np.pi * self.gamma)

    def tail_energy(self, W):
        return float(np.exp(-2 * self.gamma * W) / (2 * np.pi * self.gamma))

    def _draw(self, rng, n):
        return self.mu + self.gamma * np.tan(np.pi * (rng.random(n) - 0.5))

    def breakpoints(self):
        return [self.mu]

    def spec(self):
        return f"cauchy:{_fmt(self.mu)},{_fmt(self.gamma)}"


@dataclass(frozen=True)
class Uniform(DensityModel):
    a: float = 0.0
    b: float = 1.0
    kind = "uniform"

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("uniform needs a < b")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0)

    def cf(self, omega):
        w = np.asarray(omega, dtype=float)
        half = 0.5 * (self.b - self.a)
        return np.exp(0.5j * (self.a + self.b) * w) * np.sinc(w * half / np.pi)

    @property
    def l2_norm_sq(self):
        return 1.0 / (self.b - self.a)

    @property
    def sup_norm(self):
        return 1.0 / (self.b - self.a)

    def tail_energy(self, W):
        # (2/L) int_U^inf sin^2(u)/u^2 du with U = W L / 2, and
        # int_0^U sin^2(u)/u^2 du = Si(2U) - sin^2(U)/U
        L = self.b - self.a
        U = 0.5 * W * L
        if U == 0:
            return self.l2_norm_sq
        si, _ = special.sici(2 * U)
        rest = np.pi / 2 - (si - np.sin(U) ** 2 / U)
        return float(max(rest, 0.0) * 2 / (L * np.pi))

    def _draw(self, rng, n):
        return self.a + (self.b - self.a) * rng.random(n)

    def breakpoints(self):
        return [self.a, self.b]

    def spec(self):
        return f"uniform:{_fmt(self.a)},{_fmt(self.b)}"


@dataclass(frozen=True)
class Mixture(DensityModel):
    """Finite mixture of the elementary models; weights must sum to one."""

    weights: tuple[float, ...]
    components: tuple[DensityModel, ...]
    kind = "mix"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.weights) != len(self.components) or len(w) == 0:
            raise ValueError("mixture needs one weight per component")
        if np.any(w <= 0) or abs(w.sum() - 1) > 1e-9:
            raise ValueError(f"mixture weights must be positive and sum to 1, got {tuple(w)}")
        if any(isinstance(c, Mixture) for c in self.components):
            raise ValueError("nested mixtures are not supported")

    def pdf(self, x):
        return sum(w * c.pdf(x) for w, c in zip(self.weights, self.components))

    def cf(self, omega):
        return sum(w * c.cf(omega) for w, c in zip(self.weights, self.components))

    def breakpoints(self):
        return sorted({p for c in self.components for p in c.breakpoints()})

    @cached_property
    def _l2(self) -> float:
        pts = self.breakpoints()
        scale = max(_scale(c) for c in self.components)
        lo, hi = pts[0] - 50 * scale, pts[-1] + 50 * scale
        f2 = lambda x: float(self.pdf(x)) ** 2
        inner, _ = integrate.quad(f2, lo, hi, points=pts, limit=500, epsabs=1e-15, epsrel=1e-13)
        left, _ = integrate.quad(f2, -np.inf, lo, epsabs=1e-15)
        right, _ = integrate.quad(f2, hi, np.inf, epsabs=1e-15)
        return inner + left + right

    @property
    def l2_norm_sq(self):
        return self._l2

    @cached_property
    def sup_norm(self):
        pts = self.breakpoints()
        scale = min(_scale(c) for c in self.components)
        xs = np.linspace(pts[0] - 3 * scale, pts[-1] + 3 * scale, 20001)
        xs = np.union1d(xs, pts)
        i = int(np.argmax(self.pdf(xs)))
        lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, xs.size - 1)]
        res = optimize.minimize_scalar(lambda x: -float(self.pdf(x)), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        return float(max(-res.fun, self.pdf(xs[i])))

    def tail_energy(self, W):
        # Jensen: |sum w_i fhat_i|^2 <= sum w_i |fhat_i|^2, so the weighted component
        # tails bound the mixture tail from above.
        bound = sum(w * c.tail_energy(W) for w, c in zip(self.weights, self.components))
        if W == 0:
            return self.l2_norm_sq
        band = _band_energy(self, W)
        return float(min(max(self.l2_norm_sq - band, 0.0), bound))

    def _draw(self, rng, n):
        labels = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        out = np.empty(n)
        for j, comp in enumerate(self.components):
            idx = np.flatnonzero(labels == j)
            out[idx] = comp._draw(rng, idx.size)
        return out

    def spec(self):
        parts = [f"{_fmt(w)}*{c.spec()}" for w, c in zip(self.weights, self.components)]
        return "mix:" + "+".join(parts)


def GaussianMixture(weights, components) -> Mixture:
    """Mixture of ``Gaussian(mu, sigma)`` given as ``(mu, sigma)`` pairs."""
    return Mixture(tuple(float(w) for w in weights), tuple(Gaussian(*mc) for mc in components))


def _scale(model: DensityModel) -> float:
    if isinstance(model, Gaussian):
        return model.sigma
    if isinstance(model, Laplace):
        return model.b
    if isinstance(model, Cauchy):
        return model.gamma
    if isinstance(model, Uniform):
        return model.b - model.a
    raise TypeError(model)


def _band_energy(model: DensityModel, W: float) -> float:
    """(1/pi) int_0^W |fhat|^2 by panel Gauss-Legendre."""
    return float(SpectralEnergy(model, W).cumulative(W) / np.pi)


_ELEMENTARY = {"gaussian": Gaussian, "laplace": Laplace, "cauchy": Cauchy, "uniform": Uniform}
_GRAMMAR = (
    "model spec grammar: KIND:P1,P2 with KIND in {gaussian, laplace, cauchy, uniform} "
    "(gaussian:mu,sigma  laplace:mu,b  cauchy:mu,gamma  uniform:a,b), or "
    "mix:W1*KIND:P1,P2+W2*KIND:P1,P2+... with weights summing to 1"
)
_MIX_SPLIT = re.compile(r"\+(?=\s*[0-9.]+(?:[eE][-+]?\d+)?\s*\*)")


def parse_model(text: str) -> DensityModel:
    """Parse a model spec string; raises ``ValueError`` naming the grammar on failure."""
    s = text.strip().replace("−", "-").replace(" ", "")
    try:
        kind, _, rest = s.partition(":")
        kind = kind.lower()
        if kind == "mix":
            weights, comps = [], []
            for term in _MIX_SPLIT.split(rest):
                w, star, comp = term.partition("*")
                if not star:
                    raise ValueError(f"mixture term {term!r} lacks a weight")
                weights.append(float(w))
                comps.append(_parse_elementary(comp))
            return Mixture(tuple(weights), tuple(comps))
        return _parse_elementary(s)
    except ValueError as exc:
        raise ValueError(f"cannot parse model {text!r}: {exc}; {_GRAMMAR}") from None


def _parse_elementary(s: str) -> DensityModel:
    kind, sep, params = s.partition(":")
    cls = _ELEMENTARY.get(kind.lower())
    if cls is None or not sep:
        raise ValueError(f"unknown model kind {kind!r}")
    vals = [float(p) for p in params.split(",")]
    if len(vals) != 2:
        raise ValueError(f"{kind} takes exactly two parameters")
    return cls(*vals)


def characteristic_function(model: DensityModel, omega):
    return model.cf(omega)


def l2_norm_sq(model: DensityModel) -> float:
    return float(model.l2_norm_sq)


@dataclass(frozen=True)
class SampleSet:
    values: np.ndarray = field(repr=False)
    seed: int | None = None
    model_tag: str | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("sample values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.size)


def sample(model: DensityModel, n: int, seed: int) -> SampleSet:
    """``n`` i.i.d. draws from ``model``; identical output for identical seed."""
    if int(n) != n or n <= 0:
        raise ValueError(f"sample size must be a positive integer, got n={n!r}")
    rng = np.random.default_rng(int(seed))
    return SampleSet(model._draw(rng, int(n)), seed=int(seed), model_tag=model.spec())


def replication_seed(seed: int, r: int) -> int:
    """64-bit seed of replication r, derived by spawning from ``seed`` (stable when R changes)."""
    st = np.random.SeedSequence(seed, spawn_key=(r,)).generate_state(2, dtype=np.uint32)
    return int(st[0]) << 32 | int(st[1])


def read_sample_file(path) -> SampleSet:
    """Newline-delimited reals; '#' starts a comment."""
    vals = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                vals.append(float(line))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a real number: {line!r}") from None
    return SampleSet(np.asarray(vals, dtype=float), model_tag=str(path))


def write_sample_file(path, s: SampleSet) -> None:
    with open(path, "w") as fh:
        if s.model_tag:
            fh.write(f"# model={s.model_tag} seed={s.seed}\n")
        for x in s.values:
            fh.write(f"{float(x)!r}\n")


# Gauss-Legendre nodes on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class SpectralEnergy:
    """Cumulative one-sided energy ``G(w) = int_0^w |fhat|^2`` on [0, W].

    Precomputes panel integrals (16-point Gauss-Legendre on panels of width at
    most ``panel``) and evaluates partial panels on demand, so ``G`` is
    accurate to near machine precision for the bundled smooth spectra.
    """

    def __init__(self, model: DensityModel, W: float, panel: float = 1.0 / 32):
        self.model = model
        self.W = float(W)
        npan = max(1, int(np.ceil(W / panel)))
        self.edges = np.linspace(0.0, self.W, npan + 1)
        widths = np.diff(self.edges)
        nodes = self.edges[:-1, None] + widths[:, None] * _GL_X[None, :]
        vals = model.power(nodes)
        pan = (vals @ _GL_W) * widths
        self.cum = np.concatenate([[0.0], np.cumsum(pan)])

    @property
    def total(self) -> float:
        return float(self.cum[-1])

    def cumulative(self, w) -> np.ndarray | float:
        scalar = np.ndim(w) == 0
        w = np.clip(np.atleast_1d(np.asarray(w, dtype=float)), 0.0, self.W)
        j = np.clip(np.searchsorted(self.edges, w, side="right") - 1, 0, self.edges.size - 2)
        a = self.edges[j]
        d = w - a
        nodes = a[:, None] + d[:, None] * _GL_X[None, :]
        part = (self.model.power(nodes) @ _GL_W) * d
        out = self.cum[j] + part
        return float(out[0]) if scalar else out

    def mass(self, a, b) -> np.ndarray:
        """int_a^b |fhat|^2 (one side), elementwise for arrays ``a <= b``."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        # integrate each interval directly when it lies inside one panel to avoid cancellation
        return _interval_energy(self, a, b)

    def inverse(self, targets, tol: float = 1e-10) -> np.ndarray:
        """Leftmost ``w`` with ``G(w) = target``, by vectorized bisection."""
        targets = np.atleast_1d(np.asarray(targets, dtype=float))
        if np.any(targets < 0) or np.any(targets > self.total * (1 + 1e-15)):
            raise ValueError("energy target outside [0, G(W)]")
        j = np.searchsorted(self.cum, targets, side="left")
        hi = self.edges[np.clip(j, 0, self.edges.size - 1)]
        lo = self.edges[np.clip(j - 1, 0, self.edges.size - 1)]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self.cumulative(mid) < targets
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(hi, 1.0)):
                break
        root = hi
        err = np.abs(self.cumulative(root) - targets)
        if np.any(err > tol * max(self.total, np.finfo(float).tiny)):
            bad = float(targets[int(np.argmax(err))])
            raise ValueError(
                f"degenerate breakpoint: |fhat|^2 has no mass to reach energy {bad!r} "
                f"(residual {float(err.max())!r})"
            )
        return root


def _interval_energy(se: SpectralEnergy, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    shape = np.broadcast(a, b).shape
    a = np.broadcast_to(a, shape).reshape(-1)
    b = np.broadcast_to(b, shape).reshape(-1)
    out = se.cumulative(b) - se.cumulative(a)
    ja = np.searchsorted(se.edges, a, side="right")
    jb = np.searchsorted(se.edges, b, side="left")
    same = ja >= jb
    if np.any(same):
        d = (b - a)[same]
        nodes = a[same][:, None] + d[:, None] * _GL_X[None, :]
        out[same] = (se.model.power(nodes) @ _GL_W) * d
    return np.atleast_1d(out).reshape(shape)
