"""Haar-type spectral wavelet bases and coefficient diagnostics.

Two bases live in the frequency domain, both symmetric in w:

* ``SpectralHaarBasis``: indicator wavelets on dyadic blocks of |w|, with
  fathers on [0,1), [1,2), [2,4), ..., [2^d, 2^(d+1)) and Haar mothers
  refining each father support.
* ``FAdaptedBasis``: the same tree laid out on the energy axis
  F(w) = int_{-w}^{w} |fhat|^2, multiplied by fhat, so every father block
  carries the same share of the spectral energy.

Element indexing follows (s, t): block I_st = {|w| in [2^-s (t-1), 2^-s t)}
for the Haar basis and the energy-quantile analogue for the adapted one.
Fathers are phi_st = 2^((s-1)/2) I_st and mothers
psi_st = 2^((s-1)/2) (I_{s+1,2t-1} - I_{s+1,2t}).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .criteria import char_sum
from .densities import DensityModel, SpectralEnergy, replication_seed, sample
from .spectral import SpectralKernel, build_grid, kernel_l2_norm_sq

__all__ = [
    "default_depth",
    "Element",
    "SpectralHaarBasis",
    "FAdaptedBasis",
    "CoefficientSet",
    "BoundRow",
    "BoundReport",
    "build_haar_basis",
    "build_f_basis",
    "kernel_coefficients",
    "bias_coefficients",
    "check_lemma1",
    "check_lemma3",
    "favorable_event_frequencies",
    "ExceedanceReport",
    "FavorableProbes",
    "bias_energy",
]

QUAD_TOL = 1e-8


def default_depth(n: int) -> int:
    """ceil(ln n), the depth used for both bases."""
    return int(math.ceil(math.log(n)))


@dataclass(frozen=True)
class Element:
    """Basis element on [0, W): ``weight`` on [lo, mid) and ``-weight`` on [mid, hi) for mothers.

    Fathers have ``mid == hi``.  For the adapted basis the interval ends are
    fractions of the energy axis (``lo, mid, hi`` in [0, 1]).
    """

    kind: str  # "father" | "mother"
    s: int
    t: int
    lo: float
    mid: float
    hi: float
    weight: float

    @property
    def key(self) -> tuple[int, int]:
        return (self.s, self.t)


@dataclass
class SpectralHaarBasis:
    W: float
    d_n: int
    s_max: int
    fathers: list[Element] = field(repr=False)
    mothers: list[Element] = field(repr=False)

    @property
    def complete(self) -> bool:
        """Whether the fathers tile the whole band (W == 2^(d_n + 1))."""
        return self.W == 2.0 ** (self.d_n + 1)

    @property
    def elements(self) -> list[Element]:
        return self.fathers + self.mothers

    def element_matrix(self, t: int, elements=None) -> np.ndarray:
        """Values of each element on the bins of the grid (W, t); rows are elements."""
        grid = build_grid(self.W, t)
        elements = self.elements if elements is None else elements
        M = np.zeros((len(elements), grid.m))
        scale = 1 << t
        for r, e in enumerate(elements):
            lo, mid, hi = (_dyadic_index(x, scale, t) for x in (e.lo, e.mid, e.hi))
            M[r, lo:mid] = e.weight
            M[r, mid:hi] = -e.weight
        return M

    def gram(self, t: int | None = None) -> np.ndarray:
        t = self.s_max + 1 if t is None else t
        M = self.element_matrix(t)
        return 2.0 * 2.0**-t * (M @ M.T)


def _dyadic_index(x: float, scale: int, t: int) -> int:
    i = x * scale
    if i != int(i):
        raise ValueError(f"grid resolution t={t} is too coarse for a basis breakpoint at {x!r}")
    return int(i)


def build_haar_basis(W: float, d_n: int, s_max: int = 3) -> SpectralHaarBasis:
    """Fathers (0,1), (0,2), (-1,2), ..., (-d_n,2); mothers s = -1..-d_n with t = 2..2^s W
    and s = 0..s_max with t = 1..2^s W.  ``W`` must be a multiple of 2^d_n."""
    if d_n < 0 or int(d_n) != d_n:
        raise ValueError("d_n must be a non-negative integer")
    if s_max < -1:
        raise ValueError("s_max must be >= -1")
    top = 2.0**d_n
    if W <= 0 or (W / top) != int(W / top):
        raise ValueError(f"W={W!r} must be a positive multiple of 2^d_n = {top:g}")
    if W < 2:
        raise ValueError("band [0, W) too short: mother index ranges are empty")

    fathers = [Element("father", 0, 1, 0.0, 1.0, 1.0, 2**-0.5)]
    for s in range(0, -d_n - 1, -1):
        lo, hi = 2.0**-s, 2.0 ** (-s + 1)
        fathers.append(Element("father", s, 2, lo, hi, hi, 2.0 ** ((s - 1) / 2)))
    mothers = []
    for s in list(range(-1, -d_n - 1, -1)) + list(range(0, s_max + 1)):
        width = 2.0**-s
        t_lo = 2 if s < 0 else 1
        for t in range(t_lo, int(round(2.0**s * W)) + 1):
            lo = width * (t - 1)
            mothers.append(Element("mother", s, t, lo, lo + width / 2, lo + width, 2.0 ** ((s - 1) / 2)))
    if not mothers:
        raise ValueError("mother index ranges are empty")
    return SpectralHaarBasis(float(W), int(d_n), int(s_max), fathers, mothers)


@dataclass
class FAdaptedBasis:
    model: DensityModel
    W: float
    s_n: int
    s_max: int
    F_n: float
    energy: SpectralEnergy = field(repr=False)
    breakpoints: np.ndarray = field(repr=False)  # frequencies at energy fractions j / 2^S
    fathers: list[Element] = field(repr=False)
    mothers: list[Element] = field(repr=False)

    @property
    def S(self) -> int:
        return int(round(math.log2(self.breakpoints.size - 1)))

    @property
    def elements(self) -> list[Element]:
        return self.fathers + self.mothers

    def F(self, w):
        """F(w) = int_{-w}^{w} |fhat|^2."""
        return 2.0 * self.energy.cumulative(w)

    def piece_masses(self) -> np.ndarray:
        """Two-sided |fhat|^2 mass of each finest energy block."""
        return 2.0 * self.energy.mass(self.breakpoints[:-1], self.breakpoints[1:])

    def element_matrix(self, elements=None) -> np.ndarray:
        """Piecewise-constant multipliers of fhat on the finest energy blocks."""
        elements = self.elements if elements is None else elements
        P = self.breakpoints.size - 1
        M = np.zeros((len(elements), P))
        for r, e in enumerate(elements):
            lo, mid, hi = (int(round(x * P)) for x in (e.lo, e.mid, e.hi))
            M[r, lo:mid] = e.weight
            M[r, mid:hi] = -e.weight
        return M

    def gram(self) -> np.ndarray:
        M = self.element_matrix()
        return (M * self.piece_masses()) @ M.T

    def support(self, e: Element) -> tuple[float, float]:
        P = self.breakpoints.size - 1
        return float(self.breakpoints[int(round(e.lo * P))]), float(self.breakpoints[int(round(e.hi * P))])


def build_f_basis(model: DensityModel, W: float, s_n: int, s_max: int | None = None) -> FAdaptedBasis:
    """Energy-adapted basis: fathers (s, 2^s - 1) for s = 1..s_n plus (s_n, 2^s_n);
    mothers s = 1..s_n-1 with t = 1..2^s - 1 and s = s_n..s_max with t = 1..2^s."""
    if s_n < 1:
        raise ValueError("s_n must be >= 1")
    s_max = s_n + 1 if s_max is None else s_max
    if s_max < s_n - 1:
        raise ValueError("s_max must be >= s_n - 1")
    energy = SpectralEnergy(model, W)
    F_n = 2.0 * energy.total
    if not F_n > 0:
        raise ValueError("model has no spectral energy on the band")
    S = max(s_n, s_max + 1)
    fractions = np.arange((1 << S) + 1) / (1 << S)
    inner = energy.inverse(fractions[1:-1] * energy.total)
    bps = np.concatenate([[0.0], inner, [float(W)]])

    def father(s, t):
        w = 2.0 ** (s / 2) * F_n**-0.5
        return Element("father", s, t, (t - 1) / 2**s, t / 2**s, t / 2**s, w)

    def mother(s, t):
        w = 2.0 ** (s / 2) * F_n**-0.5
        lo = (t - 1) / 2**s
        return Element("mother", s, t, lo, lo + 0.5 / 2**s, t / 2**s, w)

    fathers = [father(s, 2**s - 1) for s in range(1, s_n + 1)] + [father(s_n, 2**s_n)]
    mothers = [mother(s, t) for s in range(1, s_n) for t in range(1, 2**s)]
    mothers += [mother(s, t) for s in range(s_n, s_max + 1) for t in range(1, 2**s + 1)]
    return FAdaptedBasis(model, float(W), int(s_n), int(s_max), F_n, energy, bps, fathers, mothers)


@dataclass
class CoefficientSet:
    source: str
    alphas: dict = field(default_factory=dict)
    betas: dict = field(default_factory=dict)
    norm_sq: float = 0.0  # squared L2 norm of the expanded function (frequency side)

    def residual(self, s_max: int | None = None) -> float:
        """||g||^2 minus the captured energy of fathers and mothers with s <= s_max."""
        cap = sum(a * a for a in self.alphas.values())
        cap += sum(b * b for (s, _), b in self.betas.items() if s_max is None or s <= s_max)
        return self.norm_sq - cap

    def row_sums(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for (s, _), b in self.betas.items():
            out[s] = out.get(s, 0.0) + abs(b)
        return out

    def father_sum(self) -> float:
        return float(sum(abs(a) for a in self.alphas.values()))


def kernel_coefficients(K: SpectralKernel, basis: SpectralHaarBasis, s_max: int | None = None) -> CoefficientSet:
    """alpha_st = int phi_st K-hat, beta_st = int psi_st K-hat (both sides of the band).

    Mothers with s >= t_grid vanish identically for step functions on the
    kernel's grid, so truncating there is lossless.
    """
    t = K.grid.t
    s_max = min(basis.s_max, t - 1) if s_max is None else s_max
    if s_max > t - 1:
        raise ValueError(
            f"kernel grid resolution t={t} is too coarse for mother scale s={s_max} (needs t >= {s_max + 1})"
        )
    if K.grid.W > basis.W:
        raise ValueError(f"kernel band W={K.grid.W} exceeds the basis band W={basis.W}")
    v = np.zeros(int(round(basis.W * 2**t)))
    v[: K.grid.m] = K.v
    cum = np.concatenate([[0.0], np.cumsum(v) * 2.0**-t])
    scale = 1 << t

    def integral(a, b):
        return cum[_dyadic_index(b, scale, t)] - cum[_dyadic_index(a, scale, t)]

    out = CoefficientSet("kernel", norm_sq=2 * np.pi * kernel_l2_norm_sq(K))
    for e in basis.fathers:
        out.alphas[e.key] = 2 * e.weight * integral(e.lo, e.hi)
    for e in basis.mothers:
        if e.s <= s_max:
            out.betas[e.key] = 2 * e.weight * (integral(e.lo, e.mid) - integral(e.mid, e.hi))
    return out


def _bias_piece_integrals(K: SpectralKernel, basis: FAdaptedBasis) -> np.ndarray:
    """One-sided int |fhat|^2 (K-hat - 1) over each finest energy block.

    K-hat is taken as 0 beyond the kernel band, so the kernel band may be
    narrower than the basis band.
    """
    if K.grid.W > basis.W:
        raise ValueError(f"kernel band W={K.grid.W} exceeds the basis band W={basis.W}")
    edges = np.union1d(basis.breakpoints, K.grid.edges)
    a, b = edges[:-1], edges[1:]
    mass = basis.energy.mass(a, b)
    mid = 0.5 * (a + b)
    kbin = (mid / K.grid.width).astype(int)
    vk = np.where(kbin < K.grid.m, K.v[np.minimum(kbin, K.grid.m - 1)], 0.0)
    piece = np.clip(np.searchsorted(basis.breakpoints, mid, side="right") - 1, 0, basis.breakpoints.size - 2)
    return np.bincount(piece, weights=mass * (vk - 1.0), minlength=basis.breakpoints.size - 1)


def bias_coefficients(K: SpectralKernel, basis: FAdaptedBasis) -> CoefficientSet:
    """Coefficients of fhat (K-hat - 1) restricted to the basis band.

    Inner products are Hermitian, so every coefficient is the real number
    int c |fhat|^2 (K-hat - 1) for the element multiplier c.
    """
    J = _bias_piece_integrals(K, basis)
    M = basis.element_matrix()
    coef = 2.0 * (M @ J)
    norm_sq = bias_energy(K, basis.model) - 2 * np.pi * basis.model.tail_energy(basis.W)
    out = CoefficientSet("bias", norm_sq=norm_sq)
    for e, c in zip(basis.elements, coef):
        (out.alphas if e.kind == "father" else out.betas)[e.key] = float(c)
    return out


def bias_energy(K: SpectralKernel, model: DensityModel, include_tail: bool = True) -> float:
    """2 pi int b_K^2 = int |fhat|^2 (1 - K-hat)^2 dw over the kernel band, plus the energy beyond it."""
    se = SpectralEnergy(model, K.grid.W)
    e = K.grid.edges
    band = 2.0 * float(np.sum(se.mass(e[:-1], e[1:]) * (1.0 - K.v) ** 2))
    if include_tail:
        band += 2 * np.pi * model.tail_energy(K.grid.W)
    return band


@dataclass(frozen=True)
class BoundRow:
    name: str
    value: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.value

    @property
    def ok(self) -> bool:
        return bool(self.value <= self.bound)

    def to_dict(self):
        return {
            "row": self.name,
            "value": float(self.value),
            "bound": float(self.bound),
            "slack": float(self.slack),
            "ok": self.ok,
        }


@dataclass
class BoundReport:
    check: str
    depth: int
    rows: list[BoundRow]

    @property
    def violations(self) -> int:
        return int(sum(not r.ok for r in self.rows))

    def to_dict(self):
        return {
            "check": self.check,
            "depth": self.depth,
            "violations": self.violations,
            "rows": [r.to_dict() for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def check_lemma1(K: SpectralKernel, basis: SpectralHaarBasis, tol: float = QUAD_TOL) -> BoundReport:
    """Row-wise coefficient bounds for the Haar-type kernel expansion; violations are reported."""
    c = kernel_coefficients(K, basis)
    root = math.sqrt(2 * np.pi * kernel_l2_norm_sq(K))
    rows = [BoundRow("fathers", c.father_sum(), math.sqrt(basis.d_n + 2) * root + tol)]
    sums = c.row_sums()
    for s in sorted(sums):
        bound = root if s < 0 else 2.0 ** ((-s + 1) / 2)
        rows.append(BoundRow(f"mothers s={s}", sums[s], bound + tol))
    return BoundReport("kernel_haar", basis.d_n, rows)


def check_lemma3(K: SpectralKernel, model: DensityModel, basis: FAdaptedBasis, tol: float = QUAD_TOL) -> BoundReport:
    """Row-wise bounds for the energy-adapted expansion of the low-frequency bias."""
    c = bias_coefficients(K, basis)
    root = math.sqrt(bias_energy(K, model, include_tail=True))
    f2 = math.sqrt(model.l2_norm_sq)
    rows = [BoundRow("fathers", c.father_sum(), math.sqrt(basis.s_n + 1) * root + tol)]
    sums = c.row_sums()
    for s in sorted(sums):
        bound = 2 * root if s < basis.s_n else 2 * 2.0 ** (-s / 2) * f2
        rows.append(BoundRow(f"mothers s={s}", sums[s], bound + tol))
    return BoundReport("bias_adapted", basis.s_n, rows)


# Favorable events -----------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _panel_rule(edges: np.ndarray, max_width: float):
    """Gauss-Legendre nodes/weights on [edges[0], edges[-1]], panels split at every edge."""
    nodes, weights, owner = [], [], []
    for j, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        k = max(1, int(math.ceil((b - a) / max_width)))
        sub = np.linspace(a, b, k + 1)
        d = np.diff(sub)
        nodes.append((sub[:-1, None] + d[:, None] * _GL_X).ravel())
        weights.append((d[:, None] * _GL_W).ravel())
        owner.append(np.full(k * _GL_X.size, j))
    return np.concatenate(nodes), np.concatenate(weights), np.concatenate(owner)


@dataclass
class ExceedanceReport:
    n: int
    lam: float
    R: int
    depth: int
    threshold_u_log: float  # lambda ln^{3/2} n / n
    threshold_ps: float  # lambda ln n / sqrt n
    rows: list[dict]

    @property
    def max_frequency(self) -> float:
        return max((r["frequency"] for r in self.rows), default=0.0)

    def any_positive(self) -> bool:
        return self.max_frequency > 0

    def to_dict(self):
        return {
            "n": self.n,
            "lambda": self.lam,
            "R": self.R,
            "depth": self.depth,
            "threshold_u": self.threshold_u_log,
            "threshold_partial_sum": self.threshold_ps,
            "max_frequency": self.max_frequency,
            "rows": self.rows,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["event", "kind", "s", "t", "threshold", "exceedances", "frequency"])
        for r in self.rows:
            w.writerow([r["event"], r["kind"], r["s"], r["t"], repr(r["threshold"]), r["exceedances"], repr(r["frequency"])])
        return buf.getvalue()


class FavorableProbes:
    """Probe elements of both bases and the quadrature needed to evaluate them on a sample.

    Probes: all fathers and mothers with s <= ``probe_s_max`` of both bases
    (depth ``d``, band ``W = 2^(d+1)``).  For a Haar probe phi the statistic
    is the centred degenerate U-statistic (1/(n(n-1))) sum_{i != j}
    U_phi(X_i, X_j); for an adapted probe phi' the centred partial sum
    (1/n) sum_j phi'(X_j) - E phi'(X).  Both are computed in the frequency
    domain on Gauss-Legendre panels aligned with element breakpoints.
    """

    def __init__(self, model: DensityModel, depth: int, probe_s_max: int = 3):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.model = model
        self.depth = depth
        W = 2.0 ** (depth + 1)
        self.haar = build_haar_basis(W, depth, s_max=probe_s_max)
        self.haar_probes = [e for e in self.haar.elements if e.s <= probe_s_max]
        self.fbasis = build_f_basis(model, W, depth, s_max=depth - 1)
        self.f_probes = [e for e in self.fbasis.elements if e.s <= probe_s_max or e.kind == "father"]

        # Haar probes are indicators on the dyadic grid of resolution probe_s_max + 1
        self.hgrid = build_grid(W, max(probe_s_max + 1, 0))
        hn, hw, hown = _panel_rule(self.hgrid.edges, self.hgrid.width)  # panel-major, one panel per bin
        self._Hm = self.haar.element_matrix(self.hgrid.t, self.haar_probes)[:, hown] * hw
        self._fh_h = model.cf(hn)
        self._p_h = self._fh_h.real**2 + self._fh_h.imag**2

        # adapted probes: multipliers on the finest energy blocks, times fhat
        fn, fw, fown = _panel_rule(self.fbasis.breakpoints, 1.0 / 16)
        self._fn = fn
        self._fh_f = model.cf(fn)
        self._Fm = self.fbasis.element_matrix(self.f_probes)[:, fown] * fw

    def statistics(self, x) -> tuple[np.ndarray, np.ndarray]:
        """(U-statistics of the Haar probes, centred partial sums of the adapted probes)."""
        x = np.asarray(x, dtype=float)
        n = x.size
        if n < 2:
            raise ValueError("n must be >= 2")
        S = _uniform_char_sum(x, self.hgrid.width, self.hgrid.m)
        fh = self._fh_h
        q = (S.real**2 + S.imag**2) - n - 2 * (n - 1) * (fh * np.conj(S)).real + n * (n - 1) * self._p_h
        u = (self._Hm @ q) / np.pi / (n * (n - 1))
        Sf = _char_sum_at(x, self._fn)
        ps = (self._Fm @ (self._fh_f * (np.conj(Sf) / n - np.conj(self._fh_f))).real) / np.pi
        return u, ps


def favorable_event_frequencies(
    model: DensityModel,
    n: int,
    lam: float,
    R: int,
    seed: int,
    probe_s_max: int = 3,
    depth: int | None = None,
    map_fn=map,
) -> ExceedanceReport:
    """Empirical exceedance frequencies of the favorable-event thresholds over R samples.

    Replication r draws its sample from a seed derived from (seed, r);
    ``map_fn`` may evaluate replications concurrently but must return
    results in input order.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if n < 2:
        raise ValueError("n must be >= 2")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    d = default_depth(n) if depth is None else depth
    probes = FavorableProbes(model, d, probe_s_max)

    def one(r):
        return probes.statistics(sample(model, n, replication_seed(seed, r)).values)

    results = list(map_fn(one, range(R)))
    U = np.array([r[0] for r in results])
    P = np.array([r[1] for r in results])

    ln = math.log(n)
    thr_u = lam * ln**1.5 / n
    thr_p = lam * ln / math.sqrt(n)
    rows = []
    for k, e in enumerate(probes.haar_probes):
        thr = thr_u if (e.kind == "father" or e.s < 0) else (lam * ln + e.s) / n
        exc = int(np.sum(np.abs(U[:, k]) > thr))
        rows.append(dict(event="haar_u_statistic", kind=e.kind, s=e.s, t=e.t, threshold=thr, exceedances=exc, frequency=exc / R))
    for k, e in enumerate(probes.f_probes):
        thr = thr_p if (e.kind == "father" or e.s < probes.fbasis.s_n) else (lam * ln + e.s) / math.sqrt(n)
        exc = int(np.sum(np.abs(P[:, k]) > thr))
        rows.append(dict(event="adapted_partial_sum", kind=e.kind, s=e.s, t=e.t, threshold=thr, exceedances=exc, frequency=exc / R))
    return ExceedanceReport(n, lam, R, d, thr_u, thr_p, rows)


def _uniform_char_sum(x: np.ndarray, h: float, m: int) -> np.ndarray:
    """Empirical sums at the Gauss nodes of m uniform panels of width h, panel-major order."""
    cols = [char_sum(x, h * g, h, m) for g in _GL_X]
    return np.stack(cols, axis=1).reshape(-1)


def _char_sum_at(x: np.ndarray, nodes: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty(nodes.size, dtype=complex)
    for lo in range(0, nodes.size, chunk):
        out[lo : lo + chunk] = np.exp(1j * np.outer(nodes[lo : lo + chunk], x)).sum(axis=1)
    return out
