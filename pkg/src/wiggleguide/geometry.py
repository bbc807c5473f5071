"""Bump profiles, disorder configurations and waveguide segment specifications.

A segment of the wiggled strip is described by a single-cell bump ``g`` on
``(0, l)``, a global coupling ``kappa`` and a disorder vector ``omega`` of
length ``N``.  The boundary profile is::

    P(x1) = kappa * sum_k omega_k * g(x1 - k*l),    0 <= x1 <= L = N*l

and the strip is ``P(x1) < x2 < P(x1) + pi``.  Cells are indexed
``k = 0 .. N-1``, cell ``k`` occupying ``(k*l, (k+1)*l)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import minimize_scalar

from .exceptions import PreconditionError

__all__ = [
    "BUMP_FAMILIES",
    "BumpFunction",
    "Constants",
    "Disorder",
    "WaveguideSpec",
    "cell_quadrature",
    "constants",
    "disorder_norms",
    "make_bump",
    "make_spec",
    "profile_eval",
    "spec_with_epsilon",
]

BUMP_FAMILIES = ("polynomial", "skew_polynomial", "sine")

_SCAN_POINTS = 10_000
_NORM_TOL = 1e-12


def cell_quadrature(l, panels=16, order=24):
    """Composite Gauss-Legendre nodes and weights on ``[0, l]``."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, l, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _raw_family(family, l):
    """Unnormalized profile and its first two derivatives as callables."""
    if family == "polynomial":
        t = Polynomial([0.0, 1.0])
        p = t**3 * (l - t) ** 3
    elif family == "skew_polynomial":
        t = Polynomial([0.0, 1.0])
        p = t**3 * (l - t) ** 4
    elif family == "sine":
        k = np.pi / l

        def g0(s):
            return np.sin(k * s) ** 3

        def g1(s):
            return 3.0 * k * np.sin(k * s) ** 2 * np.cos(k * s)

        def g2(s):
            sn, cs = np.sin(k * s), np.cos(k * s)
            return k * k * (6.0 * sn * cs**2 - 3.0 * sn**3)

        def g3(s):
            sn, cs = np.sin(k * s), np.cos(k * s)
            return k**3 * (6.0 * cs**3 - 21.0 * sn**2 * cs)

        return (g0, g1, g2, g3), ()
    else:
        raise PreconditionError(f"unknown bump family {family!r}; choose from {BUMP_FAMILIES}")
    d1, d2 = p.deriv(1), p.deriv(2)
    return (p, d1, d2, p.deriv(3)), tuple(float(c) for c in p.coef)


def _sup_abs(fn, l):
    """Sup of ``|fn|`` on ``[0, l]``: grid scan plus bounded refinement."""
    t = np.linspace(0.0, l, _SCAN_POINTS + 1)
    vals = np.abs(fn(t))
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo, hi = t[max(i - 1, 0)], t[min(i + 1, _SCAN_POINTS)]
    if hi > lo:
        res = minimize_scalar(
            lambda s: -abs(float(fn(s))), bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-15},
        )
        best = max(best, -float(res.fun))
    return best


@dataclass(frozen=True, eq=False)
class BumpFunction:
    """Single-cell profile ``g`` in C_0^2(0, l), normalized so that
    ``max(sup|g|, sup|g'|, sup|g''|) == 1``.

    Evaluation outside ``[0, l]`` returns zero (compact support).
    """

    l: float
    family: str
    coefficients: tuple
    norm_scale: float
    _fns: tuple = field(repr=False, compare=False)

    def _eval(self, order, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= 0.0) & (t <= self.l)
        out = np.where(inside, self._fns[order](np.clip(t, 0.0, self.l)), 0.0)
        out = self.norm_scale * out
        return float(out) if out.ndim == 0 else out

    def g(self, t):
        return self._eval(0, t)

    def dg(self, t):
        return self._eval(1, t)

    def d2g(self, t):
        return self._eval(2, t)

    def d3g(self, t):
        # piecewise only: g''' may jump at the cell ends
        return self._eval(3, t)

    def sup_norms(self):
        """``(sup|g|, sup|g'|, sup|g''|)`` on ``[0, l]``."""
        return tuple(_sup_abs(lambda s, k=k: self._eval(k, s), self.l) for k in range(3))

    @cached_property
    def integrals(self):
        """Quadrature values ``(int g, ||g||^2, ||g'||^2, ||g''||_1, int |g'''|)``."""
        t, w = cell_quadrature(self.l)
        g, g1, g2, g3 = (self._eval(k, t) for k in range(4))
        return (
            float(w @ g),
            float(w @ g**2),
            float(w @ g1**2),
            float(w @ np.abs(g2)),
            float(w @ np.abs(g3)),
        )

    def __hash__(self):
        return hash((self.l, self.family, self.norm_scale))

    def __eq__(self, other):
        if not isinstance(other, BumpFunction):
            return NotImplemented
        return (self.l, self.family, self.coefficients, self.norm_scale) == (
            other.l, other.family, other.coefficients, other.norm_scale)


def make_bump(family="polynomial", l=1.0):
    """Build a normalized bump of the given family on a cell of length ``l``.

    Families: ``polynomial`` (t^3 (l-t)^3), ``skew_polynomial`` (t^3 (l-t)^4,
    no reflection symmetry) and ``sine`` (sin^3(pi t / l)).
    """
    l = float(l)
    if not l >= 1.0:
        raise PreconditionError(f"cell length l must be >= 1, got {l}")
    fns, coefs = _raw_family(family, l)
    raw = BumpFunction(l=l, family=family, coefficients=coefs, norm_scale=1.0, _fns=fns)
    scale = 1.0 / max(raw.sup_norms())
    bump = BumpFunction(l=l, family=family, coefficients=coefs, norm_scale=scale, _fns=fns)
    if abs(max(bump.sup_norms()) - 1.0) > _NORM_TOL:
        raise RuntimeError("bump normalization failed")  # pragma: no cover
    return bump


@dataclass(frozen=True)
class Constants:
    """Derived scalar quantities of a bump.

    ``c2`` uses the squared norm of the mean-free profile.
    """

    g_integral: float
    g_sq: float
    gprime_sq: float
    gtilde_sq: float
    c2: float
    c3: float


def constants(bump):
    """Norms of ``g``, ``g'`` and ``g~ = g - mean(g)`` plus ``c2``, ``c3``."""
    gint, gsq, g1sq, _, _ = bump.integrals
    l = bump.l
    gtilde_sq = gsq - gint**2 / l
    return Constants(
        g_integral=gint,
        g_sq=gsq,
        gprime_sq=g1sq,
        gtilde_sq=gtilde_sq,
        c2=1.5 * gtilde_sq / l**3,
        c3=(3.0 / 5000.0) * gtilde_sq / l**7,
    )


@dataclass(frozen=True, eq=False)
class Disorder:
    """Finite disorder vector ``omega`` with entries in ``[0, 1]``."""

    omega: np.ndarray

    def __post_init__(self):
        w = np.array(self.omega, dtype=float).ravel()
        if w.size == 0:
            raise PreconditionError("disorder vector must be non-empty")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0) or np.any(w > 1.0):
            raise PreconditionError("disorder entries must lie in [0, 1]")
        w.flags.writeable = False
        object.__setattr__(self, "omega", w)

    @property
    def N(self):
        return self.omega.size

    def __eq__(self, other):
        if not isinstance(other, Disorder):
            return NotImplemented
        return np.array_equal(self.omega, other.omega)

    def __hash__(self):
        return hash(self.omega.tobytes())


def disorder_norms(d):
    """Return ``(||omega||_1, ||omega||_2, ||omega||_inf)``."""
    w = d.omega if isinstance(d, Disorder) else np.asarray(d, dtype=float)
    a = np.abs(w)
    return float(a.sum()), float(np.sqrt(a @ a)), float(a.max(initial=0.0))


@dataclass(frozen=True)
class WaveguideSpec:
    """Finite segment of the wiggled strip: bump, coupling and disorder."""

    bump: BumpFunction
    kappa: float
    disorder: Disorder

    def __post_init__(self):
        if not self.kappa >= 0.0:
            raise PreconditionError(f"kappa must be >= 0, got {self.kappa}")

    @property
    def l(self):
        return self.bump.l

    @property
    def N(self):
        return self.disorder.N

    @property
    def L(self):
        return self.N * self.bump.l

    @cached_property
    def rho(self):
        r = self.kappa * self.disorder.omega
        r.flags.writeable = False
        return r

    @cached_property
    def epsilon(self):
        return self.kappa * disorder_norms(self.disorder)[1]

    @cached_property
    def theta(self):
        """Unit direction ``rho / epsilon``; zero vector for the straight guide."""
        if self.epsilon == 0.0:
            return np.zeros(self.N)
        t = self.rho / self.epsilon
        return t / np.sqrt(t @ t)

    def profile(self, x1, order=0):
        """Profile ``P = eps*G(., theta)`` or its derivative of the given order."""
        x = np.asarray(x1, dtype=float)
        k = np.clip(np.floor(x / self.l).astype(int), 0, self.N - 1)
        t = x - k * self.l
        out = self.rho[k] * self.bump._eval(order, t)
        return float(out) if np.ndim(out) == 0 else out

    def unit_profile(self, x1, order=0):
        """``G(x1, theta)`` and derivatives: the profile with ``epsilon`` divided out."""
        x = np.asarray(x1, dtype=float)
        k = np.clip(np.floor(x / self.l).astype(int), 0, self.N - 1)
        t = x - k * self.l
        out = self.theta[k] * self.bump._eval(order, t)
        return float(out) if np.ndim(out) == 0 else out


def make_spec(bump, kappa, omega):
    return WaveguideSpec(bump=bump, kappa=float(kappa), disorder=Disorder(omega))


def spec_with_epsilon(bump, omega, epsilon):
    """Spec whose coupling is chosen so that ``kappa*||omega||_2 == epsilon``."""
    d = Disorder(omega)
    n2 = disorder_norms(d)[1]
    if n2 == 0.0:
        if epsilon != 0.0:
            raise PreconditionError("cannot reach epsilon > 0 with omega == 0")
        return WaveguideSpec(bump=bump, kappa=0.0, disorder=d)
    return WaveguideSpec(bump=bump, kappa=float(epsilon) / n2, disorder=d)


def profile_eval(spec, x1):
    """Boundary profile ``kappa * sum_k omega_k g(x1 - k l)`` at ``x1`` in ``[0, L]``."""
    x = np.asarray(x1, dtype=float)
    if np.any(x < 0.0) or np.any(x > spec.L):
        raise PreconditionError(f"x1 outside [0, {spec.L}]")
    return spec.profile(x)
