"""Analytic expansion of the ground-state shift ``lambda(rho) - 1``.

Write the profile as ``eps * G(xi1, theta)`` with ``||theta||_2 = 1`` and
expand ``G`` in the Neumann cosine basis of ``(0, L)``::

    G = sum_{n>=0} G_n cos(pi n xi1 / L)

The shift is ``eps^2 * S + O(eps^4)`` with::

    S = 32 sum_{n,m>=1} n^2 m^2 G_n^2 / ((4m^2-1) ((4m^2-1) L^2 + pi^2 n^2))

The inner sum over ``m`` has the closed form ``phi(c) / (8 b)`` with
``b = pi^2 n^2 / L^2``, ``c = b - 1`` and ``phi(c) = x coth x`` (``c > 0``) or
``x cot x`` (``c < 0``), ``x = pi sqrt|c| / 2``; it is used for exact
truncation remainders.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .geometry import cell_quadrature, constants

__all__ = [
    "FEM_RESOLUTION",
    "BoundReport",
    "FemShiftFit",
    "FourierSeries",
    "deterministic_bound",
    "fem_shift_fit",
    "first_order_term",
    "fourier_coefficients",
    "margin_constant",
    "m_sum_closed_form",
    "predicted_shift",
    "second_order_bracket",
    "second_order_coefficient",
]

# noise floor of double-precision FEM eigenvalues near 1 on desk-scale grids
FEM_RESOLUTION = 1e-12
_CHUNK = 256


def margin_constant():
    """``64 / (9 + 3 pi^2)``: the series-level constant of the lower bound."""
    return 64.0 / (9.0 + 3.0 * math.pi**2)


@dataclass(frozen=True)
class FourierSeries:
    G0: float
    Gn: np.ndarray  # n = 1 .. n_max
    n_max: int
    tail_bound: float
    L: float
    G2_L1: float  # ||G''||_{L1(0,L)}
    G2_TV: float  # total variation of G''

    def coefficient_bound(self, n):
        """Upper bound on ``|G_n|`` from the smoothness of ``G``."""
        n = np.asarray(n, dtype=float)
        L = self.L
        b1 = 2.0 * L * self.G2_L1 / (math.pi**2 * n**2)
        b2 = 2.0 * L**2 * self.G2_TV / (math.pi**3 * n**3)
        return np.minimum(b1, b2)


@lru_cache(maxsize=64)
def _cell_moments(bump, N, n_max):
    """``A_n = int_0^l g cos(pi n t / L)``, ``B_n = int_0^l g sin(pi n t / L)``."""
    l = bump.l
    L = N * l
    # keep the phase advance per panel below ~2 rad for 20-point Gauss
    panels = max(16, int(math.ceil(math.pi * n_max * l / (2.0 * L))))
    t, w = cell_quadrature(l, panels=panels, order=20)
    wg = w * bump.g(t)
    n = np.arange(1, n_max + 1, dtype=float)
    A = np.empty(n_max)
    B = np.empty(n_max)
    for s in range(0, n_max, _CHUNK):
        ph = np.outer(n[s:s + _CHUNK], t) * (math.pi / L)
        A[s:s + _CHUNK] = np.cos(ph) @ wg
        B[s:s + _CHUNK] = np.sin(ph) @ wg
    A.flags.writeable = False
    B.flags.writeable = False
    return A, B


def fourier_coefficients(spec, n_max=None):
    """Cosine coefficients of the unit profile ``G(., theta)`` on ``(0, L)``.

    Default ``n_max`` is ``512 * N``.  ``tail_bound`` bounds the Parseval
    remainder ``sum_{n > n_max} L G_n^2 / 2``.
    """
    N, l, L = spec.N, spec.l, spec.L
    if n_max is None:
        n_max = 512 * N
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    theta = spec.theta
    gint, _, _, g2_l1, g3_l1 = spec.bump.integrals
    A, B = _cell_moments(spec.bump, N, int(n_max))
    n = np.arange(1, n_max + 1, dtype=float)
    shifts = np.outer(n, np.arange(N) * l) * (math.pi / L)  # (n_max, N)
    Gn = (2.0 / L) * ((np.cos(shifts) * A[:, None] - np.sin(shifts) * B[:, None]) @ theta)
    G0 = float(theta.sum()) * gint / L
    abs_theta = float(np.abs(theta).sum())
    G2_L1 = abs_theta * g2_l1
    G2_TV = abs_theta * g3_l1
    M = float(n_max)
    tail = min(
        2.0 * L**3 * G2_L1**2 / (3.0 * math.pi**4 * M**3),
        2.0 * L**5 * G2_TV**2 / (5.0 * math.pi**6 * M**5),
    )
    Gn.flags.writeable = False
    return FourierSeries(G0=G0, Gn=Gn, n_max=int(n_max), tail_bound=tail, L=L,
                         G2_L1=G2_L1, G2_TV=G2_TV)


def m_sum_closed_form(b):
    """``sum_{m>=1} m^2 / ((4m^2-1)(4m^2-1+b))`` for ``b > 0``."""
    b = np.asarray(b, dtype=float)
    c = b - 1.0
    x = 0.5 * math.pi * np.sqrt(np.abs(c))
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(c > 0, x / np.tanh(x), x / np.tan(x))
    phi = np.where(c == 0.0, 1.0, phi)
    return phi / (8.0 * b)


def _m_partial(b, m_max):
    m = np.arange(1, m_max + 1, dtype=float)[None, :]
    q = 4.0 * m * m - 1.0
    return np.sum(m * m / (q * (q + b[:, None])), axis=1)


def second_order_coefficient(series, L, m_max=256):
    """Second-order coefficient ``S`` and a bound on its truncation error.

    ``m_max=None`` sums the ``m`` series in closed form.  The returned tail
    is the exact ``m`` remainder plus a bound on the ``n > n_max`` remainder,
    so ``S <= S_true <= S + tail``.
    """
    if m_max is not None and m_max < 1:
        raise ValueError("m_max must be >= 1")
    Gn = series.Gn
    n = np.arange(1, series.n_max + 1, dtype=float)
    b = (math.pi * n / L) ** 2
    weight = 32.0 * n**2 * Gn**2 / L**2
    exact = m_sum_closed_form(b)
    if m_max is None:
        inner = exact
        m_tail = 0.0
    else:
        inner = _m_partial(b, int(m_max))
        m_tail = float(np.sum(weight * np.maximum(exact - inner, 0.0)))
    S = float(np.sum(weight * inner))
    V, G1 = series.G2_TV, series.G2_L1
    M = float(series.n_max)
    n_tail = min(2.0 * G1**2 / (math.pi**2 * M),
                 2.0 * L**2 * V**2 / (3.0 * math.pi**4 * M**3))
    return S, m_tail + n_tail


def second_order_bracket(series, L, m_max=256):
    """``<G'' R0(1) G'' d2 psi0, d2 psi0>`` as an explicit eigenmode sum.

    Summed over the straight-guide modes ``cos(pi n xi1/L) sin(2 m xi2)``.
    For fixed ``n`` the terms decay like ``m^-2`` up to ``m ~ pi n / (2L)``
    and like ``m^-4`` beyond, so high ``n_max`` needs a matching ``m_max``.
    """
    Gn = series.Gn
    n = np.arange(1, series.n_max + 1, dtype=float)[:, None]
    a = (math.pi * n / L) ** 2
    w = 32.0 * a * n**2 * Gn[:, None] ** 2 / L**2
    total = 0.0
    for start in range(1, m_max + 1, _CHUNK):
        m = np.arange(start, min(start + _CHUNK, m_max + 1), dtype=float)[None, :]
        q = 4.0 * m * m - 1.0
        total += float(np.sum(w * m**2 / (q**2 * (q + a))))
    return total


def first_order_term(spec):
    """``<Q psi0, psi0> = -(eps / L) ||g'||^2_{L2(0,l)}``."""
    return -(spec.epsilon / spec.L) * constants(spec.bump).gprime_sq


def predicted_shift(spec, n_max=None, m_max=256, return_tail=False):
    """Second-order prediction ``eps^2 S`` of ``lambda(rho) - 1``.

    The Neumann-series smallness ``eps * 104 L^2 / pi^2 < 1`` is not needed
    to evaluate the expression; ``deterministic_bound`` reports it.
    """
    eps2 = spec.epsilon**2
    if eps2 == 0.0:
        return (0.0, 0.0) if return_tail else 0.0
    S, tail = second_order_coefficient(fourier_coefficients(spec, n_max), spec.L, m_max)
    return (eps2 * S, eps2 * tail) if return_tail else eps2 * S


@dataclass(frozen=True)
class BoundReport:
    epsilon: float
    L: float
    premise_threshold: float
    premise_ok: bool
    lower_bound: float
    upper_bound: float
    S: float
    S_tail: float
    predicted_shift: float
    margin_ratio: float
    ultimate_lower: float
    neumann_factor: float
    neumann_ok: bool
    third_order_bounds: tuple
    fem_resolvable: bool
    reduced_precision: bool
    numeric_lambda: float | None = None
    notes: list = field(default_factory=list)

    def as_dict(self):
        from dataclasses import asdict
        d = asdict(self)
        d["third_order_bounds"] = list(self.third_order_bounds)
        return d


def deterministic_bound(spec, n_max=None, m_max=256, fem_grid=None):
    """Evaluate the premise, the lower bound and the series for one spec.

    ``fem_grid`` (optional) attaches the finite-element ground eigenvalue.
    """
    c = constants(spec.bump)
    eps, L = spec.epsilon, spec.L
    gt = c.gtilde_sq
    threshold = (3.0 / 5000.0) * gt / L**7
    if eps > 0.0:
        S, tail = second_order_coefficient(fourier_coefficients(spec, n_max), L, m_max)
    else:
        S, tail = 0.0, 0.0
    shift = eps**2 * S
    pi2 = math.pi**2
    third = (
        4.0 * eps**3 * L**4 / pi2,
        2.0 * eps**3 * L**4 / pi2,
        3.0 * eps**3 * L**4 / (1250.0 * pi2**2),
        250.0 * 104.0**2 * L**4 * eps**3 / (125.0 * pi2**2 - 8.0 * pi2),
    )
    notes = []
    resolvable = shift > FEM_RESOLUTION
    if eps > 0.0 and not resolvable:
        notes.append(f"predicted shift {shift:.3e} is below FEM resolution {FEM_RESOLUTION:.0e}")
    reduced = eps > 0.0 and tail > 1e-10 * S
    if reduced:
        notes.append(f"series truncation tail {tail:.3e} exceeds 1e-10*S")
    numeric = None
    if fem_grid is not None:
        from .assembly import assemble
        from .eigensolve import smallest_eigs

        numeric = float(smallest_eigs(assemble(spec, fem_grid), 1).eigenvalues[0])
    neumann = eps * 104.0 * L**2 / pi2
    return BoundReport(
        epsilon=eps,
        L=L,
        premise_threshold=threshold,
        premise_ok=eps <= threshold,
        lower_bound=1.5 * gt * eps**2 / L**3,
        upper_bound=1.0 + eps**2,
        S=S,
        S_tail=tail,
        predicted_shift=shift,
        margin_ratio=S * L**3 / gt if gt > 0 else float("nan"),
        ultimate_lower=margin_constant() * eps**2 * gt / L**3 - 225.0 * L**4 * eps**3,
        neumann_factor=neumann,
        neumann_ok=neumann < 1.0,
        third_order_bounds=third,
        fem_resolvable=resolvable,
        reduced_precision=reduced,
        numeric_lambda=numeric,
        notes=notes,
    )


@dataclass(frozen=True)
class FemShiftFit:
    epsilons: np.ndarray
    ratios: np.ndarray  # Richardson-extrapolated (lambda - 1) / eps^2 per eps
    S_fem: float  # intercept of the fit ratio = S + C eps^2
    slope: float
    grids: tuple


def fem_shift_fit(bump, omega, epsilons=(1e-2, 5e-3, 2.5e-3), per_cell=64, n2=65, tol=1e-10):
    """Second-order coefficient from finite elements.

    For each ``eps`` the same-grid difference ``lambda_h(eps) - lambda_h(0)``
    is divided by ``eps^2`` and Richardson-extrapolated over ``h, h/2``.  The
    shift is even in ``eps``, so the ratios are fitted linearly in ``eps^2``
    and the intercept estimates ``S``.
    """
    from .assembly import assemble, grid_for
    from .eigensolve import richardson, smallest_eigs
    from .geometry import WaveguideSpec, spec_with_epsilon

    eps = np.asarray(epsilons, dtype=float)
    if eps.size < 2 or np.any(eps <= 0):
        raise ValueError("need at least two positive epsilons")
    base = spec_with_epsilon(bump, omega, float(eps[0]))
    straight = WaveguideSpec(bump=bump, kappa=0.0, disorder=base.disorder)
    coarse = grid_for(base, per_cell, n2)
    per_grid = []
    for grid in (coarse, coarse.refined()):
        lam0 = smallest_eigs(assemble(straight, grid), 1, tol=tol).eigenvalues[0]
        row = []
        for e in eps:
            lam = smallest_eigs(assemble(spec_with_epsilon(bump, omega, e), grid), 1,
                                tol=tol).eigenvalues[0]
            row.append((lam - lam0) / e**2)
        per_grid.append(np.array(row))
    ratios = richardson(per_grid[0], per_grid[1])
    slope, intercept = np.polyfit(eps**2, ratios, 1)
    return FemShiftFit(eps, ratios, float(intercept), float(slope),
                       (coarse.label(), coarse.refined().label()))
