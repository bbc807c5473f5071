"""Resolvent decay between the two end strips of a segment.

The weight ``J`` used for the exponential conjugation is implemented with
its derivatives; the conjugated operators themselves are never formed.  What
is measured is the block norm ``||chi_A (H - lam)^{-1} chi_B||`` for
``A = [0, alpha]`` and ``B = [L - beta, L]``, against
``(2 / delta) exp(-delta dist / 24)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .eigensolve import block_resolvent_norm, smallest_eigs
from .exceptions import BoundViolation, PreconditionError, SpectralGapError

__all__ = [
    "DecayReport",
    "WeightFunction",
    "ct_bound",
    "ct_measure",
    "ct_sweep",
    "decay_rate_fit",
    "final_bound",
    "pa_bound_report",
    "weight_eval",
]


@dataclass(frozen=True)
class WeightFunction:
    """``J(t) = 3t^2 - 3t^3 + t^4`` on ``[0, 1]``, ``t`` in the middle, point-symmetric end."""

    L: float

    def __post_init__(self):
        if not self.L >= 2.0:
            raise PreconditionError(f"weight function needs L >= 2, got {self.L}")

    @staticmethod
    def _left(t):
        return (3 * t**2 - 3 * t**3 + t**4,
                6 * t - 9 * t**2 + 4 * t**3,
                6 - 18 * t + 12 * t**2)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        L = self.L
        j0, j1, j2 = self._left(np.clip(t, 0.0, 1.0))
        r0, r1, r2 = self._left(np.clip(L - t, 0.0, 1.0))
        left, right = t <= 1.0, t >= L - 1.0
        J = np.where(left, j0, np.where(right, L - r0, t))
        dJ = np.where(left, j1, np.where(right, r1, 1.0))
        d2J = np.where(left, j2, np.where(right, -r2, 0.0))
        if J.ndim == 0:
            return float(J), float(dJ), float(d2J)
        return J, dJ, d2J


def weight_eval(J, t):
    """``(J(t), J'(t), J''(t))`` for ``0 <= t <= L``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0) or np.any(t_arr > J.L):
        raise PreconditionError(f"t outside [0, {J.L}]")
    return J(t)


def ct_bound(delta, dist):
    """``(2 / delta) exp(-delta dist / 24)``."""
    if not 0.0 < delta <= 1.0:
        raise PreconditionError(f"delta must lie in (0, 1], got {delta}")
    if dist < 0.0:
        raise PreconditionError("dist must be >= 0")
    return 2.0 / delta * math.exp(-delta * dist / 24.0)


def final_bound(N, dist):
    """``2 sqrt(N) exp(-dist / (48 sqrt(N)))``."""
    r = math.sqrt(N)
    return 2.0 * r * math.exp(-dist / (48.0 * r))


def pa_bound_report(delta, lam):
    """Norm estimate of the conjugation perturbation times the resolvent, ``a = delta/24``.

    Returns ``a [(25a/16 + 6)/delta + (5/2) sqrt(lam/delta^2 + 1/delta)]`` and
    raises ``BoundViolation`` if it exceeds ``12 a / delta = 1/2``.
    """
    if not 0.0 < delta <= 1.0:
        raise PreconditionError(f"delta must lie in (0, 1], got {delta}")
    if not 1.0 <= lam <= 2.0:
        raise PreconditionError(f"lambda must lie in [1, 2], got {lam}")
    a = delta / 24.0
    value = a * ((25.0 * a / 16.0 + 6.0) / delta
                 + 2.5 * math.sqrt(lam / delta**2 + 1.0 / delta))
    if value > 12.0 * a / delta:
        raise BoundViolation(f"chain value {value} exceeds {12.0 * a / delta}")
    return value


@dataclass(frozen=True)
class DecayReport:
    alpha: float
    beta: float
    dist: float
    delta: float
    lam: float
    N: int
    measured_norm: float
    proof_bound: float
    final_bound: float
    residual_ok: bool
    bound_ok: bool

    def as_dict(self):
        return asdict(self)


def _delta(spectrum, lam):
    vals = spectrum.eigenvalues[:2]
    return float(np.min(np.abs(vals - lam)))


def ct_measure(spec, grid, lam, alpha, beta, op=None, spectrum=None, tol=1e-10, rtol=1e-6):
    """Measure the end-strip resolvent block and compare it with the decay bound."""
    from .assembly import assemble

    if alpha < 2.0 or beta < 2.0:
        raise PreconditionError("alpha and beta must be >= 2")
    L = spec.L
    dist = L - alpha - beta
    if dist < 0.0:
        raise PreconditionError(f"strips overlap: alpha + beta = {alpha + beta} > L = {L}")
    if op is None:
        op = assemble(spec, grid)
    if spectrum is None:
        spectrum = smallest_eigs(op, 2)
    delta = _delta(spectrum, lam)
    if delta <= 1e-10:
        raise SpectralGapError(f"lambda={lam} lies on the discrete spectrum", delta)
    if delta > 1.0:
        raise PreconditionError(f"spectral gap {delta} exceeds 1")
    measured = block_resolvent_norm(op, lam, (0.0, alpha), (L - beta, L), spectrum=spectrum,
                                    tol=tol)
    proof = ct_bound(delta, dist)
    residual_ok = bool(np.all(spectrum.residuals[:2] < 1e-8))
    return DecayReport(
        alpha=float(alpha), beta=float(beta), dist=float(dist), delta=delta, lam=float(lam),
        N=spec.N, measured_norm=measured, proof_bound=proof,
        final_bound=final_bound(spec.N, dist), residual_ok=residual_ok,
        bound_ok=measured <= proof * (1.0 + rtol),
    )


def ct_sweep(spec, grid, lam, alphas, betas=None, workers=1, tol=1e-10):
    """``ct_measure`` over strip pairs sharing one factorization of the spectrum."""
    from .assembly import assemble

    betas = alphas if betas is None else betas
    op = assemble(spec, grid)
    spectrum = smallest_eigs(op, 2)

    def one(ab):
        return ct_measure(spec, grid, lam, ab[0], ab[1], op=op, spectrum=spectrum, tol=tol)

    pairs = list(zip(alphas, betas))
    if workers <= 1:
        return [one(p) for p in pairs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, pairs))


def decay_rate_fit(reports):
    """Least-squares decay rate ``r`` in ``measured ~ C exp(-r dist)``."""
    d = np.array([r.dist for r in reports])
    y = np.log([r.measured_norm for r in reports])
    slope = np.polyfit(d, y, 1)[0]
    return float(-slope)
