"""Disorder sampling, large deviations, the coupling window and Monte Carlo.

Random streams are counter-based: trial ``i`` of a run with seed ``s`` uses
a Philox generator keyed by ``s`` with one counter word set to ``i``, so any
trial can be regenerated independently of how trials are scheduled.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import beta

from .assembly import assemble, assemble_segment
from .eigensolve import smallest_eigs
from .exceptions import ConvergenceError, PreconditionError
from .geometry import Disorder, WaveguideSpec

__all__ = [
    "BracketingReport",
    "DistributionSpec",
    "ProbabilityEstimate",
    "TheoremParams",
    "bracketing_check",
    "clopper_pearson",
    "estimate_from_shifts",
    "hoeffding_c4",
    "kappa_window",
    "ldp_exact_tail",
    "mc_low_eig_probability",
    "sample_config",
    "sample_ground_shifts",
    "theorem_interval",
    "trial_rng",
]

_KINDS = ("bernoulli", "uniform", "two_point")


@dataclass(frozen=True)
class DistributionSpec:
    """Single-site law supported in ``[0, 1]``.

    ``bernoulli``: ``scale`` with probability ``p``, else 0.
    ``uniform``: uniform on ``[0, 1]``.
    ``two_point``: ``b`` with probability ``p``, else ``a``.
    """

    kind: str
    p: float = 0.5
    scale: float = 1.0
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise PreconditionError(f"unknown distribution {self.kind!r}; choose from {_KINDS}")
        if self.kind == "bernoulli":
            if not (0.0 < self.p <= 1.0 and 0.0 < self.scale <= 1.0):
                raise PreconditionError("bernoulli needs 0 < p <= 1 and 0 < scale <= 1")
        elif self.kind == "two_point":
            if not (0.0 <= self.a <= 1.0 and 0.0 <= self.b <= 1.0 and 0.0 <= self.p <= 1.0):
                raise PreconditionError("two_point needs a, b, p in [0, 1]")
            if self.mean <= 0.0:
                raise PreconditionError("two_point law is trivial (point mass at 0)")

    @property
    def mean(self):
        if self.kind == "bernoulli":
            return self.p * self.scale
        if self.kind == "uniform":
            return 0.5
        return (1.0 - self.p) * self.a + self.p * self.b

    def draw(self, rng, n):
        u = rng.random(n)
        if self.kind == "uniform":
            return u
        if self.kind == "bernoulli":
            return np.where(u < self.p, self.scale, 0.0)
        return np.where(u < self.p, self.b, self.a)


def trial_rng(seed, trial):
    """Counter-based generator for trial ``trial`` of a run keyed by ``seed``."""
    if seed < 0 or trial < 0:
        raise PreconditionError("seed and trial index must be non-negative")
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, 0, int(trial)]))


def sample_config(mu, N, seed, trial=0):
    """``N`` i.i.d. draws from ``mu``; a pure function of ``(seed, trial)``."""
    return Disorder(mu.draw(trial_rng(seed, trial), int(N)))


def hoeffding_c4(mu):
    """Large-deviation rate ``E^2 / 2`` for ``[0, 1]``-valued variables.

    Hoeffding with deviation ``E/2`` gives
    ``P(mean_n <= E/2) <= exp(-2 n (E/2)^2) = exp(-n E^2 / 2)``.
    """
    m = mu.mean
    if not m > 0.0:
        raise PreconditionError("trivial distribution: mean is zero")
    return 0.5 * m * m


def ldp_exact_tail(p, n):
    """``P(S_n / n <= p/2)`` for ``S_n ~ Binomial(n, p)``, summed in log space."""
    if not 0.0 < p <= 1.0:
        raise PreconditionError("p must lie in (0, 1]")
    n = int(n)
    if n < 1:
        raise PreconditionError("n must be >= 1")
    kmax = math.floor(n * p / 2.0 + 1e-9)
    if p == 1.0:
        return 1.0 if kmax >= n else 0.0
    k = np.arange(kmax + 1, dtype=float)
    logc = gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
    terms = logc + k * math.log(p) + (n - k) * math.log1p(-p)
    return float(min(1.0, math.exp(logsumexp(terms))))


@dataclass(frozen=True)
class TheoremParams:
    gamma: float
    N: float
    lower: float
    upper: float
    nonempty: bool
    log10_N1: float
    log10_N_nonempty: float
    c4: float
    remark_kappa: float
    notes: tuple = ()

    @property
    def N1(self):
        return 10.0**self.log10_N1 if self.log10_N1 < 308 else math.inf


def theorem_interval(gamma, N, mu, consts):
    """Coupling window ``I_N`` and initial scale ``N1``.

    ``I_N = [2 N^(1/gamma - 1/4) / (E sqrt(c2)), c3 N^(-15/(2 gamma))]`` and
    ``N1 = (E c3 sqrt(c2) / 2)^(-2 gamma / (gamma - 34))``.  Equating the two
    endpoints gives the exact threshold ``X^(-4 gamma / (gamma - 34))`` with
    ``X = E c3 sqrt(c2) / 2``; it is reported as ``log10_N_nonempty``.
    """
    gamma = float(gamma)
    if not gamma > 34.0:
        raise PreconditionError(f"gamma must exceed 34, got {gamma}")
    if N < 1:
        raise PreconditionError("N must be >= 1")
    E = mu.mean
    c2, c3 = consts.c2, consts.c3
    lower = 2.0 * N ** (1.0 / gamma - 0.25) / (E * math.sqrt(c2))
    upper = c3 * N ** (-15.0 / (2.0 * gamma))
    log10_X = math.log10(E * c3 * math.sqrt(c2) / 2.0)
    log10_N1 = -2.0 * gamma / (gamma - 34.0) * log10_X
    log10_nonempty = -4.0 * gamma / (gamma - 34.0) * log10_X
    notes = ()
    if log10_N1 < log10_nonempty:
        notes = ("the stated N1 is below the exact non-emptiness threshold of I_N",)
    return TheoremParams(
        gamma=gamma, N=float(N), lower=lower, upper=upper, nonempty=lower <= upper,
        log10_N1=log10_N1, log10_N_nonempty=log10_nonempty, c4=hoeffding_c4(mu),
        remark_kappa=c3 * N ** (-0.25), notes=notes,
    )


def kappa_window(K, gamma, mu, consts):
    """Window for ``kappa`` at block size ``K``: ``[2 K^(1-gamma/4)/(E sqrt c2), c3 K^(-15/2)]``."""
    E = mu.mean
    return (2.0 * K ** (1.0 - gamma / 4.0) / (E * math.sqrt(consts.c2)),
            consts.c3 * K ** (-7.5))


def clopper_pearson(successes, trials, level=0.95):
    """Exact two-sided binomial confidence interval."""
    a = 1.0 - level
    k, n = int(successes), int(trials)
    lo = 0.0 if k == 0 else float(beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class ProbabilityEstimate:
    event: str
    trials: int
    successes: int
    estimate: float
    ci_low: float
    ci_high: float
    seed: int


def _ground_shift(bump, kappa, mu, N, seed, trial, grid, tol):
    spec = WaveguideSpec(bump=bump, kappa=kappa, disorder=sample_config(mu, N, seed, trial))
    try:
        res = smallest_eigs(assemble(spec, grid), 1, tol=tol)
    except ConvergenceError as exc:
        exc.index = trial
        raise ConvergenceError(f"trial {trial}: {exc}", exc.residual, trial) from exc
    return res.eigenvalues[0] - 1.0


def sample_ground_shifts(bump, N, kappa, mu, trials, seed, grid, workers=1, tol=1e-8):
    """``lambda_1 - 1`` for trials ``0 .. trials-1``, in trial order."""
    if trials < 1:
        raise PreconditionError("trials must be >= 1")

    def one(i):
        return _ground_shift(bump, kappa, mu, N, seed, i, grid, tol)

    if workers <= 1:
        return np.array([one(i) for i in range(trials)])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.array(list(pool.map(one, range(trials))))


def estimate_from_shifts(shifts, t, seed, level=0.95):
    k = int(np.count_nonzero(np.asarray(shifts) <= t))
    n = len(shifts)
    lo, hi = clopper_pearson(k, n, level)
    return ProbabilityEstimate(f"lambda_1 - 1 <= {t:g}", n, k, k / n, lo, hi, int(seed))


def mc_low_eig_probability(bump, N, kappa, mu, t, trials, seed, grid, workers=1, tol=1e-8):
    """Monte Carlo estimate of ``P(lambda_1 - 1 <= t)`` with an exact 95% interval."""
    shifts = sample_ground_shifts(bump, N, kappa, mu, trials, seed, grid, workers, tol)
    return estimate_from_shifts(shifts, t, seed)


@dataclass(frozen=True)
class BracketingReport:
    N: int
    Kcells: int
    lambda_full: float
    lambda_segments: tuple
    min_segment: float
    margin: float
    holds: bool


def bracketing_check(spec, Kcells, grid, tol=1e-8):
    """Compare the full ground eigenvalue with Neumann-decoupled blocks of ``Kcells`` cells.

    Blocks start at cells ``0, Kcells, 2 Kcells, ...``.
    """
    if Kcells < 1 or spec.N % Kcells:
        raise PreconditionError(f"Kcells={Kcells} must divide N={spec.N}")
    full = smallest_eigs(assemble(spec, grid), 1).eigenvalues[0]
    segs = tuple(
        float(smallest_eigs(assemble_segment(spec, grid, j, Kcells), 1).eigenvalues[0])
        for j in range(0, spec.N, Kcells)
    )
    low = min(segs)
    return BracketingReport(spec.N, Kcells, float(full), segs, low, float(full - low),
                            bool(full >= low - tol))
