"""Eigenpairs, resolvents and resolvent norms of a discrete pencil ``(K, M)``.

All norms are taken in the ``M`` inner product, i.e. they are the ``L2``
norms of the finite-element functions represented by coefficient vectors.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .exceptions import ConvergenceError, PreconditionError, SpectralGapError

__all__ = [
    "DENSE_LIMIT",
    "LemmaNormReport",
    "ModifiedResolvent",
    "SHIFT",
    "SpectralResult",
    "block_resolvent_norm",
    "lemma_norm_check",
    "modified_resolvent_apply",
    "power_iteration",
    "reference_mode",
    "richardson",
    "smallest_eigs",
    "solve_resolvent",
]

logger = logging.getLogger(__name__)

SHIFT = 0.9
DENSE_LIMIT = 4096
LOWER_SLACK = 1e-10


@dataclass(frozen=True)
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, M-orthonormal
    residuals: np.ndarray
    grid: object
    iterations: int
    method: str


def _residuals(K, M, vals, vecs):
    MV = M @ vecs
    R = K @ vecs - MV * vals[None, :]
    return np.linalg.norm(R, axis=0) / np.linalg.norm(MV, axis=0)


def _normalize_signs(vecs):
    # deterministic sign: largest-magnitude entry positive
    idx = np.argmax(np.abs(vecs), axis=0)
    s = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    s[s == 0] = 1.0
    return vecs * s[None, :]


def smallest_eigs(op, k=1, tol=1e-8, method="auto", maxiter=None):
    """``k`` smallest eigenpairs of ``K v = lam M v``.

    Sparse path: shift-invert Lanczos about ``SHIFT`` (below the spectrum)
    with a fixed start vector.  Dense path: LAPACK generalized symmetric
    solver; ``auto`` uses it only as a fallback when Lanczos fails on a
    problem of size ``<= DENSE_LIMIT``.
    Raises ``ConvergenceError`` if any residual exceeds ``tol``.
    """
    if k < 1:
        raise PreconditionError("k must be >= 1")
    if not tol > 0:
        raise PreconditionError("tol must be > 0")
    n = op.size
    if method == "auto":
        method = "sparse"
    if method == "dense":
        vals, vecs = sla.eigh(op.K.toarray(), op.M.toarray(), subset_by_index=[0, k - 1])
        iterations = 0
    elif method == "sparse":
        lu = spla.splu((op.K - SHIFT * op.M).tocsc())
        opinv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
        ncv = min(n, max(2 * k + 1, 20))
        try:
            vals, vecs = spla.eigsh(
                op.K, k=k, M=op.M, sigma=SHIFT, which="LM", OPinv=opinv,
                v0=np.ones(n), ncv=ncv, tol=0.0, maxiter=maxiter,
            )
        except spla.ArpackNoConvergence as exc:
            if n <= DENSE_LIMIT:
                logger.warning("Lanczos did not converge; falling back to the dense solver")
                return smallest_eigs(op, k, tol=tol, method="dense")
            raise ConvergenceError(
                f"shift-invert Lanczos did not converge ({len(exc.eigenvalues)}/{k} pairs)"
            ) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        # re-orthonormalize in M (guards against loss of orthogonality)
        G = vecs.T @ (op.M @ vecs)
        Lc = np.linalg.cholesky(0.5 * (G + G.T))
        vecs = sla.solve_triangular(Lc, vecs.T, lower=True).T
        iterations = ncv
    else:
        raise PreconditionError(f"unknown method {method!r}")
    vecs = _normalize_signs(vecs)
    res = _residuals(op.K, op.M, vals, vecs)
    if np.any(res > tol):
        raise ConvergenceError(
            f"eigenpair residual {res.max():.3e} exceeds tol {tol:.1e}", residual=float(res.max()))
    if vals[0] < 1.0 - LOWER_SLACK:
        logger.warning("Ritz value %.16g below 1: assembly or solver defect", vals[0])
    return SpectralResult(vals, vecs, res, op.grid, iterations, method)


def richardson(lam_h, lam_h2):
    """Eliminate the ``O(h^2)`` term from values on grids ``h`` and ``h/2``."""
    return (4.0 * lam_h2 - lam_h) / 3.0


def _spectrum_values(spectrum):
    if spectrum is None:
        return None
    if isinstance(spectrum, SpectralResult):
        return spectrum.eigenvalues
    return np.atleast_1d(np.asarray(spectrum, dtype=float))


def _check_gap(lam, spectrum, gap_tol):
    vals = _spectrum_values(spectrum)
    if vals is None:
        return None
    dist = float(np.min(np.abs(vals - lam)))
    if dist <= gap_tol:
        raise SpectralGapError(f"lambda={lam} lies on the discrete spectrum", dist)
    return dist


def _factor(A):
    try:
        return spla.splu(A.tocsc())
    except RuntimeError as exc:
        raise SpectralGapError(f"singular factorization: {exc}", 0.0) from exc


class _Resolvent:
    """Cached factorization of ``K - lam M`` plus ``M``."""

    def __init__(self, op, lam):
        self.op = op
        self.lam = lam
        self._lu = _factor(op.K - lam * op.M)
        self._mlu = None

    def solve(self, f):
        """``u`` with ``(K - lam M) u = M f``."""
        return self._lu.solve(self.op.M @ f)

    def raw_solve(self, b):
        return self._lu.solve(b)

    def minv(self, b):
        if self._mlu is None:
            self._mlu = spla.splu(self.op.M.tocsc())
        return self._mlu.solve(b)


def solve_resolvent(op, lam, f, spectrum=None, gap_tol=1e-10):
    """Solve ``(K - lam M) u = M f``: the resolvent applied to the FE function ``f``.

    ``spectrum`` (a ``SpectralResult`` or array of Ritz values) is used to
    refuse parameters within ``gap_tol`` of the discrete spectrum.
    """
    _check_gap(lam, spectrum, gap_tol)
    return _Resolvent(op, lam).solve(np.asarray(f, dtype=float))


def power_iteration(apply, inner, x0, tol=1e-6, maxiter=500):
    """Largest eigenvalue of a self-adjoint PSD operator.

    ``inner(x, y)`` is the inner product in which ``apply`` is self-adjoint.
    Stops when successive Rayleigh quotients differ by less than ``tol``
    (relative) or stagnate; returns ``(value, vector, iterations)``.
    """
    x = x0 / np.sqrt(inner(x0, x0))
    rq_old, change = None, np.inf
    for it in range(1, maxiter + 1):
        y = apply(x)
        rq = float(inner(x, y))
        ny = np.sqrt(inner(y, y))
        if ny == 0.0:
            return 0.0, x, it
        if rq_old is not None:
            change = abs(rq - rq_old) / max(abs(rq), 1e-300)
            if change <= tol:
                return rq, y / ny, it
        rq_old = rq
        x = y / ny
    logger.warning("power iteration hit maxiter=%d (last change %.2e)", maxiter, change)
    return rq, x, maxiter


def block_resolvent_norm(op, lam, maskA, maskB, spectrum=None, tol=1e-6, maxiter=500,
                         gap_tol=1e-10):
    """``||chi_A (H - lam)^{-1} chi_B||`` in ``L2``.

    ``maskA``/``maskB`` are either ``(lo, hi)`` strips in ``xi1`` or
    restricted mass matrices.  ``chi`` acts as multiplication by the indicator
    of the elements of the strip, so the result is the norm of the bilinear
    form ``(phi, psi) -> phi^T M_A (K - lam M)^{-1} M_B psi``.
    """
    from .assembly import element_mass

    _check_gap(lam, spectrum, gap_tol)
    MA = element_mass(op, *maskA) if isinstance(maskA, tuple) else maskA
    MB = element_mass(op, *maskB) if isinstance(maskB, tuple) else maskB
    res = _Resolvent(op, lam)
    M = op.M

    def apply(x):
        t = res.minv(MA @ res.raw_solve(MB @ x))
        return res.minv(MB @ res.raw_solve(MA @ t))

    support = np.asarray(MB.sum(axis=1)).ravel() != 0.0
    x0 = support.astype(float)
    if not x0.any():
        return 0.0
    val, _, _ = power_iteration(apply, lambda a, b: a @ (M @ b), x0, tol=tol, maxiter=maxiter)
    return float(np.sqrt(max(val, 0.0)))


def reference_mode(op):
    """``sqrt(2/(pi L)) sin(xi2)`` sampled at the unknowns (not renormalized)."""
    _, x2 = op.nodes()
    return np.sqrt(2.0 / (np.pi * op.grid.L)) * np.sin(x2)


def _check_straight(op0):
    if op0.spec.epsilon != 0.0:
        raise PreconditionError("modified resolvent needs the straight guide (epsilon == 0)")


def _check_ball(lam, L):
    radius = np.pi**2 / (2.0 * L**2)
    if not abs(lam - 1.0) < radius:
        raise SpectralGapError(f"lambda={lam} outside the ball |lambda-1| < {radius:.6g}",
                               abs(lam - 1.0) - radius)


class ModifiedResolvent:
    """Reduced resolvent of the straight guide with the ground mode projected out.

    The sampled ``sin(xi2)`` profile is an exact discrete eigenvector of the
    straight-guide pencil, so after ``M``-normalization the deflation is exact.
    """

    def __init__(self, op0, lam):
        _check_straight(op0)
        _check_ball(lam, op0.grid.L)
        self.op = op0
        self.lam = lam
        psi = reference_mode(op0)
        self.psi = psi / np.sqrt(psi @ (op0.M @ psi))
        self.Mpsi = op0.M @ self.psi
        self._res = _Resolvent(op0, lam)

    def project(self, f):
        return f - (self.Mpsi @ f) * self.psi

    def apply(self, f):
        u = self._res.solve(self.project(np.asarray(f, dtype=float)))
        return self.project(u)

    def adjoint_form(self, y):
        """``R0^* M^{-1}``-type pullback: returns ``M^{-1} R0^T y``."""
        yt = y - self.Mpsi * (self.psi @ y)
        return self.project(self._res.raw_solve(yt))


def modified_resolvent_apply(op0, lam, f):
    """``R0(lam) f = (H0 - lam)^{-1} (f - <f, psi0> psi0)`` on the straight guide."""
    return ModifiedResolvent(op0, lam).apply(f)


def _kron_apply(X, Y, u, shape):
    U = u.reshape(shape)
    return (X @ (Y @ U.T).T).ravel()


@dataclass(frozen=True)
class LemmaNormReport:
    L: float
    lam: float
    grid: object
    norm_R0: float
    norm_grad_R0: float
    norm_grad_d1_R0: float
    norm_d22_R0: float

    @property
    def bounds(self):
        s = self.L**2 / np.pi**2
        return (2 * s, 7 * s, 25 * s, 47 * s)

    @property
    def estimates(self):
        return (self.norm_R0, self.norm_grad_R0, self.norm_grad_d1_R0, self.norm_d22_R0)

    @property
    def within_bounds(self):
        return tuple(e <= b for e, b in zip(self.estimates, self.bounds))


def lemma_norm_check(op0, lam, tol=1e-7, maxiter=5000):
    """Estimate ``||R0||``, ``||grad R0||``, ``||grad d1 R0||``, ``||d2^2 R0||``.

    Second derivatives use the finite-element discrete Laplacians
    ``M1^{-1} A1`` (Neumann) and ``M2^{-1} K2`` (Dirichlet) so that every
    quantity is an ``L2`` norm of a finite-element function.
    """
    R = ModifiedResolvent(op0, lam)
    f = op0.factors
    A1, M1, K2, M2 = f["A1"], f["M1"], f["K2"], f["M2"]
    shape = op0.shape2d
    m1lu = spla.splu(M1.tocsc())
    m2lu = spla.splu(M2.tocsc())

    def q_mass(u):
        return op0.M @ u

    def q_grad(u):
        return _kron_apply(A1, M2, u, shape) + _kron_apply(M1, K2, u, shape)

    def q_grad_d1(u):
        U = u.reshape(shape)
        W = A1 @ U
        W = m1lu.solve(W)
        W = A1 @ W
        part1 = (M2 @ W.T).T
        part2 = (K2 @ (A1 @ U).T).T
        return (part1 + part2).ravel()

    def q_d22(u):
        U = u.reshape(shape)
        W = (K2 @ U.T)
        W = m2lu.solve(W)
        W = K2 @ W
        return (M1 @ W.T).ravel()

    inner = lambda a, b: a @ (op0.M @ b)  # noqa: E731
    x0 = np.ones(op0.size) + 0.5 * np.cos(op0.nodes()[0])
    out = []
    for q in (q_mass, q_grad, q_grad_d1, q_d22):
        def apply(x, q=q):
            return R.adjoint_form(q(R.apply(x)))
        val, _, _ = power_iteration(apply, inner, R.project(x0), tol=tol, maxiter=maxiter)
        out.append(float(np.sqrt(max(val, 0.0))))
    return LemmaNormReport(op0.grid.L, lam, op0.grid, *out)
