"""Eigenvalues, resolvent-norm gaps and constrained Rayleigh minima."""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigsh, splu

from .operators import FlatOperator

__all__ = ["SolverError", "lowest_eigs", "resolvent_norm_gap", "resolvent_difference",
           "band_gap", "perp_rayleigh_min", "band_vector", "GAP_SEED"]

log = logging.getLogger(__name__)

GAP_SEED = 20240917
POWER_MAX_ITER = 500
BAND_ENTRY_LIMIT = 60_000_000  # above this the banded Cholesky falls back to sparse LU


class SolverError(RuntimeError):
    """A factorization or an iterative eigensolver failed."""


def _factor(M: sp.spmatrix, what: str, ordering: str = "MMD_AT_PLUS_A"):
    """Sparse LU for matrices that need not be definite."""
    try:
        lu = splu(sp.csc_matrix(M), permc_spec=ordering)
    except RuntimeError as exc:  # exactly singular
        raise SolverError(f"factorization of {what} failed: {exc}") from exc
    if not np.all(np.isfinite(lu.U.diagonal())) or np.min(np.abs(lu.U.diagonal())) == 0:
        raise SolverError(f"{what} is singular")
    return lu


class _SPDFactor:
    """Cholesky of a symmetric positive definite sparse matrix.

    The s-major lattice ordering makes every operator here banded with a
    half-bandwidth of about one transverse block, so LAPACK's banded
    Cholesky beats general sparse LU by a wide margin.  Failure of the
    factorization means the matrix is not positive definite, which is how
    callers learn that a shift is not below the spectrum.
    """

    def __init__(self, M: sp.spmatrix, what: str):
        M = sp.coo_matrix(M)
        n = M.shape[0]
        bw = int(np.max(np.abs(M.row - M.col))) if M.nnz else 0
        self.lu = None
        if (bw + 1) * n > BAND_ENTRY_LIMIT:
            self.lu = _factor(M, what)
            return
        upper = M.row <= M.col
        ab = np.zeros((bw + 1, n))
        np.add.at(ab, (bw + M.row[upper] - M.col[upper], M.col[upper]), M.data[upper])
        try:
            self.c = cholesky_banded(ab, check_finite=False)
        except LinAlgError as exc:
            raise SolverError(f"{what} is not positive definite ({exc})") from exc

    def solve(self, b):
        if self.lu is not None:
            return self.lu.solve(b)
        return cho_solve_banded((self.c, False), b, check_finite=False)


def _norm_bound(A: sp.spmatrix) -> float:
    return float(abs(A).sum(axis=1).max())


def _gershgorin_low(A: sp.spmatrix) -> float:
    d = A.diagonal()
    off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(d)
    return float(np.min(d - off))


def _start(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(n)


def lowest_eigs(op: FlatOperator, m: int = 1, sigma_shift: float | None = None,
                tol: float = 1e-9, dense_limit: int = 600):
    """The m lowest eigenpairs, ascending, with unit eigenvectors.

    Shift-invert Lanczos around ``sigma_shift``, which must lie below the
    spectrum (so the nearest eigenvalues are the lowest ones).  Without a
    shift, ``op.meta['lower_bound']`` is used if set, else the Gershgorin
    lower bound, which is safe but slows Lanczos when far from the
    spectrum.  Small operators are solved densely.  Raises SolverError
    when the relative residual ||A v - lambda v|| / ||A|| exceeds ``tol``.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    A = op.A
    n = op.size
    if m > n:
        raise ValueError(f"asked for {m} eigenvalues of a size-{n} operator")
    if n <= dense_limit:
        w, v = np.linalg.eigh(A.toarray())
        w, v = w[:m], v[:, :m]
    else:
        if sigma_shift is None:
            sigma_shift = op.meta.get("lower_bound", _gershgorin_low(A) - 1.0)
        lu = _SPDFactor(A - sigma_shift * sp.eye(n),
                        f"A - sigma (sigma = {sigma_shift:g} must lie below the spectrum)")
        Op = LinearOperator((n, n), matvec=lu.solve, dtype=float)
        try:
            mu, v = eigsh(Op, k=m, which="LM", v0=_start(n, GAP_SEED), tol=1e-14,
                          maxiter=max(1000, 20 * n))
        except ArpackNoConvergence as exc:
            raise SolverError(f"Lanczos did not converge: {exc}") from exc
        if np.any(mu <= 0):
            raise SolverError("shift is not below the spectrum; pass a lower sigma_shift")
        w = sigma_shift + 1.0 / mu
        order = np.argsort(w)
        w, v = w[order], v[:, order]
    v = v / np.linalg.norm(v, axis=0)
    res = np.linalg.norm(A @ v - v * w, axis=0) / max(_norm_bound(A), 1.0)
    if np.max(res) > tol:
        raise SolverError(f"eigen-residual {np.max(res):.3e} exceeds tolerance {tol:g}")
    return w, v


def band_vector(J1: np.ndarray) -> np.ndarray:
    """Unit l2 vector of the discrete transverse ground state."""
    J = np.asarray(J1, dtype=float)
    return J / np.linalg.norm(J)


def _power_norm(apply, n: int, seed: int, rtol: float) -> float:
    x = _start(n, seed)
    x /= np.linalg.norm(x)
    est = 0.0
    for it in range(POWER_MAX_ITER):
        y = apply(apply(x))  # D is symmetric, so D^T D = D^2
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        new = np.sqrt(nrm)
        x = y / nrm
        if it > 0 and abs(new - est) <= rtol * new:
            return new
        est = new
    raise SolverError(
        f"power iteration hit {POWER_MAX_ITER} iterations; last estimate {est:.6g}"
    )


def resolvent_norm_gap(A: FlatOperator, heff: FlatOperator, lam: float, J1: np.ndarray,
                       kappa_sup: float | None = None, method: str = "lanczos",
                       seed: int = GAP_SEED, rtol: float = 1e-6) -> float:
    """|| (A - lam)^-1 - P1* (H_eff - lam)^-1 P1 || in the operator 2-norm.

    P1 maps psi (s-major, N_t transverse values per s-node) to its
    component along the transverse ground state.  Each application costs
    one sparse solve with A - lam and one tridiagonal solve.  The default
    Lanczos run on the symmetric difference converges much faster than
    the power method when the top of its spectrum is clustered; the power
    method on D^2 remains available via ``method='power'``.
    """
    e = band_vector(J1)
    Nt = e.size
    n = A.size
    if n % Nt:
        raise ValueError("operator size is not a multiple of the transverse size")
    ns = n // Nt
    if heff.size != ns:
        raise ValueError(f"H_eff has {heff.size} nodes, the tube operator {ns}")
    if kappa_sup is not None and not lam < -9 * kappa_sup**2:
        raise ValueError(f"lambda = {lam} must lie below -9 ||kappa||^2 = {-9 * kappa_sup**2}")
    luA = _SPDFactor(A.A - lam * sp.eye(n), "A - lambda")
    luH = _SPDFactor(heff.A - lam * sp.eye(ns), "H_eff - lambda")

    def apply(x):
        X = x.reshape(ns, Nt)
        y = luH.solve(X @ e)
        return luA.solve(x) - np.outer(y, e).ravel()

    return _symmetric_norm(apply, n, method, seed, rtol)


def _symmetric_norm(apply, n: int, method: str, seed: int, rtol: float) -> float:
    if method == "power":
        return _power_norm(apply, n, seed, rtol)
    if method != "lanczos":
        raise ValueError(f"unknown method {method!r}")
    v0 = _start(n, seed)
    if not np.any(apply(v0)):
        return 0.0  # identical operators: the Krylov space collapses
    if n == 1:
        return float(abs(apply(np.ones(1))[0]))
    Op = LinearOperator((n, n), matvec=apply, dtype=float)
    try:
        val = eigsh(Op, k=1, which="LM", v0=v0, tol=rtol * 1e-4,
                    return_eigenvectors=False, maxiter=POWER_MAX_ITER * 10)
    except ArpackNoConvergence as exc:
        raise SolverError(f"Lanczos on the resolvent difference did not converge: {exc}") from exc
    except ArpackError as exc:
        raise SolverError(f"Lanczos on the resolvent difference failed: {exc}") from exc
    return float(abs(val[0]))


def resolvent_difference(A: FlatOperator, B: FlatOperator, lam: float, method: str = "lanczos",
                         seed: int = GAP_SEED, rtol: float = 1e-6) -> float:
    """|| (A - lam)^-1 - (B - lam)^-1 || for two operators on the same lattice."""
    if A.size != B.size:
        raise ValueError("operators act on different spaces")
    n = A.size
    la = _SPDFactor(A.A - lam * sp.eye(n), "A - lambda")
    lb = _SPDFactor(B.A - lam * sp.eye(n), "B - lambda")
    return _symmetric_norm(lambda x: la.solve(x) - lb.solve(x), n, method, seed, rtol)


def band_gap(A: FlatOperator, heff: FlatOperator, lam: float, J1: np.ndarray,
             seed: int = GAP_SEED, rtol: float = 1e-6) -> float:
    """|| P1 (A - lam)^-1 P1* - (H_eff - lam)^-1 || on the ground transverse band only."""
    e = band_vector(J1)
    Nt, n = e.size, A.size
    ns = n // Nt
    luA = _SPDFactor(A.A - lam * sp.eye(n), "A - lambda")
    luH = _SPDFactor(heff.A - lam * sp.eye(ns), "H_eff - lambda")

    def apply(y):
        x = luA.solve(np.outer(y, e).ravel())
        return x.reshape(ns, Nt) @ e - luH.solve(y)

    return _symmetric_norm(apply, ns, "lanczos", seed, rtol)


def perp_rayleigh_min(A: FlatOperator, J1: np.ndarray, shift: float | None = None,
                      return_vector: bool = False, tol: float = 1e-10):
    """min psi^T A psi / psi^T psi over psi orthogonal to every e_i (x) J1.

    Shift-invert Lanczos on the bordered saddle system
    [[A - shift, C], [C^T, 0]] with C = I (x) J1, whose first block of the
    solution is the compressed resolvent on the orthogonal complement.
    The shift is first certified to lie below the whole spectrum of A (a
    Cholesky of A - shift), hence below the constrained minimum.  Each
    multiplier is ordered right after its s-block so the system stays
    banded.
    """
    e = band_vector(J1)
    Nt = e.size
    n = A.size
    ns = n // Nt
    if shift is None:
        shift = A.meta.get("lower_bound", _gershgorin_low(A.A) - 1.0)
    _SPDFactor(A.A - shift * sp.eye(n), f"A - shift (shift = {shift:g})")
    C = sp.kron(sp.eye(ns), sp.csr_matrix(e[:, None]), format="csr")
    M = sp.bmat([[A.A - shift * sp.eye(n), C], [C.T, None]], format="csr")
    block = np.arange(n).reshape(ns, Nt)
    order = np.column_stack([block, n + np.arange(ns)]).ravel()
    M = M[order][:, order]
    lu = _factor(M, "bordered system", ordering="NATURAL")
    where = np.empty(n + ns, dtype=int)
    where[order] = np.arange(n + ns)
    pad = np.zeros(n + ns)

    def apply(x):
        rhs = pad.copy()
        rhs[where[:n]] = x
        return lu.solve(rhs)[where[:n]]

    def project(x):
        X = x.reshape(ns, Nt)
        return (X - np.outer(X @ e, e)).ravel()

    Op = LinearOperator((n, n), matvec=apply, dtype=float)
    v0 = project(_start(n, GAP_SEED))
    try:
        mu, v = eigsh(Op, k=1, which="LA", v0=v0, tol=tol)
    except ArpackNoConvergence as exc:
        raise SolverError(f"constrained Lanczos did not converge: {exc}") from exc
    if mu[0] <= 0:
        raise SolverError("shift is not below the constrained spectrum")
    val = shift + 1.0 / mu[0]
    if return_vector:
        x = project(v[:, 0])
        return val, x / np.linalg.norm(x)
    return val
