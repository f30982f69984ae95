"""Generalized eigensolvers for the pencil ``A u = lambda B u``.

``A`` is symmetric positive definite, ``B`` symmetric positive semidefinite
with a large kernel (only boundary dofs couple), so the small eigenvalues of
the pencil are the reciprocals of the large eigenvalues of ``A^{-1} B``.
The iterative solver runs blocked inverse subspace iteration on that operator
with A-orthonormalized bases; the kernel of ``B`` corresponds to ``mu = 0``
and never mixes into the dominant block, so no deflation is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import SymSparse

__all__ = [
    "Pencil",
    "EigenSolution",
    "SpdFactor",
    "NotPositiveDefiniteError",
    "ConvergenceFailureError",
    "factorize_spd",
    "solve_spd",
    "solve_pencil",
    "dense_oracle",
    "DEFAULT_TOL",
    "DEFAULT_SEED",
    "DENSE_ORACLE_MAX_DIM",
]

DEFAULT_TOL = 1e-10
DEFAULT_SEED = 1729
MAX_SWEEPS = 500
DENSE_ORACLE_MAX_DIM = 3000


class NotPositiveDefiniteError(Exception):
    """Raised when a matrix required to be SPD is not."""


class ConvergenceFailureError(Exception):
    """Raised when the iterative solver exhausts its sweep budget.

    Carries the best eigenvalue estimates and their residuals.
    """

    def __init__(self, message: str, eigenvalues: np.ndarray, residuals: np.ndarray):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.residuals = residuals


@dataclass
class Pencil:
    """The matrix pair of a generalized eigenproblem ``A u = lambda B u``."""

    a: SymSparse
    b: SymSparse

    def __post_init__(self) -> None:
        if self.a.dimension != self.b.dimension:
            raise ValueError(
                f"pencil matrices disagree in size: {self.a.dimension} vs {self.b.dimension}"
            )
        if self.b.nnz == 0:
            raise ValueError("the right-hand matrix of the pencil is zero")

    @property
    def dimension(self) -> int:
        return self.a.dimension


@dataclass
class EigenSolution:
    """Eigenpairs sorted ascending, with B-normalized eigenvectors.

    ``eigenvectors[:, j]`` satisfies ``u^T B u = 1`` and the pairs are
    B-orthogonal; ``residual_norms[j]`` is ``|A u - lambda B u| / |A u|``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual_norms: np.ndarray


class SpdFactor:
    """A sparse Cholesky-type factorization of an SPD matrix.

    Uses SuperLU in symmetric mode with diagonal pivoting only; the
    factorization doubles as the definiteness certificate, since an SPD
    matrix factors without row pivoting and with positive pivots.
    """

    def __init__(self, matrix: SymSparse):
        csc = sp.csc_matrix(matrix.to_csr())
        try:
            lu = spla.splu(csc, permc_spec="MMD_AT_PLUS_A",
                           diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
        except RuntimeError as exc:  # exactly singular
            raise NotPositiveDefiniteError(str(exc)) from exc
        if not (lu.perm_r == lu.perm_c).all() or not (lu.U.diagonal() > 0.0).all():
            raise NotPositiveDefiniteError("matrix is not positive definite")
        self.matrix = matrix
        self._lu = lu

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``A x = rhs`` for a vector or a block of columns."""
        return self._lu.solve(np.asarray(rhs, dtype=float))


def factorize_spd(matrix: SymSparse) -> SpdFactor:
    """Factor an SPD matrix, caching the factor on the matrix object."""
    cached = getattr(matrix, "_spd_factor", None)
    if cached is None:
        cached = SpdFactor(matrix)
        matrix._spd_factor = cached
    return cached


def solve_spd(matrix: SymSparse, rhs: np.ndarray) -> np.ndarray:
    """Solve ``A x = rhs`` with one step of iterative refinement."""
    factor = factorize_spd(matrix)
    rhs = np.asarray(rhs, dtype=float)
    x = factor.solve(rhs)
    x += factor.solve(rhs - matrix @ x)
    return x


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def solve_pencil(pencil: Pencil, k: int, tol: float = DEFAULT_TOL,
                 seed: int = DEFAULT_SEED, max_sweeps: int = MAX_SWEEPS) -> EigenSolution:
    """Compute the ``k`` smallest eigenpairs of ``A u = lambda B u``.

    Blocked inverse subspace iteration with block size ``k + 3``, started
    from a fixed-seed Gaussian block, so results are deterministic for fixed
    inputs.  Convergence requires every requested pair to reach the relative
    residual tolerance.

    Raises
    ------
    NotPositiveDefiniteError
        If ``A`` fails to factor as SPD.
    ConvergenceFailureError
        If the residuals do not reach ``tol`` within ``max_sweeps`` sweeps.
    """
    n = pencil.dimension
    if not 1 <= k <= n:
        raise ValueError(f"k must be between 1 and {n}, got {k}")
    if not 0.0 < tol <= 1e-6:
        raise ValueError(f"tol must lie in (0, 1e-6], got {tol!r}")
    factor = factorize_spd(pencil.a)
    a_csr = pencil.a.to_csr()
    b_csr = pencil.b.to_csr()

    m = min(k + 3, n)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, m))

    eigenvalues = np.full(k, np.nan)
    vectors = np.zeros((n, k))
    residuals = np.full(k, np.inf)

    for _ in range(max_sweeps):
        z = factor.solve(b_csr @ x)
        az = a_csr @ z
        a_small = _sym(z.T @ az)
        s, q = sla.eigh(a_small)
        keep = s > max(s.max(), 0.0) * 1e-13
        if not keep.any():
            raise ConvergenceFailureError(
                "iteration block collapsed into the kernel of B", eigenvalues, residuals)
        w = q[:, keep] / np.sqrt(s[keep])
        if w.shape[1] < k:
            raise ValueError(
                f"pencil appears to have fewer than k={k} finite eigenvalues")
        b_small = _sym(w.T @ (z.T @ (b_csr @ z)) @ w)
        mu, v = sla.eigh(b_small)
        mu = mu[::-1]
        v = v[:, ::-1]
        u = z @ (w @ v)
        x = u

        if mu[k - 1] <= 0.0:
            continue  # subspace has not yet locked onto k boundary modes
        lam = 1.0 / mu[:k]
        cand = u[:, :k] / np.sqrt(mu[:k])
        au = a_csr @ cand
        bu = b_csr @ cand
        res = np.linalg.norm(au - bu * lam, axis=0) / np.linalg.norm(au, axis=0)
        eigenvalues, vectors, residuals = lam, cand, res
        if (res <= tol).all():
            return EigenSolution(eigenvalues=lam.copy(), eigenvectors=cand.copy(),
                                 residual_norms=res.copy())

    raise ConvergenceFailureError(
        f"subspace iteration did not reach tol={tol:g} in {max_sweeps} sweeps "
        f"(worst residual {residuals.max():g})", eigenvalues, residuals)


def dense_oracle(pencil: Pencil, k: int) -> EigenSolution:
    """Dense reference solver for small problems (cross-checking only).

    Forms ``C = L^{-1} B L^{-T}`` with the dense Cholesky factor ``L`` of
    ``A`` and diagonalizes it; the pencil eigenvalues are the reciprocals of
    the top eigenvalues of ``C``.
    """
    n = pencil.dimension
    if n > DENSE_ORACLE_MAX_DIM:
        raise ValueError(f"dense oracle limited to dimension {DENSE_ORACLE_MAX_DIM}, got {n}")
    if not 1 <= k <= n:
        raise ValueError(f"k must be between 1 and {n}, got {k}")
    a = pencil.a.to_dense()
    b = pencil.b.to_dense()
    try:
        ell = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    half = sla.solve_triangular(ell, b, lower=True)
    c = sla.solve_triangular(ell, half.T, lower=True)
    mu, y = np.linalg.eigh(_sym(c))
    mu = mu[::-1][:k]
    y = y[:, ::-1][:, :k]
    if mu[-1] <= max(mu[0], 0.0) * 1e-12:
        raise ValueError(f"pencil has fewer than k={k} finite eigenvalues (rank of B too small)")
    u = sla.solve_triangular(ell.T, y, lower=False) / np.sqrt(mu)
    lam = 1.0 / mu
    au = a @ u
    bu = b @ u
    res = np.linalg.norm(au - bu * lam, axis=0) / np.linalg.norm(au, axis=0)
    return EigenSolution(eigenvalues=lam, eigenvectors=u, residual_norms=res)
