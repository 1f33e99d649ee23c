"""Extreme eigenvalues of Hardy pencils and resolvent Markov checks.

The best constant of ``sum mu f**2 <= C E[f]`` is the norm of the potential
operator ``K f = G(mu f)`` on ``L^2(mu)``, which is the top eigenvalue of the
symmetric matrix ``M^{1/2} A^{-1} M^{1/2}`` with ``M = diag(mu)``.  Working
with the potential operator keeps singular ``M`` (measures vanishing on some
states) exact: only the support of ``mu`` enters the eigenproblem.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh, splu

from .core import DENSE_LIMIT, GraphForm, as_measure
from .errors import ConvergenceError, RecurrentFormError

__all__ = [
    "SpectralResult",
    "ResolventReport",
    "SPDSolver",
    "power_iteration",
    "pencil_min",
    "largest_eig_potential_op",
    "best_hardy_constant",
    "resolvent_markov_check",
]

EIG_TOL = 1e-10
MAX_ITER = 10_000


@dataclass(frozen=True)
class SpectralResult:
    """Smallest eigenvalue of the pencil ``(A, diag(mu))``.

    ``eigvec`` is nonnegative and normalized to ``sum mu f**2 = 1``;
    ``c_star = 1 / lambda_min`` is the best Hardy constant.
    """

    lambda_min: float
    eigvec: np.ndarray
    iterations: int
    residual: float
    method: str = "dense"

    @property
    def c_star(self):
        return 0.0 if np.isinf(self.lambda_min) else 1.0 / self.lambda_min


class SPDSolver:
    """Factorization of a symmetric positive definite matrix.

    Dense Cholesky below ``DENSE_LIMIT`` unknowns, otherwise a symmetric-mode
    sparse LU whose pivots certify definiteness.
    """

    def __init__(self, matrix):
        self.n = matrix.shape[0]
        if self.n < DENSE_LIMIT:
            dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
            try:
                self._chol = scipy.linalg.cho_factor(dense)
            except np.linalg.LinAlgError:
                raise np.linalg.LinAlgError("matrix is not positive definite") from None
            self._lu = None
        else:
            csc = sp.csc_matrix(matrix)
            lu = splu(csc, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                      options={"SymmetricMode": True})
            if not np.array_equal(lu.perm_r, lu.perm_c) or np.any(lu.U.diagonal() <= 0):
                raise np.linalg.LinAlgError("matrix is not positive definite")
            self._lu = lu
            self._chol = None

    def solve(self, b):
        if self._lu is not None:
            return self._lu.solve(np.asarray(b, dtype=float))
        return scipy.linalg.cho_solve(self._chol, b)


def power_iteration(matvec, v0, tol=EIG_TOL, maxiter=MAX_ITER):
    """Top eigenpair of a symmetric positive semidefinite operator.

    Stops when successive Rayleigh quotients differ by at most
    ``tol * lambda``.  Returns ``(lambda, v, iterations)``.
    """
    v = np.asarray(v0, dtype=float)
    v = v / np.linalg.norm(v)
    lam = 0.0
    for it in range(1, maxiter + 1):
        w = matvec(v)
        new = float(np.dot(v, w))
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, v, it
        v = w / nw
        if abs(new - lam) <= tol * abs(new):
            return new, v, it
        lam = new
    raise ConvergenceError(f"power iteration did not converge in {maxiter} steps",
                           residual=abs(new - lam), iterations=maxiter)


def pencil_min(matrix, weight, method="auto", tol=EIG_TOL, maxiter=MAX_ITER, solver=None):
    """Smallest eigenvalue of ``matrix f = lambda diag(weight) f``.

    Parameters
    ----------
    matrix : (n, n) sparse or dense SPD matrix
    weight : (n,) nonnegative array
    method : {"auto", "dense", "lanczos", "power"}
        ``auto`` picks a dense eigensolve below ``DENSE_LIMIT`` states and
        Lanczos on the potential operator above.
    solver : SPDSolver, optional
        Reuse an existing factorization of ``matrix``.

    Returns
    -------
    SpectralResult
        ``lambda_min`` is ``inf`` when ``weight`` vanishes identically.
    """
    n = matrix.shape[0]
    w = as_measure(weight, n)
    supp = np.flatnonzero(w > 0)
    if supp.size == 0:
        return SpectralResult(np.inf, np.zeros(n), 0, 0.0, "trivial")
    if solver is None:
        solver = SPDSolver(matrix)
    s = np.sqrt(w[supp])

    def lift(v):
        b = np.zeros(n)
        b[supp] = s * v
        return solver.solve(b)

    def matvec(v):
        return s * lift(v)[supp]

    if method == "auto":
        method = "dense" if n < DENSE_LIMIT else "lanczos"
    if method == "dense":
        rhs = np.zeros((n, supp.size))
        rhs[supp, np.arange(supp.size)] = s
        K = s[:, None] * solver.solve(rhs)[supp]
        K = 0.5 * (K + K.T)
        vals, vecs = scipy.linalg.eigh(K, subset_by_index=[supp.size - 1, supp.size - 1])
        top, v, iters = float(vals[0]), vecs[:, 0], 1
    elif method == "lanczos":
        op = LinearOperator((supp.size, supp.size), matvec=matvec, dtype=float)
        vals, vecs = eigsh(op, k=1, which="LA", tol=tol * 1e-2, v0=s.copy(),
                           ncv=min(supp.size, 40), maxiter=maxiter)
        top, v, iters = float(vals[0]), vecs[:, 0], -1
    elif method == "power":
        top, v, iters = power_iteration(matvec, s, tol=tol, maxiter=maxiter)
    else:
        raise ValueError(f"unknown method {method!r}")
    if top <= 0:
        raise np.linalg.LinAlgError("potential operator has no positive spectrum")

    f = lift(v)
    if f.sum() < 0:
        f = -f
    f /= np.sqrt(np.dot(w, f * f))
    lam = 1.0 / top
    Af = matrix @ f
    res = float(np.linalg.norm(Af - lam * w * f) / np.linalg.norm(Af))
    return SpectralResult(lam, f, iters, res, method)


def _check_form(form):
    if not isinstance(form, GraphForm):
        raise TypeError("expected a GraphForm")
    if not form.transient:
        raise RecurrentFormError("recurrent form: a component carries no killing")


def largest_eig_potential_op(form, mu, method="auto", tol=EIG_TOL):
    """Norm of the potential operator ``K^mu`` as a :class:`SpectralResult`.

    ``result.c_star`` is ``||K^mu||`` and ``result.eigvec`` the (Perron)
    maximizer of ``sum mu f**2 / E[f]``.
    """
    _check_form(form)
    mu = as_measure(mu, form.n)
    if not np.any(mu):
        raise ValueError("mu vanishes identically")
    return pencil_min(form.operator, mu, method=method, tol=tol)


def best_hardy_constant(form, mu, method="auto"):
    """Smallest ``C`` with ``sum mu f**2 <= C E[f]`` for all ``f`` (0 if mu == 0)."""
    _check_form(form)
    mu = as_measure(mu, form.n)
    if not np.any(mu):
        return 0.0
    return largest_eig_potential_op(form, mu, method=method).c_star


@dataclass(frozen=True)
class ResolventReport:
    passed: bool
    alpha: float
    min_entry: float
    min_entry_at: tuple
    max_mass: float
    max_mass_at: int

    @property
    def worst(self):
        """Magnitude of the worst violation (0 when passed)."""
        return max(0.0, -self.min_entry, self.max_mass - 1.0)


def resolvent_markov_check(B, measure, alpha, tol=1e-10):
    """Check that ``alpha (B + alpha diag(measure))^{-1}`` is sub-Markovian.

    Tests entrywise positivity of ``R = (B + alpha D)^{-1}`` (relative to
    ``max |R|``) and ``alpha R @ measure <= 1``, i.e. the resolvent of the
    operator ``D^{-1} B`` on ``L^2(measure)`` maps ``[0, 1]``-valued functions
    into ``[0, 1]``.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    Bd = B.toarray() if sp.issparse(B) else np.atleast_2d(np.asarray(B, dtype=float))
    d = as_measure(np.atleast_1d(measure), Bd.shape[0])
    S = Bd + alpha * np.diag(d)
    if np.linalg.cond(S) > 1e14:
        raise np.linalg.LinAlgError("shifted matrix is numerically singular")
    R = np.linalg.inv(S)
    scale = np.abs(R).max()
    i, k = np.unravel_index(np.argmin(R), R.shape)
    mass = alpha * (R @ d)
    j = int(np.argmax(mass))
    min_entry = float(R[i, k] / scale)
    passed = min_entry >= -tol and mass[j] <= 1.0 + tol
    return ResolventReport(bool(passed), float(alpha), min_entry, (int(i), int(k)), float(mass[j]), j)
