"""Ground-state transform of a form by a positive weight.

For ``w > 0`` the transformed form ``E^w[f] = E[w f] - sum mu (w f)**2``
lives on ``L^2(w**2 m)`` and has the matrix ``B = D_w (A - diag(mu)) D_w``.
Off-diagonal entries are ``-w(x) j(x, y) w(y) <= 0`` whatever ``mu`` is, and
the row sum at ``x`` equals ``w(x) ((A w)(x) - mu(x) w(x))``.  Hence ``B`` is
a Dirichlet matrix exactly when ``w`` is a supersolution with ``C = 1``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import _vec, as_measure
from .spectral import resolvent_markov_check

__all__ = ["TransformedForm", "MarkovReport", "ground_state_form", "is_markovian_form"]

RESOLVENT_ALPHAS = (0.1, 1.0, 10.0)
RESOLVENT_LIMIT = 2000


@dataclass(frozen=True, eq=False)
class TransformedForm:
    B: sp.csr_matrix
    base_measure: np.ndarray

    def quadratic(self, f):
        f = np.asarray(f, dtype=float)
        return float(f @ (self.B @ f))


@dataclass(frozen=True)
class MarkovReport:
    passed: bool
    worst_offdiag: float
    worst_offdiag_at: tuple
    worst_rowsum: float
    worst_rowsum_at: int
    tol: float
    resolvent: tuple = ()

    @property
    def matrix_passed(self):
        return self.worst_offdiag <= self.tol and self.worst_rowsum >= -self.tol


def ground_state_form(form, mu, w):
    """Matrix of ``f -> E[w f] - sum mu (w f)**2`` and the measure ``w**2 m``."""
    w = _vec(form, w, "w")
    mu = as_measure(mu, form.n)
    if np.any(w <= 0):
        raise ValueError("w must be strictly positive")
    Dw = sp.diags(w)
    H = form.operator - sp.diags(mu)
    B = (Dw @ H @ Dw).tocsr()
    return TransformedForm(B, w * w * form.m)


def is_markovian_form(T, alphas=RESOLVENT_ALPHAS, resolvent_limit=RESOLVENT_LIMIT):
    """Decide whether ``T.B`` is a Dirichlet (Markovian) form matrix.

    Matrix criterion: off-diagonal entries ``<= tol`` and row sums ``>= -tol``
    with ``tol = 1e-12 * ||B||_inf``.  When the matrix criterion passes and
    ``n <= resolvent_limit``, the resolvents at each ``alpha`` are checked as
    well and reported in ``resolvent``.
    """
    B = sp.csr_matrix(T.B)
    n = B.shape[0]
    absB = abs(B)
    tol = 1e-12 * float(absB.sum(axis=1).max()) if B.nnz else 0.0

    off = sp.triu(B, k=1).tocoo()
    if off.nnz:
        k = int(np.argmax(off.data))
        worst_off, worst_off_at = float(off.data[k]), (int(off.row[k]), int(off.col[k]))
    else:
        worst_off, worst_off_at = -np.inf, (-1, -1)
    rows = np.asarray(B.sum(axis=1)).ravel()
    r = int(np.argmin(rows))
    passed = worst_off <= tol and rows[r] >= -tol

    reports = ()
    if passed and n <= resolvent_limit:
        reports = tuple(resolvent_markov_check(B, T.base_measure, a) for a in alphas)
        passed = all(rep.passed for rep in reports)
    return MarkovReport(bool(passed), worst_off, worst_off_at, float(rows[r]), r, tol, reports)
