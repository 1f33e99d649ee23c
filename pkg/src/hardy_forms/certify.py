"""Supersolution certificates for Hardy inequalities.

On a finite state space the variational supersolution condition, tested
against all ``0 <= f``, is equivalent to its pointwise form obtained from
indicator test functions::

    (A w)(x) - mu(x) w(x) / C >= 0   for every state x,   w > 0.

Any such ``w`` certifies ``sum mu f**2 <= C E[f]``.  Conversely, for every
``0 < Lambda < 1 / C*`` the Neumann series of the potential operator yields
a certifying weight with ``C = 1 / Lambda``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .core import DENSE_LIMIT, GraphForm, _vec, apply_form_operator, as_measure, green
from .errors import DivergenceError, NotSubcriticalError, RecurrentFormError
from .spectral import SPDSolver, best_hardy_constant, pencil_min

__all__ = [
    "HardyCertificate",
    "check_supersolution",
    "recheck",
    "neumann_weight",
    "riesz_certificate",
    "weight_from_subcritical",
]


@dataclass(frozen=True, eq=False)
class HardyCertificate:
    """Weight ``w`` and constant ``C`` with the pointwise residual of the test.

    ``valid`` holds iff ``min(residual) >= -abs_tol`` and ``min(w) > 0``.
    """

    w: np.ndarray
    mu: np.ndarray
    C: float
    residual: np.ndarray
    valid: bool
    abs_tol: float
    info: dict = field(default_factory=dict)

    @property
    def residual_min(self):
        return float(self.residual.min())

    def to_dict(self):
        return {"w": self.w.tolist(), "C": self.C, "residual_min": self.residual_min,
                "valid": self.valid}


def _certificate(form, w, mu, C, info=None):
    Aw = apply_form_operator(form, w)
    muw = mu * w
    residual = Aw - muw / C
    abs_tol = 1e-9 * (np.abs(Aw).max() + np.abs(muw).max() / C)
    valid = bool(residual.min() >= -abs_tol and w.min() > 0)
    return HardyCertificate(w, mu, float(C), residual, valid, float(abs_tol), info or {})


def check_supersolution(form, w, mu, C):
    """Pointwise supersolution test for the pair ``(w, C)``.

    Raises
    ------
    ValueError
        If ``C <= 0`` or ``w`` is not strictly positive.
    """
    w = _vec(form, w, "w")
    mu = as_measure(mu, form.n)
    if not C > 0:
        raise ValueError("C must be positive")
    if np.any(w <= 0):
        raise ValueError("w must be strictly positive")
    return _certificate(form, w, mu, C)


def recheck(form, cert, rel=1e-9):
    """Spectral re-verification: ``best_hardy_constant(form, mu) <= C (1 + rel)``."""
    return best_hardy_constant(form, cert.mu) <= cert.C * (1 + rel)


def neumann_weight(form, mu, Lambda, phi=None, tol=1e-12, maxiter=200_000, patience=50):
    """Certifying weight from the Neumann series of the potential operator.

    Solves ``psi = phi + Lambda * G(mu psi)`` by fixed-point iteration and
    returns ``w = G(mu psi)``.  Then ``A w - Lambda mu w = mu phi >= 0``, so
    ``(w, 1 / Lambda)`` passes :func:`check_supersolution`.

    Parameters
    ----------
    form : GraphForm
        Transient (and, for ``w > 0`` everywhere, irreducible) form.
    mu : array_like
        Hardy measure, not identically zero.
    Lambda : float
        Must satisfy ``0 < Lambda < 1 / C*``.
    phi : array_like, optional
        Seed with ``0 < phi <= 1``; ones by default.

    Returns
    -------
    w : ndarray
    certificate : HardyCertificate

    Raises
    ------
    DivergenceError
        When the increments grow for ``patience`` consecutive steps or the
        iteration does not settle within ``maxiter`` steps, which happens
        exactly when ``Lambda * C* >= 1``.
    """
    if not form.transient:
        raise RecurrentFormError("recurrent form: a component carries no killing")
    mu = as_measure(mu, form.n)
    if not np.any(mu):
        raise ValueError("mu vanishes identically")
    if not Lambda > 0:
        raise ValueError("Lambda must be positive")
    phi = np.ones(form.n) if phi is None else _vec(form, phi, "phi")
    if np.any(phi <= 0) or np.any(phi > 1):
        raise ValueError("phi must satisfy 0 < phi <= 1")

    solver = SPDSolver(form.operator)
    if form.n < DENSE_LIMIT:
        K = solver.solve(np.diag(mu))
        potential = K.__matmul__
    else:
        def potential(v):
            return solver.solve(mu * v)

    psi = phi.copy()
    prev = np.inf
    growing = 0
    for it in range(1, maxiter + 1):
        new = phi + Lambda * potential(psi)
        step = np.abs(new - psi).max()
        psi = new
        if step <= tol * np.abs(psi).max():
            break
        growing = growing + 1 if step > prev else 0
        if growing >= patience:
            raise DivergenceError(f"Neumann series diverges (Lambda = {Lambda:.6g})",
                                  residual=step, iterations=it)
        prev = step
    else:
        raise DivergenceError(f"Neumann series did not settle in {maxiter} steps",
                              residual=step, iterations=maxiter)
    w = potential(psi)
    return w, _certificate(form, w, mu, 1.0 / Lambda, {"iterations": it, "psi": psi})


def riesz_certificate(form, g):
    """Certificate for the measure ``g / w`` with ``w = G g`` and ``C = 1``.

    ``w`` is superharmonic with Riesz charge ``g`` so the supersolution
    residual ``A w - (g / w) w`` vanishes up to rounding.
    """
    g = as_measure(g, form.n)
    if not np.any(g):
        raise ValueError("Riesz charge vanishes identically")
    w = green(form, g)
    nu = np.where(w > 0, g / np.where(w > 0, w, 1.0), 0.0)
    return check_supersolution(form, w, nu, 1.0)


def weight_from_subcritical(form, mu, g):
    """Solve ``(A - diag(mu)) f = m g``.

    The shifted form must be positive definite; then for ``g > 0`` the
    solution is a positive supersolution with ``C = 1`` and residual ``m g``.

    Raises
    ------
    NotSubcriticalError
        If ``best_hardy_constant(form, mu) >= 1`` or ``A - diag(mu)`` is not
        positive definite.
    """
    if not isinstance(form, GraphForm):
        raise TypeError("expected a GraphForm")
    mu = as_measure(mu, form.n)
    g = _vec(form, g, "g")
    c_star = best_hardy_constant(form, mu)
    if c_star >= 1:
        raise NotSubcriticalError(f"not subcritical: best Hardy constant {c_star:.6g} >= 1")
    shifted = (form.operator - sp.diags(mu)).tocsr()
    try:
        solver = SPDSolver(shifted)
    except np.linalg.LinAlgError:
        raise NotSubcriticalError("not subcritical: E - mu is not positive definite") from None
    gap = pencil_min(shifted, form.m, solver=solver).lambda_min
    if not gap > 0:
        raise NotSubcriticalError("not subcritical: no spectral gap")
    return solver.solve(form.m * g)
