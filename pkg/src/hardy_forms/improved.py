"""Grid verification of Hardy inequalities generated by distance functions.

Every check has two halves.  The hypothesis is a pointwise inequality for
the grid operator, tested on interior states (states without collar
neighbours).  The conclusion is spectral: the smallest eigenvalue of a
pencil ``(A, diag(nu))`` must reach the claimed bound up to a relative
slack (10 % by default).

Energy-measure densities use :func:`continuum.grid_gamma`, so the density
of ``rho`` with respect to ``m`` is ``Gamma(rho) / m`` and the measures read

* ``Gamma(rho) / rho**2``        distance-function Hardy weight, bound 1/4,
* ``m / psi**2``                  dominated by mass, bound ``beta**2``,
* ``Gamma(psi) / psi**2``         dominated by energy, bound ``beta**2``,

with ``beta = C - 1/2``.  The dominated-energy hypothesis is tested as
``A psi <= -2 C Gamma(psi) / psi``, the normalization for which the bound
``beta**2`` follows from the ground-state identity on a grid.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .continuum import grid_gamma
from .errors import MarginError
from .spectral import SPDSolver, pencil_min

__all__ = [
    "ConditionResult",
    "VerificationReport",
    "verify_strong1",
    "verify_strong2",
    "verify_strong3",
    "verify_improved",
    "verify_ihi2",
    "log_criterion",
    "reports_to_csv",
    "SLACK",
    "DENSITY_C",
]

SLACK = 0.1
DENSITY_C = 1.0
REL_TOL = 1e-9


@dataclass(frozen=True)
class ConditionResult:
    """Pointwise hypothesis: ``passed`` iff ``worst >= -tol``."""

    name: str
    passed: bool
    worst: float
    where: int
    tol: float

    def to_dict(self):
        return {"name": self.name, "passed": self.passed, "worst": self.worst,
                "where": self.where, "tol": self.tol}


@dataclass(frozen=True)
class VerificationReport:
    theorem: str
    condition_results: tuple
    lambda_min: float
    claimed_bound: float
    h: float
    slack: float = SLACK
    extra: dict = field(default_factory=dict)

    @property
    def margin(self):
        return self.lambda_min - self.claimed_bound

    @property
    def hypotheses_passed(self):
        return all(c.passed for c in self.condition_results)

    @property
    def conclusion_passed(self):
        return bool(self.lambda_min >= self.claimed_bound * (1 - self.slack))

    @property
    def passed(self):
        return self.hypotheses_passed and self.conclusion_passed

    def condition(self, name):
        for c in self.condition_results:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {
            "theorem": self.theorem,
            "h": self.h,
            "lambda_min": self.lambda_min,
            "claimed_bound": self.claimed_bound,
            "margin": self.margin,
            "slack": self.slack,
            "passed": self.passed,
            "condition_results": [c.to_dict() for c in self.condition_results],
            "extra": self.extra,
        }


def reports_to_csv(reports):
    """Convergence table with columns ``h, lambda_min, bound, margin``."""
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["h", "lambda_min", "bound", "margin"])
    for r in reports:
        out.writerow(["%.17g" % r.h, "%.17g" % r.lambda_min, "%.17g" % r.claimed_bound,
                      "%.17g" % r.margin])
    return buf.getvalue()


def _condition(name, grid, residual, scale):
    """Test ``residual >= -tol`` on interior states, ``tol = 1e-9 * max|scale|``."""
    mask = grid.interior_mask
    if not mask.any():
        return ConditionResult(name, True, np.inf, -1, 0.0)
    r = residual[mask]
    tol = REL_TOL * float(np.abs(scale[mask]).max())
    k = int(np.argmin(r))
    where = int(np.flatnonzero(mask)[k])
    return ConditionResult(name, bool(r[k] >= -tol), float(r[k]), where, tol)


def _positive(grid, f, name="positive"):
    g = grid.extend(f)
    Af = grid.apply_local(g)
    scale = abs(grid.local_operator) @ np.abs(g)
    return _condition(name, grid, Af, scale)


def _domain_values(grid, f, name):
    full = grid.extend(f)
    vals = full[: grid.n]
    if np.any(vals <= 0):
        raise ValueError(f"{name} must be positive on the grid")
    return full, vals


def _beta(C):
    if not C > 0.5:
        raise ValueError(f"β nonpositive: C = {C} must exceed 1/2")
    return C - 0.5


def _dominated(grid, psi, C, density, factor, name):
    """``-(A psi) - factor C density / psi >= 0`` and the admissible ``C``."""
    full, vals = _domain_values(grid, psi, "psi")
    Apsi = grid.apply_local(full)
    term = density / vals
    res = -Apsi - factor * C * term
    scale = np.abs(Apsi) + factor * C * np.abs(term)
    cond = _condition(name, grid, res, scale)
    mask = grid.interior_mask & (density > 0)
    admissible = float((-Apsi[mask] / (factor * term[mask])).min()) if mask.any() else np.inf
    return cond, admissible


def _theta_operator_apply(grid, psi_full, beta, rho_full):
    """``A_theta rho`` with edge weights ``j * ((psi_x + psi_y) / 2) ** (-2 beta)``."""
    P = grid.parent
    theta = (0.5 * (psi_full[P.rows] + psi_full[P.cols])) ** (-2.0 * beta)
    c = theta * P.weights
    flux = c * (rho_full[P.rows] - rho_full[P.cols])
    out = np.bincount(P.rows, flux, P.n) - np.bincount(P.cols, flux, P.n)
    scale = np.bincount(P.rows, np.abs(flux), P.n) + np.bincount(P.cols, np.abs(flux), P.n)
    return out[: grid.n], scale[: grid.n]


def verify_strong1(grid, rho, slack=SLACK, method="auto"):
    """Superharmonic ``rho`` gives ``sum f**2 Gamma(rho) / rho**2 <= 4 E[f]``."""
    full, vals = _domain_values(grid, rho, "rho")
    cond = _positive(grid, full)
    nu = grid_gamma(grid, full) / vals**2
    res = pencil_min(grid.form.operator, nu, method=method)
    return VerificationReport("strong1", (cond,), float(res.lambda_min), 0.25, grid.h, slack,
                              {"c_star": res.c_star, "eig_residual": res.residual})


def verify_strong2(grid, psi, C, slack=SLACK, density_c=DENSITY_C, method="auto"):
    """Mass-dominated hypothesis ``A psi <= -2 C m / psi`` with ``Gamma(psi) <= m``.

    The conclusion is ``sum f**2 m / psi**2 <= beta**-2 E[f]``.  The report
    also records the hypothesis with the single factor ``C`` and the
    largest ``C`` the grid admits.
    """
    beta = _beta(C)
    full, vals = _domain_values(grid, psi, "psi")
    m = grid.m
    cond, admissible = _dominated(grid, full, C, m, 2.0, "dominated-mass")
    single, _ = _dominated(grid, full, C, m, 1.0, "dominated-mass-single")
    mask = grid.interior_mask
    ratio = grid_gamma(grid, full) / m
    worst = float(ratio[mask].max()) if mask.any() else 0.0
    bound = 1 + density_c * grid.h
    dens = ConditionResult("density", worst <= bound, bound - worst,
                           int(np.flatnonzero(mask)[np.argmax(ratio[mask])]) if mask.any() else -1, 0.0)
    res = pencil_min(grid.form.operator, m / vals**2, method=method)
    return VerificationReport("strong2", (cond, dens), float(res.lambda_min), beta**2, grid.h, slack,
                              {"beta": beta, "C": C, "admissible_C": admissible,
                               "single_factor_passed": single.passed,
                               "single_factor_worst": single.worst})


def verify_strong3(grid, psi, C, slack=SLACK, method="auto"):
    """Energy-dominated hypothesis ``A psi <= -2 C Gamma(psi) / psi``.

    The conclusion is ``sum f**2 Gamma(psi) / psi**2 <= beta**-2 E[f]``.
    """
    beta = _beta(C)
    full, vals = _domain_values(grid, psi, "psi")
    G = grid_gamma(grid, full)
    cond, admissible = _dominated(grid, full, C, G, 2.0, "dominated-energy")
    res = pencil_min(grid.form.operator, G / vals**2, method=method)
    return VerificationReport("strong3", (cond,), float(res.lambda_min), beta**2, grid.h, slack,
                              {"beta": beta, "C": C, "admissible_C": admissible})


def log_criterion(grid, psi):
    """Subharmonicity of ``log psi`` and the dominated-energy constant it implies.

    In the continuum ``Delta log psi >= 0`` means
    ``Delta psi >= |grad psi|**2 / psi``, which is the dominated-energy
    hypothesis with ``2 C = 1``.  On a grid this holds up to ``O(h)``.
    Returns ``(log_subharmonic, admissible_C)``.
    """
    full, vals = _domain_values(grid, psi, "psi")
    safe = np.where(full > 0, full, 1.0)
    logp = np.where(full > 0, np.log(safe), 0.0)
    A = grid.apply_local(logp)
    scale = abs(grid.local_operator) @ np.abs(logp)
    sub_log = _condition("log-subharmonic", grid, -A, scale)
    _, admissible = _dominated(grid, full, 1.0, grid_gamma(grid, full), 2.0, "dominated-energy")
    return sub_log.passed, admissible


def _improvement(grid, psi_full, beta):
    vals = psi_full[: grid.n]
    z = grid_gamma(grid, psi_full) / vals**2
    return (grid.form.operator - sp.diags(beta**2 * z)).tocsr(), z


def _joint(grid, rho, psi, beta, with_density, slack, method, density_c):
    rho_full, rho_vals = _domain_values(grid, rho, "rho")
    conds = [_positive(grid, rho_full)]
    extra = {"beta": beta}
    if with_density:
        mask = grid.interior_mask
        ratio = grid_gamma(grid, rho_full) / grid.m
        dev = np.abs(ratio - 1.0)
        worst = float(dev[mask].max()) if mask.any() else 0.0
        where = int(np.flatnonzero(mask)[np.argmax(dev[mask])]) if mask.any() else -1
        conds.append(ConditionResult("density", worst <= density_c * grid.h,
                                     density_c * grid.h - worst, where, 0.0))
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    A = grid.form.operator
    if beta > 0:
        if psi is None:
            raise ValueError("psi is required when beta > 0")
        psi_full, psi_vals = _domain_values(grid, psi, "psi")
        C = beta + 0.5
        dom, adm = _dominated(grid, psi_full, C, grid_gamma(grid, psi_full), 2.0,
                              "dominated-energy")
        conds.append(dom)
        extra["admissible_C"] = adm
        Ath, scale = _theta_operator_apply(grid, psi_full, beta, rho_full)
        conds.append(_condition("joint", grid, Ath, scale))
        A, z = _improvement(grid, psi_full, beta)
    try:
        solver = SPDSolver(A)
    except np.linalg.LinAlgError:
        raise MarginError("strong3 margin insufficient: the improved form is indefinite") from None
    nu = grid.m / rho_vals**2 if with_density else grid_gamma(grid, rho_full) / rho_vals**2
    res = pencil_min(A, nu, method=method, solver=solver)
    extra.update({"c_star": res.c_star, "eig_residual": res.residual})
    name = "ihi2" if with_density else "improved"
    return VerificationReport(name, tuple(conds), float(res.lambda_min), 0.25, grid.h, slack, extra)


def verify_improved(grid, rho, psi, beta, slack=SLACK, method="auto"):
    """Improved inequality ``sum f**2 Gamma(rho)/rho**2 <= 4 (E[f] - beta**2 sum f**2 Gamma(psi)/psi**2)``.

    Hypotheses: ``A rho >= 0``, the dominated-energy condition for ``psi``
    with ``C = beta + 1/2``, and the joint condition ``A_theta rho >= 0``
    where ``A_theta`` reweights each edge by ``psi(mid) ** (-2 beta)``.

    Raises
    ------
    MarginError
        If ``E - beta**2 sum f**2 Gamma(psi)/psi**2`` is not positive definite.
    """
    return _joint(grid, rho, psi, beta, False, slack, method, DENSITY_C)


def verify_ihi2(grid, rho, psi, beta, slack=SLACK, density_c=DENSITY_C, method="auto"):
    """Variant with ``Gamma(rho) = m`` and the measure ``m / rho**2``.

    A violated density condition is reported in ``condition_results``.
    """
    return _joint(grid, rho, psi, beta, True, slack, method, density_c)
