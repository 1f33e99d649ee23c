"""Capacities of state subsets and the Hardy lower bound for them."""

from dataclasses import dataclass

import numpy as np

from .continuum import grid_gamma
from .core import GraphForm, _subset_mask, energy, green, restrict
from .errors import RecurrentFormError
from .improved import SLACK

__all__ = ["CapacityResult", "CapacityBoundReport", "capacity", "capacity_bound_check"]


@dataclass(frozen=True, eq=False)
class CapacityResult:
    cap: float
    equilibrium: np.ndarray


@dataclass(frozen=True)
class CapacityBoundReport:
    """``lhs <= 4 cap (1 + slack)``; ``margin = 4 cap - lhs`` is the raw gap."""

    passed: bool
    lhs: float
    cap: float
    margin: float
    size: int
    slack: float

    def to_dict(self):
        return {"passed": self.passed, "lhs": self.lhs, "cap": self.cap,
                "margin": self.margin, "size": self.size, "slack": self.slack}


def capacity(form, K):
    """Equilibrium potential and capacity of ``K``.

    The potential ``u`` equals 1 on ``K`` and is harmonic elsewhere; it is
    obtained from the complement's restricted form, whose killing picks up
    the conductances into ``K``.  ``cap = E[u]``.

    Parameters
    ----------
    form : GraphForm
        Transient form.
    K : bool mask or iterable of state labels
        Nonempty set.
    """
    if not isinstance(form, GraphForm):
        raise TypeError("expected a GraphForm")
    if not form.transient:
        raise RecurrentFormError("recurrent form: a component carries no killing")
    inK = _subset_mask(form, K)
    if not inK.any():
        raise ValueError("K must be nonempty")
    u = np.ones(form.n)
    if not inK.all():
        outside = ~inK
        sub = restrict(form, outside)
        rhs = sub.kappa - form.kappa[outside]
        u[outside] = green(sub, rhs)
        if np.any(u < -1e-9) or np.any(u > 1 + 1e-9):
            raise ArithmeticError("equilibrium potential left [0, 1]")
        u = np.clip(u, 0.0, 1.0)
    return CapacityResult(float(energy(form, u)), u)


def capacity_bound_check(grid, K, rho, psi=None, beta=0.0, slack=SLACK):
    """Check ``sum_K m / rho**2 + beta**2 sum_K Gamma(psi) / psi**2 <= 4 cap(K)``.

    ``K`` is a mask or index set over the grid's domain states.  The
    inequality is accepted up to the relative ``slack``; the raw margin is
    reported regardless.
    """
    inK = _subset_mask(grid.form, K)
    rho_vals = grid.extend(rho)[: grid.n]
    if np.any(rho_vals[inK] <= 0):
        raise ValueError("rho must be positive on K")
    lhs = float(np.sum(grid.m[inK] / rho_vals[inK] ** 2))
    if beta:
        if psi is None:
            raise ValueError("psi is required when beta > 0")
        psi_full = grid.extend(psi)
        z = grid_gamma(grid, psi_full) / psi_full[: grid.n] ** 2
        lhs += beta**2 * float(np.sum(z[inK]))
    cap = capacity(grid.form, inK).cap
    return CapacityBoundReport(bool(lhs <= 4 * cap * (1 + slack)), lhs, cap, 4 * cap - lhs,
                               int(inK.sum()), slack)
