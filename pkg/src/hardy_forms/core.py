"""Finite-state symmetric Dirichlet forms.

A form on ``n`` states is described by a reference measure ``m``, a symmetric
jump kernel stored once per unordered pair ``{x, y}`` and a killing vector
``kappa``.  The associated quadratic form is

    E[f] = sum_{pairs} j(x, y) (f(x) - f(y))**2 + sum_x kappa(x) f(x)**2

and the form operator is the matrix ``A = L + diag(kappa)`` with ``L`` the
weighted graph Laplacian, so that ``E(f, g) = g @ A @ f`` in the unweighted
pairing.  Every pair is counted once; no implicit factor 1/2 is attached to
the jump kernel.

Hardy measures, energy-measure densities and Riesz charges are plain
nonnegative arrays indexed like ``states``.  On a finite connected transient
space every nonempty set has positive capacity, so measures need no capacity
screening.
"""

from dataclasses import dataclass, field
from functools import cached_property
import json

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg

from .errors import ConvergenceError, RecurrentFormError

__all__ = [
    "GraphForm",
    "energy",
    "energy_bilinear",
    "gamma",
    "apply_form_operator",
    "restrict",
    "green",
    "is_transient",
    "as_measure",
    "random_form",
    "form_to_dict",
    "form_from_dict",
    "dumps",
    "loads",
]

DENSE_LIMIT = 500
SOLVER_RTOL = 1e-10


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GraphForm:
    """Immutable finite symmetric Dirichlet form.

    Parameters
    ----------
    m : array_like, shape (n,)
        Positive reference measure.
    rows, cols : array_like of int
        Endpoints of the jump pairs.  Order within a pair does not matter;
        repeated pairs are merged by summing their weights.
    weights : array_like
        Nonnegative pair conductances ``j(x, y)``.
    kappa : array_like, shape (n,), optional
        Nonnegative killing vector (zeros by default).
    states : sequence, optional
        State labels; defaults to ``range(n)``.
    """

    m: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray
    kappa: np.ndarray = None
    states: tuple = field(default=None)

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.ndim != 1 or m.size == 0:
            raise ValueError("m must be a nonempty 1-d array")
        n = m.size
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise ValueError("reference measure must be positive and finite")
        kappa = np.zeros(n) if self.kappa is None else np.asarray(self.kappa, dtype=float)
        if kappa.shape != (n,):
            raise ValueError(f"kappa has shape {kappa.shape}, expected ({n},)")
        if not np.all(np.isfinite(kappa)) or np.any(kappa < 0):
            raise ValueError("killing vector must be nonnegative and finite")

        r = np.asarray(self.rows, dtype=np.int64).ravel()
        c = np.asarray(self.cols, dtype=np.int64).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if not (r.size == c.size == w.size):
            raise ValueError("rows, cols and weights must have equal length")
        if r.size:
            if r.min() < 0 or c.min() < 0 or r.max() >= n or c.max() >= n:
                raise ValueError("edge endpoint out of range")
            if np.any(r == c):
                raise ValueError("jump kernel must vanish on the diagonal")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("jump kernel must be nonnegative and finite")
        lo, hi = np.minimum(r, c), np.maximum(r, c)
        keep = w > 0
        lo, hi, w = lo[keep], hi[keep], w[keep]
        if lo.size:
            key = lo * n + hi
            uniq, inv = np.unique(key, return_inverse=True)
            w = np.bincount(inv, weights=w, minlength=uniq.size)
            lo, hi = uniq // n, uniq % n

        states = tuple(range(n)) if self.states is None else tuple(self.states)
        if len(states) != n:
            raise ValueError("states and m differ in length")
        if len(set(states)) != n:
            raise ValueError("state labels must be distinct")

        object.__setattr__(self, "m", _readonly(m))
        object.__setattr__(self, "kappa", _readonly(kappa))
        object.__setattr__(self, "rows", _readonly(lo, np.int64))
        object.__setattr__(self, "cols", _readonly(hi, np.int64))
        object.__setattr__(self, "weights", _readonly(w))
        object.__setattr__(self, "states", states)

    @classmethod
    def from_edges(cls, states, m, edges, kappa=None):
        """Build a form from labelled edges ``[(x, y, j), ...]``."""
        states = tuple(states)
        index = {s: i for i, s in enumerate(states)}
        try:
            rows = [index[x] for x, _, _ in edges]
            cols = [index[y] for _, y, _ in edges]
        except KeyError as exc:
            raise ValueError(f"edge endpoint {exc.args[0]!r} is not a state") from None
        weights = [float(wt) for _, _, wt in edges]
        return cls(m, rows, cols, weights, kappa, states)

    @property
    def n(self):
        return self.m.size

    @cached_property
    def index(self):
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def jump_matrix(self):
        """Symmetric sparse matrix of the jump kernel."""
        n = self.n
        J = sp.coo_matrix((self.weights, (self.rows, self.cols)), shape=(n, n))
        return (J + J.T).tocsr()

    @cached_property
    def operator(self):
        """Form operator ``A`` as a CSR matrix."""
        J = self.jump_matrix
        deg = np.asarray(J.sum(axis=1)).ravel()
        return (sp.diags(deg + self.kappa) - J).tocsr()

    def dense_operator(self):
        return self.operator.toarray()

    @cached_property
    def transient(self):
        if self.rows.size:
            ncomp, labels = connected_components(self.jump_matrix, directed=False)
        else:
            ncomp, labels = self.n, np.arange(self.n)
        killed = np.bincount(labels, weights=self.kappa, minlength=ncomp)
        return bool(np.all(killed > 0))

    def __repr__(self):
        return f"GraphForm(n={self.n}, pairs={self.rows.size}, killed={int(np.count_nonzero(self.kappa))})"


def _vec(form, f, name="f"):
    f = np.asarray(f, dtype=float)
    if f.shape != (form.n,):
        raise ValueError(f"{name} has shape {f.shape}, expected ({form.n},)")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} has non-finite entries")
    return f


def as_measure(values, n=None):
    """Validate a nonnegative measure vector and return it as a float array."""
    mu = np.asarray(values, dtype=float)
    if mu.ndim != 1 or (n is not None and mu.size != n):
        raise ValueError(f"measure has shape {mu.shape}, expected ({n},)")
    if not np.all(np.isfinite(mu)) or np.any(mu < 0):
        raise ValueError("measure must be nonnegative and finite")
    return mu


def energy(form, f):
    """Quadratic form ``E[f]``; pairs are summed once."""
    f = _vec(form, f)
    d = f[form.rows] - f[form.cols]
    return float(np.dot(form.weights, d * d) + np.dot(form.kappa, f * f))


def energy_bilinear(form, f, g):
    """Bilinear form ``E(f, g)`` (the polarization of :func:`energy`)."""
    f = _vec(form, f)
    g = _vec(form, g, "g")
    df = f[form.rows] - f[form.cols]
    dg = g[form.rows] - g[form.cols]
    return float(np.dot(form.weights, df * dg) + np.dot(form.kappa, f * g))


def gamma(form, f, g=None):
    """Discrete carre du champ.

    ``Gamma(f, g)(x) = 1/2 sum_y j(x, y)(f(x)-f(y))(g(x)-g(y)) + kappa(x) f(x) g(x)``

    Each pair's energy is split evenly between its endpoints and the killing
    part is booked at its state, so ``gamma(form, f, g).sum()`` equals
    ``energy_bilinear(form, f, g)``.  Signed when ``f != g``.
    """
    f = _vec(form, f)
    g = f if g is None else _vec(form, g, "g")
    c = 0.5 * form.weights * (f[form.rows] - f[form.cols]) * (g[form.rows] - g[form.cols])
    out = form.kappa * f * g
    out = out + np.bincount(form.rows, weights=c, minlength=form.n)
    return out + np.bincount(form.cols, weights=c, minlength=form.n)


def apply_form_operator(form, f):
    """``(A f)(x) = sum_y j(x, y)(f(x) - f(y)) + kappa(x) f(x)``."""
    f = _vec(form, f)
    return form.operator @ f


def _subset_mask(form, omega):
    if isinstance(omega, np.ndarray) and omega.dtype == bool:
        if omega.shape != (form.n,):
            raise ValueError("boolean subset mask has the wrong length")
        return omega.copy()
    mask = np.zeros(form.n, dtype=bool)
    for s in omega:
        try:
            mask[form.index[s]] = True
        except KeyError:
            raise ValueError(f"{s!r} is not a state") from None
    return mask


def restrict(form, omega):
    """Restrict ``form`` to the states in ``omega`` (Dirichlet outside).

    Functions on ``omega`` are identified with their zero extension; pairs
    leaving ``omega`` become killing at their inner endpoint, so the
    restricted energy equals the parent energy of the zero extension.

    ``omega`` is either a boolean mask over the states or an iterable of
    state labels.
    """
    mask = _subset_mask(form, omega)
    if not mask.any():
        raise ValueError("cannot restrict to an empty set of states")
    idx = np.flatnonzero(mask)
    new = -np.ones(form.n, dtype=np.int64)
    new[idx] = np.arange(idx.size)
    r, c, w = form.rows, form.cols, form.weights
    inside = mask[r] & mask[c]
    kappa = form.kappa[idx].copy()
    cut_r = mask[r] & ~mask[c]
    cut_c = mask[c] & ~mask[r]
    kappa += np.bincount(new[r[cut_r]], weights=w[cut_r], minlength=idx.size)
    kappa += np.bincount(new[c[cut_c]], weights=w[cut_c], minlength=idx.size)
    states = tuple(form.states[i] for i in idx)
    return GraphForm(form.m[idx], new[r[inside]], new[c[inside]], w[inside], kappa, states)


def is_transient(form):
    """True when every connected component carries some killing."""
    return form.transient


def green(form, g, rtol=SOLVER_RTOL):
    """Potential ``u = A^{-1} g`` of the (signed) density ``g``.

    Raises
    ------
    RecurrentFormError
        If the form operator is singular.
    ConvergenceError
        If the conjugate gradient solve misses ``rtol``.
    """
    g = _vec(form, g, "g")
    if not form.transient:
        raise RecurrentFormError("recurrent form: a component carries no killing")
    if not np.any(g):
        return np.zeros(form.n)
    if form.n < DENSE_LIMIT:
        return scipy.linalg.solve(form.dense_operator(), g, assume_a="pos")
    A = form.operator
    diag = A.diagonal()
    precond = sp.diags(1.0 / diag)
    u, info = cg(A, g, rtol=rtol, atol=0.0, maxiter=20 * form.n, M=precond)
    res = np.linalg.norm(A @ u - g) / np.linalg.norm(g)
    if info != 0 or res > 10 * rtol:
        raise ConvergenceError(f"conjugate gradient did not converge (relative residual {res:.3e})",
                               residual=res)
    return u


def random_form(rng, n, edge_prob=0.25, kill_frac=0.2, m_range=(0.5, 2.0), j_range=(0.1, 2.0)):
    """Random connected transient form on ``n`` states.

    A random spanning tree guarantees irreducibility; extra pairs are added
    independently with probability ``edge_prob``; at least one state is
    killed.
    """
    rng = np.random.default_rng(rng)
    perm = rng.permutation(n)
    rows, cols = [], []
    for k in range(1, n):
        rows.append(perm[k])
        cols.append(perm[rng.integers(k)])
    if n > 2:
        iu, ju = np.triu_indices(n, 1)
        extra = rng.random(iu.size) < edge_prob
        rows.extend(iu[extra])
        cols.extend(ju[extra])
    weights = rng.uniform(*j_range, size=len(rows))
    kappa = np.zeros(n)
    killed = rng.random(n) < kill_frac
    killed[rng.integers(n)] = True
    kappa[killed] = rng.uniform(0.05, 1.0, size=killed.sum())
    m = rng.uniform(*m_range, size=n)
    return GraphForm(m, rows, cols, weights, kappa)


def form_to_dict(form):
    """JSON-ready ``{states, m, edges: [[x, y, j]], kappa}``."""
    return {
        "states": list(form.states),
        "m": form.m.tolist(),
        "edges": [[form.states[i], form.states[k], w]
                  for i, k, w in zip(form.rows.tolist(), form.cols.tolist(), form.weights.tolist())],
        "kappa": form.kappa.tolist(),
    }


def form_from_dict(data):
    try:
        states, m, edges = data["states"], data["m"], data["edges"]
    except KeyError as exc:
        raise ValueError(f"form description lacks {exc.args[0]!r}") from None
    return GraphForm.from_edges(states, m, edges, data.get("kappa"))


def dumps(form):
    return json.dumps(form_to_dict(form))


def loads(text):
    return form_from_dict(json.loads(text))
