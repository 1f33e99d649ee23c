"""Euclidean examples and their finite-volume grid forms.

Each example describes a weighted gradient form ``E[f] = int |grad f|^2 phi^2 dx``
(plus an optional potential term) on a domain, together with closed-form
distance functions ``rho`` and weights ``psi``.  :func:`build_grid` turns an
example into a :class:`GridInstance`: a lattice of mesh width ``h`` with
conductances ``phi(mid)^2 h^(d-2)`` between axis neighbours and masses
``m_density(x) h^d``.

Grid conventions
----------------
* Along each axis nodes sit either on ``lo + k h`` (``"vertex"``) or on
  ``lo + (k + 1/2) h`` (``"cell"``).  Box faces that are not mirror planes
  carry Dirichlet conditions.
* A lattice node belongs to the discrete domain when it lies strictly inside
  the box and at distance ``>= h`` from the domain boundary.  Its neighbours
  outside the discrete domain form the *collar*; they all lie in the closed
  continuum domain, so the discrete problem is a restriction of the
  continuum one.
* A ``mirror`` lower face (cell centering only) is a reflection plane.
  Restricting to the positive side is exact for functions even in that
  coordinate, in particular for the Perron eigenvector of a symmetric
  problem.
* Energy-measure densities are computed on the collar-extended grid without
  killing, so closed-form fields keep their true values on the collar instead
  of being zero-extended.
"""

from dataclasses import dataclass, field, fields
from functools import cached_property
import warnings

import numpy as np

from .core import GraphForm, gamma, restrict

__all__ = [
    "HalfSpaceImproved",
    "ConvexWeighted",
    "StarShapedExp",
    "SigmaLambda",
    "BallImproved",
    "example_from_dict",
    "Box",
    "GridInstance",
    "build_grid",
    "rho_F",
    "ResidualSummary",
    "pointwise_condition_residual",
    "grid_gamma",
    "gamma_density_ratio",
    "CONDITIONS",
]


def _pts(x):
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1))


class _Example:
    """Shared defaults; subclasses override the closed-form fields."""

    name = "example"
    singular_points = ()

    def contains(self, x):
        return np.ones(_pts(x).shape[0], dtype=bool)

    def boundary_distance(self, x):
        return np.full(_pts(x).shape[0], np.inf)

    def phi(self, x):
        return np.ones(_pts(x).shape[0])

    def mass_density(self, x):
        return self.phi(x) ** 2

    def killing_density(self, x):
        return np.zeros(_pts(x).shape[0])

    def field(self, name):
        fn = getattr(self, name, None)
        if fn is None or not callable(fn):
            raise ValueError(f"{self.name} has no field {name!r}")
        return fn

    def to_dict(self):
        out = {"variant": self.name}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


@dataclass(frozen=True)
class HalfSpaceImproved(_Example):
    """Upper half-space ``x_d > 0`` with the unweighted gradient form."""

    d: int = 3
    eps: float = 0.0
    name = "half-space"

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("half-space example needs d >= 3")
        if not 0 <= self.eps < 0.25:
            raise ValueError("eps must lie in [0, 1/4)")

    def contains(self, x):
        return _pts(x)[:, -1] > 0

    def boundary_distance(self, x):
        return _pts(x)[:, -1]

    def rho(self, x):
        return _pts(x)[:, -1]

    def psi(self, x):
        x = _pts(x)
        return np.sqrt(x[:, -1]) * (x[:, -2] ** 2 + x[:, -1] ** 2) ** 0.25

    def mu_density(self, x):
        x = _pts(x)
        y, s = x[:, -1], x[:, -2]
        return (0.25 - self.eps) / y**2 + 0.125 / (y * np.sqrt(s * s + y * y))

    def default_box(self):
        return Box.from_bounds([(-1.0, 1.0)] * (self.d - 1) + [(0.0, 1.0)],
                               centering=["cell"] * (self.d - 1) + ["vertex"],
                               mirror=[True] * (self.d - 1) + [False], mirror_origin=True)


@dataclass(frozen=True)
class ConvexWeighted(_Example):
    """Convex domain with weight ``phi = rho_F^(-alpha)``.

    ``domain`` is ``"interval"`` (``(0, size)``, d = 1) or ``"ball"`` (radius
    ``size``).  ``distance_to`` selects ``F``: ``"boundary"`` (the complement
    of the domain) or, for the interval, ``"left"`` (``F = {0}``, ``rho = x``).
    """

    d: int = 1
    domain: str = "interval"
    size: float = 1.0
    alpha: float = 0.0
    distance_to: str = "left"
    name = "convex"

    def __post_init__(self):
        if self.domain not in ("interval", "ball"):
            raise ValueError("domain must be 'interval' or 'ball'")
        if self.domain == "interval" and self.d != 1:
            raise ValueError("interval domain is one-dimensional")
        if self.distance_to not in ("left", "boundary"):
            raise ValueError("distance_to must be 'left' or 'boundary'")
        if self.distance_to == "left" and self.domain != "interval":
            raise ValueError("distance_to='left' needs the interval domain")
        if self.alpha < 0 or self.size <= 0:
            raise ValueError("need alpha >= 0 and size > 0")

    def contains(self, x):
        x = _pts(x)
        if self.domain == "interval":
            return (x[:, 0] > 0) & (x[:, 0] < self.size)
        return _norm(x) < self.size

    def boundary_distance(self, x):
        x = _pts(x)
        if self.domain == "interval":
            return np.minimum(x[:, 0], self.size - x[:, 0])
        return self.size - _norm(x)

    def rho(self, x):
        if self.distance_to == "left":
            return _pts(x)[:, 0].copy()
        return self.boundary_distance(x)

    def phi(self, x):
        return self.rho(x) ** (-self.alpha)

    def default_box(self):
        if self.domain == "interval":
            return Box.from_bounds([(0.0, self.size)], centering=["vertex"])
        return Box.from_bounds([(0.0, self.size)] * self.d, centering=["cell"] * self.d,
                               mirror=[True] * self.d)


@dataclass(frozen=True)
class StarShapedExp(_Example):
    """Cube ``x0 + (-L, L)^d`` with ``rho = psi = |x - x0|`` and ``phi = e^rho``."""

    d: int = 3
    x0: tuple = None
    half_width: float = 1.0
    name = "star"

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("star-shaped example needs d >= 3")
        x0 = (0.0,) * self.d if self.x0 is None else tuple(float(v) for v in self.x0)
        if len(x0) != self.d:
            raise ValueError("x0 has the wrong dimension")
        object.__setattr__(self, "x0", x0)

    @property
    def singular_points(self):
        return (np.array(self.x0),)

    def contains(self, x):
        return np.all(np.abs(_pts(x) - np.array(self.x0)) < self.half_width, axis=1)

    def boundary_distance(self, x):
        return self.half_width - np.abs(_pts(x) - np.array(self.x0)).max(axis=1)

    def rho(self, x):
        return _norm(_pts(x) - np.array(self.x0))

    psi = rho

    def phi(self, x):
        return np.exp(self.rho(x))

    @property
    def hypothesis_C(self):
        return (self.d - 1) / 2

    @property
    def beta(self):
        return self.hypothesis_C - 0.5

    @property
    def conclusion_constant(self):
        """``beta**-2``, the constant in front of the improved term."""
        return self.beta**-2.0

    def default_box(self):
        x0 = np.array(self.x0)
        return Box.from_bounds([(c, c + self.half_width) for c in x0], centering=["cell"] * self.d,
                               mirror=[True] * self.d)


@dataclass(frozen=True)
class SigmaLambda(_Example):
    """``E[f] = int |grad f|^2 + int f^2 sigma^lam`` on ``L^2(sigma^lam dx)``."""

    d: int = 3
    lam: float = -6.0
    name = "sigma-lambda"

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("sigma-lambda example needs d >= 3")
        object.__setattr__(self, "singular_points", (np.zeros(self.d),))

    def sigma(self, x):
        return np.sqrt(1.0 + np.sum(_pts(x) ** 2, axis=1))

    def mass_density(self, x):
        return self.sigma(x) ** self.lam

    killing_density = mass_density

    def rho(self, x):
        return np.arcsinh(_norm(_pts(x)))

    psi = rho

    def default_box(self):
        return Box.from_bounds([(0.0, 4.0)] * self.d, centering=["cell"] * self.d,
                               mirror=[True] * self.d)


@dataclass(frozen=True)
class BallImproved(_Example):
    """Ball ``B_R`` with ``rho = R - |x|``, ``psi = |x|``, ``phi = rho^(-alpha)``."""

    d: int = 3
    R: float = 3.0
    alpha: float = 0.3
    name = "ball"

    def __post_init__(self):
        if not 0 <= self.alpha <= 0.5:
            raise ValueError("alpha must lie in [0, 1/2]")
        if not (self.d - 1) * self.R ** (2 * self.alpha) > 1:
            raise ValueError("need (d - 1) R^(2 alpha) > 1")
        object.__setattr__(self, "singular_points", (np.zeros(self.d),))

    def contains(self, x):
        return _norm(_pts(x)) < self.R

    def boundary_distance(self, x):
        return self.R - _norm(_pts(x))

    rho = boundary_distance

    def psi(self, x):
        return _norm(_pts(x))

    def phi(self, x):
        return self.rho(x) ** (-self.alpha)

    @property
    def beta(self):
        """The improvement exponent ``(d - 1) R^(2 alpha) - 1/2`` claimed for this example."""
        return (self.d - 1) * self.R ** (2 * self.alpha) - 0.5

    @property
    def hypothesis_beta(self):
        """Largest exponent the dominated-energy condition admits at the centre."""
        return (self.d - 2) / 2

    def default_box(self):
        return Box.from_bounds([(0.0, self.R)] * self.d, centering=["cell"] * self.d,
                               mirror=[True] * self.d)


_VARIANTS = {cls.name: cls for cls in (HalfSpaceImproved, ConvexWeighted, StarShapedExp,
                                       SigmaLambda, BallImproved)}


def example_from_dict(data):
    data = dict(data)
    try:
        cls = _VARIANTS[data.pop("variant")]
    except KeyError:
        raise ValueError(f"unknown or missing example variant; choose from {sorted(_VARIANTS)}") from None
    try:
        return cls(**data)
    except TypeError as exc:
        raise ValueError(str(exc)) from None


@dataclass(frozen=True)
class Box:
    """Axis-aligned truncation box with per-axis centering and mirror flags."""

    lo: tuple
    hi: tuple
    centering: tuple
    mirror: tuple

    @classmethod
    def from_bounds(cls, bounds, centering=None, mirror=None, mirror_origin=False):
        lo = tuple(float(a) for a, _ in bounds)
        hi = tuple(float(b) for _, b in bounds)
        d = len(lo)
        centering = tuple(centering or ["vertex"] * d)
        mirror = list(mirror or [False] * d)
        if mirror_origin:
            # symmetric bounds (-a, a) on mirrored axes are folded to (0, a)
            lo = tuple(0.0 if mirror[i] and lo[i] == -hi[i] else lo[i] for i in range(d))
        box = cls(lo, hi, centering, tuple(bool(v) for v in mirror))
        box.validate()
        return box

    @property
    def d(self):
        return len(self.lo)

    def validate(self):
        if not (len(self.hi) == len(self.centering) == len(self.mirror) == self.d):
            raise ValueError("box fields disagree in dimension")
        for a, b, c, mir in zip(self.lo, self.hi, self.centering, self.mirror):
            if not b > a:
                raise ValueError("box needs lo < hi on every axis")
            if c not in ("vertex", "cell"):
                raise ValueError("centering must be 'vertex' or 'cell'")
            if mir and c != "cell":
                raise ValueError("mirror faces need cell centering")

    def to_dict(self):
        return {"bounds": [[a, b] for a, b in zip(self.lo, self.hi)],
                "centering": list(self.centering), "mirror": list(self.mirror)}

    @classmethod
    def from_dict(cls, data):
        return cls.from_bounds(data["bounds"], data.get("centering"), data.get("mirror"))


@dataclass(frozen=True, eq=False)
class GridInstance:
    """Grid discretization of an example.

    ``form`` is the Dirichlet form on the discrete domain (states ``0..n-1``
    in lattice order); ``parent`` is the strongly local form on domain plus
    collar (no killing), used for energy-measure densities.  Vectors of
    length ``n`` are zero-extended to the collar, vectors of length
    ``parent.n`` are taken as given.
    """

    form: GraphForm
    parent: GraphForm
    coords: np.ndarray
    collar_coords: np.ndarray
    h: float
    interior_mask: np.ndarray
    example: object = None
    box: Box = None
    extra: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.form.n

    @property
    def d(self):
        return self.coords.shape[1]

    @property
    def m(self):
        return self.form.m

    def sample(self, fn, collar=True):
        """Evaluate a closed-form field (callable or example field name)."""
        if isinstance(fn, str):
            fn = self.example.field(fn)
        vals = np.asarray(fn(self.coords), dtype=float)
        if not collar:
            return vals
        if self.collar_coords.shape[0] == 0:
            return vals
        return np.concatenate([vals, np.asarray(fn(self.collar_coords), dtype=float)])

    def extend(self, f):
        f = np.asarray(f, dtype=float)
        if f.shape == (self.parent.n,):
            return f
        if f.shape == (self.n,):
            return np.concatenate([f, np.zeros(self.parent.n - self.n)])
        raise ValueError(f"grid function has shape {f.shape}; expected ({self.n},) or ({self.parent.n},)")

    def restrict_values(self, f):
        return self.extend(f)[: self.n]

    @cached_property
    def local_operator(self):
        """Strongly local operator rows of the domain states (collar columns kept)."""
        return self.parent.operator[: self.n]

    def apply_local(self, f):
        return self.local_operator @ self.extend(f)

    def to_dict(self):
        from .core import form_to_dict

        out = form_to_dict(self.form)
        out["coords"] = self.coords.tolist()
        out["h"] = self.h
        out["interior"] = self.interior_mask.tolist()
        return out


def _axis_nodes(lo, hi, h, centering, mirror):
    span = (hi - lo) / h
    N = int(round(span))
    if N < 1 or abs(span - N) > 1e-9 * max(1.0, span):
        raise ValueError(f"h = {h} does not divide the box side {hi - lo}")
    if centering == "vertex":
        k = np.arange(0, N + 1)
        coords = lo + k * h
        inside = (k > 0) & (k < N)
    else:
        k = np.arange(0 if mirror else -1, N + 1)
        coords = lo + (k + 0.5) * h
        inside = (k >= 0) & (k < N)
    return coords, inside


def build_grid(example, h, box=None):
    """Discretize ``example`` on a lattice of width ``h`` inside ``box``.

    Raises
    ------
    ValueError
        If ``h`` does not divide the box, the grid is empty, or a node falls
        on a singular point of the example.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    box = example.default_box() if box is None else box
    box.validate()
    d = box.d
    if getattr(example, "d", d) != d:
        raise ValueError("box dimension differs from the example dimension")
    axes = [_axis_nodes(a, b, h, c, mir) for a, b, c, mir in zip(box.lo, box.hi, box.centering, box.mirror)]
    shape = tuple(len(c) for c, _ in axes)
    grids = np.meshgrid(*[c for c, _ in axes], indexing="ij")
    X = np.stack([g.ravel() for g in grids], axis=1)
    inbox = np.ones(shape, dtype=bool)
    for ax, (_, inside) in enumerate(axes):
        sl = [None] * d
        sl[ax] = slice(None)
        inbox = inbox & inside[tuple(sl)]
    inbox = inbox.ravel()

    domain = inbox.copy()
    domain[domain] = example.contains(X[domain])
    dist = example.boundary_distance(X[domain])
    keep = dist >= h * (1 - 1e-9)
    domain[np.flatnonzero(domain)[~keep]] = False
    if not domain.any():
        raise ValueError("grid has no interior nodes; decrease h or enlarge the box")
    for p in example.singular_points:
        if p is not None and np.any(_norm(X[domain] - p) < 1e-12 * max(1.0, h)):
            raise ValueError("a grid node sits on a singular point; use cell centering")

    flat = np.arange(X.shape[0]).reshape(shape)
    heads, tails = [], []
    for ax in range(d):
        a = flat.take(np.arange(shape[ax] - 1), axis=ax).ravel()
        b = flat.take(np.arange(1, shape[ax]), axis=ax).ravel()
        sel = domain[a] | domain[b]
        heads.append(a[sel])
        tails.append(b[sel])
    heads = np.concatenate(heads)
    tails = np.concatenate(tails)

    used = domain.copy()
    used[heads] = True
    used[tails] = True
    collar = used & ~domain
    dom_idx = np.flatnonzero(domain)
    col_idx = np.flatnonzero(collar)
    order = np.concatenate([dom_idx, col_idx])
    new = -np.ones(X.shape[0], dtype=np.int64)
    new[order] = np.arange(order.size)
    n = dom_idx.size

    mid = 0.5 * (X[heads] + X[tails])
    cond = example.phi(mid) ** 2 * h ** (d - 2)
    if not np.all(np.isfinite(cond)) or np.any(cond <= 0):
        raise ValueError("edge weight is not positive and finite; h too large for this domain")
    Xd = X[dom_idx]
    mass = example.mass_density(Xd) * h**d
    kill = example.killing_density(Xd) * h**d
    m_all = np.concatenate([mass, np.full(col_idx.size, h**d)])
    parent = GraphForm(m_all, new[heads], new[tails], cond)
    with_kill = GraphForm(m_all, new[heads], new[tails], cond,
                          np.concatenate([kill, np.zeros(col_idx.size)]))
    mask = np.zeros(order.size, dtype=bool)
    mask[:n] = True
    form = restrict(with_kill, mask)

    touches_collar = np.zeros(n, dtype=bool)
    r, c = new[heads], new[tails]
    touches_collar[r[c >= n]] = True
    touches_collar[c[r >= n]] = True
    interior = ~touches_collar
    interior.setflags(write=False)
    return GridInstance(form, parent, Xd, X[col_idx], float(h), interior, example, box)


def grid_gamma(grid, f, g=None):
    """Energy-measure density of grid functions on the domain states.

    Uses the strongly local collar-extended form, so the killing part and
    the zero extension are not booked.  Agrees with :func:`core.gamma` of
    ``grid.form`` on interior states when the form has no killing there.
    """
    f = grid.extend(f)
    g = None if g is None else grid.extend(g)
    return gamma(grid.parent, f, g)[: grid.n]


def gamma_density_ratio(grid, f):
    """``max_x Gamma(f)(x) / m(x)`` over interior states (0 if there are none)."""
    mask = grid.interior_mask
    if not mask.any():
        return 0.0
    return float((grid_gamma(grid, f)[mask] / grid.m[mask]).max())


def rho_F(example, x):
    """Closed-form distance ``rho_F`` at the point(s) ``x``."""
    pts = _pts(x)
    if not np.all(example.contains(pts)):
        raise ValueError("point outside the example's domain")
    vals = example.rho(pts)
    return float(vals[0]) if np.ndim(x) == 1 else vals


# ---------------------------------------------------------------------------
# pointwise residuals of the closed-form conditions
# ---------------------------------------------------------------------------

def fd_step(x):
    return 1e-5 * (1.0 + _norm(x))


def fd_laplacian(fn, x):
    x = _pts(x)
    dlt = fd_step(x)[:, None]
    u0 = fn(x)
    out = np.zeros(x.shape[0])
    for i in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[i] = 1.0
        out += (fn(x + dlt * e) - 2 * u0 + fn(x - dlt * e)) / dlt[:, 0] ** 2
    return out


def fd_gradient(fn, x):
    x = _pts(x)
    dlt = fd_step(x)[:, None]
    out = np.zeros_like(x)
    for i in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[i] = 1.0
        out[:, i] = (fn(x + dlt * e) - fn(x - dlt * e)) / (2 * dlt[:, 0])
    return out


def _hs(ex, x, C):
    psi = ex.psi(x)
    return -fd_laplacian(ex.psi, x) - psi / (8 * psi**2) - (0.25 - ex.eps) * psi / x[:, -1] ** 2


def _exp1(ex, x, C):
    phi = ex.phi(x)
    grad = np.sum(fd_gradient(ex.phi, x) * fd_gradient(ex.rho, x), axis=1)
    return -fd_laplacian(ex.rho, x) - 2 * grad / phi


def _star(ex, x, C):
    C = ex.hypothesis_C if C is None else C
    r = ex.rho(x)
    return ex.d - 1 + 2 * r - 2 * C * np.exp(-2 * r)


def _sigma(ex, x, C):
    C = 1.0 if C is None else C
    psi, sl = ex.psi(x), ex.sigma(x) ** ex.lam
    return -C * sl / psi - (-fd_laplacian(ex.psi, x) + psi * sl)


def _ball_psi(ex, x, C):
    C = (ex.d - 1) * ex.R ** (2 * ex.alpha) if C is None else C
    r = _norm(x)
    phi = ex.phi(x)
    xg = np.sum(x * fd_gradient(ex.phi, x), axis=1)
    return -C * phi**2 / r - ((1 - ex.d) / r + 2 * xg / (r * phi))


def _ball_rho(ex, x, C):
    return (ex.d - 1) / _norm(x) + 2 * ex.alpha / ex.rho(x)


def _ball_joint(ex, x, C):
    beta = ex.beta if C is None else C
    r = _norm(x)
    return 2 * beta / r + 2 * ex.alpha / (ex.R - r) - fd_laplacian(ex.rho, x)


CONDITIONS = {
    "HS": (HalfSpaceImproved, _hs),
    "EXP1": (ConvexWeighted, _exp1),
    "STAR": (StarShapedExp, _star),
    "SIGMA": (SigmaLambda, _sigma),
    "BALL-PSI": (BallImproved, _ball_psi),
    "BALL-RHO": (BallImproved, _ball_rho),
    "BALL-JOINT": (BallImproved, _ball_joint),
}


@dataclass(frozen=True)
class ResidualSummary:
    min: float
    argmin: np.ndarray
    values: np.ndarray
    skipped: int


def _singular_distance(example, x):
    dist = np.array(example.boundary_distance(x), dtype=float)
    for p in example.singular_points:
        if p is not None:
            dist = np.minimum(dist, _norm(x - p))
    if isinstance(example, (HalfSpaceImproved,)):
        dist = np.minimum(dist, np.sqrt(x[:, -2] ** 2 + x[:, -1] ** 2))
    return dist


def pointwise_condition_residual(example, condition_id, points, C=None):
    """Evaluate one closed-form condition at sample points.

    The residual is oriented so that ``>= 0`` means the inequality holds.
    Derivatives are central finite differences with step ``1e-5 (1 + |x|)``.
    ``C`` overrides the condition's constant (``beta`` for BALL-JOINT).
    Points whose stencil would reach a singular set are skipped; the count
    is returned in ``skipped`` and a warning is issued.
    """
    try:
        cls, fn = CONDITIONS[condition_id]
    except KeyError:
        raise ValueError(f"unknown condition {condition_id!r}; choose from {sorted(CONDITIONS)}") from None
    if not isinstance(example, cls):
        raise ValueError(f"condition {condition_id} applies to {cls.__name__} examples")
    x = _pts(points)
    if not np.all(example.contains(x)):
        raise ValueError("sample points must lie inside the domain")
    ok = _singular_distance(example, x) > 10 * fd_step(x)
    skipped = int((~ok).sum())
    if skipped:
        warnings.warn(f"{skipped} points too close to a singular set were skipped", RuntimeWarning)
    x = x[ok]
    if x.shape[0] == 0:
        return ResidualSummary(np.nan, np.full(_pts(points).shape[1], np.nan), np.empty(0), skipped)
    vals = fn(example, x, C)
    k = int(np.argmin(vals))
    return ResidualSummary(float(vals[k]), x[k].copy(), vals, skipped)
