"""Batch runner: JSON experiment configs in, JSON reports and CSV tables out.

Exit codes: 0 all checks pass, 1 a check failed (the report is still
written), 2 invalid config, 3 numerical failure.
"""

import argparse
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from importlib import resources

import numpy as np
from scipy.stats import qmc

from . import capacity as cap_mod
from . import improved
from .certify import check_supersolution, neumann_weight, recheck, riesz_certificate, weight_from_subcritical
from .continuum import (Box, build_grid, example_from_dict, pointwise_condition_residual, CONDITIONS)
from .core import form_from_dict, random_form
from .errors import ConvergenceError, MarginError, RecurrentFormError
from .spectral import best_hardy_constant, largest_eig_potential_op
from .transform import ground_state_form, is_markovian_form

__all__ = ["main", "run_experiment", "run_config", "to_json", "ConfigError"]

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
GRAPH_KINDS = ("graph-certify", "neumann", "riesz", "transform", "best-constant", "capacity")
KINDS = GRAPH_KINDS + ("example",)
COMMAND_KIND = {
    "certify": "graph-certify",
    "riesz": "riesz",
    "best-constant": "best-constant",
    "neumann-weight": "neumann",
    "transform": "transform",
    "capacity": "capacity",
    "example": "example",
}
VARIANT_NAMES = ("half-space", "convex", "star", "sigma-lambda", "ball")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# deterministic output
# ---------------------------------------------------------------------------

def _scalar(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return "%.17g" % v
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def to_json(obj, indent=0):
    """JSON text with floats fixed to 17 significant digits."""
    pad = "  " * (indent + 1)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_scalar(v) for v in obj) + "]"
        items = [pad + to_json(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + "  " * indent + "]"
    return _scalar(obj)


def _atomic_write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# config helpers
# ---------------------------------------------------------------------------

def _require(cfg, *keys):
    for k in keys:
        if k not in cfg:
            raise ConfigError(f"config lacks required field {k!r}")


def _load_form(spec, seed):
    if spec == "sample20":
        text = resources.files("hardy_forms").joinpath("data/sample20.json").read_text()
        return form_from_dict(json.loads(text))
    if isinstance(spec, dict) and "random" in spec:
        r = spec["random"]
        return random_form(r.get("seed", seed), int(r.get("n", 20)))
    if isinstance(spec, dict):
        return form_from_dict(spec)
    raise ConfigError("form must be 'sample20', {'random': {...}} or a form description")


def _vector(spec, n, rng, name):
    if spec == "random":
        return rng.random(n)
    if spec == "ones":
        return np.ones(n)
    v = np.asarray(spec, dtype=float)
    if v.shape != (n,):
        raise ConfigError(f"{name} has length {v.size}, expected {n}")
    return v


def _h_list(cfg):
    hs = cfg.get("h")
    if hs is None:
        raise ConfigError("config lacks required field 'h'")
    hs = [float(h) for h in (hs if isinstance(hs, list) else [hs])]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ConfigError("h-list must be strictly decreasing")
    if any(h <= 0 for h in hs):
        raise ConfigError("mesh widths must be positive")
    return hs


def validate(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if "experiments" in cfg:
        if not isinstance(cfg["experiments"], list) or not cfg["experiments"]:
            raise ConfigError("'experiments' must be a nonempty list")
        for sub in cfg["experiments"]:
            validate(sub)
        return
    _require(cfg, "kind")
    kind = cfg["kind"]
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; choose from {list(KINDS)}")
    if kind in GRAPH_KINDS:
        _require(cfg, "form")
        if kind in ("graph-certify", "neumann", "best-constant", "transform"):
            _require(cfg, "mu")
        if kind == "capacity":
            _require(cfg, "K")
    else:
        _require(cfg, "example", "theorem")
        theorem = cfg["theorem"]
        if theorem not in THEOREMS:
            raise ConfigError(f"unknown theorem {theorem!r}; choose from {sorted(THEOREMS)}")
        if theorem != "residual":
            _h_list(cfg)
        if theorem in ("strong2", "strong3") and "C" in cfg and not float(cfg["C"]) > 0.5:
            raise ConfigError(f"β nonpositive: C = {cfg['C']} must exceed 1/2")


# ---------------------------------------------------------------------------
# graph experiments
# ---------------------------------------------------------------------------

def _cert_entry(form, cert, rel):
    out = cert.to_dict()
    out["recheck"] = bool(recheck(form, cert, rel))
    return out


def _run_graph(cfg, seed, tol):
    kind = cfg["kind"]
    rng = np.random.default_rng(seed)
    form = _load_form(cfg["form"], seed)
    n = form.n
    rel = 1e-9 if tol is None else tol
    report = {"kind": kind, "n": n}
    if kind == "riesz":
        g = _vector(cfg.get("g", form.m.tolist()), n, rng, "g")
        cert = riesz_certificate(form, g)
        report["certificate"] = _cert_entry(form, cert, rel)
        return report, cert.valid
    if kind == "capacity":
        res = cap_mod.capacity(form, cfg["K"])
        report.update({"cap": res.cap, "equilibrium": res.equilibrium})
        return report, True

    mu = _vector(cfg["mu"], n, rng, "mu")
    if kind == "best-constant":
        res = largest_eig_potential_op(form, mu)
        report.update({"c_star": res.c_star, "lambda_min": res.lambda_min, "method": res.method,
                       "eigvec": res.eigvec, "eig_residual": res.residual})
        return report, True

    c_star = best_hardy_constant(form, mu)
    factor = float(cfg.get("Lambda_factor", 0.9))
    Lam = float(cfg["Lambda"]) if "Lambda" in cfg else factor / c_star
    report["c_star"] = c_star
    if kind == "neumann":
        ntol = 1e-12 if tol is None else tol
        w, cert = neumann_weight(form, mu, Lam, tol=ntol)
        report.update({"Lambda": Lam, "iterations": cert.info["iterations"],
                       "certificate": _cert_entry(form, cert, rel)})
        return report, cert.valid

    if kind == "graph-certify":
        if "w" in cfg:
            _require(cfg, "C")
            cert = check_supersolution(form, _vector(cfg["w"], n, rng, "w"), mu, float(cfg["C"]))
            report["certificates"] = {"given": _cert_entry(form, cert, rel)}
            return report, cert.valid and report["certificates"]["given"]["recheck"]
        _, neu = neumann_weight(form, mu, Lam)
        riesz = riesz_certificate(form, mu)
        sub_mu = Lam * mu
        w = weight_from_subcritical(form, sub_mu, np.ones(n))
        subc = check_supersolution(form, w, sub_mu, 1.0)
        certs = {"neumann": _cert_entry(form, neu, rel), "riesz": _cert_entry(form, riesz, rel),
                 "subcritical": _cert_entry(form, subc, rel)}
        report["certificates"] = certs
        return report, all(c["valid"] and c["recheck"] for c in certs.values())

    # transform
    if "w" in cfg:
        w = _vector(cfg["w"], n, rng, "w")
        scaled = mu
    else:
        w, _ = neumann_weight(form, mu, Lam)
        scaled = Lam * mu
    T = ground_state_form(form, scaled, w)
    mark = is_markovian_form(T)
    valid = check_supersolution(form, w, scaled, 1.0).valid
    report.update({
        "markovian": mark.passed,
        "matrix_criterion": mark.matrix_passed,
        "worst_offdiag": mark.worst_offdiag,
        "worst_rowsum": mark.worst_rowsum,
        "resolvent": [{"alpha": r.alpha, "passed": r.passed, "worst": r.worst} for r in mark.resolvent],
        "supersolution_valid": valid,
        "agree": mark.passed == valid,
    })
    return report, mark.passed == valid and mark.passed


# ---------------------------------------------------------------------------
# grid experiments
# ---------------------------------------------------------------------------

def _grid(example, h, cfg):
    box = Box.from_dict(cfg["box"]) if "box" in cfg else None
    return build_grid(example, h, box)


def _fields(grid, cfg):
    fields = cfg.get("fields", {})
    rho = grid.sample(fields.get("rho", "rho"))
    psi = grid.sample(fields.get("psi", "psi")) if hasattr(grid.example, "psi") else None
    return rho, psi


def _monotone(vals):
    vals = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(vals)):
        return False
    d = np.diff(vals)
    return bool(np.all(d <= 0) or np.all(d >= 0))


def _beta_for(example, grid, psi, cfg):
    beta = cfg.get("beta", "claimed")
    if beta == "claimed":
        return float(example.beta)
    if beta == "admissible":
        rep = improved.verify_strong3(grid, psi, 1.0 + 1e-9)
        return max(0.0, (rep.extra["admissible_C"] - 0.5) * (1 - 1e-6))
    return float(beta)


def _sweep(example, cfg, fn):
    reports = []
    for h in _h_list(cfg):
        grid = _grid(example, h, cfg)
        reports.append(fn(grid))
    lam = [r.lambda_min for r in reports]
    summary = {"reports": [r.to_dict() for r in reports], "monotone": _monotone(lam)}
    return summary, reports, all(r.passed for r in reports)


def _theorem_pencil(example, cfg, tol):
    from .spectral import pencil_min

    bound = float(cfg.get("bound", 1.0))

    def run(grid):
        mu = grid.sample(example.mu_density, collar=False) * grid.h ** grid.d
        res = pencil_min(grid.form.operator, mu)
        return improved.VerificationReport("pencil", (), float(res.lambda_min), bound, grid.h,
                                           improved.SLACK, {"c_star": res.c_star, "n": grid.n})
    return _sweep(example, cfg, run)


def _theorem_strong(example, cfg, tol, name):
    C = float(cfg.get("C", getattr(example, "hypothesis_C", 1.0)))

    def run(grid):
        rho, psi = _fields(grid, cfg)
        if name == "strong1":
            return improved.verify_strong1(grid, rho)
        if name == "strong2":
            return improved.verify_strong2(grid, psi, C)
        return improved.verify_strong3(grid, psi, C)
    return _sweep(example, cfg, run)


def _theorem_joint(example, cfg, tol, name):
    fn = improved.verify_improved if name == "improved" else improved.verify_ihi2

    def run(grid):
        rho, psi = _fields(grid, cfg)
        beta = _beta_for(example, grid, psi, cfg)
        try:
            return fn(grid, rho, psi, beta)
        except MarginError as exc:
            return improved.VerificationReport(
                name, (improved.ConditionResult("margin", False, -np.inf, -1, 0.0),),
                -np.inf, 0.25, grid.h, improved.SLACK, {"beta": beta, "error": str(exc)})
    return _sweep(example, cfg, run)


def _theorem_capacity(example, cfg, tol):
    _require(cfg, "sets")
    hs = _h_list(cfg)
    grid = _grid(example, hs[-1], cfg)
    rho, psi = _fields(grid, cfg)
    beta = _beta_for(example, grid, psi, cfg) if "beta" in cfg else 0.0
    out = []
    for s in cfg["sets"]:
        centre = np.asarray(s.get("center", np.zeros(grid.d)), dtype=float)
        K = np.linalg.norm(grid.coords - centre, axis=1) <= float(s["radius"])
        if not K.any():
            raise ConfigError(f"set {s} contains no grid states")
        rep = cap_mod.capacity_bound_check(grid, K, rho, psi, beta)
        out.append(dict(rep.to_dict(), radius=float(s["radius"])))
    return {"h": grid.h, "beta": beta, "sets": out}, None, all(r["passed"] for r in out)


def _theorem_residual(example, cfg, tol):
    _require(cfg, "condition", "points")
    if cfg["condition"] not in CONDITIONS:
        raise ConfigError(f"unknown condition {cfg['condition']!r}")
    p = cfg["points"]
    d = example.d
    lo = np.asarray(p.get("lo", [0.0] * d), dtype=float)
    hi = np.asarray(p.get("hi", [1.0] * d), dtype=float)
    pts = lo + (hi - lo) * qmc.Halton(d, seed=int(p.get("seed", 0))).random(int(p.get("n", 1000)))
    C = cfg.get("C")
    res = pointwise_condition_residual(example, cfg["condition"], pts, None if C is None else float(C))
    thr = -(1e-12 if tol is None else tol)
    return ({"condition": cfg["condition"], "min": res.min, "argmin": res.argmin,
             "skipped": res.skipped, "threshold": thr}, None, bool(res.min >= thr))


def _theorem_scan(example, cfg, tol):
    _require(cfg, "lam")
    C = float(cfg.get("C", 1.0))
    base = example.to_dict()
    rows, admissible = [], []
    h = _h_list(cfg)[-1]
    for lam in cfg["lam"]:
        ex = example_from_dict(dict(base, lam=float(lam)))
        grid = _grid(ex, h, cfg)
        rep = improved.verify_strong2(grid, grid.sample("psi"), C)
        rows.append(dict(rep.to_dict(), lam=float(lam)))
        if rep.hypotheses_passed:
            admissible.append(float(lam))
    # a report, not an assertion: the admissible range is the result
    return {"h": h, "scan": rows, "admissible_lam": admissible}, None, True


THEOREMS = {
    "pencil": _theorem_pencil,
    "strong1": lambda ex, c, t: _theorem_strong(ex, c, t, "strong1"),
    "strong2": lambda ex, c, t: _theorem_strong(ex, c, t, "strong2"),
    "strong3": lambda ex, c, t: _theorem_strong(ex, c, t, "strong3"),
    "improved": lambda ex, c, t: _theorem_joint(ex, c, t, "improved"),
    "ihi2": lambda ex, c, t: _theorem_joint(ex, c, t, "ihi2"),
    "capacity": _theorem_capacity,
    "residual": _theorem_residual,
    "scan": _theorem_scan,
}


def _run_example(cfg, seed, tol):
    try:
        example = example_from_dict(cfg["example"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    summary, reports, passed = THEOREMS[cfg["theorem"]](example, cfg, tol)
    out = {"kind": "example", "example": example.to_dict(), "theorem": cfg["theorem"]}
    out.update(summary)
    tables = {}
    if reports:
        tables[cfg["theorem"]] = improved.reports_to_csv(reports)
    return out, passed, tables


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def run_experiment(cfg, out_dir, seed=0, tol=None):
    """Run one experiment, write ``report.json`` (and tables), return the exit code."""
    seed = int(cfg.get("seed", seed))
    tables = {}
    try:
        validate(cfg)
        if cfg["kind"] == "example":
            report, passed, tables = _run_example(cfg, seed, tol)
        else:
            report, passed = _run_graph(cfg, seed, tol)
        code = EXIT_OK if passed else EXIT_CHECK
    except (ConvergenceError, np.linalg.LinAlgError, ArithmeticError) as exc:
        report, code = {"error": str(exc)}, EXIT_NUMERIC
    except (ConfigError, RecurrentFormError, KeyError, TypeError, ValueError) as exc:
        report, code = {"error": str(exc).strip("'\"")}, EXIT_CONFIG
    report = {"config": cfg, "seed": seed, "exit_code": code, "passed": code == EXIT_OK, **report}
    _atomic_write(os.path.join(out_dir, "report.json"), to_json(report) + "\n")
    for name, text in tables.items():
        _atomic_write(os.path.join(out_dir, "tables", f"{name}.csv"), text)
    return code, report


def _threads():
    try:
        return max(1, int(os.environ.get("HARDY_FORMS_THREADS", "")))
    except ValueError:
        return os.cpu_count() or 1


def run_config(cfg, out_dir, seed=0, tol=None):
    """Run a single experiment or an ``experiments`` list; return the worst exit code."""
    if not isinstance(cfg, dict) or "experiments" not in cfg:
        return run_experiment(cfg, out_dir, seed, tol)
    try:
        validate(cfg)
    except ConfigError as exc:
        _atomic_write(os.path.join(out_dir, "report.json"),
                      to_json({"config": cfg, "exit_code": EXIT_CONFIG, "error": str(exc)}) + "\n")
        return EXIT_CONFIG, {"error": str(exc)}
    subs = cfg["experiments"]
    names = [str(s.get("name", f"exp{i:03d}")) for i, s in enumerate(subs)]
    if len(set(names)) != len(names):
        raise ConfigError("experiment names must be unique")

    def job(i):
        return run_experiment(subs[i], os.path.join(out_dir, names[i]), seed, tol)

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(job, range(len(subs))))
    codes = [c for c, _ in results]
    worst = max(codes, key=lambda c: (c != 0, c))
    summary = {"experiments": [{"name": n, "exit_code": c} for n, c in zip(names, codes)],
               "exit_code": worst, "passed": worst == EXIT_OK}
    _atomic_write(os.path.join(out_dir, "report.json"), to_json(summary) + "\n")
    return worst, summary


EXAMPLE_DEFAULTS = {
    "half-space": {"example": {"variant": "half-space", "d": 3, "eps": 0.0},
                   "theorem": "pencil", "h": [0.125, 0.0625]},
    "convex": {"example": {"variant": "convex"}, "theorem": "strong1",
               "h": [1 / 256, 1 / 1024, 1 / 4096]},
    "star": {"example": {"variant": "star", "d": 3}, "theorem": "strong2", "h": [0.125, 0.0625]},
    "sigma-lambda": {"example": {"variant": "sigma-lambda", "d": 3}, "theorem": "scan",
                     "lam": [-2.0, -4.0, -6.0, -8.0], "h": [0.25]},
    "ball": {"example": {"variant": "ball", "d": 3, "R": 3.0, "alpha": 0.3},
             "theorem": "improved", "h": [0.25, 0.125]},
}


def _parser():
    p = argparse.ArgumentParser(prog="hardy-forms", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON experiment config")
        sp.add_argument("--out", default="hardy-forms-out", help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float, default=None)

    for name in ("certify", "riesz", "best-constant", "neumann-weight", "transform", "capacity"):
        common(sub.add_parser(name, help=f"{COMMAND_KIND[name]} experiment"))
    ex = sub.add_parser("example", help="grid experiment for a built-in example")
    ex.add_argument("variant", choices=VARIANT_NAMES)
    ex.add_argument("--theorem", choices=sorted(THEOREMS))
    ex.add_argument("--h", type=float, nargs="+", help="strictly decreasing mesh widths")
    common(ex, config_required=False)
    common(sub.add_parser("run", help="run a config of any kind (or an experiments list)"))
    return p


def _read_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "example":
            cfg = dict(EXAMPLE_DEFAULTS[args.variant], kind="example")
            if args.config:
                cfg.update(_read_config(args.config))
            if args.theorem:
                cfg["theorem"] = args.theorem
            if args.h:
                cfg["h"] = args.h
            if cfg["example"].get("variant") != args.variant:
                raise ConfigError(f"config example variant differs from {args.variant!r}")
            cfg["kind"] = "example"
        else:
            cfg = _read_config(args.config)
            if args.command != "run":
                kind = COMMAND_KIND[args.command]
                if isinstance(cfg, dict) and cfg.setdefault("kind", kind) != kind:
                    raise ConfigError(f"config kind {cfg['kind']!r} does not match '{args.command}'")
        code, report = run_config(cfg, args.out, args.seed, args.tol)
    except ConfigError as exc:
        print(f"hardy-forms: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if "error" in report:
        print(f"hardy-forms: {report['error']}", file=sys.stderr)
    status = {0: "ok", 1: "check failed", 2: "invalid config", 3: "numerical failure"}[code]
    print(f"{status}: {os.path.join(args.out, 'report.json')}")
    return code


if __name__ == "__main__":
    sys.exit(main())
