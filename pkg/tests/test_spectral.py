import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, strategies as st

from hardy_forms.core import GraphForm, energy, random_form
from hardy_forms.errors import RecurrentFormError
from hardy_forms.spectral import (SPDSolver, best_hardy_constant, largest_eig_potential_op, pencil_min,
                                  power_iteration, resolvent_markov_check)

from conftest import forms, path, seeds


def dense_c_star(form, mu):
    """Oracle: top eigenvalue of the dense symmetrized potential operator."""
    A = form.dense_operator()
    s = np.sqrt(mu)
    K = s[:, None] * np.linalg.inv(A) * s[None, :]
    return np.linalg.eigvalsh(0.5 * (K + K.T))[-1]


def test_single_state():
    f = GraphForm([1.0], [], [], [], [2.5])
    assert best_hardy_constant(f, [4.0]) == pytest.approx(4.0 / 2.5, rel=1e-14)


def test_zero_measure_convention(rng):
    f = random_form(rng, 10)
    assert best_hardy_constant(f, np.zeros(10)) == 0.0
    with pytest.raises(ValueError):
        largest_eig_potential_op(f, np.zeros(10))


def test_recurrent_raises():
    with pytest.raises(RecurrentFormError):
        best_hardy_constant(path(5), np.ones(5))


def test_scale_in_mu(rng):
    f = random_form(rng, 15)
    mu = rng.random(15)
    assert best_hardy_constant(f, 3.5 * mu) == pytest.approx(3.5 * best_hardy_constant(f, mu), rel=1e-12)


def test_matches_dense_eigensolve_20(rng):
    f = random_form(rng, 20)
    mu = rng.random(20)
    ref = scipy.linalg.eigh(np.diag(mu), f.dense_operator(), eigvals_only=True)[-1]
    assert best_hardy_constant(f, mu) == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("method", ["dense", "lanczos", "power"])
def test_methods_agree(method, rng):
    f = random_form(rng, 60, edge_prob=0.05)
    mu = rng.random(60) * (rng.random(60) < 0.5)
    res = pencil_min(f.operator, mu, method=method)
    assert res.c_star == pytest.approx(dense_c_star(f, mu), rel=1e-8)
    assert np.all(res.eigvec >= -1e-10)
    assert np.dot(mu, res.eigvec**2) == pytest.approx(1.0)
    # power iteration stops on eigenvalue increments, so the vector is only sqrt-accurate
    assert res.residual < (1e-4 if method == "power" else 1e-8)


def test_unknown_method(rng):
    f = random_form(rng, 5)
    with pytest.raises(ValueError):
        pencil_min(f.operator, np.ones(5), method="qr")


def test_power_iteration_diag():
    lam, v, _ = power_iteration(lambda x: np.array([3.0, 1.0]) * x, np.ones(2))
    assert lam == pytest.approx(3.0, rel=1e-9)


def test_sparse_solver_rejects_indefinite(rng):
    f = random_form(rng, 700, edge_prob=0.003)
    SPDSolver(f.operator)
    shift = 1.5 * pencil_min(f.operator, np.ones(700)).lambda_min
    with pytest.raises(np.linalg.LinAlgError):
        SPDSolver(f.operator - shift * sp.identity(700))


def test_discrete_path_hardy_constant_below_four():
    # Dirichlet path with mu = 1/dist^2: bounded by 4, increasing in n.
    vals = []
    for n in (256, 1024, 4096):
        kappa = np.zeros(n)
        kappa[[0, -1]] = 1.0
        i = np.arange(1, n + 1)
        d = np.minimum(i, n + 1 - i)
        vals.append(best_hardy_constant(path(n, kappa=kappa), 1.0 / d**2))
    assert vals[0] < vals[1] < vals[2] < 4.0
    print("path constants", vals)


@given(forms(), seeds)
def test_rayleigh_quotients_below_c_star(form, seed):
    rng = np.random.default_rng(seed)
    mu = rng.random(form.n)
    c = best_hardy_constant(form, mu)
    F = rng.normal(size=(200, form.n))
    ratios = [np.dot(mu, f * f) / energy(form, f) for f in F]
    assert max(ratios) <= c * (1 + 1e-9)


@given(forms(), seeds)
def test_eigvec_attains_constant(form, seed):
    mu = np.random.default_rng(seed).random(form.n)
    res = largest_eig_potential_op(form, mu)
    f = res.eigvec
    assert np.dot(mu, f * f) / energy(form, f) == pytest.approx(res.c_star, rel=1e-8)


@given(forms(), seeds)
def test_monotone_in_mu(form, seed):
    rng = np.random.default_rng(seed)
    mu = rng.random(form.n)
    bigger = mu + rng.random(form.n) * (rng.random(form.n) < 0.3)
    assert best_hardy_constant(form, bigger) >= best_hardy_constant(form, mu) * (1 - 1e-10)


@given(forms(), seeds, st.floats(0.1, 10.0))
def test_scale_covariance(form, seed, s):
    mu = np.random.default_rng(seed).random(form.n)
    scaled = GraphForm(form.m, form.rows, form.cols, s * form.weights, s * form.kappa)
    assert best_hardy_constant(scaled, mu) == pytest.approx(best_hardy_constant(form, mu) / s, rel=1e-9)


@given(forms(n_max=20), st.sampled_from([0.1, 1.0, 10.0]))
def test_resolvent_of_graph_form_is_markov(form, alpha):
    assert resolvent_markov_check(form.operator, form.m, alpha).passed


@pytest.mark.parametrize("b,expected", [(0.5, True), (0.0, True), (-0.05, False)])
def test_resolvent_scalar(b, expected):
    rep = resolvent_markov_check(np.array([[b]]), [1.0], 1.0)
    assert rep.passed is expected


def test_resolvent_planted_positive_entry():
    f = path(4, kappa=[1, 0, 0, 1])
    B = f.dense_operator()
    B[1, 2] = B[2, 1] = 0.5
    # large shifts make R close to (aD)^-1 - (aD)^-1 B (aD)^-1, exposing the sign
    rep = resolvent_markov_check(B, np.ones(4), 10.0)
    assert not rep.passed and set(rep.min_entry_at) == {1, 2}
    with pytest.raises(ValueError):
        resolvent_markov_check(B, np.ones(4), 0.0)


def test_resolvent_singular_raises():
    B = np.array([[1.0, -1.0], [-1.0, 1.0]])
    with pytest.raises(np.linalg.LinAlgError):
        resolvent_markov_check(B, [0.0, 0.0], 1.0)
