import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from hardy_forms.certify import (check_supersolution, neumann_weight, recheck, riesz_certificate,
                                 weight_from_subcritical)
from hardy_forms.core import GraphForm, apply_form_operator, green, random_form
from hardy_forms.errors import DivergenceError, NotSubcriticalError
from hardy_forms.spectral import best_hardy_constant, largest_eig_potential_op

from conftest import forms, path, seeds


def scalar(kappa, m=1.0):
    return GraphForm([m], [], [], [], [kappa])


def test_constants_harmonic_without_killing():
    cert = check_supersolution(path(4), np.ones(4), np.zeros(4), 2.0)
    assert cert.valid and np.all(cert.residual == 0)


def test_potential_of_positive_measure(rng):
    f = random_form(rng, 12)
    w = np.linalg.solve(f.dense_operator(), np.ones(12))
    C = w.max()
    assert check_supersolution(f, w, np.ones(12) / C, C).valid


def test_eigenvector_below_best_constant_is_invalid(rng):
    f = random_form(rng, 15)
    mu = rng.random(15)
    vals, vecs = scipy.linalg.eigh(f.dense_operator(), np.diag(mu))
    w = np.abs(vecs[:, 0])
    assert not check_supersolution(f, w, mu, 0.9 / vals[0]).valid
    assert check_supersolution(f, w, mu, 1.0 / vals[0] * (1 + 1e-6)).valid


def test_input_errors():
    with pytest.raises(ValueError):
        check_supersolution(path(2), [1.0, 0.0], [0, 0], 1.0)
    with pytest.raises(ValueError):
        check_supersolution(path(2), [1.0, 1.0], [0, 0], 0.0)


def test_neumann_scalar():
    w, cert = neumann_weight(scalar(1.0), [1.0], 0.5, [1.0])
    np.testing.assert_allclose(cert.info["psi"], [2.0], rtol=1e-12)
    np.testing.assert_allclose(w, [2.0], rtol=1e-12)
    np.testing.assert_allclose(cert.residual, [1.0], rtol=1e-12)


def test_neumann_matches_dense_oracle(rng):
    f = random_form(rng, 15)
    mu = rng.random(15)
    Lam = 0.9 / best_hardy_constant(f, mu)
    w, cert = neumann_weight(f, mu, Lam)
    G = np.linalg.inv(f.dense_operator())
    psi = np.linalg.solve(np.eye(15) - Lam * G @ np.diag(mu), np.ones(15))
    np.testing.assert_allclose(w, G @ (mu * psi), rtol=1e-9)
    assert cert.valid and cert.C == pytest.approx(1 / Lam)


def test_neumann_small_lambda_limit(rng):
    f = random_form(rng, 10)
    mu = rng.random(10)
    w, cert = neumann_weight(f, mu, 1e-9)
    np.testing.assert_allclose(w, green(f, mu), rtol=1e-7)
    np.testing.assert_allclose(cert.residual, mu, rtol=1e-6)


def test_neumann_diverges_above_threshold(rng):
    f = random_form(rng, 10)
    mu = rng.random(10)
    with pytest.raises(DivergenceError):
        neumann_weight(f, mu, 1.05 / best_hardy_constant(f, mu))


def test_neumann_input_errors(rng):
    f = random_form(rng, 5)
    with pytest.raises(ValueError):
        neumann_weight(f, np.zeros(5), 0.1)
    with pytest.raises(ValueError):
        neumann_weight(f, np.ones(5), 0.1, phi=np.full(5, 2.0))


def test_neumann_sparse_branch(rng):
    f = random_form(rng, 600, edge_prob=0.004)
    mu = rng.random(600) * 1e-3
    Lam = 0.5 / largest_eig_potential_op(f, mu).c_star
    w, cert = neumann_weight(f, mu, Lam, tol=1e-11)
    assert cert.valid


def test_riesz_scalar_equality_case():
    cert = riesz_certificate(scalar(2.0), [4.0])
    np.testing.assert_allclose(cert.w, [2.0])
    np.testing.assert_allclose(cert.mu, [2.0])
    assert cert.residual_min == pytest.approx(0.0, abs=1e-15)


def test_riesz_constant_one_is_sharp(rng):
    f = random_form(rng, 20)
    cert = riesz_certificate(f, rng.random(20))
    assert cert.valid
    assert best_hardy_constant(f, cert.mu) >= 1 - 1e-9
    assert recheck(f, cert)


def test_subcritical_scalar():
    np.testing.assert_allclose(weight_from_subcritical(scalar(2.0), [1.0], [3.0]), [3.0])


def test_subcritical_zero_mu(rng):
    f = random_form(rng, 10)
    g = rng.random(10)
    np.testing.assert_allclose(weight_from_subcritical(f, np.zeros(10), g), green(f, f.m * g), rtol=1e-10)


def test_subcritical_instance_valid(rng):
    f = random_form(rng, 18)
    mu = rng.random(18)
    mu *= 0.8 / best_hardy_constant(f, mu)
    w = weight_from_subcritical(f, mu, np.ones(18))
    assert np.all(w > 0)
    cert = check_supersolution(f, w, mu, 1.0)
    assert cert.valid
    np.testing.assert_allclose(cert.residual, f.m, rtol=1e-8)


def test_not_subcritical(rng):
    f = random_form(rng, 8)
    mu = rng.random(8)
    mu *= 1.2 / best_hardy_constant(f, mu)
    with pytest.raises(NotSubcriticalError, match="not subcritical"):
        weight_from_subcritical(f, mu, np.ones(8))


def test_converse_identity_exact(rng):
    f = random_form(rng, 25)
    mu = rng.random(25) * (rng.random(25) < 0.6)
    mu[0] = 1.0
    Lam = 0.99 / best_hardy_constant(f, mu)
    phi = rng.uniform(0.2, 1.0, 25)
    w, cert = neumann_weight(f, mu, Lam, phi)
    lhs = apply_form_operator(f, w) - Lam * mu * w
    assert np.abs(lhs - mu * phi).max() <= 1e-9 * np.abs(mu * phi).max()


@given(forms(), seeds, st.floats(0.1, 0.95))
def test_soundness(form, seed, frac):
    mu = np.random.default_rng(seed).random(form.n)
    _, cert = neumann_weight(form, mu, frac / best_hardy_constant(form, mu))
    assert cert.valid
    assert best_hardy_constant(form, mu) <= cert.C * (1 + 1e-9)


@given(forms(), seeds, st.floats(0.01, 100.0))
def test_homogeneity(form, seed, t):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 1.0, form.n)
    mu = rng.random(form.n)
    C = rng.uniform(0.1, 10.0)
    a = check_supersolution(form, w, mu, C)
    b = check_supersolution(form, t * w, mu, C)
    # residual and tolerance scale together
    assert b.abs_tol == pytest.approx(t * a.abs_tol, rel=1e-12)
    np.testing.assert_allclose(b.residual, t * a.residual, rtol=1e-9, atol=1e-3 * b.abs_tol)
    assert a.valid == b.valid or abs(a.residual_min + a.abs_tol) <= 1e-6 * a.abs_tol
