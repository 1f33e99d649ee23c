import numpy as np
import pytest
from hypothesis import given

from hardy_forms.certify import check_supersolution, neumann_weight
from hardy_forms.core import GraphForm, energy, random_form
from hardy_forms.spectral import best_hardy_constant
from hardy_forms.transform import ground_state_form, is_markovian_form

from conftest import forms, seeds


def test_identity_transform(rng):
    f = random_form(rng, 10)
    T = ground_state_form(f, np.zeros(10), np.ones(10))
    np.testing.assert_array_equal(T.B.toarray(), f.operator.toarray())
    np.testing.assert_array_equal(T.base_measure, f.m)
    assert is_markovian_form(T).passed


def test_scalar():
    T = ground_state_form(GraphForm([1.0], [], [], [], [2.0]), [1.0], [3.0])
    np.testing.assert_allclose(T.B.toarray(), [[9.0]])
    np.testing.assert_allclose(T.base_measure, [9.0])


def test_nonpositive_w():
    with pytest.raises(ValueError):
        ground_state_form(GraphForm([1.0], [], [], [], [2.0]), [1.0], [0.0])


def test_quadratic_identity(rng):
    f = random_form(rng, 10)
    mu, w = rng.random(10), rng.uniform(0.5, 2, 10)
    T = ground_state_form(f, mu, w)
    for _ in range(100):
        g = rng.normal(size=10)
        ref = energy(f, w * g) - np.sum(mu * (w * g) ** 2)
        assert T.quadratic(g) == pytest.approx(ref, rel=1e-12, abs=1e-12 * energy(f, w * g))


def test_planted_rowsum_violation(rng):
    f = random_form(rng, 12)
    mu = np.zeros(12)
    mu[7] = 50.0 * f.operator.diagonal().max()
    rep = is_markovian_form(ground_state_form(f, mu, np.ones(12)))
    assert not rep.passed and rep.worst_rowsum_at == 7


@given(forms(n_max=20), seeds)
def test_offdiagonal_sign(form, seed):
    rng = np.random.default_rng(seed)
    T = ground_state_form(form, rng.random(form.n) * 10, rng.uniform(0.1, 3, form.n))
    off = T.B.toarray() - np.diag(T.B.diagonal())
    assert np.all(off <= 0)


@given(forms(n_max=20), seeds)
def test_markov_iff_supersolution(form, seed):
    rng = np.random.default_rng(seed)
    mu = rng.random(form.n)
    c = best_hardy_constant(form, mu)
    if rng.random() < 0.5:
        w, _ = neumann_weight(form, mu, 0.9 / c)
        mu = 0.9 / c * mu
    else:
        w = rng.uniform(0.2, 2.0, form.n)
    rep = is_markovian_form(ground_state_form(form, mu, w))
    assert rep.passed == check_supersolution(form, w, mu, 1.0).valid
    if rep.matrix_passed:
        assert all(r.passed for r in rep.resolvent)


@given(forms(n_max=20), seeds)
def test_psd_iff_constant_at_most_one(form, seed):
    rng = np.random.default_rng(seed)
    mu = rng.random(form.n)
    mu *= rng.uniform(0.5, 1.5) / best_hardy_constant(form, mu)
    T = ground_state_form(form, mu, rng.uniform(0.5, 2.0, form.n))
    lam = np.linalg.eigvalsh(T.B.toarray())[0]
    c = best_hardy_constant(form, mu)
    scale = np.abs(T.B.toarray()).max()
    if c <= 1 - 1e-9:
        assert lam >= -1e-10 * scale
    elif c >= 1 + 1e-9:
        assert lam < 0
