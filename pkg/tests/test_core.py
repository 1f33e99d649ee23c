import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hardy_forms.core import (GraphForm, apply_form_operator, energy, energy_bilinear, form_from_dict,
                              form_to_dict, gamma, green, is_transient, random_form, restrict, dumps, loads)
from hardy_forms.errors import ConvergenceError, RecurrentFormError

from conftest import dense_jump, energy_oracle, form_and_vectors, forms, path, seeds


def test_energy_of_zero_function(rng):
    f = random_form(rng, 12)
    assert energy(f, np.zeros(12)) == 0.0


def test_energy_path_linear():
    assert energy(path(3), [0, 1, 2]) == pytest.approx(2.0, abs=0)


def test_energy_single_state_killing():
    f = GraphForm([1.0], [], [], [], [3.0])
    assert energy(f, [2.0]) == 12.0


def test_bilinear_examples():
    p = path(3)
    assert energy_bilinear(p, [0, 1, 2], [1, 1, 1]) == 0.0
    assert energy_bilinear(p, [1, 0, 0], [0, 0, 1]) == 0.0


def test_gamma_on_path():
    np.testing.assert_allclose(gamma(path(3), [0, 1, 2]), [0.5, 1.0, 0.5], rtol=0, atol=0)


def test_gamma_of_constant_vanishes():
    np.testing.assert_array_equal(gamma(path(5), np.full(5, 3.0)), 0.0)


def test_operator_on_path():
    np.testing.assert_array_equal(apply_form_operator(path(3), [0, 1, 2]), [-1, 0, 1])
    np.testing.assert_array_equal(apply_form_operator(path(3), np.zeros(3)), 0)


def test_restrict_examples(rng):
    f = random_form(rng, 8)
    same = restrict(f, np.ones(8, dtype=bool))
    np.testing.assert_array_equal(same.operator.toarray(), f.operator.toarray())
    mid = restrict(path(3), [1])
    assert mid.n == 1 and mid.kappa[0] == 2.0


def test_restrict_empty_raises():
    with pytest.raises(ValueError):
        restrict(path(3), np.zeros(3, dtype=bool))


def test_green_scalar():
    f = GraphForm([1.0], [], [], [], [2.0])
    np.testing.assert_allclose(green(f, [1.0]), [0.5])


def test_green_path_dirichlet():
    p = path(3, kappa=[1, 0, 1])
    A = np.array([[2.0, -1, 0], [-1, 2, -1], [0, -1, 2]])
    u = green(p, [0, 1, 0])
    np.testing.assert_allclose(u, np.linalg.solve(A, [0, 1, 0]), rtol=1e-12)
    assert np.all(u > 0)


def test_green_recurrent_raises():
    with pytest.raises(RecurrentFormError, match="recurrent form"):
        green(path(4), np.ones(4))


def test_green_sparse_branch(rng):
    f = random_form(rng, 800, edge_prob=0.005)
    x = rng.normal(size=800)
    u = green(f, f.operator @ x)
    assert np.linalg.norm(u - x) <= 1e-8 * np.linalg.norm(x)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_green_sparse_nonconvergence_reports_residual(rng):
    f = random_form(rng, 600, edge_prob=0.005)
    with pytest.raises(ConvergenceError) as info:
        green(f, rng.random(600), rtol=1e-300)
    assert info.value.residual is not None


def test_transience_detection():
    assert not is_transient(path(4))
    assert is_transient(path(4, kappa=[0, 0, 0, 1e-3]))
    two = GraphForm(np.ones(4), [0, 2], [1, 3], [1.0, 1.0], [1.0, 0, 0, 0])
    assert not is_transient(two)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        GraphForm([1.0, -1.0], [0], [1], [1.0])
    with pytest.raises(ValueError):
        GraphForm([1.0, 1.0], [0], [1], [-1.0])
    with pytest.raises(ValueError):
        GraphForm([1.0, 1.0], [0], [0], [1.0])
    with pytest.raises(ValueError):
        GraphForm([1.0, 1.0], [0], [1], [1.0], [-1.0, 0])
    with pytest.raises(ValueError):
        energy(path(3), np.ones(4))


def test_duplicate_pairs_merge():
    f = GraphForm(np.ones(3), [0, 1, 2], [1, 0, 1], [1.0, 2.0, 0.5])
    assert len(f.weights) == 2
    np.testing.assert_allclose(dense_jump(f)[0, 1], 3.0)


def test_from_edges_labels():
    f = GraphForm.from_edges(["a", "b", "c"], [1, 1, 1], [["a", "b", 1.0], ["c", "b", 2.0]], [0, 0, 1])
    assert energy(f, [0, 1, 0]) == pytest.approx(3.0)
    r = restrict(f, ["b", "c"])
    assert r.states == ("b", "c") and r.kappa[0] == pytest.approx(1.0)


@given(forms())
def test_json_roundtrip_exact(form):
    back = form_from_dict(json.loads(json.dumps(form_to_dict(form))))
    np.testing.assert_array_equal(back.m, form.m)
    np.testing.assert_array_equal(back.kappa, form.kappa)
    np.testing.assert_array_equal(back.operator.toarray(), form.operator.toarray())
    assert loads(dumps(form)).states == form.states


@given(form_and_vectors(1))
def test_energy_matches_double_sum(data):
    form, f = data
    assert energy(form, f) == pytest.approx(energy_oracle(form, f), rel=1e-12, abs=1e-14)
    assert energy(form, f) >= 0


@given(form_and_vectors(2))
def test_polarization(data):
    form, f, g = data
    pol = (energy(form, f + g) - energy(form, f - g)) / 4
    scale = energy(form, f) + energy(form, g) + 1e-300
    assert abs(energy_bilinear(form, f, g) - pol) <= 1e-12 * scale
    assert energy_bilinear(form, f, f) == pytest.approx(energy(form, f), rel=1e-13)


@given(form_and_vectors(2))
def test_gamma_sums_and_duality(data):
    form, f, g = data
    E = energy_bilinear(form, f, g)
    scale = energy(form, f) + energy(form, g) + 1e-300
    assert abs(gamma(form, f, g).sum() - E) <= 1e-12 * scale
    assert abs(np.dot(g, apply_form_operator(form, f)) - E) <= 1e-12 * scale


@given(form_and_vectors(2))
def test_pointwise_cauchy_schwarz_kappa_free(data):
    form, f, g = data
    free = GraphForm(form.m, form.rows, form.cols, form.weights)
    G = gamma(free, f, g)
    assert np.all(G**2 <= gamma(free, f) * gamma(free, g) * (1 + 1e-12) + 1e-300)


@given(form_and_vectors(1))
def test_normal_contraction(data):
    form, f = data
    g = np.clip(f, 0.0, 1.0)
    assert energy(form, g) <= energy(form, f) * (1 + 1e-12) + 1e-300


@given(form_and_vectors(1), seeds)
def test_restriction_energy_is_zero_extension(data, seed):
    form, f = data
    mask = np.random.default_rng(seed).random(form.n) < 0.6
    if not mask.any():
        mask[0] = True
    sub = restrict(form, mask)
    ext = np.zeros(form.n)
    ext[mask] = f[mask]
    assert energy(sub, f[mask]) == pytest.approx(energy(form, ext), rel=1e-12, abs=1e-14)


@given(form_and_vectors(1))
def test_green_inverts_operator(data):
    form, f = data
    u = green(form, apply_form_operator(form, f))
    assert np.linalg.norm(u - f) <= 1e-8 * np.linalg.norm(f) + 1e-14


@given(forms(), seeds)
def test_green_positivity(form, seed):
    g = np.random.default_rng(seed).random(form.n) * (np.random.default_rng(seed + 1).random(form.n) < 0.5)
    u = green(form, g)
    assert np.all(u >= -1e-12 * (np.abs(u).max() + 1e-300))
    if g.any():
        # random forms are connected: the potential is strictly positive
        assert np.all(u > 0)


def test_product_rule_defect_shrinks_on_grids():
    from hardy_forms.continuum import ConvexWeighted, build_grid, grid_gamma

    defects = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        grid = build_grid(ConvexWeighted(), h)
        x = grid.sample(lambda p: p[:, 0])
        f, k, g = np.sin(3 * x), np.cos(2 * x), x**2
        lhs = grid_gamma(grid, f * k, g)
        rhs = f[: grid.n] * grid_gamma(grid, k, g) + k[: grid.n] * grid_gamma(grid, f, g)
        defects.append(np.abs(lhs - rhs)[grid.interior_mask].sum())
    assert defects[0] > defects[1] > defects[2]
    assert defects[2] < 0.3 * defects[0]
