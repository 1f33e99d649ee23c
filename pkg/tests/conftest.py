import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from hardy_forms.core import GraphForm, random_form

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

seeds = st.integers(0, 2**32 - 1)


@st.composite
def forms(draw, n_min=1, n_max=30):
    n = draw(st.integers(n_min, n_max))
    p = draw(st.sampled_from([0.0, 0.1, 0.3, 0.7]))
    return random_form(draw(seeds), n, edge_prob=p)


@st.composite
def form_and_vectors(draw, k=1, n_min=1, n_max=30):
    form = draw(forms(n_min, n_max))
    rng = np.random.default_rng(draw(seeds))
    return (form, *[rng.normal(size=form.n) for _ in range(k)])


def path(n, j=1.0, kappa=None, m=None):
    kappa = np.zeros(n) if kappa is None else np.asarray(kappa, dtype=float)
    m = np.ones(n) if m is None else m
    r = np.arange(n - 1)
    return GraphForm(m, r, r + 1, np.full(n - 1, j), kappa)


def dense_jump(form):
    J = np.zeros((form.n, form.n))
    for x, y, w in zip(form.rows, form.cols, form.weights):
        J[x, y] += w
        J[y, x] += w
    return J


def energy_oracle(form, f):
    """Double sum over ordered pairs, halved."""
    J = dense_jump(form)
    diff = f[:, None] - f[None, :]
    return 0.5 * np.sum(J * diff**2) + np.sum(form.kappa * f**2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
