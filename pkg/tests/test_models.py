import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sampler import CandidateGrid, ConfigError, NoiseSpec, SignalModel, grad_mean, mean, per_sample_fim
from sampler.models import fim_from_gradients

D1 = SignalModel("damped_1d", 1)
D2 = SignalModel("damped_2d", 1)


def test_mean_all_modulation_off():
    assert mean(D1, [1, 0, 0, 0], 5) == 1 + 0j


def test_mean_quarter_cycle():
    assert mean(D1, [2, 0.25, 0, 0], 1) == pytest.approx(2j, abs=1e-15)


def test_mean_2d_origin():
    theta = [1, 0.2, 0.5, 1 / 20, 1 / 10, 0.5]
    assert mean(D2, theta, [0, 0]) == pytest.approx(cmath.exp(0.5j), abs=1e-15)


def test_mean_dimension_mismatch():
    with pytest.raises(ConfigError):
        mean(D2, [1, 0.2, 0.5, 0.05, 0.1, 0.5], 3.0)
    with pytest.raises(ConfigError):
        mean(D1, [1, 0.2, 0.1, 0.5], [1.0, 2.0])


def test_chirp_mean_matches_formula():
    m = SignalModel("chirp_1d", 2)
    theta = [5, 0.1, 0.01, math.pi / 2, 5, 0.5, -0.003, math.pi / 3]
    t = 7.0
    want = sum(a * cmath.exp(2j * math.pi * (f0 + f1 * t) * t + 1j * ph)
               for a, f0, f1, ph in (theta[:4], theta[4:]))
    assert mean(m, theta, t) == pytest.approx(want, rel=1e-14)


def test_layouts_and_names():
    assert SignalModel("damped_1d", 3).n_params == 12
    assert SignalModel("chirp_1d", 2).n_params == 8
    assert SignalModel("damped_2d", 2).n_params == 12
    assert D2.param_names == ["amp1", "freq1_t1", "freq1_t2", "damp1_t1", "damp1_t2", "phase1"]
    assert SignalModel("damped_1d", 2).nonlinear_indices == [1, 2, 5, 6]
    assert D2.indices("damping", 2) == [4]


def test_grad_at_origin():
    g = grad_mean(D1, [2, 0.3, 0.1, 0], 0)
    np.testing.assert_allclose(g, [1, 0, 0, 2j], atol=1e-15)


def test_zero_amplitude_rejected():
    with pytest.raises(ConfigError):
        grad_mean(D1, [0, 0.3, 0.1, 0], 1)
    with pytest.raises(ConfigError):
        D1.check_theta([1, 0.3, -0.1, 0])


def test_fim_at_origin():
    fim = per_sample_fim(D1, [2, 0.3, 0.1, 0], 0, NoiseSpec(1.0))
    want = np.zeros((4, 4))
    want[0, 0] = 2
    want[3, 3] = 8
    np.testing.assert_allclose(fim, want, atol=1e-14)


def test_fim_noise_scaling():
    th, t = [1.3, 0.21, 0.07, 0.4], 6.0
    np.testing.assert_allclose(per_sample_fim(D1, th, t, NoiseSpec(2.0)),
                               0.5 * per_sample_fim(D1, th, t, NoiseSpec(1.0)), rtol=1e-15)


def test_fim_needs_positive_variance():
    with pytest.raises(ConfigError):
        fim_from_gradients(np.ones(4, dtype=complex), 0.0)
    with pytest.raises(ConfigError):
        NoiseSpec(-1.0)


def _random_case(data):
    kind = data.draw(st.sampled_from(["damped_1d", "damped_2d", "chirp_1d"]))
    K = data.draw(st.integers(1, 2))
    m = SignalModel(kind, K)
    vals = []
    for role in m.roles:
        if role == "amplitude":
            vals.append(data.draw(st.floats(0.2, 3.0)))
        elif role == "frequency":
            vals.append(data.draw(st.floats(-0.05, 0.5)))
        elif role == "damping":
            vals.append(data.draw(st.floats(0.0, 0.2)))
        else:
            vals.append(data.draw(st.floats(-math.pi, math.pi)))
    t = [data.draw(st.floats(0.0, 20.0)) for _ in range(m.dim)]
    return m, np.array(vals), np.array(t if m.dim == 2 else t[0])


@settings(max_examples=100)
@given(st.data())
def test_grad_matches_central_differences(data):
    m, theta, t = _random_case(data)
    g = grad_mean(m, theta, t)
    h = 1e-6
    fd = np.empty_like(g)
    for p in range(m.n_params):
        up, dn = theta.copy(), theta.copy()
        up[p] += h
        dn[p] -= h
        pt = np.atleast_2d(t) if m.dim == 2 else np.atleast_1d(t)
        fd[p] = (m.mean(up, pt)[0] - m.mean(dn, pt)[0]) / (2 * h)
    scale = max(np.abs(g).max(), 1e-12)
    assert np.abs(fd - g).max() / scale < 1e-5


@settings(max_examples=100)
@given(st.data())
def test_fim_symmetric_psd_rank_two(data):
    m, theta, t = _random_case(data)
    fim = per_sample_fim(m, theta, t, NoiseSpec(data.draw(st.floats(0.01, 10.0))))
    assert np.array_equal(fim, fim.T)
    ev = np.linalg.eigvalsh(fim)
    assert ev[0] >= -1e-12 * np.trace(fim)
    sv = np.linalg.svd(fim, compute_uv=False)
    if sv.size > 2:
        assert sv[2] < 1e-10 * sv[0]


@settings(max_examples=100)
@given(st.floats(0.01, 0.49), st.floats(0.0, 30.0), st.integers(1, 5))
def test_undamped_modulus_periodic(f, t, k):
    theta = [1.7, f, 0.0, 0.3]
    assert abs(mean(D1, theta, t + k / f)) == pytest.approx(abs(mean(D1, theta, t)), rel=1e-12)


def test_vectorised_grad_matches_pointwise():
    m = SignalModel("damped_2d", 2)
    theta = np.array([1, 0.1, 0.12, 0.1, 0.08, 1.0, 1.3, 0.2, 0.21, 0.1, 0.09, 0.4])
    grid = CandidateGrid.uniform([4, 5], start=1)
    G = m.grad(theta, grid.points)
    for n in (0, 7, 19):
        np.testing.assert_allclose(G[n], grad_mean(m, theta, grid.points[n]), rtol=1e-14)


def test_candidate_grid():
    g = CandidateGrid.uniform([3, 4])
    assert g.size == 12 and g.shape == (3, 4)
    np.testing.assert_array_equal(g.points[5], [1, 1])  # row-major
    assert CandidateGrid.uniform(5).points[0, 0] == 0.0
    with pytest.raises(ConfigError):
        CandidateGrid([[0.0], [0.0]])
    with pytest.raises(ConfigError):
        CandidateGrid(np.arange(6.0), shape=(2, 2))
