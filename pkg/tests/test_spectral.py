import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import binom

from suite import gaussian_cdf_oracle, kolmogorov_oracle

from be_lab.errors import DegenerateSpectrumError, InvalidParameterError
from be_lab.operators import PAULI, field_chain, random_two_local, tfim_chain, zz_chain
from be_lab.spectral import (SpectralMeasure, characteristic_function, cumulant_window_check,
                             fast_commuting_measure, gaussian_cdf, kolmogorov_distance, omega_star,
                             spectral_measure, standardize)
from be_lab.states import maximally_mixed, pure_product, random_product_state


def test_two_point_measure():
    m = spectral_measure(field_chain(1), maximally_mixed(1))
    assert np.allclose(m.energies, [-1, 1]) and np.allclose(m.weights, [0.5, 0.5])
    assert m.mean == pytest.approx(0.0) and m.std == pytest.approx(1.0)


def test_eigenstate_has_single_atom():
    m = spectral_measure(field_chain(1), pure_product([[1, 0]]))
    assert np.allclose(m.energies, [1.0]) and np.allclose(m.weights, [1.0])
    assert m.std == pytest.approx(0.0)
    with pytest.raises(DegenerateSpectrumError):
        standardize(m)


@pytest.mark.parametrize("n", [2, 5, 9])
def test_zz_chain_binomial_law(n):
    m = spectral_measure(zz_chain(n), maximally_mixed(n))
    k = np.arange(n)
    assert np.allclose(m.energies, 2 * k - (n - 1))
    assert np.allclose(m.weights, binom.pmf(k, n - 1, 0.5), atol=1e-12)


def test_non_hermitian_rejected():
    with pytest.raises(InvalidParameterError):
        spectral_measure(np.array([[0, 1], [0, 0]], dtype=complex), maximally_mixed(1))


def test_fast_path_field_binomial_20():
    m = fast_commuting_measure(field_chain(20), maximally_mixed(20))
    k = np.arange(21)
    assert np.allclose(m.energies, 2 * k - 20)
    assert np.allclose(m.weights, binom.pmf(k, 20, 0.5), atol=1e-14)


def test_fast_path_single_term():
    state = random_product_state(1, np.random.default_rng(1))
    m = fast_commuting_measure(field_chain(1, 0.7), state)
    p_up = np.real(state.factors[0][0, 0])
    assert np.allclose(m.energies, [-0.7, 0.7]) and np.allclose(m.weights, [1 - p_up, p_up])


def test_fast_path_rejects_non_commuting():
    with pytest.raises(InvalidParameterError):
        fast_commuting_measure(tfim_chain(4), maximally_mixed(4))


def test_fast_path_zz12_matches_exact():
    rng = np.random.default_rng(4)
    state = random_product_state(12, rng)
    a = fast_commuting_measure(zz_chain(12), state)
    b = spectral_measure(zz_chain(12), state)
    assert np.abs(a.weights - b.weights).max() <= 1e-12
    assert np.abs(a.energies - b.energies).max() <= 1e-12


def test_standardize_variance_flag():
    m = SpectralMeasure(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
    s = standardize(m, c0=0.5, E=1.0, N=1)
    assert s.variance_ok and np.allclose(s.energies, [-1, 1])
    n = 7
    s = standardize(spectral_measure(zz_chain(n), maximally_mixed(n)), c0=0.5, E=1.0, N=n)
    assert s.sigma ** 2 == pytest.approx(n - 1) and s.variance_ok


def test_gaussian_cdf_values():
    assert gaussian_cdf(0.0) == 0.5
    assert gaussian_cdf(1.0) == pytest.approx(0.841344746, abs=1e-9)
    assert gaussian_cdf(-np.inf) == 0.0


def test_kolmogorov_examples():
    two = SpectralMeasure(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
    assert kolmogorov_distance(two) == pytest.approx(gaussian_cdf_oracle(1.0) - 0.5, abs=1e-12)
    assert kolmogorov_distance(SpectralMeasure(np.array([0.0]), np.array([1.0]))) == pytest.approx(0.5)


def test_kolmogorov_large_binomial():
    n = 10 ** 4
    k = np.arange(n + 1)
    m = standardize(SpectralMeasure((2 * k - n).astype(float), binom.pmf(k, n, 0.5)))
    assert kolmogorov_distance(m) * math.sqrt(n) == pytest.approx(0.399, abs=0.02)


@given(st.integers(0, 10 ** 6))
@settings(max_examples=50, deadline=None)
def test_kolmogorov_matches_grid_scan(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 7))
    e = np.sort(rng.uniform(-3, 3, size=k))
    w = rng.random(k)
    w /= w.sum()
    m = SpectralMeasure(e, w)
    grid = np.concatenate([np.linspace(-10, 10, 10 ** 6), e - 1e-13, e, e + 1e-13])
    scan = np.abs(m.cdf(grid) - gaussian_cdf(grid)).max()
    assert kolmogorov_distance(m) == pytest.approx(scan, abs=1e-9)
    assert kolmogorov_distance(m) == pytest.approx(kolmogorov_oracle(e, w), abs=1e-12)


def test_characteristic_examples():
    std = standardize(SpectralMeasure(np.array([-1.0, 1.0]), np.array([0.5, 0.5])))
    w = np.linspace(-5, 5, 41)
    assert np.allclose(characteristic_function(std, w).values, np.cos(w), atol=1e-14)
    atom = SpectralMeasure(np.array([0.0]), np.array([1.0]))
    assert np.allclose(atom.characteristic(w), 1.0)


@given(st.integers(0, 10 ** 6))
@settings(max_examples=20, deadline=None)
def test_characteristic_conjugate_symmetry(seed):
    rng = np.random.default_rng(seed)
    model = random_two_local(3, rng)
    std = standardize(spectral_measure(model, random_product_state(3, rng)))
    w = rng.uniform(0, 8, size=10)
    assert np.array_equal(std.characteristic(-w), np.conj(std.characteristic(w)))


def test_evolution_path_matches_eigen_sum():
    rng = np.random.default_rng(11)
    model = random_two_local(3, rng)
    state = maximally_mixed(3)
    std = standardize(spectral_measure(model, state))
    w = np.linspace(0, 5, 30)
    a = characteristic_function(std, w).values
    b = characteristic_function(std, w, "evolution", model=model, state=state).values
    assert np.abs(a - b).max() <= 1e-8


@given(st.integers(0, 10 ** 6), st.integers(2, 6))
@settings(max_examples=20, deadline=None)
def test_weights_reconstruct_trace(seed, n):
    rng = np.random.default_rng(seed)
    model = random_two_local(n, rng)
    state = random_product_state(n, rng)
    m = spectral_measure(model, state)
    h = model.dense()
    assert m.weights.sum() == pytest.approx(1.0, abs=1e-10)
    expect = np.real(np.trace(state.dense() @ h))
    assert abs(m.mean - expect) <= 1e-9 * np.abs(np.linalg.eigvalsh(h)).max()


def test_degenerate_atoms_are_merged():
    m = spectral_measure(zz_chain(6), maximally_mixed(6))
    assert m.energies.size == 6


def test_omega_star_value():
    assert omega_star(1, 1, 1.0) == pytest.approx(1 / (4 * math.e ** 2), rel=1e-12)
    assert omega_star(1, 1, 1.0) == pytest.approx(0.033834, abs=1e-6)


def test_cumulant_window_binomial_64():
    n = 64
    std = standardize(fast_commuting_measure(field_chain(n), maximally_mixed(n)))
    ws = omega_star(1, 1, 1.0)
    grid = np.linspace(0, ws * std.sigma / 2, 50)
    rep = cumulant_window_check(std, n, 1.0, 1, 1, grid)
    assert rep["holds"] and rep["lhs"][0] == 0 and rep["rhs"][0] == 0
    # symmetric law: log phi + w^2/2 = N log cos(w / sqrt(N)) + w^2/2 = O(w^4)
    w = np.array(rep["omega"])[1:]
    oracle = np.abs(n * np.log(np.cos(w / math.sqrt(n))) + w ** 2 / 2)
    assert np.allclose(np.array(rep["lhs"])[1:], oracle, atol=1e-13)
    assert np.all(oracle <= w ** 4 / (12 * n) * 1.01 + 1e-15)


def test_cumulant_window_flags_points_outside():
    n = 16
    std = standardize(fast_commuting_measure(field_chain(n), maximally_mixed(n)))
    rep = cumulant_window_check(std, n, 1.0, 1, 1, np.linspace(0, 1.0, 11))
    assert not all(rep["in_window"])
    with pytest.raises(InvalidParameterError):
        cumulant_window_check(std, n, 1.0, 1, 1, np.array([0.2, 0.1]))
