import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from be_lab.errors import InvalidParameterError, ResourceLimitError
from be_lab.operators import (PAULI, build_hamiltonian, check_dim, detect_support, embed,
                              local_operator, nested_commutator, pauli_string, random_two_local,
                              spectral_norm, tfim_chain)
from be_lab.lattice import build_lattice

X, Y, Z, I2 = PAULI["X"], PAULI["Y"], PAULI["Z"], PAULI["I"]


def test_embed_z_on_first_site():
    assert np.allclose(embed(pauli_string("Z", [0]), 2), np.diag([1, 1, -1, -1]))


def test_embed_identity_block():
    assert np.allclose(embed(local_operator([1], I2), 3), np.eye(8))


def test_embed_product_of_disjoint_supports():
    lhs = embed(pauli_string("X", [0]), 2) @ embed(pauli_string("Z", [1]), 2)
    assert np.allclose(lhs, embed(pauli_string("XZ", [0, 1]), 2))
    assert np.allclose(lhs, np.kron(X, Z))


def test_embed_respects_cap(monkeypatch):
    monkeypatch.setenv("BE_LAB_DIM_CAP", "8")
    with pytest.raises(ResourceLimitError):
        embed(pauli_string("Z", [0]), 4)
    with pytest.raises(ResourceLimitError):
        check_dim(16)


def test_unsorted_sites_are_permuted():
    op = local_operator([1, 0], np.kron(X, Z))
    assert op.sites == (0, 1)
    assert np.allclose(op.block, np.kron(Z, X))


@given(st.permutations([0, 1, 2]), st.integers(0, 10 ** 6))
@settings(max_examples=25, deadline=None)
def test_embed_is_homomorphism_on_disjoint_supports(perm, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    b = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    s, t, u = perm
    oa, ob = local_operator([s], a), local_operator([t, u], b)
    joint = local_operator([s, t, u], np.kron(a, b))
    assert np.allclose(embed(oa, 3) @ embed(ob, 3), embed(joint, 3))


def _lat(n):
    return build_lattice("chain", n)


def test_field_spectrum_multiplicities():
    h = build_hamiltonian(_lat(3), [{"anchor": i, "pauli": "Z", "sites": [i]} for i in range(3)])
    vals, counts = np.unique(np.round(np.linalg.eigvalsh(h.dense()), 9), return_counts=True)
    assert vals.tolist() == [-3, -1, 1, 3] and counts.tolist() == [1, 3, 3, 1]


def test_open_zz_spectrum_values():
    h = build_hamiltonian(_lat(3), [{"anchor": i, "pauli": "ZZ", "sites": [i, i + 1]} for i in range(2)])
    assert sorted(set(np.round(np.linalg.eigvalsh(h.dense()), 9))) == [-2, 0, 2]


def test_zz_term_norm_sets_E():
    h = build_hamiltonian(_lat(2), [{"anchor": 0, "pauli": "ZZ", "sites": [0, 1]}])
    assert h.E == pytest.approx(1.0)
    assert h.R == 1


def test_inconsistent_local_dim_rejected():
    from be_lab.operators import LocalOperator, Term
    qutrit = LocalOperator((0,), np.eye(3, dtype=complex), 3)
    with pytest.raises(InvalidParameterError):
        build_hamiltonian(_lat(2), [Term(0, qutrit)])


def test_non_hermitian_term_rejected():
    with pytest.raises(InvalidParameterError):
        build_hamiltonian(_lat(2), [{"anchor": 0, "pauli": "Z", "sites": [0], "coeff": [0, 1]}])


def test_nested_commutator_one_qubit():
    assert np.allclose(nested_commutator(X, Y, 0), Y)
    assert np.allclose(nested_commutator(X, Y, 1), 2j * Z)
    assert np.allclose(nested_commutator(X, Y, 2), 4 * Y)


def test_nested_commutator_local_operators_detect_support():
    c = nested_commutator(pauli_string("X", [0]), pauli_string("ZZ", [0, 1]), 1)
    assert c.sites == (0, 1)
    assert nested_commutator(pauli_string("X", [2]), pauli_string("Z", [0]), 1).sites == ()


def test_spectral_norm_examples():
    assert spectral_norm(Z) == pytest.approx(1.0)
    assert spectral_norm(2 * np.eye(3)) == pytest.approx(2.0)
    a = embed(pauli_string("ZZ", [0, 1]), 2) + embed(pauli_string("X", [0]), 2)
    assert spectral_norm(a) == pytest.approx(np.sqrt(2), rel=1e-12)


@given(st.integers(0, 10 ** 6), st.integers(1, 5))
@settings(max_examples=30, deadline=None)
def test_spectral_norm_matches_singular_values(seed, k):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
    assert spectral_norm(a) == pytest.approx(np.linalg.svd(a, compute_uv=False)[0], rel=1e-10)


def test_hamiltonian_is_hermitian():
    h = random_two_local(6, np.random.default_rng(1)).dense()
    assert np.abs(h - h.conj().T).max() <= 1e-14 * spectral_norm(h)


def test_detect_support_of_embedded_operator():
    a = embed(pauli_string("XY", [1, 3]), 5)
    assert detect_support(a, 5) == (1, 3)
    assert detect_support(np.eye(32), 5) == ()


@pytest.mark.parametrize("n_sites", [4, 6, 8])
def test_commutator_support_growth(n_sites):
    """supp([H, A]_n) lies within distance 2 R n of supp(A) for a range-R Hamiltonian H."""
    rng = np.random.default_rng(n_sites)
    for model in (random_two_local(n_sites, rng), tfim_chain(n_sites)):
        h = model.dense()
        R = model.R
        lat = model.lattice
        for site in range(n_sites):
            a = embed(local_operator([site], rng.normal(size=(2, 2))), n_sites)
            cur = a
            for n in range(1, 5):
                cur = h @ cur - cur @ h
                allowed = set(lat.ball([site], 2 * R * n))
                assert set(detect_support(cur, n_sites)) <= allowed
