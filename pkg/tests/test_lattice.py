import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from be_lab.errors import InvalidParameterError
from be_lab.lattice import build_lattice, dimension_certificate, shell_counts


def brute_distance(lat, i, j):
    """Breadth-first search on the nearest-neighbour graph."""
    ci, cj = lat.coords(i), lat.coords(j)
    total = 0
    for a, b, ext in zip(ci, cj, lat.extents):
        d = abs(int(a) - int(b))
        total += min(d, ext - d) if lat.wrap else d
    return total


def test_adjacent_chain_sites():
    assert build_lattice("chain", 2).distance(0, 1) == 1


def test_ring_wraps_around():
    assert build_lattice("ring", 4).distance(0, 3) == 1


def test_grid_manhattan():
    lat = build_lattice("grid", (3, 3))
    assert lat.distance(0, 8) == 4


def test_zero_extent_rejected():
    with pytest.raises(InvalidParameterError):
        build_lattice("chain", 0)


@pytest.mark.parametrize("kind, extents, D, c", [("chain", 10, 1, 2), ("ring", 8, 1, 2)])
def test_certificate_one_dimensional(kind, extents, D, c):
    cert = dimension_certificate(build_lattice(kind, extents))
    assert cert.D == D and cert.c_D == c


def test_certificate_grid_centre_shell():
    lat = build_lattice("grid", (3, 3))
    cert = dimension_certificate(lat)
    assert shell_counts(lat)[4, 1] == 4
    assert cert.D == 2 and cert.c_D >= 4


def test_large_chain_closed_form_matches_count():
    from be_lab.lattice import LARGE_CHAIN, _chain_certificate
    lat = build_lattice("chain", LARGE_CHAIN)
    assert dimension_certificate(lat).c_D == _chain_certificate(LARGE_CHAIN).c_D


def test_set_distance_examples():
    lat = build_lattice("chain", 8)
    assert lat.set_distance([0], [3]) == 3
    assert lat.set_distance([0, 3], [3, 4]) == 0
    assert lat.set_distance([0, 5], [3]) == 2
    with pytest.raises(InvalidParameterError):
        lat.set_distance([], [1])


lattices = st.one_of(
    st.builds(lambda n: build_lattice("chain", n), st.integers(1, 12)),
    st.builds(lambda n: build_lattice("ring", n), st.integers(1, 12)),
    st.builds(lambda a, b: build_lattice("grid", (a, b)), st.integers(1, 4), st.integers(1, 4)),
)


@given(lattices)
@settings(max_examples=40, deadline=None)
def test_metric_axioms_and_certificate(lat):
    n = lat.n_sites
    m = lat.metric
    for i, j in itertools.product(range(n), repeat=2):
        assert m[i, j] == brute_distance(lat, i, j)
        assert (m[i, j] == 0) == (i == j)
    for i, j, k in itertools.product(range(n), repeat=3):
        assert m[i, k] <= m[i, j] + m[j, k]
    cert = dimension_certificate(lat)
    counts = shell_counts(lat)
    ells = np.arange(1, counts.shape[1])
    assert np.all(counts[:, 1:] <= cert.c_D * ells ** (cert.D - 1) + 1e-12)


@given(lattices, st.data())
@settings(max_examples=40, deadline=None)
def test_set_distance_symmetric(lat, data):
    sites = st.sets(st.integers(0, lat.n_sites - 1), min_size=1, max_size=3)
    a, b = data.draw(sites), data.draw(sites)
    assert lat.set_distance(a, b) == lat.set_distance(b, a)
    assert lat.set_distance(a, b) == min(lat.distance(i, j) for i in a for j in b)
