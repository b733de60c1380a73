import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from be_lab.bounds import (LemmaConstants, ModelParams, c_alpha, delta_estimate, epsilon_interval, lemma_c_constants,
                           lemma_report, phi_envelope, product_bound, s_series, shared_constants, table_constants,
                           theorem_bound)
from be_lab.errors import EnvelopeInapplicableError, InvalidParameterError, WindowViolationError
from be_lab.harness import estimate_decay, model_params
from be_lab.operators import zz_chain
from be_lab.spectral import spectral_measure, standardize
from be_lab.states import DecayFit, maximally_mixed

EXP1 = DecayFit("exponential", 1.0, 1.0, 1)


def params(N=1000, c0=0.5, decay=EXP1, D=1, c_D=2.0, R=1, E=1.0, **kw):
    return ModelParams(N, D, c_D, R, E, c0, math.sqrt(c0 * N) * E, decay, **kw)


# --- C_alpha ------------------------------------------------------------------

def test_c_alpha_geometric():
    assert c_alpha(EXP1, 1, 2.0, 1) == pytest.approx(2 * math.exp(-1) / (1 - math.exp(-1)), rel=1e-14)
    assert c_alpha(EXP1, 1, 2.0, 1) == pytest.approx(1.16395, abs=5e-6)


def test_c_alpha_zero_decay():
    assert c_alpha(None, 3, 2.0, 1) == 0.0
    assert c_alpha(DecayFit("exponential", 0.0, 1.0, 1), 3, 2.0, 1) == 0.0


@given(st.floats(0.3, 3.0), st.floats(0.1, 5.0), st.integers(1, 12), st.integers(1, 3))
@settings(max_examples=40, deadline=None)
def test_c_alpha_exponential_direct(xi, L0, ell, D):
    dec = DecayFit("exponential", L0, xi, D)
    ref = oracles.calpha_direct(lambda r: oracles.alpha_exp(r, L0, xi), ell, 2.0 * D, D)
    assert c_alpha(dec, ell, 2.0 * D, D) == pytest.approx(ref, rel=1e-12)


def _algebraic_oracle(beta, ell, L0, c_D, D=1, T=100000):
    p = D + beta
    head = math.fsum(L0 * r ** (-p) * (r + 1) ** (D - 1) for r in range(ell, T))
    # Euler-Maclaurin tail for D = 1
    tail = L0 * (T ** (1 - p) / (p - 1) + T ** (-p) / 2 + p * T ** (-p - 1) / 12)
    return c_D * (head + tail)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("ell", [2, 5, 10])
def test_c_alpha_algebraic(beta, ell):
    dec = DecayFit("algebraic", 1.5, beta, 1)
    val = c_alpha(dec, ell, 2.0, 1)
    assert val == pytest.approx(_algebraic_oracle(beta, ell, 1.5, 2.0), rel=1e-10)
    assert val <= 2 * 2.0 * 1.5 * ell ** (-beta) / beta


def test_c_alpha_divergent():
    with pytest.raises(InvalidParameterError):
        c_alpha(DecayFit("algebraic", 1.0, -0.5, 1), 2, 2.0, 1)
    with pytest.raises(InvalidParameterError):
        c_alpha(EXP1, 0.5, 2.0, 1)


# --- tables -------------------------------------------------------------------

def test_table_examples():
    s = shared_constants(params())
    assert s["Gamma"] == 16
    assert s_series(0) == pytest.approx(2.0, rel=1e-14)
    assert s_series(1) == pytest.approx(6.0, rel=1e-14)
    assert shared_constants(params(commuting=True))["B6"] == 0.0
    assert shared_constants(params())["B6"] > 0


@given(st.integers(1, 3), st.integers(1, 3), st.floats(1.0, 8.0), st.floats(0.05, 1.0),
       st.integers(2, 6), st.integers(2, 6), st.booleans())
@settings(max_examples=40, deadline=None)
def test_table_dual_transcription(D, R, c_D, c0, ell, K, commuting):
    p = ModelParams(10 ** 6, D, c_D, R, 1.3, c0, math.sqrt(c0 * 10 ** 6) * 1.3, EXP1, commuting=commuting)
    tab = table_constants(p, ell, 1, K)
    ref = oracles.table_oracle(D, R, c_D, 1.3, p.sigma, c0, ell, K, c_alpha(EXP1, 1, c_D, D), commuting)
    got = {**shared_constants(p), "Omega1": tab.Omega1, "Omega2": tab.Omega2, "Omega3": tab.Omega3}
    for k, v in ref.items():
        assert got[k] == pytest.approx(v, rel=1e-12, abs=0 if v else 1e-300), k
    assert tab.omega_max == pytest.approx(min(ref["Omega1"], ref["Omega2"], ref["Omega3"]), rel=1e-12)
    assert tab.Omega3_table == pytest.approx(4 * tab.Omega3, rel=1e-15)


def test_table_rejects_nonpositive():
    with pytest.raises(InvalidParameterError):
        table_constants(params(), 0, 1, 2)


# --- lemma constants ----------------------------------------------------------

def test_c1_example():
    p = params(N=1000, c0=0.5)
    c = lemma_c_constants(p, table_constants(p, 3, 1, 2), 3, 1, 2)
    assert c.c1 == pytest.approx(4 * c_alpha(EXP1, 4, 2.0, 1), rel=1e-14)
    assert c.c1 == pytest.approx(0.23179, abs=1e-5)


def test_zero_decay_constants():
    p = params(decay=None)
    c = lemma_c_constants(p, table_constants(p, 3, 1, 2), 3, 1, 2)
    assert c.c1 == 0 and c.c3 == 0 and c.c3_tilde == 0


def test_c4_ratio():
    p = params(N=10 ** 5)
    base = lemma_c_constants(p, table_constants(p, 3, 1, 2), 3, 1, 2).c4
    far = lemma_c_constants(p, table_constants(p, 3, 1, 64), 3, 1, 64).c4
    assert far / base == pytest.approx(2.0 ** -(64 - 2), rel=1e-12)


def test_lemma_constants_dual_transcription():
    p = params(N=5000, c0=0.3, decay=DecayFit("exponential", 2.0, 0.7, 1))
    ell, M, K = 4, 2, 3
    tab = table_constants(p, ell, M, K)
    c = lemma_c_constants(p, tab, ell, M, K)
    s = shared_constants(p)
    ref = oracles.c_oracle(1, 1, 5000, 0.3, ell, M, K, s["B2"], s["B4"], s["B5"], s["B6"],
                           c_alpha(p.decay, 2 * (ell - 1), 2.0, 1), oracles.alpha_exp(2 * (ell - M - 1), 2.0, 0.7))
    got = (c.c1, c.c2, c.c3, c.c4, c.c5, c.c3_tilde)
    assert np.allclose(got, ref, rtol=1e-12, atol=0)


def test_lemma_window_violation():
    p = params(N=6)
    with pytest.raises(WindowViolationError) as exc:
        lemma_c_constants(p, table_constants(p, 2, 1, 2), 2, 1, 2)
    assert exc.value.failed == ["2 R l K <= N (8 > 6)"]
    rep = lemma_report(p, 2, 1, 2)
    assert not rep.applicable and rep.delta_bound is None and rep.to_dict()["delta_bound"] == "not-applicable"


def test_eq8_uses_c3_tilde():
    p = params(convention="eq8")
    c = lemma_c_constants(p, table_constants(p, 3, 1, 2), 3, 1, 2)
    assert c.as_tuple()[2] == c.c3_tilde == pytest.approx(c.c3 / 12)


# --- envelope and Delta estimate ----------------------------------------------

def test_envelope_zero_and_trivial():
    c = LemmaConstants(0.1, 0.2, 0.3, 0.4, 0.5, 0.0)
    assert phi_envelope(0.0, c) == 0.0
    z = LemmaConstants(0, 0, 0, 0, 0, 0)
    assert np.all(phi_envelope(np.linspace(0, 5, 11), z) == 0)


def test_envelope_inapplicable():
    with pytest.raises(EnvelopeInapplicableError):
        phi_envelope(0.1, LemmaConstants(0.5, 0, 0, 0, 0, 0))


def test_envelope_window():
    with pytest.raises(WindowViolationError):
        phi_envelope(2.0, LemmaConstants(0.1, 0, 0, 0, 0, 0), omega_max=1.0)


def test_envelope_dominates_commuting_chain():
    n = 8
    model, state = zz_chain(n), maximally_mixed(n)
    std = standardize(spectral_measure(model, state))
    p = model_params(model, state, std.sigma, None, estimate_decay(state, model))
    tab = table_constants(p, 2, 1, 2)
    c = lemma_c_constants(p, tab, 2, 1, 2)
    w = np.linspace(0, tab.omega_max, 20)
    exact = np.abs(std.characteristic(w) - np.exp(-w ** 2 / 2))
    assert np.all(exact <= phi_envelope(w, c, tab.omega_max) + 1e-15)


def test_delta_estimate_regression():
    c = LemmaConstants(0.1, 0.01, 0.001, 0.001, 0.0001, 0.0)
    hand = (3.05 / 10 + 6 * 0.1 / (2 * math.pi) + math.sqrt(6) * 0.01 / math.sqrt(math.pi)
            + 8 / math.pi * 0.002 * (1 + math.log(10)) + 8 * 0.0001 * 10 / math.pi)
    assert delta_estimate(c, 10.0, 3.05) == pytest.approx(hand, rel=1e-12)


def test_delta_estimate_trivial_and_linear():
    z = LemmaConstants(0, 0, 0, 0, 0, 0)
    assert delta_estimate(z, 4.0, 3.05) == pytest.approx(3.05 / 4)
    c = LemmaConstants(0.1, 0.01, 0.001, 0.001, 0.0001, 0.0)
    assert delta_estimate(c, 4.0, 6.1) - delta_estimate(c, 4.0, 3.05) == pytest.approx(3.05 / 4, rel=1e-12)
    with pytest.raises(WindowViolationError):
        delta_estimate(c, 2.0, omega_max=1.0)


# --- theorem-level bounds -----------------------------------------------------

def test_exponential_matches_oracle():
    p = params(N=10 ** 6)
    rep = theorem_bound(p)
    assert rep.applicable
    s = shared_constants(p)
    f = oracles.f1_oracle(10 ** 6, 1, 1, 2.0, 0.5, 1.0, 1.0, s["B2"], s["B4"], s["B5"], s["B6"], rep.extra["B7"], 3.05)
    assert rep.extra["f1"] == pytest.approx(f, rel=1e-12)
    assert rep.delta_bound == pytest.approx(f * math.log(1e6) ** 2 / 1e3, rel=1e-12)


def test_small_n_not_applicable():
    rep = theorem_bound(params(N=10))
    assert not rep.applicable and rep.delta_bound is None
    assert "N > e^2" not in rep.failed and rep.failed


def test_theorem_monotone_in_n():
    vals = []
    for N in np.logspace(4, 12, 20):
        rep = theorem_bound(params(N=int(N)))
        assert rep.applicable
        vals.append(rep.delta_bound)
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_algebraic_matches_oracle():
    dec = DecayFit("algebraic", 1.0, 3.0, 1)
    for eq8 in (False, True):
        p = params(N=10 ** 8, decay=dec, convention="eq8" if eq8 else "eq4")
        rep = theorem_bound(p)
        s = shared_constants(p)
        f = oracles.f2_oracle(10 ** 8, 1, 1, 2.0, 0.5, 1.0, 3.0, rep.extra["delta"], s["B2"], s["B4"], s["B5"],
                              s["B6"], rep.extra["B7"], 3.05, eq8)
        assert rep.extra["f2"] == pytest.approx(f, rel=1e-12)


def test_epsilon_interval():
    dec = DecayFit("algebraic", 1.0, 3.0, 1)
    lo, hi = epsilon_interval(3.0, 1, False)
    assert (lo, hi) == (0.0, pytest.approx(1 / 10))
    with pytest.raises(InvalidParameterError):
        theorem_bound(params(N=10 ** 8, decay=dec), eps=hi)
    with pytest.raises(InvalidParameterError):
        theorem_bound(params(N=10 ** 8, decay=dec), eps=-0.01)
    theorem_bound(params(N=10 ** 8, decay=dec), eps=hi / 2)


def test_epsilon_zero_log_factor():
    """At epsilon = 0 the prefactor grows like log N; for epsilon > 0 it stays bounded."""
    dec = DecayFit("algebraic", 1.0, 3.0, 1)
    f0 = [theorem_bound(params(N=10 ** k, decay=dec)).extra["f2"] for k in (20, 40, 60)]
    d1, d2 = f0[1] - f0[0], f0[2] - f0[1]
    assert d1 > 0 and d2 == pytest.approx(d1, rel=1e-6)
    fe = [theorem_bound(params(N=10 ** k, decay=dec), eps=0.05).extra["f2"] for k in (20, 40, 60)]
    assert fe[2] - fe[1] < 1e-3 * d1


def test_decay_required():
    with pytest.raises(InvalidParameterError):
        theorem_bound(params(decay=None))


# --- product bound ------------------------------------------------------------

def test_product_omega_star():
    rep = product_bound(params(N=100, c0=1.0, product=True))
    ws = rep.extra["omega_star"]
    assert ws == pytest.approx(1 / (4 * math.e ** 2), rel=1e-14)
    assert ws == pytest.approx(0.033834, abs=5e-7)
    assert rep.extra["B1_tilde"] == pytest.approx(ws ** -3, rel=1e-14)


def test_product_scaling():
    scaled = []
    for N in (10, 100, 1000, 10 ** 5):
        rep = product_bound(params(N=N, c0=1.0, product=True))
        assert rep.applicable and rep.extra["C_prime"] == pytest.approx(1 / (4 * rep.extra["B1_tilde"]))
        scaled.append(rep.delta_bound * math.sqrt(N))
    assert np.allclose(scaled, scaled[0], rtol=1e-12)


def test_product_preconditions():
    assert not product_bound(params(product=False)).applicable
    p = ModelParams(100, 1, 2.0, 1, 1.0, 0.5, 1.0, EXP1, product=True)
    rep = product_bound(p)
    assert not rep.applicable and "variance: sigma^2 >= c0 E^2 N" in rep.failed
