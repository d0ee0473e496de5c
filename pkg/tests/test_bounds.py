"""Bound calculators against frozen 50-digit mpmath evaluations.

The ``ORACLES`` table is the fixture used by the acceptance suite too. Values
were produced with mpmath at ``mp.dps = 50`` from the closed forms, independent
of the package code, and are stored as decimal strings.
"""
import math

import mpmath
import pytest
from hypothesis import assume, given, settings, strategies as st

from relusgd import bounds
from relusgd.bounds import (BoundInputs, corollary1_bound, evaluate, is_vacuous_risk,
                            leaky_bound, normal_cdf, prop1_confidence, theorem1_Tk, theorem1_Tk0,
                            theorem2_lower, theorem3_compression)

V2 = [1.0, -1.0]

# (operation, callable, expected decimal string)
ORACLES = {
    "theorem1_Tk": [
        (lambda: theorem1_Tk(V2, 0.01, 0.0, 2.0), "1616"),
        (lambda: theorem1_Tk([2, -1, 1, -3], 0.01, 0.5, 3.0),
         "16787.622023808070592937013619426522833405496010885"),
        (lambda: theorem1_Tk([0.5] * 3 + [-0.5] * 3, 0.1, 0.0, 7.0), "25284"),
    ],
    "theorem1_Tk0": [
        (lambda: theorem1_Tk0(V2, 1.0, 1.0), "8"),
        (lambda: theorem1_Tk0(V2, 0.01, math.sqrt(8)), "3232"),
        (lambda: theorem1_Tk0([0.5] * 3 + [-0.5] * 3, 0.1, 7.0), "25284"),
    ],
    "leaky_bound": [
        (lambda: leaky_bound(1.0, 0.5, V2, 1.0), "2"),
        (lambda: leaky_bound(0.1, 0.01, V2, 3.0), "45900"),
        (lambda: leaky_bound(0.3, 0.05, [1, 1, -1, -1], 1.5), "150"),
    ],
    "theorem2_lower": [
        (lambda: theorem2_lower(0.01, V2, math.sqrt(128)), "6400"),
        (lambda: theorem2_lower(0.01, V2, math.sqrt(8)), "400"),
        (lambda: theorem2_lower(0.25, [2, -1, 1, -3], 2.5),
         "1.6666666666666666666666666666666666666666666666667"),
    ],
    "prop1_confidence": [
        (lambda: prop1_confidence(1.0, 1.0, 1, V2),
         "0.1586552539314570514147674543679620775220870332734"),
        (lambda: prop1_confidence(0.3, 100.0, 5, [1.0] * 10 + [-1.0] * 12),
         "0.99999999999999899904268140529484996824774160176716"),
        (lambda: prop1_confidence(2.5, 1.5, 2, [1, 1, 1, -1, -1, -1, -1]),
         "0.25458957138562507169906860643976093445643675962417"),
    ],
    "theorem3_compression": [
        (lambda: theorem3_compression(1000, 10, 0.01, 0.0),
         "0.92103403719761827360719658187374568304044059545151"),
        (lambda: theorem3_compression(5000, 40, 0.05, 0.02),
         "0.84266587080966850847120460831059844245115084808473"),
        (lambda: theorem3_compression(200, 0, 0.1, 0.15), "0.15"),
    ],
    "corollary1_bound": [
        (lambda: corollary1_bound(1616, 10**6, 0.01),
         "0.23814256065781618082387674820927568380693632035994"),
        (lambda: corollary1_bound(3232, 10**7, 0.05),
         "0.04942071348161903075680454501509739809580327721939"),
        (lambda: corollary1_bound(8, 100, 0.1),
         "4.4209633785485677133145435929939792785941148581672"),
    ],
}

CASES = [(op, i, f, want) for op, rows in ORACLES.items() for i, (f, want) in enumerate(rows)]


@pytest.mark.parametrize("op,i,f,want", CASES, ids=[f"{c[0]}-{c[1]}" for c in CASES])
def test_against_oracle(op, i, f, want):
    assert f() == pytest.approx(float(want), rel=1e-9)


# ---- structural examples --------------------------------------------------

def test_tk_rho_zero_is_tk0():
    v = [1, 2, -1, -0.5]
    assert theorem1_Tk(v, 0.03, 0.0, 4.2) == theorem1_Tk0(v, 0.03, 4.2)


def test_tk_linear_in_k():
    assert theorem1_Tk0(V2, 0.01, 2.0, k=4) == 2 * theorem1_Tk0(V2, 0.01, 2.0)


def test_tk0_large_eta_limit():
    v = [1.0, -2.0, 3.0]
    w = 1.7
    limit = 3 * 14 * w**2 / 1.0
    assert theorem1_Tk0(v, 1e12, w) == pytest.approx(limit, rel=1e-10)


def test_tk0_quadratic_in_separator():
    assert theorem1_Tk0(V2, 0.01, 6.0) == pytest.approx(9 * theorem1_Tk0(V2, 0.01, 2.0), rel=1e-14)


def test_leaky_alpha_zero_is_infinite():
    assert leaky_bound(0.0, 0.01, V2, 1.0) == math.inf


def test_leaky_halving_alpha_quadruples():
    assert leaky_bound(0.1, 0.01, V2, 2.0) == pytest.approx(4 * leaky_bound(0.2, 0.01, V2, 2.0))


def test_lower_halves_with_double_eta():
    assert theorem2_lower(0.02, V2, 3.0) == pytest.approx(theorem2_lower(0.01, V2, 3.0) / 2)


def test_prop1_gamma_to_infinity():
    v = [1, 1, 1, -1, -1]
    assert prop1_confidence(1.0, 1e300, 3, v) == pytest.approx(1 - 0.5**6, rel=1e-12)


def test_prop1_large_p_tends_to_one():
    assert prop1_confidence(1.0, 1.0, 10**4, V2) == 1.0


def test_normal_cdf_against_mpmath():
    mpmath.mp.dps = 30
    for z in (-8.0, -1.0, 0.0, 0.3, 2.5, 7.0):
        assert normal_cdf(z) == pytest.approx(float(mpmath.ncdf(z)), rel=1e-14)


def test_compression_zero_risk_matches_corollary_form():
    assert theorem3_compression(10**4, 30, 0.05, 0.0) == pytest.approx(
        corollary1_bound(30, 10**4, 0.05), rel=1e-15)


def test_compression_tau_zero():
    assert theorem3_compression(50, 0, 0.05, 0.2) == 0.2


def test_compression_precondition():
    with pytest.raises(ValueError, match="n >= 2\\*tau_k"):
        theorem3_compression(10, 6, 0.05, 0.0)


def test_corollary_vanishes():
    assert corollary1_bound(1616, 10**15, 0.01) < 1e-7


@pytest.mark.parametrize("call", [
    lambda: theorem1_Tk([1, 1], 0.1, 0, 1),
    lambda: theorem1_Tk(V2, 0.0, 0, 1),
    lambda: theorem1_Tk(V2, 0.1, -1, 1),
    lambda: leaky_bound(1.5, 0.1, V2, 1),
    lambda: prop1_confidence(1, 0, 1, V2),
    lambda: prop1_confidence(1, 1, 1, [1, 1]),
    lambda: theorem3_compression(100, 2, 1.5, 0),
    lambda: theorem3_compression(100, 2, 0.1, 2.0),
    lambda: corollary1_bound(10, 100, 0.0),
])
def test_domain_errors(call):
    with pytest.raises(ValueError):
        call()


# ---- properties -----------------------------------------------------------

_v = st.lists(st.floats(0.05, 5), min_size=1, max_size=5)


def _mixed(pos, neg):
    return list(pos) + [-x for x in neg]


@settings(max_examples=10**4, deadline=None)
@given(pos=_v, neg=_v, eta=st.floats(1e-4, 10), w=st.floats(0, 1e3))
def test_lower_never_exceeds_tk0(pos, neg, eta, w):
    v = _mixed(pos, neg)
    assert theorem2_lower(eta, v, w) <= theorem1_Tk0(v, eta, w) * (1 + 1e-12)


@settings(max_examples=300, deadline=None)
@given(pos=_v, neg=_v, eta=st.floats(1e-4, 10), rho=st.floats(0, 10), w=st.floats(0, 100),
       drho=st.floats(0, 5), dw=st.floats(0, 5))
def test_tk_monotone(pos, neg, eta, rho, w, drho, dw):
    v = _mixed(pos, neg)
    base = theorem1_Tk(v, eta, rho, w)
    assert theorem1_Tk(v, eta, rho + drho, w) >= base
    assert theorem1_Tk(v, eta, rho, w + dw) >= base
    assert theorem1_Tk(v, eta, rho, w, k=len(v) + 1) >= base


@settings(max_examples=300, deadline=None)
@given(n=st.integers(10, 10**6), dn=st.integers(1, 10**6), tau=st.integers(0, 5),
       r=st.floats(0, 1), delta=st.floats(1e-6, 0.5))
def test_compression_non_increasing_in_n(n, dn, tau, r, delta):
    # the bound decreases in n once n / delta exceeds e
    assert theorem3_compression(n + dn, tau, delta, r) <= theorem3_compression(n, tau, delta, r) + 1e-15


@settings(max_examples=300, deadline=None)
@given(w=st.floats(1e-3, 50), gamma=st.floats(1e-2, 1e3), p=st.integers(1, 30),
       m=st.integers(1, 4))
def test_prop1_range_and_monotone(w, gamma, p, m):
    # past w/gamma ~ 37.5 the normal tail is below the smallest double
    assume(w / gamma <= 37.0)
    v = [1.0] * m + [-1.0] * m
    c = prop1_confidence(w, gamma, p, v)
    assert 0 < c <= 1
    up_p = prop1_confidence(w, gamma, p + 1, v)
    up_g = prop1_confidence(w, gamma * 1.5, p, v)
    assert up_p >= c and up_g >= c
    # strict growth is only resolvable in float64 while 1 - c is not tiny
    if c < 1 - 1e-6:
        assert up_p > c and up_g > c


# ---- aggregated report ----------------------------------------------------

def test_evaluate_a_priori_only():
    rep = evaluate(BoundInputs(eta=0.01, v=V2, omega_star_norm=math.sqrt(8), d=8))
    assert rep.lower_bound == pytest.approx(400, rel=1e-12)
    assert rep.Tk0 == pytest.approx(3232, rel=1e-12)
    assert rep.compression_bound is None and rep.tau_k is None


def test_evaluate_precondition_string():
    rep = evaluate(BoundInputs(eta=0.01, v=V2, omega_star_norm=2.0, n=10, tau_k=6,
                               complement_risk=0.0))
    assert rep.compression_bound == "precondition n>=2tau_k violated"
    assert rep.compression_vacuous is True


def test_evaluate_with_run_data():
    rep = evaluate(BoundInputs(eta=0.01, v=V2, omega_star_norm=2.0, n=1000, tau_k=10,
                               delta=0.01, complement_risk=0.0, gamma=1.0, w_max=1.0, p=1))
    assert rep.compression_bound == pytest.approx(0.92103403719761827, rel=1e-12)
    assert rep.compression_vacuous is False
    assert rep.prop1_confidence == pytest.approx(0.158655253931457, rel=1e-12)


def test_to_json_stable_and_finite_safe():
    rep = evaluate(BoundInputs(eta=0.01, v=V2, omega_star_norm=2.0, alpha=0.0))
    text = rep.to_json()
    assert '"leaky_bound": "inf"' in text
    keys = [line.split(":")[0].strip() for line in text.splitlines()[1:-1]]
    assert keys[:3] == ['"k"', '"eta"', '"omega_star_norm"']
    assert text == rep.to_json()


def test_vacuous_flag():
    assert is_vacuous_risk(1.5) and not is_vacuous_risk(0.99) and is_vacuous_risk(math.nan)


def test_log_cdf_tail_precision():
    # 1 - Phi(z)^m for large z must not collapse to 0
    z = 9.0
    expected = float(mpmath.mpf(1) - mpmath.ncdf(z) ** 5)
    assert prop1_confidence(z, 1.0, 5, V2) == pytest.approx(expected, rel=1e-9)
    assert bounds._log_normal_cdf(-3.0) == pytest.approx(math.log(normal_cdf(-3.0)))
