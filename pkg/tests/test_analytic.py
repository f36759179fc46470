import math
import warnings
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from vblast import analytic as an
from vblast.channel import Modulation, SystemDims, complex_normal, stream_rng

PAIRS = [(2, 2), (3, 2), (3, 3), (4, 3), (4, 4), (5, 4)]


def proakis_bpsk(k, g):
    mu = math.sqrt(g / (1 + g))
    return ((1 - mu) / 2) ** k * sum(math.comb(k - 1 + j, j) * ((1 + mu) / 2) ** j for j in range(k))


# --- MRC outage ------------------------------------------------------------


def test_mrc_outage_examples():
    assert an.mrc_outage(3, 0.0) == 0.0
    assert an.mrc_outage(1, 0.5) == pytest.approx(1 - math.exp(-0.5), abs=1e-15)
    assert an.mrc_outage(2, 1.0) == pytest.approx(0.2642411176571153, abs=1e-15)
    with pytest.raises(ValueError):
        an.mrc_outage(0, 1.0)
    with pytest.raises(ValueError):
        an.mrc_outage(2, -1.0)


@pytest.mark.parametrize("n", [1, 2, 5, 16])
def test_mrc_outage_relative_precision_against_mpmath(n):
    for x in [1e-6, 1e-3, 0.3, 2.0, 40.0]:
        ref = float(mpmath.gammainc(n, 0, x, regularized=True))
        assert an.mrc_outage(n, x) == pytest.approx(ref, rel=1e-12)


def test_mrc_outage_vectorized_and_saturating():
    x = np.array([0.0, 1.0, 800.0])
    out = an.mrc_outage(3, x)
    np.testing.assert_allclose(out, special.gammainc(3, x), atol=1e-15)
    assert out[-1] == 1.0


# --- angle density -----------------------------------------------------------


@pytest.mark.parametrize("n,m", PAIRS + [(16, 16), (16, 2), (8, 5)])
def test_angle_density_normalized(n, m):
    val, _ = integrate.quad(lambda p: an.marginal_pdf_phi(SystemDims(n, m), p), 0, math.pi / 2,
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_angle_density_examples():
    assert an.marginal_pdf_phi(SystemDims(2, 2), math.pi / 4) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        an.marginal_pdf_phi(SystemDims(2, 2), 2.0)
    with pytest.raises(ValueError):
        an.marginal_pdf_phi(SystemDims(2, 1), 0.5)


def test_angle_density_is_beta_in_sin_squared():
    d = SystemDims(5, 3)
    phi = np.linspace(0.05, 1.5, 9)
    t = np.sin(phi) ** 2
    # change of variables: f_t(t) = f_phi(phi) / (2 sin cos)
    lhs = an.marginal_pdf_phi(d, phi) / (2 * np.sin(phi) * np.cos(phi))
    np.testing.assert_allclose(lhs, stats.beta(d.n - d.m + 1, d.m - 1).pdf(t), rtol=1e-12)


def test_sampled_angles_fit_density():
    d = SystemDims(3, 3)
    H = complex_normal(stream_rng(99), (4000, 3, 3))
    q, _ = np.linalg.qr(H[:, :, 1:])
    h = H[:, :, 0]
    inside = np.einsum("nij,ni->nj", q.conj(), h)
    cos2 = np.sum(np.abs(inside) ** 2, axis=1) / np.sum(np.abs(h) ** 2, axis=1)
    phi = np.arccos(np.sqrt(np.clip(cos2, 0, 1)))

    def cdf(p):
        return np.array([integrate.quad(lambda u: an.marginal_pdf_phi(d, u), 0, v)[0] for v in np.atleast_1d(p)])

    assert stats.kstest(phi, cdf).pvalue > 0.01


# --- first-step bounds -------------------------------------------------------


def test_bound_limits():
    d = SystemDims(3, 3)
    assert an.f1_bound_suboptimal_quadrature(d, 0.0) == 0.0
    assert an.f1_bound_suboptimal_quadrature(d, 100.0) >= 1 - 1e-8
    assert an.f1_bound_closedform(d, 0.0) == 0.0
    assert an.f1_unordered(d, 0.0) == 0.0
    assert an.f1_lower_exchangeable(d, 0.0) == 0.0


@pytest.mark.parametrize("n,m", PAIRS)
def test_unordered_equals_lower_order_mrc(n, m):
    d = SystemDims(n, m)
    x = np.logspace(-3, np.log10(20), 12)
    np.testing.assert_allclose(an.f1_unordered(d, x), an.mrc_outage(n - m + 1, x), rtol=1e-8)


def test_unordered_example_and_degenerate_m1():
    assert an.f1_unordered(SystemDims(3, 2), 1.0) == pytest.approx(0.2642411, abs=1e-7)
    d1 = SystemDims(3, 1)
    assert an.f1_lower_exchangeable(d1, 0.7) == pytest.approx(an.f1_unordered(d1, 0.7))


@pytest.mark.parametrize("n,m", PAIRS)
def test_bound_chain_ordering(n, m):
    d = SystemDims(n, m)
    x = np.logspace(-3, np.log10(20), 10)
    lower = an.f1_lower_exchangeable(d, x)
    inner = an.f1_bound_suboptimal_quadrature(d, x)
    outer = an.f1_unordered(d, x)
    assert np.all(lower <= inner * (1 + 1e-12))
    assert np.all(inner <= outer * (1 + 1e-12))


def test_coefficient_table_composition_counts():
    t = an.build_coefficient_table(SystemDims(4, 3))
    for l in range(t.dims.m + 1):
        assert t.c[(0, l)] == 1
    for i in range(6):
        expected = Fraction(1, math.factorial(i)) if i <= t.dims.n - 1 else 0
        assert t.c.get((i, 1), 0) == expected


def test_table_for_3x3_has_explicit_coefficients():
    polys = an.build_coefficient_table(SystemDims(3, 3)).exponential_polynomials()
    assert polys[0] == [1]
    assert polys[1] == [-3]
    assert polys[2] == [3, Fraction(15, 8), Fraction(3, 8)]
    assert polys[3] == [-1, Fraction(-110, 81), Fraction(-7, 9), Fraction(-2, 9), Fraction(-1, 36)]


def test_closed_form_matches_explicit_3x3():
    x = np.logspace(-2, 1, 15)
    np.testing.assert_allclose(an.f1_bound_closedform(SystemDims(3, 3), x), an.bound_3x3_explicit(x), rtol=1e-11)
    np.testing.assert_allclose(an.f1_bound_suboptimal_quadrature(SystemDims(3, 3), x), an.bound_3x3_explicit(x),
                               rtol=1e-8)


@pytest.mark.parametrize("n,m", [(16, 16), (16, 2), (10, 5)])
def test_closed_form_large_systems(n, m):
    d = SystemDims(n, m)
    x = np.array([1e-3, 0.1, 3.0, 20.0])
    np.testing.assert_allclose(an.f1_bound_closedform(d, x), an.f1_bound_suboptimal_quadrature(d, x), rtol=1e-8)


@pytest.mark.parametrize("n,m", [(2, 2), (3, 2), (5, 2), (8, 2)])
def test_closed_form_small_x_asymptote_two_streams(n, m):
    d = SystemDims(n, m)
    x = 1e-4
    ratio = an.f1_bound_closedform(d, x) * math.factorial(d.diversity) / (x / 2) ** d.diversity
    assert ratio == pytest.approx(1.0, rel=0.02)


def test_closed_form_small_x_constant_3x3():
    # slope at 0 of the explicit polynomial form: 15/8 - 110/81 = 335/648
    polys = an.build_coefficient_table(SystemDims(3, 3)).exponential_polynomials()
    slope = sum(-l * q[0] + (q[1] if len(q) > 1 else 0) for l, q in polys.items())
    assert slope == Fraction(335, 648)
    x = 1e-6
    assert an.f1_bound_closedform(SystemDims(3, 3), x) / (x / 2) == pytest.approx(335 / 324, rel=1e-5)


@pytest.mark.parametrize("n,m", [(3, 3), (4, 3), (4, 4), (5, 4)])
def test_small_x_constant_exceeds_two_stream_value(n, m):
    d = SystemDims(n, m)
    r = [an.f1_bound_closedform(d, x) * math.factorial(d.diversity) / (x / 2) ** d.diversity for x in (1e-5, 1e-6)]
    assert r[0] == pytest.approx(r[1], rel=1e-4)
    assert 1.0 < r[1] < 1.15


def test_printed_prefactor_reading_is_caught():
    an.clear_discrepancy_log()
    d = SystemDims(5, 4)
    table = an.build_coefficient_table(d, convention="printed")
    x = np.array([0.05, 0.5, 2.0])
    with pytest.warns(an.FormulaIntegrityWarning):
        vals = an.f1_bound_closedform(d, x, table=table)
    np.testing.assert_allclose(vals, an.f1_bound_suboptimal_quadrature(d, x), rtol=1e-12)
    log = an.discrepancy_log()
    assert len(log) == 1 and log[0]["n"] == 5 and log[0]["convention"] == "printed"
    with pytest.raises(an.FormulaIntegrityError):
        an.f1_bound_closedform(d, x, table=table, strict=True)
    an.clear_discrepancy_log()


def test_printed_reading_agrees_where_factorials_coincide():
    # p! == p for p <= 2, so the printed reading is harmless up to n = 4
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        an.f1_bound_closedform(SystemDims(4, 3), 0.5, table=an.build_coefficient_table(SystemDims(4, 3), "printed"))


def test_table_dims_mismatch():
    with pytest.raises(ValueError):
        an.f1_bound_closedform(SystemDims(3, 3), 0.1, table=an.build_coefficient_table(SystemDims(3, 2)))
    with pytest.raises(ValueError):
        an.build_coefficient_table(SystemDims(3, 3), convention="other")


# --- approximations ----------------------------------------------------------


def test_highsnr_examples():
    assert an.f1_approx_highsnr(SystemDims(4, 4), 0.04) == pytest.approx(0.01)
    assert an.f1_approx_highsnr(SystemDims(3, 2), 0.2) == pytest.approx(0.005)
    assert an.f1_approx_highsnr(SystemDims(3, 3), 0.0) == 0.0
    assert an.f1_approx_highsnr(SystemDims(2, 2), 50.0) == 1.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 4), st.floats(1e-4, 0.5))
def test_joint_distribution_diagonal(m, extra, x):
    d = SystemDims(m + extra, m)
    assert an.joint_norm_distribution_approx(d, [x] * m) == pytest.approx(an.f1_approx_highsnr(d, x), rel=1e-12)


def test_joint_distribution_examples():
    d = SystemDims(2, 2)
    assert an.joint_norm_distribution_approx(d, [1.0, 1.0]) == pytest.approx(0.5)
    assert an.joint_norm_distribution_approx(d, [1e-12, 1.0]) < 1e-11
    with pytest.raises(ValueError):
        an.joint_norm_distribution_approx(d, [0.0, 1.0])
    with pytest.raises(ValueError):
        an.joint_norm_distribution_approx(d, [1.0])


def test_step_outages_3x3():
    assert an.step_outage_3x3(2, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert an.step_outage_3x3(3, 0.0) == 0.0
    assert an.step_outage_3x3(2, 1e-3) / 1e-6 == pytest.approx(1 / 8, rel=0.01)
    assert an.step_outage_3x3(3, 1e-2) / 1e-6 == pytest.approx(1 / 3, rel=0.02)
    assert an.step_outage_3x3_asymptote(2, 0.1) == pytest.approx(0.01 / 8)
    assert an.step_outage_3x3_asymptote(3, 0.1) == pytest.approx(1e-3 / 3)
    with pytest.raises(ValueError):
        an.step_outage_3x3(1, 0.1)


@pytest.mark.parametrize("n,m", PAIRS)
def test_diversity_order_slopes(n, m):
    d = SystemDims(n, m)
    for fn in (lambda x: an.f1_bound_closedform(d, x), lambda x: an.f1_unordered(d, x),
               lambda x: an.f1_approx_highsnr(d, x)):
        assert an.loglog_slope(fn) == pytest.approx(d.diversity, abs=0.05)


# --- average error rates -----------------------------------------------------


@pytest.mark.parametrize("k", [1, 2, 3, 5, 8])
@pytest.mark.parametrize("g", [0.1, 1.0, 10.0, 100.0, 1e4])
def test_mrc_avg_ber_bpsk_closed_form(k, g):
    assert an.mrc_avg_ber(k, g, Modulation.BPSK) == pytest.approx(proakis_bpsk(k, g), rel=1e-9, abs=1e-15)


@pytest.mark.parametrize("k", [1, 2, 4, 7])
@pytest.mark.parametrize("g", [0.01, 2.0, 30.0, 1e3])
def test_mrc_avg_ber_bfsk_closed_form(k, g):
    assert an.mrc_avg_ber(k, g, Modulation.BFSK) == pytest.approx(0.5 * (1 + g / 2) ** -k, abs=1e-10)


def test_mrc_avg_ber_examples():
    assert an.mrc_avg_ber(1, 2.0, "bfsk") == pytest.approx(0.25)
    assert an.mrc_avg_ber(2, 0.0, "bpsk") == 0.5
    assert an.mrc_avg_ber(2, 1e-9, "bfsk") == pytest.approx(0.5, abs=1e-8)
    for n, m in [(3, 3), (4, 3), (5, 3)]:
        d = SystemDims(n, m)
        g = 1000.0
        got = an.mrc_avg_ber(d.diversity, m * g, "bfsk")
        assert got == pytest.approx(an.bler_approx(d, g, "bfsk", "power-law"), rel=0.05)
    with pytest.raises(ValueError):
        an.mrc_avg_ber(0, 1.0, "bpsk")


def test_bler_approx_examples():
    d4 = SystemDims(4, 4)
    assert an.bler_approx(d4, 100.0, "bpsk", "power-law") == pytest.approx(6.25e-4)
    g = np.logspace(-1, 4, 20)
    for d in (SystemDims(3, 3), SystemDims(4, 3)):
        assert np.all(an.bler_approx(d, g, "bpsk", "two-step") >= an.bler_approx(d, g, "bpsk", "mrc-gain"))
    ratio = an.bler_approx(SystemDims(2, 2), 50.0, "bpsk", "power-law") / \
        an.bler_approx(SystemDims(4, 4), 50.0, "bpsk", "power-law")
    assert ratio == pytest.approx(2.0)
    with pytest.raises(ValueError):
        an.bler_approx(d4, 10.0, "bpsk", "other")


def test_tber_approx():
    d = SystemDims(3, 3)
    g = np.array([3.0, 30.0, 300.0])
    b = an.bler_approx(d, g, "bpsk", "mrc-gain")
    np.testing.assert_array_equal(an.tber_approx(d, g, "bpsk"), b / 3)
    assert np.all(b / 3 <= an.tber_approx(d, g, "bpsk")) and np.all(an.tber_approx(d, g, "bpsk") <= b)
    r = an.tber_approx(SystemDims(4, 4), 100.0, "bpsk", "square") / an.tber_approx(SystemDims(2, 2), 100.0, "bpsk",
                                                                                   "square")
    assert r == pytest.approx(0.25)
    with pytest.raises(ValueError):
        an.tber_approx(SystemDims(4, 3), 1.0, "bpsk", "square")


def test_linear_penalty_ratios():
    rep = an.linear_bler_approx(SystemDims(4, 3), 1e4, "bpsk")
    assert rep.ratio_linear_unordered == pytest.approx(3.0, rel=0.03)
    assert rep.bler_linear_approx == pytest.approx(3 * rep.p_e1_unordered)
    sq = an.linear_bler_approx(SystemDims(3, 3), 1e4, "bpsk", target=1e-3)
    assert sq.ratio_linear_ordered == pytest.approx(9.0, rel=0.03)
    assert sq.penalty_db["linear_vs_ordered"] == pytest.approx(20 * math.log10(3), abs=0.1)
    one = an.linear_bler_approx(SystemDims(3, 1), 10.0, "bpsk")
    assert one.bler_linear_exact == pytest.approx(one.bler_unordered) == pytest.approx(one.bler_ordered)


def test_solve_snr_for_target():
    db = an.solve_snr_for_target(lambda g: 1 / (4 * g), 1e-3)
    assert db == pytest.approx(10 * math.log10(250), abs=0.01)
    with pytest.raises(ValueError):
        an.solve_snr_for_target(lambda g: 0.4, 1e-3)


def test_genie_chain_analytic():
    d = SystemDims(4, 4)
    chain = an.genie_lower_bound_chain(d, x=0.1)
    assert [l.k for l in chain.links] == [4, 3, 2]
    assert chain.links[-1].value == pytest.approx(an.f1_bound_closedform(SystemDims(4, 2), 0.1))
    assert [l.source for l in chain.links[:2]] == ["mc-required", "mc-required"]
    full = an.genie_lower_bound_chain(d, x=0.1, estimator=lambda s: an.f1_bound_closedform(s, 0.1))
    assert full.links[0].value == pytest.approx(an.f1_bound_closedform(d, 0.1))
    assert full.monotone


@pytest.mark.parametrize("n,m", PAIRS)
def test_every_analytic_curve_is_a_monotone_probability(n, m):
    d = SystemDims(n, m)
    x = np.logspace(-3, 1.5, 40)
    curves = [an.mrc_outage(n, x), an.f1_unordered(d, x), an.f1_lower_exchangeable(d, x),
              an.f1_bound_closedform(d, x), an.f1_bound_asymptote(d, x), an.f1_approx_highsnr(d, x)]
    if (n, m) == (3, 3):
        curves += [an.step_outage_3x3(2, x), an.step_outage_3x3(3, x), an.bound_3x3_explicit(x)]
    for c in curves:
        c = np.asarray(c)
        assert np.all((c >= 0) & (c <= 1))
        assert np.all(np.diff(c) >= -1e-15)
    g = np.logspace(-1, 4, 30)
    for c in [an.bler_approx(d, g, "bpsk", v) for v in ("mrc-gain", "power-law", "two-step")] + \
             [an.tber_approx(d, g, "bfsk")]:
        assert np.all((c >= 0) & (c <= 1))
        assert np.all(np.diff(c) <= 1e-15)
