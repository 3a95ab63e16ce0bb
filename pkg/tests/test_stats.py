"""Chi-square / noncentral chi-square routines against scipy oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from gridmtd.stats import (DetectionSpec, chi2_cdf, chi2_pdf, chi2_quantile,
                           chi2_sf, gammainc_lower, gammainc_upper,
                           lambda_for_detection, ncx2_cdf, ncx2_sf)

DOFS = [1, 2, 5, 7, 13, 26, 82, 200]
XS = [0.01, 0.5, 1.0, 3.0, 10.0, 40.0, 120.0, 400.0]


@pytest.mark.parametrize("dof", DOFS)
@pytest.mark.parametrize("x", XS)
def test_chi2_cdf_matches_scipy(dof, x):
    assert chi2_cdf(dof, x) == pytest.approx(sps.chi2.cdf(x, dof), abs=1e-10)
    assert chi2_sf(dof, x) == pytest.approx(sps.chi2.sf(x, dof), abs=1e-10)


@pytest.mark.parametrize("dof", DOFS)
@pytest.mark.parametrize("x", [0.1, 1.0, 5.0, 30.0, 100.0])
def test_chi2_pdf_matches_scipy(dof, x):
    assert chi2_pdf(dof, x) == pytest.approx(sps.chi2.pdf(x, dof), rel=1e-9)


@pytest.mark.parametrize("dof", DOFS)
@pytest.mark.parametrize("alpha", [0.001, 0.01, 0.02, 0.05, 0.2, 0.5, 0.9])
def test_chi2_quantile_tail_semantics(dof, alpha):
    q = chi2_quantile(dof, alpha)
    # upper-tail convention: P(X > q) = alpha
    assert q == pytest.approx(sps.chi2.isf(alpha, dof), rel=1e-9)
    assert chi2_sf(dof, q) == pytest.approx(alpha, rel=1e-8)


def test_gammainc_pair_sums_to_one():
    for a in [0.5, 1.0, 3.5, 41.0]:
        for x in [0.2, 1.0, 7.0, 60.0]:
            assert gammainc_lower(a, x) + gammainc_upper(a, x) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("dof,lam", [(1, 0.5), (2, 3.0), (7, 30.18),
                                     (13, 100.0), (82, 500.0), (82, 5103.74)])
def test_ncx2_sf_matches_scipy(dof, lam):
    for x in [0.5 * dof, float(dof), dof + lam, 2 * (dof + lam)]:
        assert ncx2_sf(dof, lam, x) == pytest.approx(sps.ncx2.sf(x, dof, lam), abs=5e-9)
        assert ncx2_cdf(dof, lam, x) == pytest.approx(sps.ncx2.cdf(x, dof, lam), abs=5e-9)


def test_ncx2_zero_noncentrality_reduces_to_chi2():
    for dof in [1, 7, 40]:
        for x in [0.5, 4.0, 20.0]:
            assert ncx2_sf(dof, 0.0, x) == pytest.approx(chi2_sf(dof, x), abs=1e-10)


def test_lambda_for_detection_is_root():
    for dof, alpha, rho in [(7, 0.02, 0.98), (13, 0.05, 0.9), (82, 0.02, 0.98)]:
        tau = chi2_quantile(dof, alpha)
        lam = lambda_for_detection(dof, tau, rho)
        assert ncx2_sf(dof, lam, tau) == pytest.approx(rho, abs=1e-8)
        # scipy cross-check of the same root
        assert sps.ncx2.sf(tau, dof, lam) == pytest.approx(rho, abs=1e-6)


def test_lambda_for_detection_monotone_in_rho():
    tau = chi2_quantile(7, 0.02)
    lams = [lambda_for_detection(7, tau, r) for r in (0.5, 0.8, 0.95, 0.98)]
    assert all(a < b for a, b in zip(lams, lams[1:]))


def test_detection_spec_reference_point():
    # frozen reference: dof 7, alpha 0.02, rho 0.98
    spec = DetectionSpec.build(dof=7, alpha=0.02, rho=0.98)
    assert spec.tau == pytest.approx(16.62242, abs=1e-4)
    assert spec.lam == pytest.approx(30.18278, abs=1e-4)


@given(dof=st.integers(min_value=1, max_value=150),
       alpha=st.floats(min_value=1e-4, max_value=0.5))
@settings(max_examples=60, deadline=None)
def test_quantile_roundtrip_property(dof, alpha):
    q = chi2_quantile(dof, alpha)
    assert math.isfinite(q) and q > 0
    assert chi2_sf(dof, q) == pytest.approx(alpha, rel=1e-6, abs=1e-9)


@given(dof=st.integers(min_value=1, max_value=100),
       lam=st.floats(min_value=0.0, max_value=300.0),
       x=st.floats(min_value=1e-3, max_value=800.0))
@settings(max_examples=60, deadline=None)
def test_ncx2_sf_bounds_property(dof, lam, x):
    s = ncx2_sf(dof, lam, x)
    assert 0.0 <= s <= 1.0
    # adding noncentrality shifts mass upward
    assert s >= ncx2_sf(dof, 0.0, x) - 1e-9


def test_invalid_arguments_raise():
    with pytest.raises(ValueError):
        chi2_quantile(0, 0.05)
    with pytest.raises(ValueError):
        chi2_quantile(7, 0.0)
    with pytest.raises(ValueError):
        chi2_quantile(7, 1.0)
    with pytest.raises(ValueError):
        lambda_for_detection(7, 10.0, 1.5)
    with pytest.raises(ValueError):
        ncx2_sf(7, -1.0, 3.0)
