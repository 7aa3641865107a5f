"""Tests for the closed-form photon statistics."""

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

# Add the repository root to the path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config import SourceParams
from src.errors import ParameterValidationError, TruncationError
from src.models.distribution import PhotonDistribution
from src.stats_core import (
    add_background,
    apply_read_efficiency,
    cs_holds_classical,
    ideal_cs_ratio_model,
    ideal_cs_ratio_paper,
    minimal_cutoff,
    moments,
    pair_distribution,
    predict_report,
    thin,
    twin_thermal_distribution,
)

efficiencies = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
small_p = st.floats(min_value=1e-3, max_value=0.2, allow_nan=False)
noise = st.floats(min_value=1e-3, max_value=0.3, allow_nan=False)


def vacuum(cutoff=20):
    pmf = np.zeros((cutoff + 1, cutoff + 1))
    pmf[0, 0] = 1.0
    return PhotonDistribution(pmf)


class TestPairDistribution:
    """Test cases for the diagonal pair law."""

    def test_vacuum_at_zero_excitation(self):
        """Test p = 0 puts all mass on (0, 0)."""
        d = pair_distribution(0.0, cutoff=4)

        assert d.pmf[0, 0] == 1.0
        assert d.pmf.sum() == 1.0
        assert d.truncation_mass == 0.0

    def test_first_terms(self):
        """Test P(0,0) and P(1,1) at p = 0.01."""
        d = pair_distribution(0.01, cutoff=20)

        assert d.pmf[0, 0] == pytest.approx(1 / 1.01, abs=1e-15)
        assert d.pmf[1, 1] == pytest.approx(0.01 / 1.01**2, abs=1e-15)
        assert d.pmf[1, 0] == 0.0

    def test_only_diagonal(self):
        """Test the two modes always carry equal photon numbers."""
        d = pair_distribution(0.1)

        assert np.count_nonzero(d.pmf - np.diag(np.diag(d.pmf))) == 0

    def test_marginal_is_thermal(self):
        """Test each marginal is thermal with mean p."""
        p = 0.05
        d = pair_distribution(p)
        n = np.arange(d.pmf.shape[0])

        assert np.allclose(d.marginal(1), p**n / (1 + p) ** (n + 1), rtol=0, atol=1e-15)
        assert float(n @ d.marginal(2)) == pytest.approx(p, abs=1e-12)

    def test_normalization(self):
        """Test pmf and truncation mass sum to one."""
        d = pair_distribution(0.3)

        assert d.pmf.sum() + d.truncation_mass == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("p", [-0.1, 1.0, 1.5, float("nan")])
    def test_invalid_p(self, p):
        """Test p outside [0, 1) is rejected."""
        with pytest.raises(ParameterValidationError):
            pair_distribution(p)

    def test_cutoff_too_small(self):
        """Test a cutoff that drops too much mass raises."""
        with pytest.raises(TruncationError):
            pair_distribution(0.5, cutoff=5)


class TestTwinThermal:
    """Test cases for the classical twin-beam source."""

    def test_marginal_is_thermal(self):
        """Test the twin source has the same thermal marginals as the pair source."""
        p = 0.05
        d = twin_thermal_distribution(p)
        n = np.arange(6)

        assert np.allclose(d.marginal(1)[:6], p**n / (1 + p) ** (n + 1), rtol=0, atol=1e-12)

    def test_correlations_are_classical(self):
        """Test g11 = g22 = g12 = 2 and ratio 1."""
        m = moments(twin_thermal_distribution(0.05))

        assert m.g2_11 == pytest.approx(2.0, abs=1e-6)
        assert m.g2_22 == pytest.approx(2.0, abs=1e-6)
        assert m.g2_12 == pytest.approx(2.0, abs=1e-6)
        assert m.cs_ratio == pytest.approx(1.0, abs=1e-6)

    def test_symmetric(self):
        """Test P(n1, n2) = P(n2, n1)."""
        d = twin_thermal_distribution(0.2)

        assert np.allclose(d.pmf, d.pmf.T, rtol=1e-12, atol=0)


class TestThinning:
    """Test cases for binomial loss and the read efficiency."""

    def test_unit_efficiency_is_identity(self):
        """Test eta = 1 leaves the distribution unchanged."""
        d = pair_distribution(0.05)

        assert np.array_equal(thin(d, 1.0, 1.0).pmf, d.pmf)
        assert np.array_equal(apply_read_efficiency(d, 1.0).pmf, d.pmf)

    def test_zero_read_efficiency(self):
        """Test zeta = 0 leaves field 2 in vacuum."""
        d = apply_read_efficiency(pair_distribution(0.05), 0.0)

        assert d.marginal(2)[0] == pytest.approx(1.0, abs=1e-12)

    def test_read_efficiency_splits_pair(self):
        """Test a single pair survives the read with probability zeta."""
        d = pair_distribution(0.01)
        q = d.pmf[1, 1]
        out = apply_read_efficiency(d, 0.6)

        assert out.pmf[1, 1] == pytest.approx(0.6 * q, rel=1e-12)
        assert out.pmf[1, 0] == pytest.approx(0.4 * q, rel=1e-12)

    def test_mean_scales_with_efficiency(self):
        """Test the field-1 mean becomes eta1 * p."""
        m = moments(thin(pair_distribution(0.01), 0.15, 1.0))

        assert m.mean1 == pytest.approx(0.0015, abs=1e-12)

    def test_mass_preserved(self):
        """Test thinning keeps pmf + truncation equal to one."""
        d = thin(pair_distribution(0.2), 0.3, 0.7)

        assert d.pmf.sum() + d.truncation_mass == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("eta", [-0.01, 1.01])
    def test_invalid_efficiency(self, eta):
        """Test efficiencies outside [0, 1] are rejected."""
        with pytest.raises(ParameterValidationError):
            thin(pair_distribution(0.05), eta, 1.0)

    @settings(max_examples=50, deadline=None)
    @given(p=small_p, a=efficiencies, b=efficiencies)
    def test_composition(self, p, a, b):
        """Test thinning by a then b equals thinning by a * b."""
        d = pair_distribution(p)
        twice = thin(thin(d, a, 1.0), b, 1.0)
        once = thin(d, a * b, 1.0)

        assert twice.allclose(once, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(p=small_p, a=efficiencies, b=efficiencies)
    def test_intensity_correlations_survive_loss(self, p, a, b):
        """Test binomial loss leaves every g unchanged."""
        m = moments(thin(pair_distribution(p), max(a, 1e-3), max(b, 1e-3)))

        assert m.g2_11 == pytest.approx(2.0, rel=1e-8)
        assert m.g2_12 == pytest.approx(2.0 + 1.0 / p, rel=1e-8)


class TestBackground:
    """Test cases for additive Poisson noise."""

    def test_zero_background_is_identity(self):
        """Test zero means return the input."""
        d = pair_distribution(0.05)

        assert add_background(d, 0.0, 0.0) is d

    def test_vacuum_becomes_poisson(self):
        """Test noise on vacuum gives Poisson marginals."""
        d = add_background(vacuum(), 0.1, 0.2)
        k = np.arange(11)

        assert np.allclose(d.marginal(1)[:11], stats.poisson.pmf(k, 0.1), rtol=0, atol=1e-12)
        assert np.allclose(d.marginal(2)[:11], stats.poisson.pmf(k, 0.2), rtol=0, atol=1e-12)

    def test_independent_poisson_is_uncorrelated(self):
        """Test two independent Poisson modes have every g equal to 1."""
        m = moments(add_background(vacuum(), 0.3, 0.2))

        assert m.g2_11 == pytest.approx(1.0, abs=1e-9)
        assert m.g2_22 == pytest.approx(1.0, abs=1e-9)
        assert m.g2_12 == pytest.approx(1.0, abs=1e-9)

    def test_overflow_raises(self):
        """Test noise pushing mass past the cutoff is caught."""
        with pytest.raises(TruncationError):
            add_background(pair_distribution(0.05), 5.0, 0.0)

    def test_negative_mean(self):
        """Test negative noise is rejected."""
        with pytest.raises(ParameterValidationError):
            add_background(pair_distribution(0.05), -0.1, 0.0)

    @settings(max_examples=40, deadline=None)
    @given(p=small_p, lam1=noise, lam2=noise)
    def test_background_lowers_cross_correlation(self, p, lam1, lam2):
        """Test any positive noise strictly lowers g12 but keeps it above one."""
        d = pair_distribution(p)
        before = moments(d).g2_12
        after = moments(add_background(d, lam1, lam2)).g2_12

        assert 1.0 < after < before


class TestMoments:
    """Test cases for the moment computation."""

    @pytest.mark.parametrize("p", [1e-3, 1e-2, 1e-1])
    def test_ideal_pair(self, p):
        """Test g11 = g22 = 2 and g12 = 2 + 1/p for the ideal source."""
        m = moments(pair_distribution(p))

        assert m.g2_11 == pytest.approx(2.0, abs=1e-8)
        assert m.g2_22 == pytest.approx(2.0, abs=1e-8)
        assert m.g2_12 == pytest.approx(2.0 + 1.0 / p, rel=1e-8)

    def test_p_001_cross_correlation(self):
        """Test g12 = 102 at p = 0.01."""
        assert moments(pair_distribution(0.01)).g2_12 == pytest.approx(102.0, rel=1e-8)

    def test_zero_mean_gives_none(self):
        """Test normalized moments are undefined for empty modes."""
        m = moments(vacuum())

        assert m.mean1 == 0.0
        assert m.g2_11 is None
        assert m.g2_12 is None
        assert m.cs_ratio is None

    def test_one_empty_mode(self):
        """Test only the quantities involving the empty mode are undefined."""
        m = moments(add_background(vacuum(), 0.2, 0.0))

        assert m.g2_11 == pytest.approx(1.0, abs=1e-9)
        assert m.g2_22 is None
        assert m.g2_12 is None


class TestIdealRatios:
    """Test cases for the closed-form violation ratios."""

    def test_quoted_formula(self):
        """Test [(1+p)/(2p)]^2 values."""
        assert ideal_cs_ratio_paper(0.01) == pytest.approx(2550.25, rel=1e-12)
        assert ideal_cs_ratio_paper(0.5) == pytest.approx(2.25, rel=1e-12)
        assert ideal_cs_ratio_paper(1.0) == pytest.approx(1.0, rel=1e-12)

    def test_model_formula_matches_oracle(self):
        """Test the pair-law ratio equals the moments of the ideal source."""
        for p in (0.005, 0.01, 0.05):
            assert moments(pair_distribution(p)).cs_ratio == pytest.approx(ideal_cs_ratio_model(p), rel=1e-8)

    def test_formulas_differ_by_known_factor(self):
        """Test model / quoted = ((1+2p)/(1+p))^2."""
        for p in (0.005, 0.02, 0.05):
            expected = ((1 + 2 * p) / (1 + p)) ** 2
            assert ideal_cs_ratio_model(p) / ideal_cs_ratio_paper(p) == pytest.approx(expected, rel=1e-12)

    def test_undefined_at_zero(self):
        """Test p = 0 has no ratio."""
        with pytest.raises(ParameterValidationError):
            ideal_cs_ratio_paper(0.0)
        with pytest.raises(ParameterValidationError):
            ideal_cs_ratio_model(0.0)


class TestCsHoldsClassical:
    """Test cases for the exact Cauchy-Schwarz check."""

    def test_measured_values(self):
        """Test the T = 60 ns measurement violates the inequality."""
        verdict = cs_holds_classical(1.739, 1.710, 2.335)

        assert verdict.ratio == pytest.approx(1.8335, abs=1e-3)
        assert verdict.violated

    def test_expanded_gate_values(self):
        """Test the T = 140 ns style values still violate."""
        verdict = cs_holds_classical(1.72, 1.52, 2.45)

        assert verdict.ratio == pytest.approx(2.296, abs=1e-3)
        assert verdict.violated

    def test_boundary(self):
        """Test ratio 1 is not a violation."""
        verdict = cs_holds_classical(2.0, 2.0, 2.0)

        assert verdict.ratio == 1.0
        assert not verdict.violated

    @pytest.mark.parametrize("values", [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, float("nan"))])
    def test_invalid(self, values):
        """Test non-positive inputs are rejected."""
        with pytest.raises(ParameterValidationError):
            cs_holds_classical(*values)

    @settings(max_examples=40, deadline=None)
    @given(
        p=st.floats(min_value=1e-3, max_value=0.3, allow_nan=False),
        eta1=st.floats(min_value=0.05, max_value=1.0, allow_nan=False),
        eta2=st.floats(min_value=0.05, max_value=1.0, allow_nan=False),
        bg1=st.floats(min_value=0.0, max_value=0.2, allow_nan=False),
        bg2=st.floats(min_value=0.0, max_value=0.2, allow_nan=False),
    )
    def test_classical_sources_never_violate(self, p, eta1, eta2, bg1, bg2):
        """Test shared-intensity sources with Poisson noise stay at R <= 1."""
        source = SourceParams(p=p, eta1=eta1, eta2=eta2, bg1=bg1, bg2=bg2, source_model="classical_twin")
        m = predict_report(source)

        assert m.cs_ratio <= 1.0 + 1e-9


class TestPredictReport:
    """Test cases for the full analytic chain."""

    @pytest.mark.parametrize(
        "source",
        [
            SourceParams(p=0.05, zeta=0.6, eta1=0.15, eta2=0.15, bg1=0.02, bg2=0.01, leak2=0.005),
            SourceParams(p=0.3, zeta=0.9, eta1=0.5, eta2=0.7, bg1=0.1, bg2=0.05),
            SourceParams(p=0.01),
        ],
    )
    def test_matches_closed_form_moments(self, source):
        """Test the chained pmf reproduces the factorial moments computed by hand."""
        s1 = source.p * source.eta1
        s2 = source.p * source.zeta * source.eta2
        lam1, lam2 = source.bg1, source.bg2 + source.leak2
        m1, m2 = s1 + lam1, s2 + lam2
        # thermal signal: E[n(n-1)] = 2 mean^2, pair: E[n1 n2] = eta1 eta2' (2p^2 + p)
        factorial1 = 2 * s1**2 + 2 * s1 * lam1 + lam1**2
        factorial2 = 2 * s2**2 + 2 * s2 * lam2 + lam2**2
        cross = source.eta1 * source.zeta * source.eta2 * (2 * source.p**2 + source.p) + s1 * lam2 + lam1 * s2 + lam1 * lam2

        m = predict_report(source)

        assert m.mean1 == pytest.approx(m1, rel=1e-9)
        assert m.mean2 == pytest.approx(m2, rel=1e-9)
        assert m.g2_11 == pytest.approx(factorial1 / m1**2, rel=1e-8)
        assert m.g2_22 == pytest.approx(factorial2 / m2**2, rel=1e-8)
        assert m.g2_12 == pytest.approx(cross / (m1 * m2), rel=1e-8)

    def test_background_only(self):
        """Test noise without a source is uncorrelated."""
        m = predict_report(SourceParams(p=0.0, bg1=0.1, bg2=0.2))

        assert m.g2_11 == pytest.approx(1.0, abs=1e-9)
        assert m.g2_12 == pytest.approx(1.0, abs=1e-9)
        assert m.cs_ratio == pytest.approx(1.0, abs=1e-9)

    def test_cutoff_grows_with_p(self):
        """Test large p gets a cutoff that meets the threshold."""
        assert minimal_cutoff(0.99) > 20
        with pytest.raises(TruncationError):
            pair_distribution(0.99, cutoff=20)
        for p in (0.01, 0.5, 0.99):
            pair_distribution(p, cutoff=minimal_cutoff(p))

    def test_high_p_prediction(self):
        """Test the oracle works at the calibration bound p = 0.99."""
        m = predict_report(SourceParams(p=0.99, zeta=0.6, eta1=0.15, eta2=0.15, bg1=0.024, bg2=0.019))

        assert 1.0 < m.g2_11 < 2.0
        assert m.g2_12 > 2.0
