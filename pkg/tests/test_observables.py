import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import GAUSSIAN_ORACLE, gaussian
from phlim.errors import ContractError, DomainError
from phlim.observables import (Observables, biphoton_mass_estimate, closed_form_gaussian_energy,
                               closed_form_gaussian_mass, closed_form_mixed_mass,
                               closed_form_two_mode_mass, gaussian_beta_exact,
                               gaussian_beta_leading, gaussian_energy_excess, observables_discrete,
                               observables_packet, volume_scaling_check)
from phlim.states import BiphotonSpec, DiscreteModeState, make_biphoton

angles = st.floats(0.0, math.pi)


class TestFromMoments:
    def test_light_like_single_mode(self):
        o = Observables.from_moments(2.0, (0, 0, 2.0))
        assert o.mass == 0.0 and o.beta == 1.0

    def test_rest(self):
        o = Observables.from_moments(3.0, (0, 0, 0))
        assert o.mass == 3.0 and o.beta == 0.0 and o.direction == (0.0, 0.0, 0.0)

    def test_small_negative_clamped(self):
        with pytest.warns(RuntimeWarning):
            o = Observables.from_moments(1.0, (0, 0, 1.0 + 1e-12))
        assert o.mass == 0.0 and o.mass_clamped

    def test_large_negative_rejected(self):
        with pytest.raises(ContractError):
            Observables.from_moments(1.0, (0, 0, 1.1))

    @given(st.floats(0.1, 100), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_invariant(self, e, a, b, c):
        p = np.array([a, b, c])
        if np.linalg.norm(p) > 0.99 * e:
            return
        o = Observables.from_moments(e, p)
        assert math.isclose(o.mass ** 2, e * e - p @ p, rel_tol=1e-9, abs_tol=1e-12)


class TestDiscreteClosedForms:
    @given(st.sampled_from([2, 4, 6, 10]), st.floats(0.1, 10), angles)
    def test_two_mode(self, n, w, theta):
        m = observables_discrete(DiscreteModeState.two_mode(n, w, theta)).mass
        ref = closed_form_two_mode_mass(n, w, theta)
        assert math.isclose(m, ref, rel_tol=1e-12, abs_tol=1e-12 * n * w)

    def test_two_mode_limits(self):
        assert closed_form_two_mode_mass(4, 1.5, 0.0) == 0.0
        assert closed_form_two_mode_mass(4, 1.5, math.pi) == 6.0
        assert observables_discrete(DiscreteModeState.two_mode(4, 1.5, 0.0)).mass == 0.0

    @given(st.sampled_from([1, 2, 5]), st.floats(0.1, 10), angles)
    def test_mixed_half_weights(self, n, w, theta):
        ks = [(w * math.sin(theta / 2), 0, w * math.cos(theta / 2)),
              (-w * math.sin(theta / 2), 0, w * math.cos(theta / 2))]
        state = DiscreteModeState.ensemble(ks, n, [0.5, 0.5])
        ref = closed_form_mixed_mass([0.5, 0.5], [[0, theta], [theta, 0]], n, w)
        m = observables_discrete(state).mass
        assert math.isclose(m, ref, rel_tol=1e-12, abs_tol=1e-12 * n * w)
        # lambda = 1/2 mixture equals the two-mode state of the same total photons
        assert math.isclose(ref, closed_form_two_mode_mass(2 * n, w, theta) / 2,
                            rel_tol=1e-12, abs_tol=1e-14)

    def test_pure_and_mixed_agree(self):
        ks = [(0, 0, 1), (1, 0, 0), (0, 1, 0)]
        mixed = observables_discrete(DiscreteModeState.ensemble(ks, 2, [0.2, 0.3, 0.5]))
        pure = observables_discrete(DiscreteModeState.ensemble(
            ks, 2, [0.2, 0.3, 0.5], [0.0, 1.0, 2.0], kind="pure_superposition"))
        assert np.allclose(mixed.momentum, pure.momentum, rtol=1e-15, atol=1e-15)
        assert math.isclose(mixed.mass, pure.mass, rel_tol=1e-14)

    def test_hbar_scaling_leaves_beta(self):
        s = DiscreteModeState.two_mode(2, 1.0, 1.0)
        a, b = observables_discrete(s), observables_discrete(s, hbar=1e-34)
        assert a.beta == b.beta and math.isclose(b.mass, 1e-34 * a.mass, rel_tol=1e-15)

    def test_domain(self):
        with pytest.raises(DomainError):
            closed_form_two_mode_mass(3, 1.0, 1.0)
        with pytest.raises(DomainError):
            closed_form_two_mode_mass(2, 1.0, 4.0)


class TestGaussianClosedForms:
    @pytest.mark.parametrize("ratio", sorted(GAUSSIAN_ORACLE))
    def test_energy_against_oracle(self, ratio):
        e, m, b = GAUSSIAN_ORACLE[ratio]
        assert math.isclose(closed_form_gaussian_energy(ratio, 1.0), e, rel_tol=1e-14)
        assert math.isclose(closed_form_gaussian_mass(ratio, 1.0).mass, m, rel_tol=1e-12)
        assert math.isclose(gaussian_beta_exact(ratio, 1.0), b, rel_tol=1e-14)

    def test_excess_stable_for_narrow_packets(self):
        # E - k0 -> sigma^2 / (2 k0) for sigma << k0
        assert math.isclose(gaussian_energy_excess(1e6, 1.0), 5e-7, rel_tol=1e-6)
        assert closed_form_gaussian_mass(1e6, 1.0).mass == pytest.approx(1.0, rel=1e-9)

    def test_asymptote_flag(self):
        assert closed_form_gaussian_mass(10, 1.0).asymptote_valid
        assert not closed_form_gaussian_mass(2, 1.0).asymptote_valid

    def test_leading_beta(self):
        assert gaussian_beta_leading(10, 1.0) == pytest.approx(math.sqrt(0.99), abs=1e-15)

    @given(st.floats(0.5, 50), st.floats(0.1, 5))
    def test_mass_scales_with_sigma(self, ratio, sigma):
        a = closed_form_gaussian_mass(ratio, 1.0).mass
        b = closed_form_gaussian_mass(ratio * sigma, sigma).mass
        assert math.isclose(b, sigma * a, rel_tol=1e-12)


class TestPacketQuadrature:
    @pytest.mark.parametrize("ratio", [2, 5, 10, 20])
    def test_energy_mass_beta(self, ratio):
        e, m, b = GAUSSIAN_ORACLE[ratio]
        o = observables_packet(gaussian(ratio))
        assert math.isclose(o.energy, e, rel_tol=1e-12)
        assert math.isclose(o.mass, m, rel_tol=1e-9)
        assert math.isclose(o.beta, b, rel_tol=1e-12)

    def test_rotated_carrier(self):
        o = observables_packet(gaussian(5, axis=(1, -2, 0.5)))
        assert math.isclose(o.mass, GAUSSIAN_ORACLE[5][1], rel_tol=1e-9)
        assert np.allclose(o.direction, np.array([1, -2, 0.5]) / math.sqrt(5.25), atol=1e-12)

    def test_photon_number_scales_moments(self):
        from phlim.kspace import SphericalKGrid
        from phlim.states import GaussianPacketSpec, make_gaussian_packet
        g = SphericalKGrid.for_gaussian((0, 0, 5), 1.0)
        one = observables_packet(make_gaussian_packet(GaussianPacketSpec((0, 0, 5), 1.0), g))
        three = observables_packet(make_gaussian_packet(
            GaussianPacketSpec((0, 0, 5), 1.0, photons=3), g))
        assert math.isclose(three.mass, 3 * one.mass, rel_tol=1e-12)
        assert three.beta == one.beta

    def test_volume_scaling_small_family(self):
        table = volume_scaling_check([1.0, 2.0], k0_over_sigma=10)
        assert table.constant and table.spread < 1e-3


class TestBiphoton:
    def test_estimate_and_floor(self):
        spec = BiphotonSpec(1e3, 2e3, 0.405, 1.66)  # micrometres
        est = biphoton_mass_estimate(spec)
        assert est.in_regime and est.log_argument_valid
        assert est.mass_floor == pytest.approx(1 / 2e3)
        o = observables_packet(make_biphoton(spec))
        assert o.mass > est.mass_floor

    def test_out_of_regime_warns(self):
        with pytest.warns(RuntimeWarning):
            biphoton_mass_estimate(BiphotonSpec(10.0, 2e3, 0.405, 1.66))
