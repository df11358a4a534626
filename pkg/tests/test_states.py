import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phlim.errors import (ArgumentError, ContractError, CoverageError, DegenerateStateError,
                          DomainError)
from phlim.kspace import CartesianKGrid, SphericalKGrid
from phlim.states import (BiphotonGrid, BiphotonSpec, DiscreteModeState, GaussianPacketSpec,
                          ModeOccupation, WavePacket, is_normalized, make_biphoton,
                          make_gaussian_packet, marginal_density, normalize, overlap, superpose)


@pytest.fixture(scope="module")
def grid():
    return SphericalKGrid.for_gaussian((0, 0, 5), 1.0, n_k=64, n_theta=48, n_phi=32)


class TestDiscrete:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(DomainError):
            DiscreteModeState.ensemble([(0, 0, 1), (1, 0, 0)], 1, [0.5, 0.6])

    def test_duplicate_mode_in_configuration(self):
        m = ModeOccupation((0, 0, 1), 0, 1)
        with pytest.raises(ArgumentError):
            DiscreteModeState(((m, m),), (1.0,))

    def test_two_mode_zero_angle_is_fock(self):
        s = DiscreteModeState.two_mode(4, 2.0, 0.0)
        assert len(s.terms) == 1 and s.terms[0][0].n == 4

    def test_two_mode_geometry(self):
        s = DiscreteModeState.two_mode(2, 1.0, math.pi / 3)
        k1, k2 = (m.k.as_array() for m in s.terms[0])
        assert math.isclose(np.dot(k1, k2), math.cos(math.pi / 3), rel_tol=1e-14)

    def test_odd_photon_number(self):
        with pytest.raises(DomainError):
            DiscreteModeState.two_mode(3, 1.0, 0.5)

    def test_pure_cancellation(self):
        s = DiscreteModeState.ensemble([(0, 0, 1), (0, 0, 1)], 1, [0.5, 0.5], [0.0, math.pi],
                                       kind="pure_superposition")
        with pytest.raises(DegenerateStateError):
            s.effective_terms()

    def test_pure_distinct_terms_keep_weights(self):
        s = DiscreteModeState.ensemble([(0, 0, 1), (1, 0, 0)], 1, [0.3, 0.7], [0.0, 1.0],
                                       kind="pure_superposition")
        assert [w for _, w in s.effective_terms()] == pytest.approx([0.3, 0.7])


class TestGaussian:
    def test_normalized(self, grid):
        p = make_gaussian_packet(GaussianPacketSpec((0, 0, 5), 1.0), grid)
        assert abs(p.norm - 1.0) < 1e-12 and is_normalized(p)

    def test_coverage_error(self):
        g = SphericalKGrid(32, 16, 16, 6.0)
        with pytest.raises(CoverageError):
            make_gaussian_packet(GaussianPacketSpec((0, 0, 5), 1.0), g)

    def test_sigma_domain(self):
        with pytest.raises(DomainError):
            GaussianPacketSpec((0, 0, 5), 0.0)

    @settings(max_examples=10, deadline=None)
    @given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
    def test_position_offset_keeps_density(self, x, y, z):
        g = SphericalKGrid.for_gaussian((0, 0, 5), 1.0, n_k=24, n_theta=16, n_phi=16)
        a = make_gaussian_packet(GaussianPacketSpec((0, 0, 5), 1.0), g)
        b = make_gaussian_packet(GaussianPacketSpec((0, 0, 5), 1.0, (x, y, z)), g)
        assert np.allclose(np.abs(a.amplitude), np.abs(b.amplitude), atol=1e-14)

    def test_equal_polarizations_same_density(self, grid):
        one = make_gaussian_packet(GaussianPacketSpec((0, 0, 5), 1.0), grid)
        two = make_gaussian_packet(GaussianPacketSpec((0, 0, 5), 1.0, polarization=(1, 1j)), grid)
        assert two.n_pol == 2
        assert np.allclose(marginal_density(one), marginal_density(two), atol=1e-15)

    def test_cartesian_tail_mass(self):
        spec = GaussianPacketSpec((0, 0, 3), 1.0)
        assert spec.tail_mass(CartesianKGrid(16, 11.0)) < 1e-10
        assert spec.tail_mass(CartesianKGrid(16, 4.0)) > 1e-3


class TestPackets:
    def test_exactly_one_driver(self, grid):
        with pytest.raises(ArgumentError):
            WavePacket(grid)

    def test_non_finite_samples(self):
        g = SphericalKGrid(2, 2, 3, 1.0)
        s = np.ones((1,) + g.shape)
        s[0, 0, 0, 0] = np.nan
        with pytest.raises(ContractError):
            WavePacket(g, samples=s)

    def test_normalize_zero(self):
        g = SphericalKGrid(2, 2, 3, 1.0)
        with pytest.raises(DegenerateStateError):
            normalize(WavePacket(g, samples=np.zeros((1,) + g.shape)))

    def test_marginal_requires_normalization(self):
        g = SphericalKGrid(2, 2, 3, 1.0)
        with pytest.raises(ContractError):
            marginal_density(WavePacket(g, samples=2 * np.ones((1,) + g.shape)))

    def test_superpose_cancel(self, grid):
        p = make_gaussian_packet(GaussianPacketSpec((0, 0, 5), 1.0), grid)
        with pytest.raises(DegenerateStateError):
            superpose(p, p, math.pi)

    def test_superpose_orthogonal_halves(self, grid):
        a = make_gaussian_packet(GaussianPacketSpec((0, 0, 5), 1.0), grid)
        b = make_gaussian_packet(GaussianPacketSpec((0, 0, -5), 1.0), grid)
        assert abs(overlap(a, b)) < 1e-10
        s = superpose(a, b, 0.3)
        assert abs(s.norm - 1.0) < 1e-12
        assert abs(overlap(a, s) - 1 / math.sqrt(2)) < 1e-6

    def test_photon_weights(self, grid):
        p = make_gaussian_packet(GaussianPacketSpec((0, 0, 5), 1.0, photons=3), grid)
        assert p.mean_photons == pytest.approx(3.0)


class TestBiphoton:
    SPEC = BiphotonSpec(1e-3 * 1e6, 2e-3 * 1e6, 405e-9 * 1e6, 1.66)  # lengths in um

    def test_derived_scales(self):
        s = self.SPEC
        assert s.k_deg == pytest.approx(math.pi / s.lambda_p)
        assert s.regime_length == pytest.approx(math.sqrt(s.L * s.lambda_p))
        assert s.in_regime
        assert s.schmidt_number == pytest.approx(
            2 * math.pi * s.w_p * math.sqrt(1.66) / math.sqrt(s.L * s.lambda_p))

    def test_packet(self):
        p = make_biphoton(self.SPEC)
        assert p.photons == (2,) and abs(p.norm - 1.0) < 1e-12

    def test_grid_weights_sum(self):
        g = BiphotonGrid.for_spec(self.SPEC)
        area = (2 * g.sum_extent) ** 2 * (2 * g.diff_extent) ** 2 / 4
        assert float(np.sum(np.broadcast_to(g.weights, g.shape))) == pytest.approx(area)

    def test_unresolved_sinc(self):
        spec = BiphotonSpec(1e3, 2e3, 0.405, 1.66, n_sum=8, sum_extent=5.0)
        with pytest.raises(CoverageError):
            make_biphoton(spec)
