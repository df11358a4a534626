import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phlim.detection import (PacketSupport, detect, dispersion_gradient_check,
                             estimate_velocity_centroid, estimate_velocity_toa, intensity_record,
                             read_raster, synthesize_field, toa_slope_analytic, transit_window)
from phlim.errors import (ArgumentError, ConditioningError, CoverageError, OrderingError,
                          WindowError)
from phlim.kspace import CartesianKGrid
from phlim.observables import observables_packet
from phlim.states import GaussianPacketSpec, make_gaussian_packet


@pytest.fixture(scope="module")
def support(small_cartesian_packet):
    return PacketSupport.of(small_cartesian_packet)


@pytest.fixture(scope="module")
def beta(small_cartesian_packet):
    return observables_packet(small_cartesian_packet).beta


@pytest.fixture(scope="module")
def plane_packet():
    # plane records need a larger box than the field tests: the transit
    # tails are algebraic, so 64^3 cannot contain them at 1e-4
    spec = GaussianPacketSpec((0.0, 0.0, 5.0), 1.0)
    p = make_gaussian_packet(spec, CartesianKGrid.for_gaussian(spec.k0, 1.0, n=128))
    return p, PacketSupport.of(p)


@pytest.fixture(scope="module")
def records(plane_packet):
    p, support = plane_packet
    L = p.grid.box_length
    return tuple(intensity_record(p, z, transit_window(p, z, support=support), support=support)
                 for z in (-L / 16, L / 16))


class TestField:
    def test_frame_centred_at_r0(self):
        spec = GaussianPacketSpec((0, 0, 5), 1.0, (1.0, -0.5, 0.25))
        p = make_gaussian_packet(spec, CartesianKGrid.for_gaussian(spec.k0, 1.0, n=64))
        s = synthesize_field(p, 0.0).summary()
        assert np.allclose(s["centroid"], (1.0, -0.5, 0.25), atol=1e-10)

    def test_intensity_integral_conserved(self, small_cartesian_packet, support):
        a = synthesize_field(small_cartesian_packet, 0.0, support=support).summary()["integral"]
        b = synthesize_field(small_cartesian_packet, 2.0, support=support).summary()["integral"]
        assert b == pytest.approx(a, rel=1e-12)

    def test_wrap_around_detected(self, small_cartesian_packet, support):
        with pytest.raises(CoverageError):
            synthesize_field(small_cartesian_packet, 0.45 * small_cartesian_packet.grid.box_length,
                             support=support)


class TestCentroid:
    def test_slope_equals_beta(self, small_cartesian_packet, support, beta):
        est = estimate_velocity_centroid(small_cartesian_packet, n_t=8, support=support)
        assert est.value == pytest.approx(beta, rel=1e-9)
        assert len(est.track) == 8 and est.residual < 1e-6

    def test_needs_eight_samples(self, small_cartesian_packet, support):
        with pytest.raises(ArgumentError):
            estimate_velocity_centroid(small_cartesian_packet, t=np.linspace(0, 1, 4),
                                       support=support)


class TestPlanes:
    def test_normalized(self, records):
        for r in records:
            assert r.total() == pytest.approx(1.0, abs=1e-12)
        # the same flux crosses both planes, and it is the full transit flux
        assert records[0].normalization / records[0].reference == pytest.approx(1.0, abs=1e-8)
        assert records[1].normalization == pytest.approx(records[0].normalization, rel=1e-10)

    def test_toa_within_one_percent(self, records, plane_packet):
        est = estimate_velocity_toa(*records)
        assert abs(est.value / observables_packet(plane_packet[0]).beta - 1) < 0.01
        assert est.residual < 1e-6

    def test_toa_matches_analytic_slope(self, records, plane_packet):
        est = estimate_velocity_toa(*records)
        assert est.value == pytest.approx(toa_slope_analytic(*plane_packet), rel=1e-8)

    def test_ordering(self, records):
        with pytest.raises(ArgumentError):
            estimate_velocity_toa(records[1], records[0])
        late = records[0]
        early = type(late)(late.z + 1.0, late.x, late.y, late.t - 100.0, late.p,
                           late.normalization, late.reference)
        with pytest.raises(OrderingError):
            estimate_velocity_toa(late, early)

    def test_window_must_contain_transit(self, small_cartesian_packet, support):
        t = np.linspace(-0.5, 0.5, 11)
        with pytest.raises(WindowError):
            intensity_record(small_cartesian_packet, 3.0, t, support=support)

    def test_unequal_spacing(self, small_cartesian_packet, support):
        with pytest.raises(ArgumentError):
            intensity_record(small_cartesian_packet, 0.0, [0.0, 0.1, 0.3], support=support)

    def test_raster_round_trip(self, records, tmp_path):
        path = tmp_path / "plane.raw"
        records[0].to_raster(path)
        assert path.read_bytes()[63:64] == b"\n"
        header, data = read_raster(path)
        assert header["order"] == "txy"
        assert np.array_equal(data, records[0].p)

    def test_csv(self, records, tmp_path):
        path = tmp_path / "plane.csv"
        records[0].to_csv(path)
        with open(path) as fh:
            assert fh.readline().strip() == "x,y,t,p"


class TestDetect:
    def test_transverse_packet_skips_toa(self):
        spec = GaussianPacketSpec((5, 0, 0), 1.0)
        p = make_gaussian_packet(spec, CartesianKGrid.for_gaussian(spec.k0, 1.0, n=64))
        res = detect(p, n_t=8)
        assert res.toa is None
        assert res.centroid.velocity[0] == pytest.approx(observables_packet(p).beta, rel=1e-9)


class TestGradient:
    @given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.5, 10))
    def test_unit_vector(self, x, y, z):
        g = dispersion_gradient_check((x, y, z))
        assert np.allclose(g, np.array([x, y, z]) / math.hypot(x, y, z), atol=1e-9)

    def test_ill_conditioned(self):
        with pytest.raises(ConditioningError):
            dispersion_gradient_check((0, 0, 1e-4))
