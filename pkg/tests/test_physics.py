import math

import numpy as np
import pytest
from scipy import integrate

from ndmag import physics
from ndmag.errors import (
    InvalidParameterError,
    QuadratureResolutionError,
    UnsupportedGeometryError,
)
from ndmag.physics import FieldVector, NdeModelParams, OdmrSpectrum


def dipole_cone_integral(theta_nv, theta_max):
    """Independent oracle: scipy dblquad of |e_r x p1|^2 + |e_r x p2|^2 over the cone."""
    n = np.array([math.sin(theta_nv), 0.0, math.cos(theta_nv)])
    p1 = np.array([0.0, 1.0, 0.0])
    p2 = np.cross(n, p1)

    def integrand(phi, theta):
        e = np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
        return (2.0 - (e @ p1) ** 2 - (e @ p2) ** 2) * math.sin(theta)

    value, _ = integrate.dblquad(integrand, 0.0, theta_max, 0.0, 2.0 * math.pi, epsabs=1e-13, epsrel=1e-13)
    return value


class TestResonances:
    def test_zero_field_zero_strain(self):
        p = NdeModelParams(E_s=0.0)
        assert physics.resonance_frequencies(0.0, p) == (2870.0, 2870.0)

    def test_strain_only(self):
        assert physics.resonance_frequencies(0.0, NdeModelParams(E_s=5.0)) == (2865.0, 2875.0)

    def test_one_millitesla(self):
        # 28.024 kHz/uT * 1000 uT = 28.024 MHz
        lo, hi = physics.resonance_frequencies(1000.0, NdeModelParams(E_s=0.0))
        assert lo == pytest.approx(2841.976, abs=1e-9)
        assert hi == pytest.approx(2898.024, abs=1e-9)

    def test_negative_field_rejected(self):
        with pytest.raises(InvalidParameterError):
            physics.resonance_frequencies(-1.0, NdeModelParams())


class TestLorentzian:
    def test_peak(self):
        assert physics.lorentzian(2870.0, 2870.0, 4.0, 0.5) == pytest.approx(0.5 / 16.0)

    def test_half_width(self):
        assert physics.lorentzian(2874.0, 2870.0, 4.0, 0.5) == pytest.approx(0.5 / 32.0)

    def test_zero_amplitude(self):
        f = np.linspace(2700, 3000, 11)
        assert np.all(physics.lorentzian(f, 2870.0, 4.0, 0.0) == 0.0)

    def test_nonpositive_width(self):
        with pytest.raises(InvalidParameterError):
            physics.lorentzian(2870.0, 2870.0, 0.0, 0.5)


class TestAbsorption:
    def test_axial(self):
        p = NdeModelParams(E_x=0.6, E_y=1.1)
        assert physics.absorption_efficiency(0.0, p) == pytest.approx(2 * math.pi * (0.36 + 1.21))

    def test_perpendicular(self):
        p = NdeModelParams(E_x=0.6, E_y=1.1)
        assert physics.absorption_efficiency(math.pi / 2, p) == pytest.approx(math.pi * (0.36 + 1.21))

    @pytest.mark.parametrize("ex,ey", [(1.0, 0.0), (0.0, 2.0), (0.3, 0.4)])
    def test_ratio_is_two(self, ex, ey):
        p = NdeModelParams(E_x=ex, E_y=ey)
        ratio = physics.absorption_efficiency(0.0, p) / physics.absorption_efficiency(math.pi / 2, p)
        assert ratio == pytest.approx(2.0)


class TestCollectionEfficiency:
    def test_zero_aperture(self):
        theta = np.linspace(0, math.pi, 7)
        assert np.allclose(physics.collection_efficiency(theta, 0.0), 0.0, atol=1e-15)

    def test_full_hemisphere_value(self):
        # each transverse dipole sends half of its 8*pi/3 into a hemisphere
        expected = 8.0 * math.pi / 3.0
        assert expected == pytest.approx(math.pi / 12.0 * 32.0)
        for theta_nv in (0.0, 0.4, math.pi / 2):
            assert physics.collection_efficiency(theta_nv, math.pi / 2) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("theta_nv,theta_max", [(0.0, 0.5), (math.pi / 4, math.asin(0.7)), (1.3, 1.2)])
    def test_matches_scipy_oracle(self, theta_nv, theta_max):
        oracle = dipole_cone_integral(theta_nv, theta_max)
        assert physics.collection_efficiency(theta_nv, theta_max) == pytest.approx(oracle, rel=1e-10)

    def test_axial_centers_collected_best_for_finite_aperture(self):
        tm = math.asin(0.7)
        assert physics.collection_efficiency(0.0, tm) > physics.collection_efficiency(math.pi / 2, tm)

    def test_published_form_disagrees_with_integral(self):
        tm = math.asin(0.7)
        oracle = dipole_cone_integral(0.0, tm)
        assert abs(physics.collection_efficiency_printed(0.0, tm) / oracle - 1.0) > 0.1


class TestCollectionNumeric:
    def test_zero_aperture(self):
        assert physics.collection_efficiency_numeric(0.3, 0.0) == 0.0

    def test_too_few_nodes(self):
        with pytest.raises(QuadratureResolutionError):
            physics.collection_efficiency_numeric(0.3, 1.0, nodes=4)

    @pytest.mark.parametrize("na", [0.3, 0.7, 0.95])
    def test_ratio_constant_over_orientation(self, na):
        tm = math.asin(na)
        theta = np.linspace(0.0, math.pi, 12)
        ratio = [physics.collection_efficiency_numeric(t, tm) / physics.collection_efficiency(t, tm) for t in theta]
        assert np.ptp(ratio) / np.mean(ratio) < 1e-6

    def test_oblique_matches_closed_form(self):
        tm = math.asin(0.7)
        numeric = physics.collection_efficiency_numeric(math.pi / 4, tm)
        assert numeric == pytest.approx(physics.collection_efficiency(math.pi / 4, tm), rel=1e-6)

    def test_independent_of_nv_azimuth(self):
        a = physics.collection_efficiency_numeric(0.7, 0.9, phi_nv=0.0)
        b = physics.collection_efficiency_numeric(0.7, 0.9, phi_nv=2.1)
        assert a == pytest.approx(b, rel=1e-12)


class TestSynthesize:
    def test_zero_amplitude_is_flat(self, freqs):
        p = NdeModelParams(C_minus=0.0, C_plus=0.0)
        s = physics.synthesize_spectrum(700.0, p, freqs)
        assert np.all(s.contrast == 1.0)

    def test_zero_field_symmetric(self):
        p = NdeModelParams(E_s=0.0)
        delta = np.array([0.5, 3.0, 7.25, 40.0])
        f = np.sort(np.r_[2870.0 - delta, 2870.0 + delta])
        s = physics.synthesize_spectrum(0.0, p, f)
        lower = s.contrast[: delta.size][::-1]
        upper = s.contrast[delta.size :]
        assert np.allclose(lower, upper, rtol=0, atol=1e-10)

    def test_metadata(self, freqs):
        s = physics.synthesize_spectrum(FieldVector(321.0), frequencies=freqs, integration_time=2.5)
        assert s.true_field_uT == 321.0
        assert s.integration_time == 2.5
        assert s.photons_per_point is None
        assert np.array_equal(s.frequencies, freqs)

    def test_tilted_field_rejected(self):
        with pytest.raises(UnsupportedGeometryError):
            physics.synthesize_spectrum(FieldVector(500.0, polar_angle=0.2))

    def test_peak_bound_enforced(self):
        p = NdeModelParams(C_minus=0.9, C_plus=0.9, delta_nu_minus=0.5, delta_nu_plus=0.5)
        with pytest.raises(InvalidParameterError):
            physics.synthesize_spectrum(500.0, p)

    def test_zero_aperture_rejected(self):
        with pytest.raises(InvalidParameterError):
            physics.synthesize_spectrum(500.0, NdeModelParams(theta_max=0.0))

    def test_dip_separation_grows_over_measurement_range(self):
        fields = np.linspace(6.0, 2286.0, 751)
        f = np.linspace(2720.0, 2990.0, 2701)
        sep = np.array([physics.dip_separation(physics.synthesize_spectrum(b, frequencies=f)) for b in fields])
        assert np.all(np.diff(sep) >= 0)
        assert sep[-1] > sep[0]


class TestNoise:
    def test_large_photon_limit(self):
        s = physics.synthesize_spectrum(800.0)
        noisy = physics.add_shot_noise(s, 1e12, seed=3)
        # sigma = sqrt(S / N) is 1e-6 here: check the scale, then the limit
        dev = noisy.contrast - s.contrast
        assert math.sqrt(np.mean(dev**2)) == pytest.approx(1e-6, rel=0.2)
        assert np.max(np.abs(dev)) < 6e-6
        far = physics.add_shot_noise(s, 1e16, seed=3)
        assert np.max(np.abs(far.contrast - s.contrast)) < 1e-6
        assert noisy.photons_per_point == 1e12

    def test_seeded(self):
        s = physics.synthesize_spectrum(800.0)
        assert physics.add_shot_noise(s, 1e4, 5) == physics.add_shot_noise(s, 1e4, 5)
        assert physics.add_shot_noise(s, 1e4, 5) != physics.add_shot_noise(s, 1e4, 6)

    def test_inverse_sqrt_scaling(self):
        s = physics.synthesize_spectrum(800.0)
        i = 70
        draws = {}
        for n in (1e4, 1e6):
            vals = [physics.add_shot_noise(s, n, seed).contrast[i] for seed in range(10_000)]
            draws[n] = np.std(vals, ddof=1)
            assert draws[n] == pytest.approx(math.sqrt(s.contrast[i] / n), rel=0.05)
        assert draws[1e4] / draws[1e6] == pytest.approx(10.0, rel=0.05)

    @pytest.mark.parametrize("n", [0.0, -1.0, math.inf])
    def test_bad_photon_count(self, n):
        with pytest.raises(InvalidParameterError):
            physics.add_shot_noise(physics.synthesize_spectrum(800.0), n, 0)


class TestShift:
    def test_zero_shift(self):
        s = physics.synthesize_spectrum(800.0)
        assert physics.apply_frequency_shift(s, 0.0) == s

    def test_round_trip(self):
        s = physics.synthesize_spectrum(800.0)
        back = physics.apply_frequency_shift(physics.apply_frequency_shift(s, 6.0), -6.0)
        assert np.allclose(back.frequencies, s.frequencies, rtol=0, atol=1e-9)
        assert np.array_equal(back.contrast, s.contrast)

    def test_dip_moves(self):
        p = NdeModelParams(E_s=0.0)
        s = physics.synthesize_spectrum(0.0, p, np.linspace(2850, 2890, 81))
        shifted = physics.apply_frequency_shift(s, 6.0)
        assert shifted.frequencies[np.argmin(shifted.contrast)] == pytest.approx(2876.0)

    def test_resample_holds_edges(self):
        s = OdmrSpectrum(np.array([1.0, 2.0, 3.0]), np.array([0.5, 1.0, 0.0]))
        r = physics.resample(s, np.array([0.0, 1.5, 4.0]))
        assert np.array_equal(r.contrast, [0.5, 0.75, 0.0])


class TestDataTypes:
    def test_spectrum_validation(self):
        with pytest.raises(InvalidParameterError):
            OdmrSpectrum(np.array([1.0, 1.0, 2.0]), np.zeros(3))
        with pytest.raises(InvalidParameterError):
            OdmrSpectrum(np.array([1.0, 2.0]), np.zeros(3))
        with pytest.raises(InvalidParameterError):
            OdmrSpectrum(np.array([1.0, 2.0]), np.array([0.0, np.nan]))

    def test_spectrum_arrays_read_only(self):
        s = physics.synthesize_spectrum(10.0)
        with pytest.raises(ValueError):
            s.contrast[0] = 0.0

    @pytest.mark.parametrize(
        "kwargs",
        [{"D": -1.0}, {"E_s": -0.1}, {"gamma": 0.0}, {"delta_nu_plus": 0.0}, {"C_minus": -0.1}, {"theta_max": 2.0}],
    )
    def test_param_validation(self, kwargs):
        with pytest.raises(InvalidParameterError):
            NdeModelParams(**kwargs)

    def test_numerical_aperture(self):
        p = NdeModelParams.with_numerical_aperture(0.7)
        assert p.theta_max == pytest.approx(math.asin(0.7))
        with pytest.raises(InvalidParameterError):
            NdeModelParams.with_numerical_aperture(1.2)

    def test_field_vector_validation(self):
        with pytest.raises(InvalidParameterError):
            FieldVector(-1.0)
