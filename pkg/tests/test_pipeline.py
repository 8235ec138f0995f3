import math

import numpy as np
import pytest

from ndmag import gpr, physics, pipeline
from ndmag.errors import (
    DimensionError,
    InsufficientDataError,
    InvalidParameterError,
    UnidentifiableParametersError,
)
from ndmag.pipeline import FieldMap, WireModel


def wire_profile(x, wire, sigma=1.0):
    return [(xi, b, sigma) for xi, b in zip(x, pipeline.wire_field_magnitude(x, wire))]


class TestWireField:
    def test_zero_current(self):
        w = WireModel(0.0, 5.0, 100.0, 912.8)
        assert np.all(pipeline.wire_field_magnitude(np.linspace(-50, 50, 9), w) == 912.8)

    def test_apex(self):
        w = WireModel(0.5, 3.0, 40.0, 300.0)
        bx, bz = pipeline.wire_field_components(3.0, w)
        assert bz == 300.0
        assert bx == pytest.approx(2e-7 * 0.5 / 40e-6 * 1e6)
        assert pipeline.wire_field_magnitude(3.0, w) == pytest.approx(math.hypot(300.0, bx))

    def test_reference_geometry(self):
        # 2e-7 T m/A * 0.8 A / 1.3e-4 m = 1230.77 uT
        w = WireModel(0.8, 0.0, 130.0, 912.8)
        assert pipeline.wire_field_magnitude(0.0, w) == pytest.approx(1532.4, abs=0.1)

    def test_far_field_decay(self):
        w = WireModel(0.8, 0.0, 130.0, 912.8)
        apex_wire = 2e5 * 0.8 / 130.0
        for x in (-100 * 130.0, 100 * 130.0):
            assert abs(pipeline.wire_field_magnitude(x, w) - 912.8) <= 0.01 * apex_wire
        assert pipeline.wire_field_magnitude(1e7, w) == pytest.approx(912.8, rel=1e-4)

    def test_depth_must_be_positive(self):
        with pytest.raises(InvalidParameterError):
            WireModel(0.8, 0.0, 0.0, 912.8)


class TestFitWire:
    x = np.linspace(-60.0, 60.0, 17)

    def test_single_current(self):
        truth = WireModel(0.8, 0.0, 130.0, 912.8)
        fit = pipeline.fit_wire(wire_profile(self.x, truth), 0.8, 912.8)
        assert abs(fit.x0_um) < 1.0
        assert abs(fit.z0_um - 130.0) < 1.0
        assert fit.chi2 < 1e-12

    def test_shared_geometry(self):
        currents = (0.2, 0.4, 0.6, 0.8)
        profiles = [(wire_profile(self.x, WireModel(i, 7.0, 110.0, 912.8)), i) for i in currents]
        fit = pipeline.fit_wire_joint(profiles, 912.8)
        assert fit.x0_um == pytest.approx(7.0, abs=1e-3)
        assert fit.z0_um == pytest.approx(110.0, abs=1e-3)
        for prof, i in profiles:
            model = pipeline.wire_field_magnitude(self.x, WireModel(i, fit.x0_um, fit.z0_um, 912.8))
            assert np.allclose(model, [b for _, b, _ in prof], rtol=1e-8)

    def test_stderr_scales_with_sigma(self):
        truth = WireModel(0.8, 0.0, 130.0, 912.8)
        a = pipeline.fit_wire(wire_profile(self.x, truth, 1.0), 0.8, 912.8)
        b = pipeline.fit_wire(wire_profile(self.x, truth, 2.0), 0.8, 912.8)
        assert b.z0_stderr_um == pytest.approx(2.0 * a.z0_stderr_um, rel=1e-3)

    def test_zero_current_unidentifiable(self):
        prof = wire_profile(self.x, WireModel(0.0, 0.0, 130.0, 912.8))
        with pytest.raises(UnidentifiableParametersError):
            pipeline.fit_wire(prof, 0.0, 912.8)

    def test_too_few_points(self):
        with pytest.raises(InsufficientDataError):
            pipeline.fit_wire([(0.0, 1.0, 1.0), (1.0, 1.0, 1.0)], 0.8, 912.8)

    def test_bad_sigma(self):
        prof = wire_profile(self.x, WireModel(0.8, 0.0, 130.0, 912.8), sigma=0.0)
        with pytest.raises(InvalidParameterError):
            pipeline.fit_wire(prof, 0.8, 912.8)

    def test_shape_checked(self):
        with pytest.raises(DimensionError):
            pipeline.fit_wire([(0.0, 1.0)] * 4, 0.8, 912.8)


class TestAverageAlongY:
    def test_single_row(self):
        m = FieldMap(np.array([[1.0, 2.0, 3.0]]), np.ones((1, 3)), np.array([0.0, 1.0, 2.0]), np.array([0.0]))
        assert pipeline.average_along_y(m) == [(0.0, 1.0, 0.0), (1.0, 2.0, 0.0), (2.0, 3.0, 0.0)]

    def test_constant(self):
        m = FieldMap(np.full((4, 3), 7.5), np.ones((4, 3)), np.arange(3.0), np.arange(4.0))
        assert all(mean == 7.5 and se == 0.0 for _, mean, se in pipeline.average_along_y(m))

    def test_checkerboard(self):
        ny, nx = 6, 5
        board = 1000.0 + np.fromfunction(lambda j, i: (-1.0) ** (i + j), (ny, nx))
        m = FieldMap(board, np.ones((ny, nx)), np.arange(nx, dtype=float), np.arange(ny, dtype=float))
        for _, mean, se in pipeline.average_along_y(m):
            assert mean == pytest.approx(1000.0, abs=1e-12)
            assert se == pytest.approx(1.0 / math.sqrt(ny - 1))

    def test_shape_validation(self):
        with pytest.raises(DimensionError):
            FieldMap(np.zeros((2, 3)), np.zeros((3, 2)), np.arange(3.0), np.arange(2.0))


class TestAccuracySensitivity:
    t = np.array([0.5, 1.0, 2.0, 4.0, 8.0, 16.0])

    def test_exact_recovery(self):
        sigma = 70.0 * self.t**-0.5 + 1.8
        eta, zeta = pipeline.fit_accuracy_sensitivity(list(zip(self.t, sigma)))
        assert eta == pytest.approx(70.0, rel=1e-8)
        assert zeta == pytest.approx(1.8, rel=1e-8)

    def test_constant_sigma(self):
        eta, zeta = pipeline.fit_accuracy_sensitivity([(t, 5.0) for t in self.t])
        assert eta == pytest.approx(0.0, abs=1e-10)
        assert zeta == pytest.approx(5.0)

    def test_noisy_recovery(self):
        rng = np.random.default_rng(0)
        sigma = (70.0 * self.t**-0.5 + 1.8) * (1.0 + 0.05 * rng.standard_normal(self.t.size))
        eta, zeta = pipeline.fit_accuracy_sensitivity(list(zip(self.t, sigma)))
        assert eta == pytest.approx(70.0, rel=0.15)

    def test_clamps_negative_floor(self):
        eta, zeta = pipeline.fit_accuracy_sensitivity([(1.0, 10.0), (4.0, 4.0), (16.0, 1.0)])
        assert zeta == 0.0 and eta > 0

    def test_needs_three_samples(self):
        with pytest.raises(InsufficientDataError):
            pipeline.fit_accuracy_sensitivity([(1.0, 2.0), (2.0, 1.0)])

    def test_needs_distinct_times(self):
        with pytest.raises(InsufficientDataError):
            pipeline.fit_accuracy_sensitivity([(1.0, 2.0)] * 4)

    def test_positive_times(self):
        with pytest.raises(InvalidParameterError):
            pipeline.fit_accuracy_sensitivity([(0.0, 2.0), (1.0, 1.0), (2.0, 1.0)])


class TestHistograms:
    def test_default_bins(self):
        h = pipeline.error_histograms({"gpr": ([100.0, 2100.0], [1.0, 2.0])})
        assert h.field_edges.tolist() == [0.0, 500.0, 1000.0, 1500.0, 2000.0, 2500.0]

    def test_single_value_per_bin(self):
        h = pipeline.error_histograms({"gpr": ([100.0, 600.0], [3.0, 4.0])})
        for counts in h.counts["gpr"][:2]:
            assert counts.sum() == 1 and np.count_nonzero(counts) == 1
        assert h.counts["gpr"][2].size == 0
        assert math.isnan(h.means["gpr"][2])

    def test_estimator_ordering(self):
        rng = np.random.default_rng(1)
        fields = rng.uniform(0.0, 2500.0, 2000)
        gpr_err = np.abs(rng.normal(0.0, np.where(fields < 500, 40.0, 5.0)))
        model_err = np.abs(rng.normal(0.0, np.where(fields < 500, 20.0, 15.0)))
        h = pipeline.error_histograms({"gpr": (fields, gpr_err), "model": (fields, model_err)})
        g, m = h.means["gpr"], h.means["model"]
        assert g[0] > m[0]
        assert all(a < b for a, b in zip(g[1:], m[1:]))
        total = sum(c.sum() for c in h.counts["gpr"])
        assert total == 2000

    def test_rows_cover_counts(self):
        h = pipeline.error_histograms({"gpr": ([100.0, 150.0, 900.0], [1.0, 2.0, 3.0])}, bars=4)
        rows = list(h.rows())
        assert sum(r[-1] for r in rows) == 3
        assert all(len(r) == 6 for r in rows)

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            pipeline.error_histograms({})


class TestShiftScan:
    def test_self_consistency(self, noiseless_model):
        fields = np.linspace(150.0, 2200.0, 40)
        test = [physics.synthesize_spectrum(b) for b in fields]
        scan = pipeline.shift_scan(noiseless_model, test, fields, np.arange(-4.0, 5.0))
        assert scan.best_shift == 0.0

    def test_finds_substrate_shift(self, noiseless_model, freqs):
        fields = np.linspace(150.0, 2200.0, 40)
        test = [
            physics.resample(physics.apply_frequency_shift(physics.synthesize_spectrum(b), 6.0), freqs)
            for b in fields
        ]
        scan = pipeline.shift_scan(noiseless_model, test, fields, np.arange(-10.0, 11.0))
        assert scan.best_shift == 6.0

    def test_needs_frequencies(self):
        m = gpr.train([[0.0, 1.0]], [1.0], gpr.KernelHyperparams(1.0, 0.1))
        with pytest.raises(InvalidParameterError):
            pipeline.shift_scan(m, [], [], [0.0])


class TestPredictMap:
    def test_single_pixel(self, noiseless_model):
        s = physics.synthesize_spectrum(777.0)
        m = pipeline.predict_map(noiseless_model, [[s]])
        p = gpr.predict(noiseless_model, gpr.preprocess(s))
        assert m.field_uT[0, 0] == p.mean and m.stddev_uT[0, 0] == p.stddev

    def test_dimensions(self, noiseless_model):
        spectra = [[physics.synthesize_spectrum(500.0 + 10 * i) for i in range(4)] for _ in range(3)]
        m = pipeline.predict_map(noiseless_model, spectra, pixel_area_um2=9.0)
        assert (m.ny, m.nx) == (3, 4)
        assert np.allclose(np.diff(m.x_um), 3.0)

    def test_uniform_field_constant_within_stddev(self, noisy_model, freqs):
        fields = np.full(30, 1200.0)
        flat = pipeline.noisy_spectra(fields, None, freqs, 1e6, 5)
        m = pipeline.predict_map(noisy_model, [flat[i * 6 : (i + 1) * 6] for i in range(5)])
        assert np.all(np.abs(m.field_uT - 1200.0) < 4.0 * m.stddev_uT)

    def test_ragged_grid(self, noiseless_model):
        s = physics.synthesize_spectrum(500.0)
        with pytest.raises(DimensionError):
            pipeline.predict_map(noiseless_model, [[s, s], [s]])


def test_simulated_accuracy_protocol(freqs):
    reports = pipeline.simulate_accuracy(
        [1.0, 4.0, 16.0],
        [(500.0, 1000.0), (1000.0, 1500.0)],
        train_fields=np.linspace(100.0, 2286.0, 80),
        test_fields=np.linspace(520.0, 1480.0, 6),
        pixels=4,
        photons_per_second=1e6,
        frequencies=freqs,
        seed=2,
    )
    assert len(reports) == 2
    for r in reports:
        sig = dict(r.sigma_samples)
        assert sig[16.0] < sig[1.0]
        assert r.eta > 0
