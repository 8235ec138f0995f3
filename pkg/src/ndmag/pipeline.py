"""Downstream analyses: field imaging, wire fits, accuracy/sensitivity, histograms, shift scans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _lsq
from .errors import (
    DimensionError,
    InsufficientDataError,
    InvalidParameterError,
    UnidentifiableParametersError,
)
from .gpr import GprModel, preprocess
from .physics import OdmrSpectrum

# mu0 / (2 pi) expressed in uT * um / A
MU0_OVER_2PI = 2e5
DEFAULT_PIXEL_AREA_UM2 = 18.0


@dataclass
class FieldMap:
    """Predicted field magnitude on a pixel grid, arrays indexed ``[y, x]``."""

    field_uT: np.ndarray
    stddev_uT: np.ndarray
    x_um: np.ndarray
    y_um: np.ndarray
    pixel_area_um2: float = DEFAULT_PIXEL_AREA_UM2

    def __post_init__(self):
        self.field_uT = np.atleast_2d(np.asarray(self.field_uT, dtype=float))
        self.stddev_uT = np.atleast_2d(np.asarray(self.stddev_uT, dtype=float))
        self.x_um = np.asarray(self.x_um, dtype=float)
        self.y_um = np.asarray(self.y_um, dtype=float)
        ny, nx = self.field_uT.shape
        if nx < 1 or ny < 1:
            raise DimensionError("a field map needs at least one pixel")
        if self.stddev_uT.shape != (ny, nx) or self.x_um.shape != (nx,) or self.y_um.shape != (ny,):
            raise DimensionError("field map arrays have inconsistent shapes")
        if np.any(self.stddev_uT < 0):
            raise InvalidParameterError("standard deviations must be non-negative")

    @property
    def nx(self) -> int:
        return self.field_uT.shape[1]

    @property
    def ny(self) -> int:
        return self.field_uT.shape[0]


def pixel_coordinates(n: int, pitch: float) -> np.ndarray:
    """``n`` pixel centers spaced by ``pitch``, centered on zero."""
    return (np.arange(n) - 0.5 * (n - 1)) * pitch


def predict_map(
    model: GprModel,
    spectra,
    x_um=None,
    y_um=None,
    pixel_area_um2: float = DEFAULT_PIXEL_AREA_UM2,
) -> FieldMap:
    """GPR prediction for every pixel of a ``[y][x]`` grid of spectra."""
    rows = [list(r) for r in spectra]
    ny = len(rows)
    nx = len(rows[0]) if ny else 0
    if ny == 0 or nx == 0 or any(len(r) != nx for r in rows):
        raise DimensionError("spectra must form a non-empty rectangular grid")
    flat = [s for r in rows for s in r]
    for s in flat:
        model.check_grid(s)
    mean, std = model.predict_many(np.array([preprocess(s) for s in flat]))
    pitch = math.sqrt(pixel_area_um2)
    x_um = pixel_coordinates(nx, pitch) if x_um is None else x_um
    y_um = pixel_coordinates(ny, pitch) if y_um is None else y_um
    return FieldMap(mean.reshape(ny, nx), std.reshape(ny, nx), x_um, y_um, pixel_area_um2)


def average_along_y(field_map: FieldMap):
    """Per-column ``(x, mean, standard error of the mean)`` over the rows of the map."""
    B = field_map.field_uT
    mean = B.mean(axis=0)
    if field_map.ny > 1:
        stderr = B.std(axis=0, ddof=1) / math.sqrt(field_map.ny)
    else:
        stderr = np.zeros(field_map.nx)
    return [(float(x), float(m), float(s)) for x, m, s in zip(field_map.x_um, mean, stderr)]


# wire


@dataclass
class WireModel:
    """Infinite straight wire along y, at lateral position ``x0_um`` and depth ``z0_um``."""

    current_A: float
    x0_um: float
    z0_um: float
    bias_Bz_uT: float
    x0_stderr_um: float = math.nan
    z0_stderr_um: float = math.nan
    chi2: float = math.nan

    def __post_init__(self):
        if not self.z0_um > 0:
            raise InvalidParameterError(f"wire depth must be positive, got {self.z0_um}")

    def to_dict(self) -> dict:
        return {
            "current_A": self.current_A,
            "x0_um": self.x0_um,
            "z0_um": self.z0_um,
            "bias_Bz_uT": self.bias_Bz_uT,
            "x0_stderr_um": self.x0_stderr_um,
            "z0_stderr_um": self.z0_stderr_um,
            "chi2": self.chi2,
        }


def wire_field_components(x, wire: WireModel):
    """``(B_x, B_z)`` in uT at lateral positions ``x`` (um) in the sensing plane.

    The bias is along +z; a positive current lowers ``B_z`` for ``x > x0``.
    """
    dx = np.asarray(x, dtype=float) - wire.x0_um
    r2 = dx**2 + wire.z0_um**2
    a = MU0_OVER_2PI * wire.current_A
    return a * wire.z0_um / r2, wire.bias_Bz_uT - a * dx / r2


def wire_field_magnitude(x, wire: WireModel):
    """Total field magnitude (uT): bias plus the Ampere field of the wire."""
    bx, bz = wire_field_components(x, wire)
    out = np.hypot(bx, bz)
    return float(out) if out.ndim == 0 else out


def _as_profile(profile):
    arr = np.asarray(profile, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DimensionError("a profile is a sequence of (x, B, sigma) triples")
    return arr


def fit_wire_joint(profiles, bias_Bz: float) -> WireModel:
    """Weighted least squares for one wire position shared by several profiles.

    ``profiles`` is a sequence of ``(profile, current_A)`` pairs, each profile a
    sequence of ``(x_um, B_uT, sigma_uT)``. Only ``x0`` and ``z0`` are fitted;
    the reported standard errors take ``sigma`` as absolute.
    """
    parts = [(_as_profile(p), float(current)) for p, current in profiles]
    if not parts:
        raise InsufficientDataError("no profiles given")
    data = np.concatenate([p for p, _ in parts])
    currents = np.concatenate([np.full(len(p), current) for p, current in parts])
    if data.shape[0] < 3:
        raise InsufficientDataError("need at least 3 profile points")
    x, B, sigma = data.T
    if np.any(~(sigma > 0)):
        raise InvalidParameterError("profile uncertainties must be positive")
    if np.ptp(x) == 0:
        raise UnidentifiableParametersError("all profile points share one x position")
    if np.all(currents == 0):
        raise UnidentifiableParametersError("with zero current the wire position is unidentifiable")

    def residuals(u):
        x0, z0 = u[0], math.exp(min(max(u[1], -300.0), 300.0))
        dx = x - x0
        r2 = dx**2 + z0**2
        a = MU0_OVER_2PI * currents
        return (np.hypot(a * z0 / r2, bias_Bz - a * dx / r2) - B) / sigma

    span = float(np.ptp(x))
    deviation = np.abs(B - math.hypot(bias_Bz, 0.0))
    x_guess = float(x[np.argmax(deviation)])
    best = None
    for x_start in (x_guess, float(np.mean(x))):
        for z_start in np.geomspace(max(span, 1.0) / 100, max(span, 1.0) * 10, 7):
            res = _lsq.levenberg_marquardt(residuals, [x_start, math.log(z_start)])
            if best is None or res.cost < best.cost:
                best = res
    x0, z0 = float(best.x[0]), math.exp(float(best.x[1]))
    cov = _lsq.covariance(best.jacobian)
    if cov is None:
        raise UnidentifiableParametersError("profile does not constrain the wire position")
    return WireModel(
        current_A=float(parts[0][1]) if len(parts) == 1 else math.nan,
        x0_um=x0,
        z0_um=z0,
        bias_Bz_uT=float(bias_Bz),
        x0_stderr_um=math.sqrt(max(cov[0, 0], 0.0)),
        z0_stderr_um=z0 * math.sqrt(max(cov[1, 1], 0.0)),
        chi2=2.0 * best.cost,
    )


def fit_wire(profile, current_A: float, bias_Bz: float) -> WireModel:
    """Fit the wire position to one averaged profile at a known current."""
    return fit_wire_joint([(profile, current_A)], bias_Bz)


# accuracy and sensitivity


@dataclass
class AccuracyReport:
    field_bin: tuple
    sigma_samples: list
    eta: float
    zeta: float

    def to_dict(self) -> dict:
        return {
            "field_bin_low_uT": self.field_bin[0],
            "field_bin_high_uT": self.field_bin[1],
            "n_samples": len(self.sigma_samples),
            "eta_uT_per_sqrtHz": self.eta,
            "zeta_uT": self.zeta,
        }


def fit_accuracy_sensitivity(samples):
    """Fit ``sigma(t) = eta * t**-0.5 + zeta`` with ``eta, zeta >= 0``.

    Residuals are taken relative to ``sigma`` (the scatter estimates carry
    multiplicative noise); if some ``sigma`` is zero the fit is unweighted.
    A negative coefficient is clamped to zero and the other one refitted alone.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DimensionError("samples are (t, sigma) pairs")
    t, sigma = arr.T
    if np.any(~(t > 0)) or not np.all(np.isfinite(t)):
        raise InvalidParameterError("integration times must be positive")
    if np.any(~(sigma >= 0)) or not np.all(np.isfinite(sigma)):
        raise InvalidParameterError("sigma values must be finite and non-negative")
    if t.size < 3:
        raise InsufficientDataError("need at least 3 (t, sigma) samples")
    if np.unique(t).size < 2:
        raise InsufficientDataError("need at least 2 distinct integration times")
    w = 1.0 / sigma if np.all(sigma > 0) else np.ones_like(sigma)
    u, one = w * t**-0.5, w
    target = w * sigma
    (eta, zeta), *_ = np.linalg.lstsq(np.column_stack([u, one]), target, rcond=None)
    if eta < 0:
        eta, zeta = 0.0, float(one @ target / (one @ one))
    if zeta < 0:
        eta, zeta = float(u @ target / (u @ u)), 0.0
    return max(float(eta), 0.0), max(float(zeta), 0.0)


def accuracy_report(field_bin, samples) -> AccuracyReport:
    eta, zeta = fit_accuracy_sensitivity(samples)
    return AccuracyReport(tuple(field_bin), [tuple(map(float, s)) for s in samples], eta, zeta)


# histograms


def field_bin_edges(max_field: float, bin_width: float = 500.0) -> np.ndarray:
    """``[0, w, 2w, ...]`` covering ``max_field``; at least up to 2500 uT for the default width."""
    if not bin_width > 0:
        raise InvalidParameterError("bin width must be positive")
    top = max(math.floor(max_field / bin_width) + 1, 5 if bin_width == 500.0 else 1)
    return np.arange(top + 1) * bin_width


@dataclass
class HistogramSet:
    """Per-field-bin histograms of an error statistic for several estimators.

    ``counts[name][i]`` uses ``value_edges[i]``, shared by all estimators in
    field bin ``i``; bins without samples have empty arrays.
    """

    field_edges: np.ndarray
    value_edges: list
    counts: dict
    means: dict = field(default_factory=dict)

    def rows(self):
        """Plot-ready rows ``(estimator, bin_low, bin_high, value_low, value_high, count)``."""
        for name, per_bin in self.counts.items():
            for i, counts in enumerate(per_bin):
                edges = self.value_edges[i]
                for j, c in enumerate(counts):
                    yield (name, self.field_edges[i], self.field_edges[i + 1], edges[j], edges[j + 1], int(c))


def error_histograms(errors: dict, bin_width: float = 500.0, bars: int = 10) -> HistogramSet:
    """Histogram an error statistic per field bin and estimator.

    ``errors`` maps an estimator name to ``(true_fields_uT, values_uT)``.
    """
    if not errors:
        raise InsufficientDataError("no error sets given")
    cleaned = {}
    for name, (fields, values) in errors.items():
        fields = np.asarray(fields, dtype=float).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if fields.shape != values.shape or fields.size == 0:
            raise DimensionError(f"estimator {name!r}: need equal, non-empty field and value arrays")
        cleaned[name] = (fields, values)
    max_field = max(f.max() for f, _ in cleaned.values())
    edges = field_bin_edges(max_field, bin_width)
    nbins = edges.size - 1
    value_edges, counts, means = [], {n: [] for n in cleaned}, {n: [] for n in cleaned}
    for i in range(nbins):
        lo, hi = edges[i], edges[i + 1]
        in_bin = {n: v[(f >= lo) & (f < hi)] for n, (f, v) in cleaned.items()}
        pooled = np.concatenate(list(in_bin.values()))
        if pooled.size == 0:
            value_edges.append(np.array([]))
            for n in cleaned:
                counts[n].append(np.array([], dtype=int))
                means[n].append(math.nan)
            continue
        vlo, vhi = float(pooled.min()), float(pooled.max())
        if vlo == vhi:
            vlo, vhi = vlo - 0.5, vhi + 0.5
        ve = np.linspace(vlo, vhi, bars + 1)
        value_edges.append(ve)
        for n, v in in_bin.items():
            counts[n].append(np.histogram(v, bins=ve)[0])
            means[n].append(float(v.mean()) if v.size else math.nan)
    return HistogramSet(edges, value_edges, counts, means)


# frequency-shift scan


@dataclass
class ShiftScan:
    shifts: np.ndarray
    errors: np.ndarray

    @property
    def best_shift(self) -> float:
        return float(self.shifts[int(np.argmin(self.errors))])


def shift_features(features: np.ndarray, feature_freqs: np.ndarray, shift: float) -> np.ndarray:
    """Translate derivative features by ``shift`` MHz on their own grid (edge values held)."""
    src = feature_freqs - shift
    return np.array([np.interp(src, feature_freqs, row) for row in np.atleast_2d(features)])


def shift_scan(model: GprModel, test_spectra, true_fields, shifts) -> ShiftScan:
    """Mean absolute prediction error after shifting the training data by each offset.

    The model is retrained on its own features translated in frequency, with
    unchanged hyperparameters, and evaluated on the test spectra.
    """
    if model.frequencies is None:
        raise InvalidParameterError("model has no frequency grid; cannot shift its training data")
    test = list(test_spectra)
    truth = np.asarray(true_fields, dtype=float)
    if len(test) != truth.size or truth.size == 0:
        raise DimensionError("need one true field per test spectrum")
    for s in test:
        model.check_grid(s)
    X_test = np.array([preprocess(s) for s in test])
    feature_freqs = model.frequencies[1:-1]
    shifts = np.asarray(shifts, dtype=float)
    errors = []
    for shift in shifts:
        shifted = shift_features(model.features, feature_freqs, shift)
        m = GprModel(shifted, model.targets, model.hyperparams, model.frequencies)
        mean, _ = m.predict_many(X_test)
        errors.append(float(np.mean(np.abs(mean - truth))))
    return ShiftScan(shifts, np.array(errors))


# integration-time protocol


def noisy_spectra(fields, params, frequencies, photons_per_point, seed, integration_time=1.0):
    """Seeded shot-noise spectra, one child seed per field."""
    from .physics import add_shot_noise, synthesize_spectrum

    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    children = seed.spawn(len(fields))
    out = []
    for b, child in zip(fields, children):
        s = synthesize_spectrum(float(b), params, frequencies, integration_time=integration_time)
        out.append(add_shot_noise(s, photons_per_point, child) if photons_per_point else s)
    return out


def simulate_accuracy(
    times,
    field_bins,
    *,
    train_fields,
    test_fields,
    pixels: int,
    photons_per_second: float,
    params=None,
    frequencies=None,
    hyperparams=None,
    seed=0,
):
    """Synthetic version of the integration-time study.

    For every integration time ``t`` the photon budget of both training and
    test spectra is ``photons_per_second * t``. A GPR model is trained on
    ``train_fields`` (hyperparameters cross-validated unless given), each
    test field is measured on ``pixels`` independent pixels, and ``sigma`` is
    the sample standard deviation of ``predicted - true`` pooled over the
    pixels whose true field falls in the bin.

    Returns one :class:`AccuracyReport` per field bin with at least three
    samples spanning two or more integration times.
    """
    from .gpr import optimize_hyperparams

    times = [float(t) for t in times]
    test_fields = np.asarray(test_fields, dtype=float)
    if pixels < 2:
        raise InsufficientDataError("need at least 2 pixels per test field")
    seeds = np.random.SeedSequence(seed).spawn(len(times))
    per_bin = {tuple(b): [] for b in field_bins}
    for t, ss in zip(times, seeds):
        photons = photons_per_second * t
        s_train, s_test = ss.spawn(2)
        train = noisy_spectra(train_fields, params, frequencies, photons, s_train, t)
        X = np.array([preprocess(s) for s in train])
        hp = hyperparams or optimize_hyperparams(X, train_fields, seed=0)
        model = GprModel(X, train_fields, hp, train[0].frequencies)
        pixel_fields = np.repeat(test_fields, pixels)
        test = noisy_spectra(pixel_fields, params, frequencies, photons, s_test, t)
        mean, _ = model.predict_many(np.array([preprocess(s) for s in test]))
        diff = mean - pixel_fields
        for lo, hi in per_bin:
            sel = (pixel_fields >= lo) & (pixel_fields < hi)
            if sel.sum() >= 2:
                per_bin[(lo, hi)].append((t, float(np.std(diff[sel], ddof=1))))
    return [
        accuracy_report(b, samples)
        for b, samples in per_bin.items()
        if len(samples) >= 3 and len({t for t, _ in samples}) >= 2
    ]
