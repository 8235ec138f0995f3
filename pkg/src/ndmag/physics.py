"""Orientation-averaged ODMR spectra of randomly oriented nanodiamond ensembles.

Every nanodiamond in the ensemble carries NV centers whose symmetry axis points
in a random direction.  For a field along the optical (z) axis a center at polar
angle ``theta_nv`` sees the axial field ``B cos(theta_nv)`` and contributes two
Lorentzian dips at

    f_pm = D +- sqrt(E_s**2 + (gamma * B * cos(theta_nv))**2)

The ensemble spectrum averages ``1 - L_minus - L_plus`` over orientations,
weighted by the optical absorption efficiency ``kappa(theta_nv)`` and the photon
collection efficiency ``P(theta_nv)`` of an objective with half-angle
``theta_max``.  The azimuthal integral is trivial for an axial field, and the
polar integral is done with Gauss-Legendre quadrature on ``[0, pi]``.

Units: frequencies and linewidths in MHz, fields in uT, gyromagnetic ratio in
kHz/uT.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidParameterError,
    QuadratureResolutionError,
    UnsupportedGeometryError,
)

ZERO_FIELD_SPLITTING_MHZ = 2870.0
GYROMAGNETIC_RATIO_KHZ_PER_UT = 28.024
DEFAULT_NUMERICAL_APERTURE = 0.7
DEFAULT_FREQ_MIN_MHZ = 2720.0
DEFAULT_FREQ_MAX_MHZ = 2990.0
DEFAULT_FREQ_POINTS = 141
DEFAULT_QUADRATURE_NODES = 64


def default_frequencies() -> np.ndarray:
    """141 equally spaced microwave frequencies between 2720 and 2990 MHz."""
    return np.linspace(DEFAULT_FREQ_MIN_MHZ, DEFAULT_FREQ_MAX_MHZ, DEFAULT_FREQ_POINTS)


@dataclass(frozen=True)
class NdeModelParams:
    """Physical parameters of the nanodiamond-ensemble spectrum model.

    Parameters
    ----------
    D : float
        Zero-field splitting, MHz.
    E_s : float
        Lattice strain, MHz.
    gamma : float
        Electron gyromagnetic ratio, kHz/uT.
    delta_nu_minus, delta_nu_plus : float
        Lorentzian linewidths of the lower and upper branch, MHz.
    C_minus, C_plus : float
        Lorentzian amplitudes. The peak dip depth of a branch is
        ``C / delta_nu**2``.
    theta_max : float
        Collection half-angle of the objective, rad (``arcsin(NA)``).
    E_x, E_y : float
        Excitation field amplitudes (arbitrary units; only
        ``E_x**2 + E_y**2`` matters and it cancels in the spectrum).
    """

    D: float = ZERO_FIELD_SPLITTING_MHZ
    E_s: float = 3.5
    gamma: float = GYROMAGNETIC_RATIO_KHZ_PER_UT
    delta_nu_minus: float = 5.0
    delta_nu_plus: float = 5.0
    C_minus: float = 0.3
    C_plus: float = 0.3
    theta_max: float = math.asin(DEFAULT_NUMERICAL_APERTURE)
    E_x: float = math.sqrt(0.5)
    E_y: float = math.sqrt(0.5)

    def __post_init__(self):
        for name in dataclasses.fields(self):
            value = getattr(self, name.name)
            if not math.isfinite(value):
                raise InvalidParameterError(f"{name.name} must be finite, got {value!r}")
        if self.D <= 0:
            raise InvalidParameterError(f"D must be positive, got {self.D}")
        if self.E_s < 0:
            raise InvalidParameterError(f"E_s must be non-negative, got {self.E_s}")
        if self.gamma <= 0:
            raise InvalidParameterError(f"gamma must be positive, got {self.gamma}")
        if self.delta_nu_minus <= 0 or self.delta_nu_plus <= 0:
            raise InvalidParameterError("linewidths must be positive")
        for name in ("C_minus", "C_plus"):
            c = getattr(self, name)
            if not 0.0 <= c < 1.0:
                raise InvalidParameterError(f"{name} must lie in [0, 1), got {c}")
        if not 0.0 <= self.theta_max <= math.pi / 2:
            raise InvalidParameterError(f"theta_max must lie in [0, pi/2], got {self.theta_max}")
        if self.E_x**2 + self.E_y**2 <= 0:
            raise InvalidParameterError("excitation field must be non-zero")

    @classmethod
    def with_numerical_aperture(cls, na: float, **kwargs) -> "NdeModelParams":
        if not 0.0 <= na <= 1.0:
            raise InvalidParameterError(f"numerical aperture must lie in [0, 1], got {na}")
        return cls(theta_max=math.asin(na), **kwargs)

    @property
    def peak_depth_bound(self) -> float:
        """Upper bound on the dip depth, ``C-/dnu-**2 + C+/dnu+**2``."""
        return (
            self.C_minus / self.delta_nu_minus**2 + self.C_plus / self.delta_nu_plus**2
        )

    def replace(self, **changes) -> "NdeModelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class FieldVector:
    """Magnetic field: magnitude in uT, polar angle from the optical axis and azimuth in rad."""

    magnitude: float
    polar_angle: float = 0.0
    azimuth: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.magnitude) or self.magnitude < 0:
            raise InvalidParameterError(f"field magnitude must be >= 0, got {self.magnitude}")
        if not 0.0 <= self.polar_angle <= math.pi:
            raise InvalidParameterError(f"polar angle must lie in [0, pi], got {self.polar_angle}")


@dataclass(frozen=True, eq=False)
class OdmrSpectrum:
    """Contrast sampled on a strictly increasing microwave frequency grid.

    ``photons_per_point`` is ``None`` for a noiseless spectrum.
    ``true_field_uT`` is optional ground-truth metadata.
    """

    frequencies: np.ndarray
    contrast: np.ndarray
    integration_time: float = 1.0
    photons_per_point: float | None = None
    true_field_uT: float | None = None

    def __post_init__(self):
        freqs = np.array(self.frequencies, dtype=float)
        contrast = np.array(self.contrast, dtype=float)
        if freqs.ndim != 1 or freqs.size < 2:
            raise InvalidParameterError("a spectrum needs at least 2 frequency points")
        if contrast.shape != freqs.shape:
            raise InvalidParameterError(
                f"contrast shape {contrast.shape} does not match frequency shape {freqs.shape}"
            )
        if not np.all(np.isfinite(freqs)) or np.any(np.diff(freqs) <= 0):
            raise InvalidParameterError("frequencies must be finite and strictly increasing")
        if not np.all(np.isfinite(contrast)):
            raise InvalidParameterError("contrast values must be finite")
        freqs.setflags(write=False)
        contrast.setflags(write=False)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "contrast", contrast)

    def __len__(self):
        return self.frequencies.size

    def __eq__(self, other):
        if not isinstance(other, OdmrSpectrum):
            return NotImplemented
        return (
            np.array_equal(self.frequencies, other.frequencies)
            and np.array_equal(self.contrast, other.contrast)
            and self.integration_time == other.integration_time
            and self.photons_per_point == other.photons_per_point
            and self.true_field_uT == other.true_field_uT
        )

    def replace(self, **changes) -> "OdmrSpectrum":
        return dataclasses.replace(self, **changes)


def resonance_frequencies(B, params: NdeModelParams):
    """Lower and upper resonance frequencies (MHz) for an axial field ``B`` (uT)."""
    B = np.asarray(B, dtype=float)
    if np.any(B < 0):
        raise InvalidParameterError("field must be non-negative")
    zeeman = params.gamma * 1e-3 * B
    splitting = np.sqrt(params.E_s**2 + zeeman**2)
    f_minus = params.D - splitting
    f_plus = params.D + splitting
    if f_minus.ndim == 0:
        return float(f_minus), float(f_plus)
    return f_minus, f_plus


def lorentzian(f_mw, f0, delta_nu, C):
    """``C / ((f0 - f_mw)**2 + delta_nu**2)``; peak value ``C / delta_nu**2`` at ``f0``."""
    delta_nu = np.asarray(delta_nu, dtype=float)
    if np.any(delta_nu <= 0):
        raise InvalidParameterError("linewidth must be positive")
    return C / ((np.asarray(f0) - np.asarray(f_mw)) ** 2 + delta_nu**2)


def absorption_efficiency(theta_nv, params: NdeModelParams):
    """Azimuth-integrated excitation efficiency under in-plane illumination."""
    c = np.cos(theta_nv)
    return (params.E_x**2 + params.E_y**2) * np.pi * (1.0 + c**2)


def collection_efficiency(theta_nv, theta_max):
    """Photon collection efficiency of a cone of half-angle ``theta_max``.

    Closed-form integral of ``|e_r x p1|**2 + |e_r x p2|**2`` over the
    collection cone, for the two transition dipoles orthogonal to the NV
    axis. Normalized so that it equals that integral exactly.
    """
    cm = np.cos(theta_max)
    return (np.pi / 12.0) * (
        32.0
        - (31.0 + np.cos(2.0 * theta_max)) * cm
        + 6.0 * np.cos(2.0 * np.asarray(theta_nv)) * np.sin(theta_max) ** 2 * cm
    )


def collection_efficiency_printed(theta_nv, theta_max):
    """Published closed form, kept for comparison.

    Differs from the dipole integral in the orientation term (sign and a
    missing ``cos(theta_max)`` factor); not used by the spectrum model.
    """
    return (np.pi / 12.0) * (
        32.0
        - (31.0 + np.cos(2.0 * theta_max)) * np.cos(theta_max)
        - 6.0 * np.cos(2.0 * np.asarray(theta_nv)) * np.sin(theta_max) ** 2
    )


@functools.lru_cache(maxsize=16)
def _leggauss(nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _gauss_legendre(a: float, b: float, nodes: int):
    x, w = _leggauss(nodes)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def collection_efficiency_numeric(theta_nv, theta_max, nodes: int = 64, phi_nv: float = 0.0):
    """Direct 2-D Gauss-Legendre quadrature of the dipole emission over the collection cone.

    Builds the two dipole unit vectors perpendicular to the NV axis explicitly
    and integrates ``|e_r x p|**2`` over ``theta_r in [0, theta_max]`` and
    ``phi_r in [0, 2 pi]``. Independent of :func:`collection_efficiency`.
    """
    if nodes < 8:
        raise QuadratureResolutionError(f"need at least 8 quadrature nodes, got {nodes}")
    if theta_max == 0:
        return 0.0
    st, ct = math.sin(theta_nv), math.cos(theta_nv)
    sp, cp = math.sin(phi_nv), math.cos(phi_nv)
    e_nv = np.array([st * cp, st * sp, ct])
    p1 = np.array([sp, -cp, 0.0])
    p2 = np.cross(e_nv, p1)
    p2 /= np.linalg.norm(p2)

    th, wth = _gauss_legendre(0.0, theta_max, nodes)
    ph, wph = _gauss_legendre(0.0, 2.0 * np.pi, nodes)
    TH, PH = np.meshgrid(th, ph, indexing="ij")
    e_r = np.stack(
        [np.cos(PH) * np.sin(TH), np.sin(PH) * np.sin(TH), np.cos(TH)], axis=-1
    )
    emitted = np.zeros(TH.shape)
    for p in (p1, p2):
        emitted += np.sum(np.cross(e_r, p) ** 2, axis=-1)
    integrand = emitted * np.sin(TH)
    return float(wth @ integrand @ wph)


@functools.lru_cache(maxsize=64)
def _orientation_weights(theta_max: float, nodes: int):
    """Quadrature nodes cos(theta) and normalized weights kappa*P*sin(theta)."""
    theta, w = _gauss_legendre(0.0, np.pi, nodes)
    weights = w * (1.0 + np.cos(theta) ** 2) * collection_efficiency(theta, theta_max) * np.sin(theta)
    total = weights.sum()
    if total <= 0:
        raise InvalidParameterError("theta_max = 0 collects no light; the spectrum is undefined")
    cos_theta = np.cos(theta)
    weights = weights / total
    cos_theta.setflags(write=False)
    weights.setflags(write=False)
    return cos_theta, weights


def model_contrast(
    frequencies,
    B,
    D,
    E_s,
    gamma,
    delta_nu_minus,
    delta_nu_plus,
    C_minus,
    C_plus,
    theta_max,
    nodes=DEFAULT_QUADRATURE_NODES,
):
    """Unvalidated spectrum evaluation; the fitting hot path.

    The absorption prefactor ``E_x**2 + E_y**2`` cancels in the normalized
    orientation average and is therefore not an argument.
    """
    cos_theta, weights = _orientation_weights(float(theta_max), int(nodes))
    f = np.asarray(frequencies, dtype=float)[:, None]
    splitting = np.sqrt(E_s**2 + (gamma * 1e-3 * B * cos_theta) ** 2)
    dip = C_minus / ((D - splitting - f) ** 2 + delta_nu_minus**2)
    dip += C_plus / ((D + splitting - f) ** 2 + delta_nu_plus**2)
    return 1.0 - dip @ weights


def synthesize_spectrum(
    field_: FieldVector | float,
    params: NdeModelParams | None = None,
    frequencies=None,
    *,
    nodes: int = DEFAULT_QUADRATURE_NODES,
    integration_time: float = 1.0,
) -> OdmrSpectrum:
    """Noiseless ensemble spectrum for an axial field.

    ``field_`` may be a :class:`FieldVector` or a bare magnitude in uT.

    Raises
    ------
    UnsupportedGeometryError
        If the field is tilted away from the optical axis.
    InvalidParameterError
        If the Lorentzian amplitudes could drive the contrast to zero or below.
    """
    if not isinstance(field_, FieldVector):
        field_ = FieldVector(float(field_))
    if field_.polar_angle != 0.0:
        raise UnsupportedGeometryError(
            "only fields along the optical axis (polar angle 0) are modeled"
        )
    params = params or NdeModelParams()
    if params.peak_depth_bound >= 1.0:
        raise InvalidParameterError(
            "C/delta_nu**2 summed over both branches must be < 1 to keep contrast positive"
        )
    if nodes < 8:
        raise QuadratureResolutionError(f"need at least 8 quadrature nodes, got {nodes}")
    freqs = default_frequencies() if frequencies is None else np.asarray(frequencies, dtype=float)
    contrast = model_contrast(
        freqs,
        field_.magnitude,
        params.D,
        params.E_s,
        params.gamma,
        params.delta_nu_minus,
        params.delta_nu_plus,
        params.C_minus,
        params.C_plus,
        params.theta_max,
        nodes,
    )
    return OdmrSpectrum(
        freqs,
        contrast,
        integration_time=integration_time,
        photons_per_point=None,
        true_field_uT=field_.magnitude,
    )


def add_shot_noise(spectrum: OdmrSpectrum, photons_per_point: float, seed) -> OdmrSpectrum:
    """Gaussian approximation of photon shot noise.

    A contrast value ``S`` estimated from ``N`` reference photons has standard
    deviation ``sqrt(S / N)``.
    """
    if not photons_per_point > 0 or not math.isfinite(photons_per_point):
        raise InvalidParameterError(f"photons_per_point must be positive, got {photons_per_point}")
    rng = np.random.default_rng(seed)
    sigma = np.sqrt(np.clip(spectrum.contrast, 0.0, None) / photons_per_point)
    noisy = spectrum.contrast + sigma * rng.standard_normal(spectrum.contrast.shape)
    return spectrum.replace(contrast=noisy, photons_per_point=float(photons_per_point))


def apply_frequency_shift(spectrum: OdmrSpectrum, shift: float) -> OdmrSpectrum:
    """Translate the frequency axis by ``shift`` MHz."""
    return spectrum.replace(frequencies=spectrum.frequencies + shift)


def resample(spectrum: OdmrSpectrum, frequencies) -> OdmrSpectrum:
    """Linear interpolation onto another grid; values beyond the ends are held constant."""
    frequencies = np.asarray(frequencies, dtype=float)
    contrast = np.interp(frequencies, spectrum.frequencies, spectrum.contrast)
    return spectrum.replace(frequencies=frequencies, contrast=contrast)


def dip_separation(spectrum: OdmrSpectrum, center: float = ZERO_FIELD_SPLITTING_MHZ) -> float:
    """Distance between the deepest point below ``center`` and the deepest point above it."""
    f, s = spectrum.frequencies, spectrum.contrast
    lower, upper = f < center, f >= center
    if not lower.any() or not upper.any():
        raise InvalidParameterError("spectrum does not straddle the center frequency")
    f_low = f[lower][np.argmin(s[lower])]
    f_high = f[upper][np.argmin(s[upper])]
    return float(f_high - f_low)
