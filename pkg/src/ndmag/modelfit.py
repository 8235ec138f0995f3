"""Physical-model baseline: least-squares fit of the ensemble spectrum model.

``B``, the linewidths and the contrast amplitudes are fitted on a log scale so
they stay positive.  The strain ``E_s`` and zero-field splitting ``D`` are
fitted directly (the model depends on ``E_s**2`` only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _lsq
from .errors import FitNonConvergenceError, InvalidParameterError
from .physics import DEFAULT_QUADRATURE_NODES, NdeModelParams, OdmrSpectrum, model_contrast

DEFAULT_FREE_PARAMS = ("B", "E_s", "delta_nu", "C")
_LOG_PARAMS = {"B", "delta_nu", "delta_nu_minus", "delta_nu_plus", "C", "C_minus", "C_plus"}
_ALLOWED = _LOG_PARAMS | {"E_s", "D"}
_SHARED = {"delta_nu": ("delta_nu_minus", "delta_nu_plus"), "C": ("C_minus", "C_plus")}

# relative width of the residual-norm band treated as a tie between starts
TIE_RTOL = 1e-9


@dataclass
class FitResult:
    B_hat: float
    B_stderr: float
    fitted_params: dict
    residual_norm: float
    iterations: int
    converged: bool
    initial_residual_norm: float = math.nan
    message: str = ""
    stderr: dict = field(default_factory=dict)

    def to_record(self) -> str:
        """Flat ``key=value`` text, one entry per line."""
        lines = [
            f"B_hat_uT={self.B_hat!r}",
            f"B_stderr_uT={self.B_stderr!r}",
            f"residual_norm={self.residual_norm!r}",
            f"initial_residual_norm={self.initial_residual_norm!r}",
            f"iterations={self.iterations}",
            f"converged={str(self.converged).lower()}",
        ]
        for name in sorted(self.fitted_params):
            if name != "B":
                lines.append(f"fit_{name}={self.fitted_params[name]!r}")
        lines.append(f"message={self.message}")
        return "\n".join(lines) + "\n"


def _validate_free(free_params):
    free = tuple(dict.fromkeys(free_params))
    unknown = set(free) - _ALLOWED
    if unknown:
        raise InvalidParameterError(f"unknown free parameters: {sorted(unknown)}")
    if "B" not in free:
        raise InvalidParameterError("B must be a free parameter")
    for shared, pair in _SHARED.items():
        if shared in free and any(p in free for p in pair):
            raise InvalidParameterError(f"{shared} cannot be free together with {pair}")
    return free


def _start_values(initial: NdeModelParams, B0: float, free):
    values = {}
    for name in free:
        if name == "B":
            v = B0
        elif name in _SHARED:
            a, b = _SHARED[name]
            v = 0.5 * (getattr(initial, a) + getattr(initial, b))
        else:
            v = getattr(initial, name)
        if name in _LOG_PARAMS:
            if not v > 0:
                raise InvalidParameterError(f"initial {name} must be positive to be fitted, got {v}")
            v = math.log(v)
        values[name] = v
    return np.array([values[n] for n in free])


def _expand(u, free, initial: NdeModelParams):
    p = {
        "B": None,
        "D": initial.D,
        "E_s": initial.E_s,
        "delta_nu_minus": initial.delta_nu_minus,
        "delta_nu_plus": initial.delta_nu_plus,
        "C_minus": initial.C_minus,
        "C_plus": initial.C_plus,
    }
    for name, value in zip(free, u):
        if name in _LOG_PARAMS:
            value = math.exp(min(max(value, -300.0), 300.0))
        if name in _SHARED:
            for target in _SHARED[name]:
                p[target] = value
        else:
            p[name] = value
    return p


def fit_spectrum(
    spectrum: OdmrSpectrum,
    initial: NdeModelParams | None = None,
    B0: float = 1000.0,
    free_params=DEFAULT_FREE_PARAMS,
    *,
    nodes: int = DEFAULT_QUADRATURE_NODES,
    max_iter: int = 200,
) -> FitResult:
    """Least-squares estimate of the field magnitude from one spectrum.

    Parameters not listed in ``free_params`` are held at their values in
    ``initial``. Failure to converge is reported through
    ``FitResult.converged``, not raised. A fit that cannot constrain ``B``
    (e.g. a flat spectrum) reports ``converged=False`` and an infinite
    ``B_stderr``.
    """
    initial = initial or NdeModelParams()
    if not (math.isfinite(B0) and B0 > 0):
        raise InvalidParameterError(f"initial field B0 must be positive, got {B0}")
    free = _validate_free(free_params)
    u0 = _start_values(initial, B0, free)
    freqs = spectrum.frequencies
    data = spectrum.contrast
    gamma, theta_max = initial.gamma, initial.theta_max

    def residuals(u):
        p = _expand(u, free, initial)
        return (
            model_contrast(
                freqs,
                p["B"],
                p["D"],
                p["E_s"],
                gamma,
                p["delta_nu_minus"],
                p["delta_nu_plus"],
                p["C_minus"],
                p["C_plus"],
                theta_max,
                nodes,
            )
            - data
        )

    res = _lsq.levenberg_marquardt(residuals, u0, max_iter=max_iter)
    p = _expand(res.x, free, initial)
    p["E_s"] = abs(p["E_s"])
    p = {k: None if v is None else float(v) for k, v in p.items()}
    fitted = {name: p[name] for name in ("B", "D", "E_s") if name in free}
    for name in free:
        if name in _SHARED:
            fitted[name] = p[_SHARED[name][0]]
        elif name not in fitted:
            fitted[name] = p[name]

    dof = freqs.size - len(free)
    cov = _lsq.covariance(res.jacobian, res.cost, dof) if dof > 0 else None
    depth = p["C_minus"] / p["delta_nu_minus"] ** 2 + p["C_plus"] / p["delta_nu_plus"] ** 2
    i_b = free.index("B")
    informative = (
        cov is not None
        and depth > 1e-9
        and np.linalg.norm(res.jacobian[:, i_b]) > 1e-12 * math.sqrt(freqs.size)
    )
    if informative:
        # a dip amplitude not resolved at 3 sigma carries no field information
        for i, name in enumerate(free):
            if name in ("C", "C_minus", "C_plus") and math.sqrt(max(cov[i, i], 0.0)) > 1.0 / 3.0:
                informative = False
    stderr = {}
    if informative:
        for i, name in enumerate(free):
            sd = math.sqrt(max(cov[i, i], 0.0))
            stderr[name] = sd * fitted[name] if name in _LOG_PARAMS else sd
        B_stderr = stderr["B"]
        message = res.message
    else:
        B_stderr = math.inf
        message = "field is not constrained by the spectrum"

    return FitResult(
        B_hat=float(p["B"]),
        B_stderr=float(B_stderr),
        fitted_params=fitted,
        residual_norm=math.sqrt(2.0 * res.cost),
        iterations=res.iterations,
        converged=bool(res.converged and informative),
        initial_residual_norm=math.sqrt(2.0 * res.initial_cost),
        message=message,
        stderr=stderr,
    )


def scan_initializations(
    spectrum: OdmrSpectrum,
    B0_grid,
    initial: NdeModelParams | None = None,
    free_params=DEFAULT_FREE_PARAMS,
    **kwargs,
) -> FitResult:
    """Multi-start fit; the converged result with the smallest residual wins.

    Residual norms within ``TIE_RTOL`` of each other count as a tie, decided
    toward the smaller ``B_hat``.
    """
    grid = [float(b) for b in B0_grid]
    if not grid:
        raise InvalidParameterError("initialization grid is empty")
    results = [fit_spectrum(spectrum, initial, b, free_params, **kwargs) for b in grid]
    good = [r for r in results if r.converged]
    if not good:
        raise FitNonConvergenceError(f"none of the {len(grid)} starting points converged")
    best_norm = min(r.residual_norm for r in good)
    band = best_norm * (1 + TIE_RTOL) + 1e-300
    return min((r for r in good if r.residual_norm <= band), key=lambda r: r.B_hat)
