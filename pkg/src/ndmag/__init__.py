"""Field estimation from nanodiamond-ensemble ODMR spectra.

Submodules: :mod:`physics` (spectrum model and synthesis), :mod:`gpr`
(Gaussian-process regression), :mod:`modelfit` (least-squares baseline),
:mod:`pipeline` (imaging and analyses), :mod:`io` (file formats) and
:mod:`cli`.
"""

from .errors import (
    DatasetFormatError,
    DimensionError,
    EmptyTrainingError,
    FitNonConvergenceError,
    IllConditionedKernelError,
    InsufficientDataError,
    InvalidParameterError,
    NdmagError,
    QuadratureResolutionError,
    UnidentifiableParametersError,
    UnsupportedGeometryError,
)
from .gpr import GprModel, KernelHyperparams, Prediction, optimize_hyperparams, preprocess, train
from .modelfit import FitResult, fit_spectrum, scan_initializations
from .physics import (
    FieldVector,
    NdeModelParams,
    OdmrSpectrum,
    add_shot_noise,
    collection_efficiency,
    collection_efficiency_numeric,
    default_frequencies,
    synthesize_spectrum,
)
from .pipeline import (
    AccuracyReport,
    FieldMap,
    WireModel,
    average_along_y,
    error_histograms,
    fit_accuracy_sensitivity,
    fit_wire,
    predict_map,
    shift_scan,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyReport",
    "DatasetFormatError",
    "DimensionError",
    "EmptyTrainingError",
    "FieldMap",
    "FieldVector",
    "FitNonConvergenceError",
    "FitResult",
    "GprModel",
    "IllConditionedKernelError",
    "InsufficientDataError",
    "InvalidParameterError",
    "KernelHyperparams",
    "NdeModelParams",
    "NdmagError",
    "OdmrSpectrum",
    "Prediction",
    "QuadratureResolutionError",
    "UnidentifiableParametersError",
    "UnsupportedGeometryError",
    "WireModel",
    "add_shot_noise",
    "average_along_y",
    "collection_efficiency",
    "collection_efficiency_numeric",
    "default_frequencies",
    "error_histograms",
    "fit_accuracy_sensitivity",
    "fit_spectrum",
    "fit_wire",
    "optimize_hyperparams",
    "predict_map",
    "preprocess",
    "scan_initializations",
    "shift_scan",
    "synthesize_spectrum",
    "train",
]
