"""Gaussian-process regression of field magnitude from ODMR spectra.

Spectra are turned into feature vectors by min-max normalizing the contrast
and taking a central-difference derivative with respect to frequency.  The
regressor uses the squared exponential kernel ``exp(-theta * |x - x'|**2)``
with unit amplitude and a zero prior mean; ``beta_inv`` is the output noise
variance in uT**2.  Hyperparameters are picked on a log grid by k-fold
cross-validated mean squared error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import (
    DatasetFormatError,
    DimensionError,
    EmptyTrainingError,
    IllConditionedKernelError,
    InsufficientDataError,
    InvalidParameterError,
)
from .physics import OdmrSpectrum

MODEL_FORMAT = "ndmag-gpr-model"
MODEL_VERSION = 1

JITTER_START = 1e-10
JITTER_MAX = 1e-6
RESIDUAL_TOL = 1e-8

DEFAULT_THETA_GRID = np.logspace(-4, 2, 13)
DEFAULT_BETA_INV_GRID = np.logspace(-2, 4, 13)


def preprocess(spectrum: OdmrSpectrum) -> np.ndarray:
    """Feature vector of a spectrum: derivative of the [0, 1]-normalized contrast.

    Central differences on the (uniform) grid; the two endpoints are dropped,
    so the result has ``len(spectrum) - 2`` entries in units of 1/MHz.
    A constant spectrum maps to all zeros.
    """
    f = spectrum.frequencies
    if f.size < 3:
        raise DimensionError("preprocessing needs at least 3 frequency points")
    steps = np.diff(f)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise InvalidParameterError("preprocessing needs a uniform frequency grid")
    c = spectrum.contrast
    lo, hi = c.min(), c.max()
    if hi == lo:
        return np.zeros(f.size - 2)
    normalized = (c - lo) / (hi - lo)
    return (normalized[2:] - normalized[:-2]) / (f[2:] - f[:-2])


def kernel(x, x2, theta: float) -> float:
    """Squared exponential similarity of two feature vectors."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != x2.shape:
        raise DimensionError(f"feature lengths differ: {x.shape} vs {x2.shape}")
    if not theta > 0:
        raise InvalidParameterError(f"theta must be positive, got {theta}")
    d = x - x2
    return float(np.exp(-theta * np.dot(d, d)))


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances between the rows of ``a`` and ``b``."""
    d = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * a @ b.T
    )
    return np.maximum(d, 0.0)


@dataclass(frozen=True)
class KernelHyperparams:
    theta: float
    beta_inv: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and self.theta > 0):
            raise InvalidParameterError(f"theta must be positive, got {self.theta}")
        if not (math.isfinite(self.beta_inv) and self.beta_inv >= 0):
            raise InvalidParameterError(f"beta_inv must be non-negative, got {self.beta_inv}")


@dataclass(frozen=True)
class Prediction:
    mean: float
    stddev: float


def _as_feature_matrix(features) -> np.ndarray:
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DimensionError("features must be a sequence of equal-length vectors")
    return X


def _factorize(K: np.ndarray, beta_inv: float, y: np.ndarray):
    """Cholesky-solve ``(K + beta_inv I) w = y``, adding diagonal jitter only if needed."""
    n = K.shape[0]
    A = K + beta_inv * np.eye(n)
    scale = np.trace(K) / n
    jitter = 0.0
    next_jitter = JITTER_START
    while True:
        try:
            L = linalg.cholesky(A + jitter * scale * np.eye(n), lower=True)
        except linalg.LinAlgError:
            L = None
        if L is not None:
            w = linalg.cho_solve((L, True), y)
            if np.all(np.isfinite(w)):
                return L, w, jitter * scale
        if next_jitter > JITTER_MAX * (1 + 1e-12):
            raise IllConditionedKernelError(
                f"kernel matrix not positive definite after jitter {JITTER_MAX:g}*trace(K)/n"
            )
        jitter = next_jitter
        next_jitter *= 2.0


class GprModel:
    """A trained regressor. Immutable after construction; safe to share for prediction.

    Parameters
    ----------
    features : (n, m) array
        Training feature vectors.
    targets : (n,) array
        Training field magnitudes, uT.
    hyperparams : KernelHyperparams
    frequencies : array, optional
        Frequency grid of the spectra the features came from.  Used to check
        query spectra and to shift the training data in frequency.
    stddev_scale : float
        Multiplier applied to the posterior standard deviation.  1.0 gives the
        plain posterior; :func:`calibrate_stddev` estimates a data-driven value.
    """

    def __init__(
        self,
        features,
        targets,
        hyperparams: KernelHyperparams,
        frequencies=None,
        stddev_scale: float = 1.0,
    ):
        X = _as_feature_matrix(features)
        y = np.asarray(targets, dtype=float).ravel()
        if X.shape[0] == 0 or y.size == 0:
            raise EmptyTrainingError("cannot train on zero samples")
        if X.shape[0] != y.size:
            raise DimensionError(f"{X.shape[0]} feature vectors but {y.size} targets")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise InvalidParameterError("features and targets must be finite")
        if frequencies is not None:
            frequencies = np.array(frequencies, dtype=float)
            if frequencies.size != X.shape[1] + 2:
                raise DimensionError("frequency grid does not match feature length")
            frequencies.setflags(write=False)
        if not (math.isfinite(stddev_scale) and stddev_scale > 0):
            raise InvalidParameterError(f"stddev_scale must be positive, got {stddev_scale}")
        self.hyperparams = hyperparams
        self.frequencies = frequencies
        self.stddev_scale = float(stddev_scale)
        self.features = X.copy()
        self.targets = y.copy()
        sq = squared_distances(X, X)
        np.fill_diagonal(sq, 0.0)
        self.gram = np.exp(-hyperparams.theta * sq)
        self.factor, self.weights, self.jitter = _factorize(self.gram, hyperparams.beta_inv, y)

        residual = self.residual()
        if residual > RESIDUAL_TOL * max(np.max(np.abs(y)), np.finfo(float).tiny):
            raise IllConditionedKernelError(
                f"linear-system residual {residual:.3g} too large; training data is degenerate"
            )
        for arr in (self.features, self.targets, self.gram, self.factor, self.weights):
            arr.setflags(write=False)

    @property
    def n_train(self) -> int:
        return self.targets.size

    @property
    def feature_length(self) -> int:
        return self.features.shape[1]

    def residual(self) -> float:
        """``max |(K + beta_inv I) w - y|`` against the un-jittered system."""
        A = self.gram + self.hyperparams.beta_inv * np.eye(self.n_train)
        return float(np.max(np.abs(A @ self.weights - self.targets)))

    def _check(self, X: np.ndarray):
        if X.shape[1] != self.feature_length:
            raise DimensionError(
                f"feature length {X.shape[1]} does not match training length {self.feature_length}"
            )

    def predict_many(self, features):
        """Predictive means and standard deviations for a batch of feature vectors."""
        X = _as_feature_matrix(features)
        self._check(X)
        theta, beta_inv = self.hyperparams.theta, self.hyperparams.beta_inv
        k = np.exp(-theta * squared_distances(self.features, X))  # (n, q)
        mean = k.T @ self.weights
        v = linalg.solve_triangular(self.factor, k, lower=True)
        var = 1.0 + beta_inv - np.sum(v * v, axis=0)
        return mean, self.stddev_scale * np.sqrt(np.clip(var, 0.0, None))

    def predict(self, x) -> Prediction:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise DimensionError("predict takes a single feature vector")
        mean, std = self.predict_many(x[None, :])
        return Prediction(float(mean[0]), float(std[0]))

    def predict_spectrum(self, spectrum: OdmrSpectrum) -> Prediction:
        self.check_grid(spectrum)
        return self.predict(preprocess(spectrum))

    def check_grid(self, spectrum: OdmrSpectrum):
        if self.frequencies is None:
            return
        if spectrum.frequencies.shape != self.frequencies.shape or not np.allclose(
            spectrum.frequencies, self.frequencies, rtol=0, atol=1e-9
        ):
            raise DimensionError("spectrum frequency grid differs from the model's training grid")

    # persistence

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "theta": self.hyperparams.theta,
            "beta_inv_uT2": self.hyperparams.beta_inv,
            "stddev_scale": self.stddev_scale,
            "n_train": self.n_train,
            "feature_length": self.feature_length,
            "frequencies_MHz": None if self.frequencies is None else self.frequencies.tolist(),
            "targets_uT": self.targets.tolist(),
            "weights": self.weights.tolist(),
            "features": self.features.tolist(),
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def from_dict(cls, data: dict, path=None) -> "GprModel":
        if data.get("format") != MODEL_FORMAT:
            raise DatasetFormatError("not a GPR model file", path)
        if data.get("version") != MODEL_VERSION:
            raise DatasetFormatError(f"unsupported model version {data.get('version')!r}", path)
        try:
            hyper = KernelHyperparams(float(data["theta"]), float(data["beta_inv_uT2"]))
            model = cls(
                data["features"],
                data["targets_uT"],
                hyper,
                data["frequencies_MHz"],
                float(data.get("stddev_scale", 1.0)),
            )
            n, m = int(data["n_train"]), int(data["feature_length"])
            stored = np.asarray(data["weights"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"malformed model file: {exc}", path) from exc
        if (n, m) != (model.n_train, model.feature_length):
            raise DatasetFormatError("declared sizes disagree with stored arrays", path)
        # verify the stored solution against the rebuilt system
        A = model.gram + hyper.beta_inv * np.eye(n)
        residual = np.max(np.abs(A @ stored - model.targets))
        if stored.shape != (n,) or residual > RESIDUAL_TOL * max(np.max(np.abs(model.targets)), np.finfo(float).tiny):
            raise DatasetFormatError(f"stored weights fail the residual check ({residual:.3g})", path)
        return model

    @classmethod
    def load(cls, path) -> "GprModel":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"invalid JSON: {exc.msg}", path, exc.lineno) from exc
        return cls.from_dict(data, path)


def train(
    features, targets, hyperparams: KernelHyperparams, frequencies=None, stddev_scale=1.0
) -> GprModel:
    return GprModel(features, targets, hyperparams, frequencies, stddev_scale)


def predict(model: GprModel, x) -> Prediction:
    return model.predict(x)


def fold_indices(n: int, folds: int, seed) -> list[np.ndarray]:
    """Contiguous blocks of a seeded permutation of ``range(n)``."""
    order = np.random.default_rng(seed).permutation(n)
    return np.array_split(order, folds)


def cv_loss(features, targets, hyperparams: KernelHyperparams, folds: int = 5, seed=0) -> float:
    """Mean over folds of the held-out mean squared error (uT**2)."""
    grid = cv_loss_grid(features, targets, [hyperparams.theta], [hyperparams.beta_inv], folds, seed)
    return float(grid[0, 0])


def cv_loss_grid(features, targets, theta_grid, beta_inv_grid, folds: int = 5, seed=0) -> np.ndarray:
    """Cross-validation loss for every ``(theta, beta_inv)`` pair.

    Returns an array of shape ``(len(theta_grid), len(beta_inv_grid))``.
    Grid points whose kernel system cannot be factorized get ``inf``.
    """
    X = _as_feature_matrix(features)
    y = np.asarray(targets, dtype=float).ravel()
    n = y.size
    if X.shape[0] != n:
        raise DimensionError(f"{X.shape[0]} feature vectors but {n} targets")
    if folds < 2:
        raise InvalidParameterError("need at least 2 folds")
    if n < folds:
        raise InsufficientDataError(f"{n} samples cannot be split into {folds} folds")
    theta_grid = np.asarray(theta_grid, dtype=float).ravel()
    beta_inv_grid = np.asarray(beta_inv_grid, dtype=float).ravel()
    if theta_grid.size == 0 or beta_inv_grid.size == 0:
        raise InvalidParameterError("hyperparameter grids must be non-empty")

    sq = squared_distances(X, X)
    np.fill_diagonal(sq, 0.0)
    splits = fold_indices(n, folds, seed)
    loss = np.zeros((theta_grid.size, beta_inv_grid.size))
    for i, theta in enumerate(theta_grid):
        KernelHyperparams(theta, 0.0)
        K_full = np.exp(-theta * sq)
        for j, beta_inv in enumerate(beta_inv_grid):
            KernelHyperparams(theta, beta_inv)
            total = 0.0
            for held in splits:
                train_mask = np.ones(n, dtype=bool)
                train_mask[held] = False
                K = K_full[np.ix_(train_mask, train_mask)]
                try:
                    _, w, _ = _factorize(K, beta_inv, y[train_mask])
                except IllConditionedKernelError:
                    total = math.inf
                    break
                pred = K_full[np.ix_(held, train_mask)] @ w
                total += np.mean((pred - y[held]) ** 2)
            loss[i, j] = total / folds
    return loss


def optimize_hyperparams(
    features,
    targets,
    theta_grid=DEFAULT_THETA_GRID,
    beta_inv_grid=DEFAULT_BETA_INV_GRID,
    folds: int = 5,
    seed=0,
) -> KernelHyperparams:
    """Grid point with the smallest k-fold CV loss.

    Ties go to the smaller ``theta``, then the smaller ``beta_inv``.
    """
    theta_grid = np.asarray(theta_grid, dtype=float).ravel()
    beta_inv_grid = np.asarray(beta_inv_grid, dtype=float).ravel()
    loss = cv_loss_grid(features, targets, theta_grid, beta_inv_grid, folds, seed)
    best = None
    for i in np.argsort(theta_grid, kind="stable"):
        for j in np.argsort(beta_inv_grid, kind="stable"):
            if best is None or loss[i, j] < loss[best]:
                best = (i, j)
    if not np.isfinite(loss[best]):
        raise IllConditionedKernelError("no grid point gave a factorizable kernel system")
    return KernelHyperparams(float(theta_grid[best[0]]), float(beta_inv_grid[best[1]]))


def calibrate_stddev(features, targets, hyperparams: KernelHyperparams, folds: int = 5, seed=0) -> float:
    """Scale that makes held-out errors consistent with the posterior stddev.

    Returns ``sqrt(mean(z**2))`` with ``z = (prediction - target) / stddev``
    pooled over the cross-validation folds.  With a unit-amplitude kernel the
    raw posterior stddev ignores how noise in the spectra propagates to the
    field estimate; multiplying by this factor accounts for it.
    """
    X = _as_feature_matrix(features)
    y = np.asarray(targets, dtype=float).ravel()
    n = y.size
    if n < folds:
        raise InsufficientDataError(f"{n} samples cannot be split into {folds} folds")
    z2 = []
    for held in fold_indices(n, folds, seed):
        mask = np.ones(n, dtype=bool)
        mask[held] = False
        model = GprModel(X[mask], y[mask], hyperparams)
        mean, std = model.predict_many(X[held])
        z2.append(((mean - y[held]) / np.maximum(std, np.finfo(float).tiny)) ** 2)
    scale = math.sqrt(float(np.mean(np.concatenate(z2))))
    return scale if scale > 0 else 1.0
