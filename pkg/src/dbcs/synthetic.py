"""Desk-scale synthetic datasets with known ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import as_rng, chain_product, gaussian_matrix, normalize_columns
from .exceptions import ConfigError

GENERATORS = ("planted_factorization", "labeled_mixture")


@dataclass
class SyntheticSpec:
    """Parameters of a synthetic generator.

    ``planted_factorization`` uses ``sizes``, ``sparsity``, ``n_samples`` and
    ``noise``; ``labeled_mixture`` uses ``n_features``, ``n_classes``,
    ``mean_scale``, ``class_noise`` and ``samples_per_class``.
    """

    generator: str = "planted_factorization"
    sizes: list = field(default_factory=lambda: [64, 48, 32])
    sparsity: int = 5
    n_samples: int = 400
    noise: float = 0.0
    n_features: int = 64
    n_classes: int = 4
    mean_scale: float = 1.0
    class_noise: float = 0.5
    samples_per_class: int = 60

    def validate(self):
        if self.generator not in GENERATORS:
            raise ConfigError(f"unknown generator {self.generator!r}; expected one of {GENERATORS}")
        if self.generator == "planted_factorization":
            if len(self.sizes) < 2 or min(self.sizes) < 1:
                raise ConfigError(f"sizes must be [n, k1, ..., kM], got {self.sizes}")
            if not 1 <= self.sparsity <= self.sizes[-1]:
                raise ConfigError(f"sparsity {self.sparsity} must lie in [1, {self.sizes[-1]}]")
            if self.n_samples < 1:
                raise ConfigError("n_samples must be positive")
            if self.noise < 0:
                raise ConfigError("noise must be nonnegative")
        else:
            if self.n_classes < 2:
                raise ConfigError("labeled_mixture needs at least 2 classes")
            if self.n_features < 1 or self.samples_per_class < 1:
                raise ConfigError("n_features and samples_per_class must be positive")
            if self.class_noise < 0 or self.mean_scale < 0:
                raise ConfigError("mean_scale and class_noise must be nonnegative")
        return self


@dataclass
class SyntheticData:
    X: np.ndarray
    labels: np.ndarray | None = None
    dictionaries: list | None = None
    codes: np.ndarray | None = None


def planted_factorization(sizes, sparsity, n_samples, noise, rng):
    """``X = D*_1 ... D*_M Z* + noise`` with unit-column Gaussian ``D*_i``.

    Every column of ``Z*`` has exactly ``sparsity`` nonzeros at uniformly
    chosen positions with standard normal values.
    """
    rng = as_rng(rng)
    dict_rng, code_rng, noise_rng = rng.spawn(0), rng.spawn(1), rng.spawn(2)
    dicts = [normalize_columns(gaussian_matrix(sizes[i], sizes[i + 1], dict_rng), dict_rng)[0]
             for i in range(len(sizes) - 1)]
    k = sizes[-1]
    Z = np.zeros((k, n_samples))
    for j in range(n_samples):
        support = np.sort(code_rng.choice(k, sparsity, replace=False))
        Z[support, j] = code_rng.normal(sparsity)
    X = chain_product(dicts + [Z])
    if noise > 0:
        X = X + noise * gaussian_matrix(X.shape[0], X.shape[1], noise_rng)
    return SyntheticData(X, None, dicts, Z)


def labeled_mixture(n_features, n_classes, mean_scale, class_noise, samples_per_class, rng):
    """Gaussian class clusters; samples are grouped by class in column order."""
    rng = as_rng(rng)
    means = mean_scale * gaussian_matrix(n_features, n_classes, rng.spawn(0))
    labels = np.repeat(np.arange(n_classes), samples_per_class)
    X = means[:, labels]
    if class_noise > 0:
        X = X + class_noise * gaussian_matrix(n_features, labels.size, rng.spawn(1))
    return SyntheticData(X, labels)


def synth(spec, rng):
    """Draw a dataset according to ``spec``; deterministic in ``rng``."""
    spec.validate()
    if spec.generator == "planted_factorization":
        return planted_factorization(list(spec.sizes), spec.sparsity, spec.n_samples,
                                     spec.noise, rng)
    return labeled_mixture(spec.n_features, spec.n_classes, spec.mean_scale,
                           spec.class_noise, spec.samples_per_class, rng)
