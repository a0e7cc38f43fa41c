"""Gaussian-process surrogate on SO(3).

Squared-exponential kernel in the Frobenius (ambient R^9) embedding,
nugget-regularized interpolant prediction and its analytic Euclidean
gradient. Models are immutable; update() returns a new model built by
rank-1 extension of the Cholesky factor.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .exceptions import ConditioningError

__all__ = [
    "KernelParams",
    "SurrogateModel",
    "kernel",
    "fit",
    "update",
    "predict",
    "euclidean_gradient",
]

_MAX_JITTER_ESCALATIONS = 3


@dataclass(frozen=True)
class KernelParams:
    lengthscale: float = 0.75
    sigma: float = 1.0  # marginal standard deviation; kernel uses sigma**2
    nugget: float = 1e-3

    def __post_init__(self):
        if self.lengthscale <= 0 or self.sigma <= 0 or self.nugget < 0:
            raise ValueError("need lengthscale > 0, sigma > 0, nugget >= 0")


def kernel(R: np.ndarray, S: np.ndarray, params: KernelParams) -> float:
    """c(R, S) = sigma^2 exp(-||R - S||_F^2 / (2 l^2))."""
    d2 = float(np.sum((np.asarray(R) - np.asarray(S)) ** 2))
    return params.sigma**2 * np.exp(-d2 / (2.0 * params.lengthscale**2))


def _kernel_matrix(candidates: np.ndarray, params: KernelParams) -> np.ndarray:
    flat = candidates.reshape(len(candidates), 9)
    sq = np.sum(flat**2, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * flat @ flat.T, 0.0)
    return params.sigma**2 * np.exp(-d2 / (2.0 * params.lengthscale**2))


def _kernel_vector(x: np.ndarray, candidates: np.ndarray, params: KernelParams) -> np.ndarray:
    d2 = np.sum((candidates - x) ** 2, axis=(1, 2))
    return params.sigma**2 * np.exp(-d2 / (2.0 * params.lengthscale**2))


@dataclass(frozen=True)
class SurrogateModel:
    candidates: np.ndarray  # (t, 3, 3)
    values: np.ndarray  # (t,)
    params: KernelParams
    factor: np.ndarray  # lower Cholesky of K + jitter*I
    jitter: float  # nugget actually used (may exceed params.nugget)
    weights: np.ndarray  # (K + jitter*I)^{-1} Y

    @property
    def size(self) -> int:
        return len(self.values)


def fit(candidates, values, params: KernelParams) -> SurrogateModel:
    """Factorize the kernel system, escalating the nugget x10 up to 3 times."""
    candidates = np.asarray(candidates, dtype=np.float64).reshape(-1, 3, 3)
    values = np.asarray(values, dtype=np.float64).ravel()
    if len(candidates) != len(values) or len(values) < 1:
        raise ValueError("need equally many candidates and values, at least one")
    K = _kernel_matrix(candidates, params)
    jitter = params.nugget
    for attempt in range(_MAX_JITTER_ESCALATIONS + 1):
        try:
            factor = np.linalg.cholesky(K + jitter * np.eye(len(values)))
            weights = cho_solve((factor, True), values)
            return SurrogateModel(candidates, values, params, factor, jitter, weights)
        except np.linalg.LinAlgError:
            jitter = 10.0 * jitter if jitter > 0 else 1e-10
    raise ConditioningError(
        f"kernel matrix not SPD even with jitter {jitter:g}", jitter=jitter
    )


def update(model: SurrogateModel, new_rotation: np.ndarray, new_value: float) -> SurrogateModel:
    """Append one observation via rank-1 Cholesky extension.

    Falls back to a full refit if the extension loses positive definiteness.
    """
    R = np.asarray(new_rotation, dtype=np.float64)
    k_vec = _kernel_vector(R, model.candidates, model.params)
    diag = model.params.sigma**2 + model.jitter
    l12 = solve_triangular(model.factor, k_vec, lower=True)
    l22_sq = diag - float(l12 @ l12)
    candidates = np.concatenate([model.candidates, R[None]], axis=0)
    values = np.append(model.values, float(new_value))
    if l22_sq <= 1e-14:
        return fit(candidates, values, model.params)
    t = model.size
    factor = np.zeros((t + 1, t + 1))
    factor[:t, :t] = model.factor
    factor[t, :t] = l12
    factor[t, t] = np.sqrt(l22_sq)
    weights = cho_solve((factor, True), values)
    return replace(
        model, candidates=candidates, values=values, factor=factor, weights=weights
    )


def predict(model: SurrogateModel, x: np.ndarray) -> float:
    """Interpolant value k(x)^T (K + tau I)^{-1} Y."""
    k_vec = _kernel_vector(np.asarray(x, dtype=np.float64), model.candidates, model.params)
    return float(k_vec @ model.weights)


def euclidean_gradient(model: SurrogateModel, x: np.ndarray) -> np.ndarray:
    """Ambient gradient sum_i w_i c(x, R_i) (R_i - x) / l^2."""
    x = np.asarray(x, dtype=np.float64)
    k_vec = _kernel_vector(x, model.candidates, model.params)
    coeff = model.weights * k_vec
    diff = model.candidates - x
    return np.einsum("i,ijk->jk", coeff, diff) / model.params.lengthscale**2
