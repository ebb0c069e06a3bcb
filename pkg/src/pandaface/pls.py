"""Univariate partial least squares regression via NIPALS, with z-scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidComponents

_STD_FLOOR = 1e-12
_RANK_EPS = 1e-12


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray
    y_mean: float
    y_std: float

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.means) / self.stds


@dataclass(frozen=True)
class PlsModel:
    """Regression coefficients in standardized space plus the scaler."""

    beta: np.ndarray
    standardizer: Standardizer
    n_components: int


def standardize_fit(X: np.ndarray, y: np.ndarray):
    """Column-wise z-scoring with sample (N-1) standard deviation.

    Constant columns get their std clamped to 1, leaving them all-zero
    after centring.  Returns (Xz, yz, Standardizer).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need an (N, D) matrix with N >= 2")
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatch("X and y row counts differ")
    means = X.mean(axis=0)
    stds = X.std(axis=0, ddof=1)
    stds = np.where(stds < _STD_FLOOR, 1.0, stds)
    y_mean = float(y.mean())
    y_std = float(y.std(ddof=1))
    if y_std < _STD_FLOOR:
        y_std = 1.0
    xz = (X - means) / stds
    yz = (y - y_mean) / y_std
    return xz, yz, Standardizer(means, stds, y_mean, y_std)


def pls_nipals(Xz: np.ndarray, yz: np.ndarray, n_components: int,
               return_scores: bool = False):
    """NIPALS coefficients beta with prediction = Xz @ beta.

    Per component: weight w proportional to X'y (unit norm), score t = Xw,
    loadings p = X't/(t't) and q = y't/(t't), then deflation of X and y.
    Stops early once the remaining scores carry no variance.
    """
    X = np.array(Xz, dtype=np.float64)
    y = np.array(yz, dtype=np.float64).ravel()
    n, d = X.shape
    if not 1 <= n_components <= min(n - 1, d):
        raise InvalidComponents(
            f"n_components={n_components} outside [1, {min(n - 1, d)}]")

    weights = []
    loadings = []
    q_loadings = []
    scores = []
    for _ in range(n_components):
        xty = X.T @ y
        cov_norm = float(np.linalg.norm(xty))
        if cov_norm < _RANK_EPS:
            break
        w = xty / cov_norm
        t = X @ w
        tt = float(t @ t)
        if tt < _RANK_EPS:
            break
        p = X.T @ t / tt
        q = float(y @ t) / tt
        X -= np.outer(t, p)
        y -= q * t
        weights.append(w)
        loadings.append(p)
        q_loadings.append(q)
        scores.append(t)

    if not weights:
        beta = np.zeros(d)
        t_mat = np.zeros((n, 0))
    else:
        w_mat = np.column_stack(weights)
        p_mat = np.column_stack(loadings)
        q_vec = np.asarray(q_loadings)
        beta = w_mat @ np.linalg.solve(p_mat.T @ w_mat, q_vec)
        t_mat = np.column_stack(scores)
    if return_scores:
        return beta, t_mat
    return beta


def fit(X: np.ndarray, y: np.ndarray, n_components: int) -> PlsModel:
    """Standardize then fit; the returned model consumes raw feature rows."""
    xz, yz, scaler = standardize_fit(X, y)
    n_components = min(n_components, X.shape[0] - 1, X.shape[1])
    beta = pls_nipals(xz, yz, n_components)
    return PlsModel(beta, scaler, n_components)


def pls_predict(model: PlsModel, x_raw: np.ndarray) -> float:
    """De-standardized score in label units for one raw feature vector."""
    x_raw = np.asarray(x_raw, dtype=np.float64).ravel()
    if x_raw.shape[0] != model.beta.shape[0]:
        raise DimensionMismatch(
            f"expected {model.beta.shape[0]} features, got {x_raw.shape[0]}")
    scaler = model.standardizer
    z = (x_raw - scaler.means) / scaler.stds
    return float(z @ model.beta) * scaler.y_std + scaler.y_mean


def predict_rows(model: PlsModel, X_raw: np.ndarray) -> np.ndarray:
    """Vectorized pls_predict over the rows of an (N, D) matrix."""
    X_raw = np.asarray(X_raw, dtype=np.float64)
    if X_raw.shape[1] != model.beta.shape[0]:
        raise DimensionMismatch(
            f"expected {model.beta.shape[0]} features, got {X_raw.shape[1]}")
    scaler = model.standardizer
    z = (X_raw - scaler.means) / scaler.stds
    return z @ model.beta * scaler.y_std + scaler.y_mean
