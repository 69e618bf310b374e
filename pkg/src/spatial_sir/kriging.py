"""Matérn correlation and nearest-neighbour ordinary kriging."""

from __future__ import annotations

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree
from scipy.special import gamma, kv
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InvalidArgumentError


def matern(d, zeta, kappa=2.5):
    """Matérn correlation with range ``zeta`` and smoothness ``kappa``.

    Uses the ``sqrt(2 kappa) d / zeta`` scaling, so ``kappa = 2.5`` gives
    ``(1 + u + u^2 / 3) exp(-u)`` with ``u = sqrt(5) d / zeta``.
    """
    if zeta <= 0:
        raise InvalidArgumentError("Matérn range must be positive")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise InvalidArgumentError("distances must be nonnegative")
    u = np.sqrt(2.0 * kappa) * d / zeta
    if kappa == 0.5:
        return np.exp(-u)
    if kappa == 1.5:
        return (1.0 + u) * np.exp(-u)
    if kappa == 2.5:
        return (1.0 + u + u * u / 3.0) * np.exp(-u)
    with np.errstate(invalid="ignore"):
        out = 2.0 ** (1.0 - kappa) / gamma(kappa) * u ** kappa * kv(kappa, u)
    return np.where(u == 0.0, 1.0, np.nan_to_num(out))


def _solve_spd(e11, rhs, jitter=1e-10):
    try:
        return linalg.cho_solve(linalg.cho_factor(e11, lower=True), rhs)
    except linalg.LinAlgError:
        pass
    try:
        e = e11 + jitter * np.eye(len(e11))
        return linalg.cho_solve(linalg.cho_factor(e, lower=True), rhs)
    except linalg.LinAlgError:
        raise InvalidArgumentError("kriging correlation matrix is singular") from None


def ordinary_kriging_weights(neighbors, target, zeta, kappa=2.5):
    """Weights ``w`` such that the ordinary-kriging prediction is ``w @ values``.

    ``neighbors`` is ``n x p`` and ``target`` has length ``p``. The weights
    sum to one and reduce to a unit vector when the target coincides with a
    neighbor.
    """
    neighbors = np.atleast_2d(np.asarray(neighbors, dtype=float))
    target = np.asarray(target, dtype=float)
    d_tn = np.linalg.norm(neighbors - target, axis=1)
    hit = np.flatnonzero(d_tn == 0.0)
    if len(hit):
        w = np.zeros(len(neighbors))
        w[hit[0]] = 1.0
        return w
    d_nn = np.linalg.norm(neighbors[:, None, :] - neighbors[None, :, :], axis=2)
    e11 = matern(d_nn, zeta, kappa)
    e12 = matern(d_tn, zeta, kappa)
    ones = np.ones(len(neighbors))
    sol = _solve_spd(e11, np.column_stack([e12, ones]))
    inv_e, inv_1 = sol[:, 0], sol[:, 1]
    return inv_e + inv_1 * (1.0 - ones @ inv_e) / (ones @ inv_1)


def krige_scalar(values, design, target, zeta, n_neighbors, kappa=2.5):
    """Ordinary-kriging prediction of one scalar field from its ``n_neighbors`` nearest design values.

    The mean is the generalized-least-squares estimate
    ``(1' E11^-1 m) / (1' E11^-1 1)`` over the neighbor values ``m``.
    """
    values = np.asarray(values, dtype=float)
    design = np.atleast_2d(np.asarray(design, dtype=float))
    target = np.asarray(target, dtype=float)
    if n_neighbors > len(values):
        raise InvalidArgumentError("more neighbors requested than design points")
    d = np.linalg.norm(design - target, axis=1)
    idx = np.argsort(d, kind="stable")[:n_neighbors]
    nb, m = design[idx], values[idx]
    if d[idx[0]] == 0.0:
        return float(m[0])
    d_nn = np.linalg.norm(nb[:, None, :] - nb[None, :, :], axis=2)
    e11 = matern(d_nn, zeta, kappa)
    e21 = matern(d[idx], zeta, kappa)
    ones = np.ones(n_neighbors)
    sol = _solve_spd(e11, np.column_stack([m, ones]))
    mu_hat = (ones @ sol[:, 0]) / (ones @ sol[:, 1])
    resid = _solve_spd(e11, m - mu_hat)
    return float(mu_hat + e21 @ resid)


class NearestNeighborKriging(RegressorMixin, BaseEstimator):
    """Ordinary kriging restricted to the nearest design points, for many outputs at once.

    Every output column shares the same Matérn correlation, so the kriging
    weights are computed once per query point and applied to all columns.

    Parameters
    ----------
    n_neighbors : int
        Design points used per prediction.
    length_scale : float
        Matérn range, in the units of ``X``.
    smoothness : float
        Matérn smoothness.
    """

    def __init__(self, n_neighbors=10, length_scale=0.25, smoothness=2.5):
        self.n_neighbors = n_neighbors
        self.length_scale = length_scale
        self.smoothness = smoothness

    def fit(self, X, y):
        X = check_array(X)
        y = np.asarray(y, dtype=float)
        if len(y) != len(X):
            raise InvalidArgumentError("X and y have different lengths")
        if self.n_neighbors < 1 or self.length_scale <= 0:
            raise InvalidArgumentError("need n_neighbors >= 1 and a positive length_scale")
        self.X_ = X
        self.y_ = y
        self.tree_ = cKDTree(X)
        self.n_features_in_ = X.shape[1]
        return self

    def neighbor_weights(self, x):
        """Indices of the nearest design points and their kriging weights."""
        check_is_fitted(self, "tree_")
        k = min(self.n_neighbors, len(self.X_))
        _, idx = self.tree_.query(np.asarray(x, dtype=float), k=k)
        idx = np.sort(np.atleast_1d(idx))
        w = ordinary_kriging_weights(self.X_[idx], x, self.length_scale, self.smoothness)
        return idx, w

    def predict(self, X):
        X = check_array(X)
        out = []
        for x in X:
            idx, w = self.neighbor_weights(x)
            out.append(np.tensordot(w, self.y_[idx], axes=1))
        return np.asarray(out)
