"""Low-rank tensor emulators of the closure mean and covariance of susceptibles.

Design matrices ``X`` have one row per design point: the continuous
coordinates followed by the source site as the last column. Kriging
distances are Euclidean on coordinates rescaled to the unit box, and
neighbors are drawn only from design points with the same source site.

Both emulators are built from two streaming passes over the forward runs
(:func:`build_emulators`): the first accumulates Gram matrices for the
factor matrices, the second projects each run onto them.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .closure import fadeout_check, integrate_forward, MomentTrajectory
from .exceptions import CholeskyError, IntegrationError, InvalidArgumentError, OutOfDesignWarning
from .kriging import NearestNeighborKriging
from .lattice import Lattice, ParameterMap
from .ssa import make_rng
from .tensor import GramAccumulator, SumStats, nmode_product, top_eigenvectors, unfold, variance_explained


@dataclass(frozen=True, eq=False)
class DesignSpace:
    """Box of continuous parameters plus the candidate source sites."""

    names: tuple
    lower: np.ndarray
    upper: np.ndarray
    s0_candidates: tuple

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != (len(self.names),) or upper.shape != lower.shape:
            raise InvalidArgumentError("need one interval per parameter name")
        if np.any(upper <= lower):
            raise InvalidArgumentError("design intervals must be nondegenerate")
        if len(self.s0_candidates) == 0:
            raise InvalidArgumentError("need at least one candidate source site")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "s0_candidates", tuple(int(s) for s in self.s0_candidates))

    @classmethod
    def from_ranges(cls, ranges: dict, s0_candidates):
        names = tuple(ranges)
        return cls(names, [ranges[n][0] for n in names], [ranges[n][1] for n in names], s0_candidates)

    @property
    def dim(self):
        return len(self.names)

    def scale(self, coords):
        return (np.asarray(coords, dtype=float) - self.lower) / (self.upper - self.lower)

    def contains(self, coords, tol=1e-12):
        u = self.scale(coords)
        return bool(np.all(u >= -tol) and np.all(u <= 1 + tol))

    def to_dict(self):
        return {"names": list(self.names), "lower": self.lower.tolist(),
                "upper": self.upper.tolist(), "s0_candidates": list(self.s0_candidates)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["names"]), d["lower"], d["upper"], tuple(d["s0_candidates"]))


def latin_hypercube(space: DesignSpace, n_points, seed) -> np.ndarray:
    """Latin hypercube on the midpoints of ``n_points`` equal strata per dimension.

    Source sites are dealt round-robin in order of the first coordinate, so
    every candidate gets an equal share (remainder to the earliest
    candidates) spread across the first dimension.
    """
    if n_points < 2:
        raise InvalidArgumentError("need at least two design points")
    rng = make_rng(seed)
    levels = (np.arange(n_points) + 0.5) / n_points
    unit = np.column_stack([rng.permutation(levels) for _ in range(space.dim)])
    coords = space.lower + unit * (space.upper - space.lower)
    cands = np.array(space.s0_candidates)
    s0 = np.empty(n_points)
    s0[np.argsort(unit[:, 0], kind="stable")] = cands[np.arange(n_points) % len(cands)]
    return np.column_stack([coords, s0])


class ForwardRunner:
    """Evaluates the closure at a design row, returning ``(mu_x, s_xx)`` on ``output_times``.

    With ``cache_dir`` set, each run is written to disk on first use and
    read back on later passes.
    """

    def __init__(self, lattice: Lattice, param_map: ParameterMap, output_times,
                 rtol=1e-6, atol=1e-6, cache_dir=None):
        self.lattice = lattice
        self.param_map = param_map
        self.output_times = np.asarray(output_times, dtype=float)
        self.rtol = rtol
        self.atol = atol
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)

    def trajectory(self, row) -> MomentTrajectory:
        row = np.asarray(row, dtype=float)
        theta = self.param_map.to_theta(row[:-1], int(row[-1]))
        return integrate_forward(theta, self.lattice, self.output_times, rtol=self.rtol, atol=self.atol)

    def _key(self, row):
        h = hashlib.sha1(np.asarray(row, dtype="<f8").tobytes())
        h.update(self.output_times.astype("<f8").tobytes())
        h.update(repr((self.rtol, self.atol, self.param_map.eta, self.param_map.y0,
                       self.param_map.t0)).encode())
        if self.param_map.covariate is not None:
            h.update(np.asarray(self.param_map.covariate, dtype="<f8").tobytes())
        h.update(self.lattice.populations.astype("<f8").tobytes())
        h.update(repr(self.lattice.neighbors).encode())
        return h.hexdigest()

    def __call__(self, row):
        if self.cache_dir is not None:
            path = self.cache_dir / f"{self._key(row)}.npz"
            if path.exists():
                with np.load(path) as f:
                    return f["mu_x"], f["s_xx"]
        tr = self.trajectory(row)
        if self.cache_dir is not None:
            tmp = path.with_suffix(".tmp.npz")
            np.savez(tmp, mu_x=tr.mu_x, s_xx=tr.s_xx)
            tmp.replace(path)
        return tr.mu_x, tr.s_xx


def _default_length_scale(dim):
    return 0.25 * np.sqrt(dim)


class _KrigedDesign:
    """Nearest-neighbor kriging over the design, grouped by source site."""

    def _fit_design(self, X):
        space = self.space
        if space is None:
            coords = X[:, :-1]
            lo, hi = coords.min(axis=0), coords.max(axis=0)
            hi = np.where(hi > lo, hi, lo + 1.0)
            space = DesignSpace(tuple(f"x{j}" for j in range(coords.shape[1])), lo, hi,
                                tuple(sorted(set(X[:, -1].astype(int)))))
        self.space_ = space
        self.design_ = X
        zeta = self.length_scale if self.length_scale is not None else _default_length_scale(space.dim)
        self.length_scale_ = float(zeta)
        s0 = X[:, -1].astype(int)
        self.groups_ = {}
        self.krigers_ = {}
        for s in sorted(set(s0)):
            idx = np.flatnonzero(s0 == s)
            self.groups_[s] = idx
            self.krigers_[s] = NearestNeighborKriging(
                self.n_neighbors, zeta, self.smoothness).fit(space.scale(X[idx, :-1]), idx)

    def in_design(self, x):
        x = np.asarray(x, dtype=float)
        return self.space_.contains(x[:-1]) and int(x[-1]) in self.groups_

    def neighbor_weights(self, x):
        """Design indices and ordinary-kriging weights for query row ``x``."""
        check_is_fitted(self, "krigers_")
        x = np.asarray(x, dtype=float)
        s0 = int(x[-1])
        if s0 not in self.krigers_:
            raise InvalidArgumentError(f"source site {s0} is not in the design")
        if not self.space_.contains(x[:-1]):
            warnings.warn(f"query {x[:-1]} lies outside the design box", OutOfDesignWarning,
                          stacklevel=3)
        local, w = self.krigers_[s0].neighbor_weights(self.space_.scale(x[:-1]))
        return self.groups_[s0][local], w


class MeanEmulator(_KrigedDesign, BaseEstimator):
    """Emulates the closure mean of susceptibles as ``gamma @ m(theta) @ delta.T``.

    Parameters
    ----------
    n_spatial, n_temporal : int
        Number of spatial and temporal basis vectors.
    n_neighbors : int
        Design points used by the kriging of each weight.
    length_scale : float, optional
        Matérn range on the unit-scaled design box; defaults to a quarter of
        the box diagonal.
    smoothness : float
    space : DesignSpace, optional
        Design box; inferred from ``X`` when omitted.
    """

    def __init__(self, n_spatial=20, n_temporal=10, n_neighbors=10, length_scale=None,
                 smoothness=2.5, space=None):
        self.n_spatial = n_spatial
        self.n_temporal = n_temporal
        self.n_neighbors = n_neighbors
        self.length_scale = length_scale
        self.smoothness = smoothness
        self.space = space

    def fit(self, X, y=None, runner=None, times=None, fadeout_slack=0.0):
        """Build from design ``X`` and either in-memory means ``y`` (``K x n_s x n_t``) or a runner."""
        build_emulators(X, mean=self, y_mean=y, runner=runner, times=times,
                        fadeout_slack=fadeout_slack)
        return self

    def _begin(self, n_s, n_t):
        if not 1 <= self.n_spatial <= n_s or not 1 <= self.n_temporal <= n_t:
            raise InvalidArgumentError("ranks must not exceed the output dimensions")
        self._gram_s = GramAccumulator(n_s)
        self._gram_t = GramAccumulator(n_t)
        self._stats = SumStats()

    def _pass1(self, mu):
        self._gram_s.add(mu)
        self._gram_t.add(mu.T)
        self._stats.add(mu)

    def _end_pass1(self):
        self.gamma_ = top_eigenvectors(self._gram_s, self.n_spatial)
        self.delta_ = top_eigenvectors(self._gram_t, self.n_temporal)
        self._slices = []
        self._resid = 0.0

    def _pass2(self, mu):
        m = self.gamma_.T @ mu @ self.delta_
        self._slices.append(m)
        self._resid += float(np.sum((mu - self.gamma_ @ m @ self.delta_.T) ** 2))

    def _end_pass2(self):
        self.weights_ = np.stack(self._slices, axis=2)
        self.gamma_, self.delta_ = np.ascontiguousarray(self.gamma_), np.ascontiguousarray(self.delta_)
        self.variance_explained_ = variance_explained(self._stats, self._resid)
        for a in ("_gram_s", "_gram_t", "_stats", "_slices", "_resid"):
            delattr(self, a)

    def weights_at(self, x):
        idx, w = self.neighbor_weights(x)
        return np.tensordot(self.weights_[:, :, idx], w, axes=([2], [0]))

    def predict_one(self, x):
        return self.gamma_ @ self.weights_at(x) @ self.delta_.T

    def predict(self, X):
        X = check_array(X)
        return np.stack([self.predict_one(x) for x in X])

    def reconstruct(self, k):
        """Low-rank reconstruction of design run ``k``."""
        return self.gamma_ @ self.weights_[:, :, k] @ self.delta_.T


class CovEmulator(_KrigedDesign, BaseEstimator):
    """Emulates a factor ``Phi(t)`` with ``Phi(t) @ Phi(t).T`` approximating the closure covariance.

    Each design covariance slice is projected on a shared spatial basis,
    Cholesky-factored, and the factors are compressed along time.

    Parameters
    ----------
    n_spatial, n_temporal : int
        Spatial rank of the projection and temporal rank of the factors.
    n_neighbors, length_scale, smoothness, space
        As for :class:`MeanEmulator`.
    max_jitter_decades : int
        Diagonal jitter retries, starting at ``1e-10 * trace / n_spatial``.
    score : bool
        Run an extra pass over the design to compute the reconstruction
        variance explained.
    """

    def __init__(self, n_spatial=10, n_temporal=10, n_neighbors=10, length_scale=None,
                 smoothness=2.5, space=None, max_jitter_decades=3, score=True):
        self.n_spatial = n_spatial
        self.n_temporal = n_temporal
        self.n_neighbors = n_neighbors
        self.length_scale = length_scale
        self.smoothness = smoothness
        self.space = space
        self.max_jitter_decades = max_jitter_decades
        self.score = score

    def fit(self, X, y=None, runner=None, times=None, fadeout_slack=0.0, y_mean=None):
        """Build from design ``X`` and covariances ``y`` (``K x n_s x n_s x n_t``) or a runner.

        ``y_mean`` is only used for the fadeout screen when ``y`` is given.
        """
        build_emulators(X, cov=self, y_cov=y, y_mean=y_mean, runner=runner, times=times,
                        fadeout_slack=fadeout_slack)
        return self

    def _begin(self, n_s, n_t):
        if not 1 <= self.n_spatial <= n_s or not 1 <= self.n_temporal <= n_t:
            raise InvalidArgumentError("ranks must not exceed the output dimensions")
        self._gram_s = GramAccumulator(n_s)
        self._stats = SumStats()

    def _pass1(self, sxx):
        self._gram_s.add(unfold(sxx, 0))
        self._stats.add(sxx)

    def _end_pass1(self):
        self.Gamma_ = top_eigenvectors(self._gram_s, self.n_spatial)
        self._chol = []
        self._gram_t = None
        self.jitter_events_ = []

    def _cholesky(self, z, t, k):
        z = 0.5 * (z + z.T)
        tr = np.trace(z)
        if tr == 0.0 and not np.any(z):
            return np.zeros_like(z)
        try:
            return np.linalg.cholesky(z)
        except np.linalg.LinAlgError:
            pass
        base = 1e-10 * abs(tr) / len(z)
        for decade in range(self.max_jitter_decades + 1):
            jitter = base * 10.0 ** decade
            try:
                c = np.linalg.cholesky(z + jitter * np.eye(len(z)))
            except np.linalg.LinAlgError:
                continue
            self.jitter_events_.append((int(t), int(k), float(jitter)))
            return c
        raise CholeskyError(f"Cholesky failed at time index {t} of design run {k}")

    def _pass2(self, sxx):
        k = len(self._chol)
        z = np.einsum("ia,ijt,jb->abt", self.Gamma_, sxx, self.Gamma_)
        c = np.stack([self._cholesky(z[:, :, t], t, k) for t in range(z.shape[2])], axis=2)
        self._chol.append(c)
        st = unfold(c, 2)
        if self._gram_t is None:
            self._gram_t = GramAccumulator(st.shape[0])
        self._gram_t.add(st)

    def _end_pass2(self):
        self.Delta_ = top_eigenvectors(self._gram_t, self.n_temporal)
        chol = np.stack(self._chol, axis=3)
        self.weights_ = np.ascontiguousarray(nmode_product(chol, self.Delta_.T, 2))
        self.Gamma_, self.Delta_ = np.ascontiguousarray(self.Gamma_), np.ascontiguousarray(self.Delta_)
        self._resid = 0.0
        del self._chol, self._gram_t

    def _pass3(self, k, sxx):
        phi = self._factor_from_weights(self.weights_[:, :, :, k])
        self._resid += float(np.sum((sxx - np.einsum("tia,tja->ijt", phi, phi)) ** 2))

    def _end_pass3(self, scored):
        self.variance_explained_ = variance_explained(self._stats, self._resid) if scored else None
        del self._stats, self._gram_s, self._resid

    def _factor_from_weights(self, m):
        c = nmode_product(m, self.Delta_, 2)
        return np.einsum("ia,abt->tib", self.Gamma_, c)

    def weights_at(self, x):
        idx, w = self.neighbor_weights(x)
        m = np.tensordot(self.weights_[:, :, :, idx], w, axes=([3], [0]))
        # only the lower triangle carries Cholesky weights
        return m * np.tril(np.ones(m.shape[:2]))[:, :, None]

    def predict_factor(self, x):
        """``Phi(t)`` for every output time, shape ``n_t x n_s x n_spatial``."""
        return self._factor_from_weights(self.weights_at(x))

    def predict(self, X):
        """Emulated covariance matrices, shape ``n x n_s x n_s x n_t``."""
        X = check_array(X)
        out = []
        for x in X:
            phi = self.predict_factor(x)
            out.append(np.einsum("tia,tja->ijt", phi, phi))
        return np.stack(out)

    def reconstruct(self, k):
        phi = self._factor_from_weights(self.weights_[:, :, :, k])
        return np.einsum("tia,tja->ijt", phi, phi)


def build_emulators(X, mean: MeanEmulator | None = None, cov: CovEmulator | None = None,
                    y_mean=None, y_cov=None, runner=None, times=None, fadeout_slack=0.0):
    """Two-pass streaming build of the mean and/or covariance emulator.

    Design runs whose mean susceptibles increase (beyond ``fadeout_slack``),
    or whose forward integration fails, are excluded; their rows are stored
    in ``excluded_`` on each emulator.
    Returns the indices of the retained design rows.
    """
    X = check_array(X)
    if mean is None and cov is None:
        raise InvalidArgumentError("nothing to build")
    if runner is None and ((mean is not None and y_mean is None) or (cov is not None and y_cov is None)):
        raise InvalidArgumentError("need in-memory outputs or a runner")
    if runner is not None and times is None:
        times = getattr(runner, "output_times", None)
    K = len(X)

    def fetch(k):
        if runner is not None:
            return runner(X[k])
        mu = np.asarray(y_mean[k], dtype=float) if y_mean is not None else None
        sxx = np.asarray(y_cov[k], dtype=float) if y_cov is not None else None
        return mu, sxx

    ems = [e for e in (mean, cov) if e is not None]
    keep, excluded = [], []
    started = False
    for k in range(K):
        try:
            mu, sxx = fetch(k)
        except IntegrationError:
            # the closure blew up, which only happens deep in the fadeout regime
            excluded.append(k)
            continue
        if mu is not None:
            path = MomentTrajectory(np.arange(mu.shape[1]), mu, None, None, None, None)
            if not fadeout_check(path, fadeout_slack):
                excluded.append(k)
                continue
        if not started:
            n_s, n_t = (mu.shape if mu is not None else (sxx.shape[0], sxx.shape[2]))
            for e in ems:
                e._begin(n_s, n_t)
            started = True
        keep.append(k)
        if mean is not None:
            mean._pass1(mu)
        if cov is not None:
            cov._pass1(sxx)
    if len(keep) < 2:
        raise InvalidArgumentError("fewer than two design points survived the fadeout screen")
    for e in ems:
        e._end_pass1()
    for k in keep:
        mu, sxx = fetch(k)
        if mean is not None:
            mean._pass2(mu)
        if cov is not None:
            cov._pass2(sxx)
    for e in ems:
        e._end_pass2()
    if cov is not None:
        if cov.score:
            for j, k in enumerate(keep):
                cov._pass3(j, fetch(k)[1])
        cov._end_pass3(cov.score)
    keep = np.array(keep, dtype=int)
    for e in ems:
        e._fit_design(X[keep])
        e.excluded_ = X[np.array(excluded, dtype=int)] if excluded else np.empty((0, X.shape[1]))
        e.times_ = None if times is None else np.asarray(times, dtype=float)
    return keep


@dataclass
class CVResult:
    fold: int
    mean_rel_errors: np.ndarray
    cov_rel_errors: np.ndarray | None

    def as_dict(self):
        d = {"fold": self.fold, "mean_rel_error_avg": float(np.mean(self.mean_rel_errors)),
             "mean_rel_error_max": float(np.max(self.mean_rel_errors))}
        if self.cov_rel_errors is not None:
            d["cov_rel_error_avg"] = float(np.mean(self.cov_rel_errors))
            d["cov_rel_error_max"] = float(np.max(self.cov_rel_errors))
        return d


def cross_validate(X, runner, mean_params, cov_params=None, n_folds=5, seed=0):
    """K-fold relative Frobenius errors of emulated means (and covariances) on held-out runs."""
    X = check_array(X)
    perm = make_rng(seed).permutation(len(X))
    folds = np.array_split(perm, n_folds)
    results = []
    for f, test in enumerate(folds):
        train = np.setdiff1d(perm, test)
        mean = MeanEmulator(**mean_params)
        cov = CovEmulator(**{**cov_params, "score": False}) if cov_params is not None else None
        build_emulators(X[train], mean=mean, cov=cov, runner=runner)
        m_err, c_err = [], []
        for k in test:
            mu, sxx = runner(X[k])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", OutOfDesignWarning)
                m_err.append(np.linalg.norm(mean.predict_one(X[k]) - mu) / np.linalg.norm(mu))
                if cov is not None:
                    s_hat = cov.predict(X[k:k + 1])[0]
                    c_err.append(np.linalg.norm(s_hat - sxx) / np.linalg.norm(sxx))
        results.append(CVResult(f, np.array(m_err), np.array(c_err) if cov is not None else None))
    return results
