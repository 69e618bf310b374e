"""Gaussian moment-closure forward equations for the spatial SIR process.

The closure evolves means and covariances of ``(X, Y)`` by treating the
state as jointly normal, so third central moments vanish. Writing the
infection rate at site ``i`` as ``a_i = X_i (W Y)_i / N_i`` with
``W = diag(beta) + phi * A`` and the recovery rate as ``b_i = eta * Y_i``,
each moment's drift is the covariance of the state with the rates plus the
expected squared jump. The resulting system is evaluated in matrix form.

Packed state layout::

    [mu_x | mu_y | upper triangle of s_xx | s_xy (row-major) | upper triangle of s_yy]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .exceptions import IntegrationError, InvalidArgumentError
from .lattice import Lattice, Theta, infection_matrix


@dataclass
class MomentState:
    """Means and covariance blocks at one time.

    ``s_xy[i, k]`` is ``Cov(X_i, Y_k)`` and is not symmetric in general.
    """

    mu_x: np.ndarray
    mu_y: np.ndarray
    s_xx: np.ndarray
    s_xy: np.ndarray
    s_yy: np.ndarray

    @property
    def n_sites(self):
        return len(self.mu_x)

    def full_covariance(self):
        return np.block([[self.s_xx, self.s_xy], [self.s_xy.T, self.s_yy]])

    @classmethod
    def deterministic(cls, theta: Theta, lattice: Lattice) -> "MomentState":
        """Point mass at the outbreak start: ``y0`` infectious at the source."""
        theta = theta.for_lattice(lattice)
        n = lattice.n_sites
        mu_x = lattice.populations.astype(float).copy()
        mu_y = np.zeros(n)
        mu_x[theta.s0] -= theta.y0
        mu_y[theta.s0] = theta.y0
        z = np.zeros((n, n))
        return cls(mu_x, mu_y, z, z.copy(), z.copy())


def state_size(n):
    return 2 * n + n * n + n * (n + 1)


def pack(state: MomentState) -> np.ndarray:
    n = state.n_sites
    iu = np.triu_indices(n)
    return np.concatenate([
        state.mu_x, state.mu_y, state.s_xx[iu], state.s_xy.ravel(), state.s_yy[iu],
    ])


def unpack(vec, n) -> MomentState:
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (state_size(n),):
        raise InvalidArgumentError("packed vector has the wrong length")
    m = n * (n + 1) // 2
    iu = np.triu_indices(n)
    mu_x = vec[:n]
    mu_y = vec[n:2 * n]
    off = 2 * n
    s_xx = _sym_from_upper(vec[off:off + m], n, iu)
    off += m
    s_xy = vec[off:off + n * n].reshape(n, n)
    off += n * n
    s_yy = _sym_from_upper(vec[off:off + m], n, iu)
    return MomentState(mu_x.copy(), mu_y.copy(), s_xx, s_xy.copy(), s_yy)


def _sym_from_upper(vals, n, iu):
    out = np.zeros((n, n))
    out[iu] = vals
    out.T[iu] = vals
    return out


class ClosureSystem:
    """Forward equations for one parameter point on one lattice."""

    def __init__(self, theta: Theta, lattice: Lattice):
        theta = theta.for_lattice(lattice)
        self.n = lattice.n_sites
        self.w = infection_matrix(theta, lattice)
        self.inv_pop = 1.0 / lattice.populations
        self.eta = float(theta.eta)
        self._iu = np.triu_indices(self.n)

    def rhs(self, st: MomentState) -> MomentState:
        w, g, eta = self.w, self.inv_pop, self.eta
        mu_x, mu_y, s_xx, s_xy, s_yy = st.mu_x, st.mu_y, st.s_xx, st.s_xy, st.s_yy
        pressure = w @ mu_y                                # E[(W Y)_i]
        cov_x_pressure = np.einsum("ik,ik->i", s_xy, w)    # Cov(X_i, (W Y)_i)
        mean_inf = g * (mu_x * pressure + cov_x_pressure)  # E[a_i]
        # Cov(X_j, a_k) and Cov(Y_j, a_k)
        c_xa = (s_xy @ w.T) * (g * mu_x) + s_xx * (g * pressure)
        c_ya = (s_yy @ w.T) * (g * mu_x) + s_xy.T * (g * pressure)
        d_mu_x = -mean_inf
        d_mu_y = mean_inf - eta * mu_y
        d_xx = -(c_xa + c_xa.T) + np.diag(mean_inf)
        d_xy = c_xa - eta * s_xy - c_ya.T - np.diag(mean_inf)
        yy = c_ya - eta * s_yy
        d_yy = yy + yy.T + np.diag(mean_inf + eta * mu_y)
        return MomentState(d_mu_x, d_mu_y, d_xx, d_xy, d_yy)

    def rhs_packed(self, t, vec):
        n = self.n
        m = n * (n + 1) // 2
        iu = self._iu
        mu_x = vec[:n]
        mu_y = vec[n:2 * n]
        off = 2 * n
        s_xx = _sym_from_upper(vec[off:off + m], n, iu)
        off += m
        s_xy = vec[off:off + n * n].reshape(n, n)
        off += n * n
        s_yy = _sym_from_upper(vec[off:off + m], n, iu)
        d = self.rhs(MomentState(mu_x, mu_y, s_xx, s_xy, s_yy))
        return np.concatenate([d.mu_x, d.mu_y, d.s_xx[iu], d.s_xy.ravel(), d.s_yy[iu]])


def forward_rhs(state: MomentState, theta: Theta, lattice: Lattice) -> MomentState:
    """Time derivative of every moment."""
    if state.n_sites != lattice.n_sites:
        raise InvalidArgumentError("state dimensions do not match the lattice")
    return ClosureSystem(theta, lattice).rhs(state)


def nonspatial_rhs(mu_x, mu_y, s_xx, s_xy, s_yy, beta, eta, N):
    """The five-equation closure of the single-population stochastic SIR model."""
    if N <= 0:
        raise InvalidArgumentError("population must be positive")
    b = beta / N
    mean_inf = b * (mu_x * mu_y + s_xy)
    d_mu_x = -mean_inf
    d_mu_y = mean_inf - eta * mu_y
    d_xx = -2 * b * (mu_x * s_xy + mu_y * s_xx) + mean_inf
    d_xy = (b * (mu_x * s_xy - mu_x * s_yy + mu_y * s_xx - mu_y * s_xy
                 - mu_x * mu_y - s_xy) - eta * s_xy)
    d_yy = (2 * b * (mu_x * s_yy + mu_y * s_xy) + mean_inf
            - 2 * eta * s_yy + eta * mu_y)
    return d_mu_x, d_mu_y, d_xx, d_xy, d_yy


@dataclass
class MomentTrajectory:
    """Closure solution on an output grid; path arrays have time last."""

    times: np.ndarray
    mu_x: np.ndarray
    mu_y: np.ndarray
    s_xx: np.ndarray
    s_xy: np.ndarray
    s_yy: np.ndarray

    def state_at(self, j) -> MomentState:
        return MomentState(self.mu_x[:, j], self.mu_y[:, j], self.s_xx[:, :, j],
                           self.s_xy[:, :, j], self.s_yy[:, :, j])

    def min_eigenvalues(self):
        """Smallest eigenvalue of the joint ``(X, Y)`` covariance at each time."""
        return np.array([np.linalg.eigvalsh(self.state_at(j).full_covariance())[0]
                         for j in range(len(self.times))])

    def psd_violations(self, rel_tol=1e-6):
        """Indices of times whose joint covariance dips below ``-rel_tol * max diag``."""
        out = []
        for j, lam in enumerate(self.min_eigenvalues()):
            st = self.state_at(j)
            scale = max(np.max(np.diag(st.s_xx)), np.max(np.diag(st.s_yy)), 1.0)
            if lam < -rel_tol * scale:
                out.append(j)
        return out


def integrate_forward(theta: Theta, lattice: Lattice, output_times, init: MomentState | None = None,
                      rtol=1e-6, atol=1e-6, max_step=np.inf) -> MomentTrajectory:
    """Integrate the forward equations with Dormand-Prince 5(4) from ``theta.t0``.

    ``init`` defaults to the deterministic start at the source site.
    """
    theta = theta.for_lattice(lattice)
    output_times = np.asarray(output_times, dtype=float)
    if output_times.ndim != 1 or len(output_times) == 0 or np.any(np.diff(output_times) <= 0):
        raise InvalidArgumentError("output_times must be strictly ascending")
    t0 = float(theta.t0)
    if output_times[0] < t0:
        raise InvalidArgumentError("output_times start before the outbreak")
    if init is None:
        init = MomentState.deterministic(theta, lattice)
    system = ClosureSystem(theta, lattice)
    n = lattice.n_sites
    y0 = pack(init)
    if output_times[-1] == t0:
        sol_y = np.repeat(y0[:, None], len(output_times), axis=1)
    else:
        sol = solve_ivp(system.rhs_packed, (t0, output_times[-1]), y0, method="RK45",
                        t_eval=output_times, rtol=rtol, atol=atol, max_step=max_step)
        if sol.status != 0:
            reached = float(sol.t[-1]) if len(sol.t) else t0
            raise IntegrationError(f"forward equations failed: {sol.message}", time=reached)
        sol_y = sol.y
    nt = len(output_times)
    mu_x = sol_y[:n]
    mu_y = sol_y[n:2 * n]
    s_xx = np.empty((n, n, nt))
    s_xy = np.empty((n, n, nt))
    s_yy = np.empty((n, n, nt))
    for j in range(nt):
        st = unpack(sol_y[:, j], n)
        s_xx[:, :, j] = st.s_xx
        s_xy[:, :, j] = st.s_xy
        s_yy[:, :, j] = st.s_yy
    return MomentTrajectory(output_times.copy(), mu_x.copy(), mu_y.copy(), s_xx, s_xy, s_yy)


@dataclass
class FadeoutReport:
    passed: bool
    site: int | None = None
    time: float | None = None

    def __bool__(self):
        return self.passed


def fadeout_check(traj: MomentTrajectory, slack=0.0) -> FadeoutReport:
    """Check that mean susceptibles never increase by more than ``slack``."""
    inc = traj.mu_x[:, 1:] - traj.mu_x[:, :-1]
    bad = np.argwhere(inc > slack)
    if len(bad) == 0:
        return FadeoutReport(True)
    # earliest violation in time, then lowest site
    order = np.lexsort((bad[:, 0], bad[:, 1]))
    s, j = bad[order[0]]
    return FadeoutReport(False, int(s), float(traj.times[j + 1]))
