"""Exact (direct-method) Gillespie simulation of the spatial SIR jump process.

Every replicate owns a Philox stream; replicate ``r`` of an ensemble seeded
with ``seed`` uses ``seed ^ r``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .exceptions import InvalidArgumentError
from .lattice import EpidemicState, Lattice, Theta, initial_state


@dataclass
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray


@dataclass
class ObservationSet:
    """Reported new infections ``counts[s, j]`` over the interval ending at ``times[j]``."""

    counts: np.ndarray
    times: np.ndarray
    p: float
    nu: float


@dataclass
class EnsembleMoments:
    """Empirical moments across replicates; covariance blocks are ``n_s x n_s x n_t``."""

    times: np.ndarray
    mu_x: np.ndarray
    mu_y: np.ndarray
    s_xx: np.ndarray
    s_xy: np.ndarray
    s_yy: np.ndarray
    se_x: np.ndarray
    se_y: np.ndarray
    n_reps: int


def make_rng(seed):
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def _csr(lattice: Lattice):
    indptr = np.zeros(lattice.n_sites + 1, dtype=np.int64)
    for i, row in enumerate(lattice.neighbors):
        indptr[i + 1] = indptr[i] + len(row)
    indices = np.array([k for row in lattice.neighbors for k in row], dtype=np.int64)
    return indptr, indices


@numba.njit(cache=True)
def _infection_rate(i, x, y, beta, phi, pops, indptr, indices):
    pressure = beta[i] * y[i]
    for q in range(indptr[i], indptr[i + 1]):
        pressure += phi * y[indices[q]]
    return x[i] * pressure / pops[i]


@numba.njit(cache=True)
def _gillespie(x, y, t, t_end, record_times, beta, phi, eta, pops, indptr, indices, rng):
    n = x.shape[0]
    n_rec = record_times.shape[0]
    out_x = np.empty((n, n_rec), dtype=np.int64)
    out_y = np.empty((n, n_rec), dtype=np.int64)
    rates = np.empty(2 * n)
    for i in range(n):
        rates[i] = _infection_rate(i, x, y, beta, phi, pops, indptr, indices)
        rates[n + i] = eta * y[i]
    rec = 0
    while True:
        total = 0.0
        for e in range(2 * n):
            total += rates[e]
        if total <= 0.0:
            break
        t_next = t + rng.standard_exponential() / total
        while rec < n_rec and record_times[rec] < t_next:
            for i in range(n):
                out_x[i, rec] = x[i]
                out_y[i, rec] = y[i]
            rec += 1
        if t_next > t_end or rec >= n_rec:
            break
        t = t_next
        target = rng.random() * total
        acc = 0.0
        event = 2 * n - 1
        for e in range(2 * n):
            acc += rates[e]
            if target < acc and rates[e] > 0.0:
                event = e
                break
        # guard against round-off landing on a zero-rate tail entry
        while rates[event] <= 0.0:
            event -= 1
        if event < n:
            site = event
            x[site] -= 1
            y[site] += 1
        else:
            site = event - n
            y[site] -= 1
        rates[site] = _infection_rate(site, x, y, beta, phi, pops, indptr, indices)
        rates[n + site] = eta * y[site]
        for q in range(indptr[site], indptr[site + 1]):
            k = indices[q]
            rates[k] = _infection_rate(k, x, y, beta, phi, pops, indptr, indices)
    while rec < n_rec:
        for i in range(n):
            out_x[i, rec] = x[i]
            out_y[i, rec] = y[i]
        rec += 1
    return out_x, out_y


def gillespie_run(theta: Theta, lattice: Lattice, init: EpidemicState | None, t_end,
                  record_times, seed) -> Trajectory:
    """Simulate one path and sample it (right-continuously) at ``record_times``.

    ``init`` defaults to the outbreak start given by ``theta``.
    """
    theta = theta.for_lattice(lattice)
    if init is None:
        init = initial_state(theta, lattice)
    init.check(lattice)
    record_times = np.asarray(record_times, dtype=float)
    if record_times.ndim != 1 or np.any(np.diff(record_times) < 0):
        raise InvalidArgumentError("record_times must be sorted ascending")
    if len(record_times) and record_times[-1] > t_end:
        raise InvalidArgumentError("last record time exceeds t_end")
    indptr, indices = _csr(lattice)
    x, y = _gillespie(
        np.array(init.x, dtype=np.int64), np.array(init.y, dtype=np.int64),
        float(init.t), float(t_end), record_times, theta.beta.astype(float),
        float(theta.phi), float(theta.eta), lattice.populations.astype(float),
        indptr, indices, make_rng(seed),
    )
    return Trajectory(record_times.copy(), x, y)


def ensemble_moments(theta, lattice, init, record_times, n_reps, seed, seeds=None) -> EnsembleMoments:
    """Monte-Carlo means, covariance blocks and standard errors of the means.

    ``seeds`` overrides the per-replicate seeds (``seed ^ r`` by default).
    """
    if n_reps < 2:
        raise InvalidArgumentError("n_reps must be at least 2")
    if seeds is None:
        seeds = [int(seed) ^ r for r in range(n_reps)]
    elif len(seeds) != n_reps:
        raise InvalidArgumentError("need one seed per replicate")
    record_times = np.asarray(record_times, dtype=float)
    t_end = float(record_times[-1])
    n, nt = lattice.n_sites, len(record_times)
    xs = np.empty((n_reps, n, nt))
    ys = np.empty((n_reps, n, nt))
    for r, s in enumerate(seeds):
        tr = gillespie_run(theta, lattice, init, t_end, record_times, s)
        xs[r] = tr.x
        ys[r] = tr.y
    mu_x = xs.mean(axis=0)
    mu_y = ys.mean(axis=0)
    dx = xs - mu_x
    dy = ys - mu_y
    denom = n_reps - 1
    s_xx = np.einsum("ris,rks->iks", dx, dx) / denom
    s_xy = np.einsum("ris,rks->iks", dx, dy) / denom
    s_yy = np.einsum("ris,rks->iks", dy, dy) / denom
    se_x = xs.std(axis=0, ddof=1) / np.sqrt(n_reps)
    se_y = ys.std(axis=0, ddof=1) / np.sqrt(n_reps)
    return EnsembleMoments(record_times, mu_x, mu_y, s_xx, s_xy, s_yy, se_x, se_y, n_reps)


def sample_observations(traj: Trajectory, p, nu, seed) -> ObservationSet:
    """Negative-binomial reports of new infections between consecutive record times.

    Mean ``m = p * (X[t-1] - X[t])`` and variance ``nu * m``; a zero mean
    yields a zero count.
    """
    if not 0 < p <= 1:
        raise InvalidArgumentError("reporting rate must lie in (0, 1]")
    if not nu > 1:
        raise InvalidArgumentError("overdispersion nu must exceed 1")
    drop = traj.x[:, :-1] - traj.x[:, 1:]
    if np.any(drop < 0):
        raise InvalidArgumentError("susceptible counts increased along the trajectory")
    return ObservationSet(nb_sample(p * drop, nu, make_rng(seed)), traj.times[1:].copy(), p, nu)


def nb_sample(mean, nu, rng):
    """Draw NB counts with the given means and variance ``nu * mean``.

    Uses size ``r = mean / (nu - 1)``, which makes the success probability
    ``1 / nu`` for every cell.
    """
    mean = np.asarray(mean, dtype=float)
    out = np.zeros(mean.shape, dtype=np.int64)
    pos = mean > 0
    size = mean[pos] / (nu - 1.0)
    out[pos] = rng.negative_binomial(size, 1.0 / nu)
    return out
