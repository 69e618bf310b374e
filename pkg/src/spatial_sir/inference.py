"""Bayesian inference for reported new infections through the moment emulators.

Observed counts ``y[s, t]`` are negative binomial with mean
``p * (X[s, t-1] - X[s, t])`` and variance ``nu`` times the mean. The latent
susceptibles are

    X_t = mu(t, theta) + Phi(t, theta) @ alpha_t,   alpha_t[l] = sum_j B[t, j] a[l, j]

with ``a`` iid standard normal and the rows of ``B`` scaled to unit sum of
squares, so ``E X_t = mu`` and ``Var X_t = Phi Phi'`` exactly. The latent grid
is the emulator output grid: one time point before the first analysis time
followed by the analysis times.

Sampling sweeps a two-stage delayed-rejection block update of the
continuous parameters plus the first row of ``a``, univariate random-walk
updates of the remaining ``a`` entries and of ``nu``, and optionally a
uniform proposal for the source site.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline
from scipy.special import gammaln, log_ndtr
from sklearn.base import BaseEstimator

from .emulator import CovEmulator, MeanEmulator
from .exceptions import InvalidArgumentError, UndefinedStatisticError
from .ssa import make_rng

EPS_MEAN = 1e-8
NU_PRIOR_MEAN = 3.0
NU_PRIOR_VAR = 25.0


@dataclass
class ObservedData:
    """Reported new infections, ``n_s x n_t``, on the analysis times."""

    counts: np.ndarray
    times: np.ndarray
    p: float = 1.0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if counts.ndim != 2:
            raise InvalidArgumentError("counts must be a sites x times matrix")
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise InvalidArgumentError("counts must be nonnegative integers")
        times = np.asarray(self.times, dtype=float)
        if times.shape != (counts.shape[1],):
            raise InvalidArgumentError("need one time per count column")
        if not 0 < self.p <= 1:
            raise InvalidArgumentError("reporting rate must lie in (0, 1]")
        self.counts = counts
        self.times = times


def bspline_basis(n_t, b, degree=3) -> np.ndarray:
    """``n_t x b`` B-spline design on uniform clamped knots, rows scaled to unit sum of squares."""
    if b < degree + 1 or n_t < b or degree < 0:
        raise InvalidArgumentError(f"cannot build {b} degree-{degree} splines on {n_t} points")
    n_inner = b - degree - 1
    lo, hi = 0.0, float(max(n_t - 1, 1))
    inner = np.linspace(lo, hi, n_inner + 2)[1:-1]
    knots = np.concatenate([np.full(degree + 1, lo), inner, np.full(degree + 1, hi)])
    x = np.linspace(lo, hi, n_t)
    if degree == 0:
        # scipy leaves the right endpoint uncovered for piecewise constants
        x = np.minimum(x, np.nextafter(hi, lo))
    basis = BSpline.design_matrix(x, knots, degree).toarray()
    norms = np.sqrt(np.sum(basis ** 2, axis=1))
    if np.any(norms == 0):
        raise InvalidArgumentError("spline basis leaves some times uncovered")
    return basis / norms[:, None]


def spline_deviations(a, basis):
    """``alpha_t[l] = sum_j B[t, j] a[l, j]``, returned as ``L_s x n_t``."""
    return np.asarray(a, dtype=float) @ basis.T


def latent_susceptibles(x, a, mean_em: MeanEmulator, cov_em: CovEmulator | None, basis):
    """Latent susceptibles ``n_s x n_t`` at design row ``x`` (coordinates then source site)."""
    mu = mean_em.predict_one(x)
    if cov_em is None or a is None or not np.any(a):
        return mu
    phi = cov_em.predict_factor(x)
    return mu + np.einsum("tsl,lt->st", phi, spline_deviations(a, basis))


def nb_logpmf(y, mean, nu):
    """Negative binomial log-pmf with the given mean and variance ``nu * mean``.

    Means are clamped at ``EPS_MEAN``.
    """
    if nu <= 1:
        raise InvalidArgumentError("overdispersion must exceed 1")
    m = np.maximum(mean, EPS_MEAN)
    r = m / (nu - 1.0)
    return (gammaln(y + r) - gammaln(r) - gammaln(y + 1.0)
            - r * np.log(nu) + y * np.log1p(-1.0 / nu))


def new_infection_means(latent, p):
    """``p * (X[:, t-1] - X[:, t])`` for every analysis time."""
    return p * (latent[:, :-1] - latent[:, 1:])


def nb_loglik(counts, latent, p, nu):
    """Log-likelihood of ``counts`` given latent susceptibles on the extended grid."""
    return float(np.sum(nb_logpmf(counts, new_infection_means(latent, p), nu)))


def log_prior_nu(nu):
    """Normal(3, 25) truncated to ``nu >= 1``."""
    if not nu >= 1.0:
        return -np.inf
    sd = np.sqrt(NU_PRIOR_VAR)
    z = (nu - NU_PRIOR_MEAN) / sd
    return float(-0.5 * z * z - np.log(sd) - 0.5 * np.log(2 * np.pi)
                 - log_ndtr((NU_PRIOR_MEAN - 1.0) / sd))


def log_prior_coords(coords, prior_var=1e6):
    coords = np.asarray(coords, dtype=float)
    return float(-0.5 * np.sum(coords ** 2) / prior_var
                 - 0.5 * coords.size * np.log(2 * np.pi * prior_var))


def log_prior_a(a):
    a = np.asarray(a, dtype=float)
    return float(-0.5 * np.sum(a * a) - 0.5 * a.size * np.log(2 * np.pi))


@dataclass
class ChainState:
    coords: np.ndarray
    s0: int
    nu: float
    a: np.ndarray | None = None
    log_post: float = np.nan

    def row(self):
        return np.append(self.coords, self.s0)

    def copy(self):
        return ChainState(self.coords.copy(), self.s0, self.nu,
                          None if self.a is None else self.a.copy(), self.log_post)


def log_prior(state: ChainState, s0_candidates, prior_var=1e6):
    """Sum of the ``nu``, coordinate, source-site and spline-coefficient priors."""
    if state.s0 not in s0_candidates:
        return -np.inf
    lp = log_prior_nu(state.nu)
    if not np.isfinite(lp):
        return lp
    lp += log_prior_coords(state.coords, prior_var) - np.log(len(s0_candidates))
    if state.a is not None:
        lp += log_prior_a(state.a)
    return lp


def dram_block_update(x, logp, log_target, chol1, scale2, rng):
    """Two-stage delayed-rejection Metropolis step with Gaussian random-walk proposals.

    Stage 1 proposes with covariance ``C1 = chol1 @ chol1.T``; after a
    rejection stage 2 proposes from ``x`` with covariance ``scale2 * C1``.

    Returns
    -------
    x, logp : new point and its log target
    stage : 0 if both stages rejected, else the accepting stage
    n_evals : number of target evaluations
    """
    d = len(x)
    y1 = x + chol1 @ rng.standard_normal(d)
    lp1 = log_target(y1)
    a1 = _accept_prob(logp, lp1)
    if rng.random() < a1:
        return y1, lp1, 1, 1
    y2 = x + np.sqrt(scale2) * (chol1 @ rng.standard_normal(d))
    lp2 = log_target(y2)
    if not np.isfinite(lp2):
        return x, logp, 0, 2
    a1_rev = _accept_prob(lp2, lp1)
    if a1_rev >= 1.0:
        return x, logp, 0, 2
    # Gaussian kernel terms of q1(y2 -> y1) and q1(x -> y1)
    u_num = np.linalg.solve(chol1, y1 - y2)
    u_den = np.linalg.solve(chol1, y1 - x)
    log_num = lp2 - 0.5 * u_num @ u_num + np.log1p(-a1_rev)
    log_den = logp - 0.5 * u_den @ u_den + np.log1p(-a1)
    if np.log(rng.random()) < log_num - log_den:
        return y2, lp2, 2, 2
    return x, logp, 0, 2


def _accept_prob(lp_from, lp_to):
    if not np.isfinite(lp_to):
        return 0.0
    if not np.isfinite(lp_from):
        return 1.0
    return float(min(1.0, np.exp(min(lp_to - lp_from, 0.0))))


def discrepancy(counts, fitted):
    """Per-site ``1 - ||y_s - lambda_s|| / ||y_s||``."""
    counts = np.asarray(counts, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    if counts.shape != fitted.shape:
        raise InvalidArgumentError("fitted means must match the counts")
    norms = np.linalg.norm(counts, axis=1)
    if np.any(norms == 0):
        raise UndefinedStatisticError(
            f"no reported cases at sites {np.flatnonzero(norms == 0).tolist()}")
    return 1.0 - np.linalg.norm(counts - fitted, axis=1) / norms


def gelman_rubin(chains):
    """Potential scale reduction factor for a list of equal-length scalar chains."""
    chains = np.asarray(chains, dtype=float)
    m, n = chains.shape
    if m < 2 or n < 2:
        raise InvalidArgumentError("need at least two chains of length two")
    means = chains.mean(axis=1)
    w = chains.var(axis=1, ddof=1).mean()
    b = n * means.var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else np.inf
    return float(np.sqrt(((n - 1) / n * w + b / n) / w))


@dataclass
class MCMCConfig:
    """Sampler settings.

    ``alpha_step``, ``nu_step`` and the block proposal are adapted during
    burn-in and frozen afterwards.
    """

    n_iter: int = 20000
    burn_in: int = 5000
    thin: int = 10
    seed: int = 0
    n_splines: int = 10
    degree: int = 3
    mean_only: bool = False
    update_s0: bool = False
    likelihood: bool = True
    prior_var: float = 1e6
    scale2: float = 0.25
    block_sd: tuple | None = None
    alpha_step: float = 0.5
    nu_step: float = 0.2
    adapt_every: int = 100

    def __post_init__(self):
        if self.n_iter < 0 or self.burn_in < 0 or self.thin < 1:
            raise InvalidArgumentError("need n_iter >= 0, burn_in >= 0 and thin >= 1")
        if not 0 < self.scale2:
            raise InvalidArgumentError("stage-2 scale must be positive")


@dataclass
class FitResult:
    """Thinned draws plus acceptance statistics.

    ``iterations[0] == 0`` is the initial state; posterior summaries use the
    draws after burn-in, or the initial state alone when there are none.
    """

    names: tuple
    iterations: np.ndarray
    samples: dict
    acceptance: dict
    out_of_design: int
    burn_in: int
    fitted_lambda: np.ndarray | None = None
    latent_mean: np.ndarray | None = None
    discrepancy: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def posterior(self, name):
        keep = self.iterations > self.burn_in
        if not np.any(keep):
            keep = self.iterations == self.iterations[0]
        return self.samples[name][keep]

    def summary(self, level=0.95):
        lo, hi = 50 * (1 - level), 50 * (1 + level)
        out = {}
        for name in (*self.names, "nu", "s0"):
            draws = self.posterior(name)
            out[name] = {"mean": float(np.mean(draws)),
                         "lower": float(np.percentile(draws, lo)),
                         "upper": float(np.percentile(draws, hi))}
        return out


class _Posterior:
    """Log posterior with cached latent state for cheap single-coefficient updates."""

    def __init__(self, data: ObservedData, mean_em, cov_em, basis, cfg: MCMCConfig):
        self.data = data
        self.mean_em = mean_em
        self.cov_em = None if cfg.mean_only else cov_em
        self.basis = basis
        self.cfg = cfg
        self.space = mean_em.space_
        self.s0_candidates = tuple(int(s) for s in mean_em.groups_)
        # support of each spline column in latent-grid indices, widened to count cells
        self.support = []
        n_cells = data.counts.shape[1]
        for j in range(basis.shape[1]):
            nz = np.flatnonzero(basis[:, j] != 0)
            self.support.append((max(nz[0] - 1, 0), min(nz[-1], n_cells - 1) + 1))

    def in_box(self, coords, s0):
        return self.space.contains(coords) and s0 in self.s0_candidates

    def emulate(self, coords, s0):
        x = np.append(coords, s0)
        mu = self.mean_em.predict_one(x)
        phi = None if self.cov_em is None else self.cov_em.predict_factor(x)
        return mu, phi

    def latent(self, mu, phi, a):
        if phi is None or a is None:
            return mu
        return mu + np.einsum("tsl,lt->st", phi, spline_deviations(a, self.basis))

    def cell_loglik(self, latent, nu):
        if not self.cfg.likelihood:
            return np.zeros_like(self.data.counts)
        return nb_logpmf(self.data.counts, new_infection_means(latent, self.data.p), nu)


class _Sampler:
    def __init__(self, post: _Posterior, init: ChainState, cfg: MCMCConfig):
        self.post = post
        self.cfg = cfg
        self.rng = make_rng(cfg.seed)
        self.state = init.copy()
        self.p = len(init.coords)
        self.block_a = init.a is not None
        self.out_of_design = 0
        d = self.p + (init.a.shape[1] if self.block_a else 0)
        if cfg.block_sd is not None:
            sd = np.asarray(cfg.block_sd, dtype=float)
        else:
            width = post.space.upper - post.space.lower
            sd = np.concatenate([0.01 * width, np.full(d - self.p, 0.1)])
        if sd.shape != (d,):
            raise InvalidArgumentError(f"block_sd needs {d} entries")
        self.chol1 = np.diag(sd)
        self.history = []
        if self.block_a:
            self.alpha_step = np.full(init.a.shape, cfg.alpha_step)
            self.alpha_acc = np.zeros(init.a.shape)
        self.nu_step = cfg.nu_step
        self.nu_acc = 0
        self.counts = {"block": 0, "block_stage1": 0, "block_stage2": 0, "alpha": 0,
                       "alpha_total": 0, "nu": 0, "s0": 0, "s0_total": 0}
        self._refresh()
        if not np.isfinite(self.state.log_post):
            raise InvalidArgumentError("initial state has zero posterior density")

    # full recomputation of the cached pieces at the current state
    def _refresh(self):
        s = self.state
        self.mu, self.phi = self.post.emulate(s.coords, s.s0)
        self.x = self.post.latent(self.mu, self.phi, s.a)
        self.ll = self.post.cell_loglik(self.x, s.nu)
        self.lprior = log_prior(s, self.post.s0_candidates, self.cfg.prior_var)
        s.log_post = self.lprior + float(self.ll.sum())

    def _block_vector(self):
        s = self.state
        return np.concatenate([s.coords, s.a[0]]) if self.block_a else s.coords.copy()

    def _with_block(self, v):
        s = self.state.copy()
        s.coords = v[:self.p].copy()
        if self.block_a:
            s.a[0] = v[self.p:]
        return s

    def _block_target(self, v):
        s = self._with_block(v)
        if not self.post.in_box(s.coords, s.s0):
            self.out_of_design += 1
            return -np.inf
        lp = log_prior(s, self.post.s0_candidates, self.cfg.prior_var)
        if not np.isfinite(lp):
            return -np.inf
        mu, phi = self.post.emulate(s.coords, s.s0)
        return lp + float(self.post.cell_loglik(self.post.latent(mu, phi, s.a), s.nu).sum())

    def block_step(self):
        v, lp, stage, _ = dram_block_update(self._block_vector(), self.state.log_post,
                                            self._block_target, self.chol1, self.cfg.scale2, self.rng)
        if stage:
            self.state = self._with_block(v)
            self._refresh()
            self.counts["block"] += 1
            self.counts[f"block_stage{stage}"] += 1

    def alpha_sweep(self):
        s = self.state
        basis = self.post.basis
        n_l, n_b = s.a.shape
        for l in range(1, n_l):
            col = self.phi[:, :, l].T      # n_s x n_t
            for j in range(n_b):
                step = self.alpha_step[l, j] * self.rng.standard_normal()
                new = s.a[l, j] + step
                lo, hi = self.post.support[j]
                dx = step * col[:, lo:hi + 1] * basis[lo:hi + 1, j]
                x_new = self.x[:, lo:hi + 1] + dx
                if self.cfg.likelihood:
                    m = new_infection_means(x_new, self.post.data.p)
                    ll_new = nb_logpmf(self.post.data.counts[:, lo:hi], m, s.nu)
                    d_ll = float(ll_new.sum() - self.ll[:, lo:hi].sum())
                else:
                    ll_new, d_ll = None, 0.0
                d_prior = -0.5 * (new * new - s.a[l, j] ** 2)
                self.counts["alpha_total"] += 1
                if np.log(self.rng.random()) < d_ll + d_prior:
                    s.a[l, j] = new
                    self.x[:, lo:hi + 1] = x_new
                    if ll_new is not None:
                        self.ll[:, lo:hi] = ll_new
                    self.lprior += d_prior
                    s.log_post = self.lprior + float(self.ll.sum())
                    self.alpha_acc[l, j] += 1
                    self.counts["alpha"] += 1

    def nu_step_update(self):
        s = self.state
        new = s.nu + self.nu_step * self.rng.standard_normal()
        if new <= 1.0:
            return
        ll_new = self.post.cell_loglik(self.x, new)
        d = (log_prior_nu(new) - log_prior_nu(s.nu)) + float(ll_new.sum() - self.ll.sum())
        if np.log(self.rng.random()) < d:
            self.lprior += log_prior_nu(new) - log_prior_nu(s.nu)
            s.nu = new
            self.ll = ll_new
            s.log_post = self.lprior + float(self.ll.sum())
            self.nu_acc += 1
            self.counts["nu"] += 1

    def s0_step(self):
        cands = [c for c in self.post.s0_candidates if c != self.state.s0]
        if not cands:
            return
        self.counts["s0_total"] += 1
        prop = self.state.copy()
        prop.s0 = int(cands[self.rng.integers(len(cands))])
        mu, phi = self.post.emulate(prop.coords, prop.s0)
        x = self.post.latent(mu, phi, prop.a)
        lp = log_prior(prop, self.post.s0_candidates, self.cfg.prior_var) + float(
            self.post.cell_loglik(x, prop.nu).sum())
        if np.log(self.rng.random()) < lp - self.state.log_post:
            self.state = prop
            self._refresh()
            self.counts["s0"] += 1

    def adapt(self, it):
        cfg = self.cfg
        self.history.append(self._block_vector())
        if it % cfg.adapt_every:
            return
        # rescale univariate steps toward the usual one-dimensional acceptance rate
        k = cfg.adapt_every
        if self.block_a:
            rate = self.alpha_acc / k
            self.alpha_step *= np.exp(rate - 0.44)
            self.alpha_acc[:] = 0
        self.nu_step *= np.exp(self.nu_acc / k - 0.44)
        self.nu_acc = 0
        hist = np.asarray(self.history[len(self.history) // 2:])
        d = hist.shape[1]
        if len(hist) > 2 * d:
            scale = np.diag(self.chol1 @ self.chol1.T)
            cov = np.cov(hist, rowvar=False) + 1e-6 * np.diag(scale)
            try:
                self.chol1 = np.linalg.cholesky(2.38 ** 2 / d * cov)
            except np.linalg.LinAlgError:
                pass

    def sweep(self, it):
        self.block_step()
        if self.block_a:
            self.alpha_sweep()
        self.nu_step_update()
        if self.cfg.update_s0:
            self.s0_step()
        if it <= self.cfg.burn_in:
            self.adapt(it)


def run_mcmc(data: ObservedData, mean_em: MeanEmulator, cov_em: CovEmulator | None,
             init: dict, config: MCMCConfig | None = None) -> FitResult:
    """Run one chain.

    ``init`` holds ``coords`` (in the emulator's parameter order), ``s0`` and
    ``nu``; spline coefficients start at zero unless ``init["a"]`` is given.
    """
    cfg = config or MCMCConfig()
    n_cells = data.counts.shape[1]
    n_lat = n_cells + 1
    if mean_em.gamma_.shape[0] != data.counts.shape[0]:
        raise InvalidArgumentError("emulator and data disagree on the number of sites")
    if mean_em.delta_.shape[0] != n_lat:
        raise InvalidArgumentError(
            "emulator output grid must hold the analysis times plus one preceding time")
    if mean_em.times_ is not None and not np.allclose(mean_em.times_[1:], data.times):
        raise InvalidArgumentError("analysis times do not match the emulator output grid")
    if not cfg.mean_only and cov_em is None:
        raise InvalidArgumentError("the full model needs a covariance emulator")
    basis = bspline_basis(n_lat, cfg.n_splines, cfg.degree)
    post = _Posterior(data, mean_em, cov_em, basis, cfg)
    coords = np.asarray(init["coords"], dtype=float)
    s0 = int(init["s0"])
    if not post.in_box(coords, s0):
        raise InvalidArgumentError("initial parameters lie outside the emulator design")
    if cfg.mean_only:
        a = None
    else:
        a = np.zeros((cov_em.Gamma_.shape[1], cfg.n_splines))
        if init.get("a") is not None:
            a = np.array(init["a"], dtype=float).reshape(a.shape)
    sampler = _Sampler(post, ChainState(coords, s0, float(init.get("nu", 3.0)), a), cfg)

    names = tuple(mean_em.space_.names)
    n_keep = 1 + sum(1 for it in range(1, cfg.n_iter + 1) if _keep(it, cfg))
    iters = np.zeros(n_keep, dtype=int)
    coords_out = np.empty((n_keep, len(names)))
    nu_out = np.empty(n_keep)
    s0_out = np.empty(n_keep, dtype=int)
    lp_out = np.empty(n_keep)
    a_out = None if a is None else np.empty((n_keep,) + a.shape)
    lam_sum = np.zeros_like(data.counts)
    x_sum = np.zeros((data.counts.shape[0], n_lat))
    n_post = 0

    def record(row, it):
        st = sampler.state
        iters[row] = it
        coords_out[row] = st.coords
        nu_out[row] = st.nu
        s0_out[row] = st.s0
        lp_out[row] = st.log_post
        if a_out is not None:
            a_out[row] = st.a

    record(0, 0)
    row = 1
    for it in range(1, cfg.n_iter + 1):
        sampler.sweep(it)
        if _keep(it, cfg):
            record(row, it)
            row += 1
            lam_sum += np.maximum(new_infection_means(sampler.x, data.p), 0.0)
            x_sum += sampler.x
            n_post += 1
    if n_post == 0:
        lam_sum += np.maximum(new_infection_means(sampler.x, data.p), 0.0)
        x_sum += sampler.x
        n_post = 1

    samples = {n: coords_out[:, j] for j, n in enumerate(names)}
    samples.update(nu=nu_out, s0=s0_out, log_post=lp_out)
    if a_out is not None:
        samples["a"] = a_out
    c = sampler.counts
    n_it = max(cfg.n_iter, 1)
    acceptance = {
        "block": c["block"] / n_it,
        "block_stage1": c["block_stage1"] / n_it,
        "block_stage2": c["block_stage2"] / n_it,
        "nu": c["nu"] / n_it,
    }
    if a is not None:
        acceptance["alpha"] = c["alpha"] / max(c["alpha_total"], 1)
    if cfg.update_s0:
        acceptance["s0"] = c["s0"] / max(c["s0_total"], 1)
    fitted = lam_sum / n_post
    try:
        disc = discrepancy(data.counts, fitted)
    except UndefinedStatisticError:
        disc = None
    return FitResult(names, iters, samples, acceptance, sampler.out_of_design, cfg.burn_in,
                     fitted, x_sum / n_post, disc, {"block_chol": sampler.chol1})


def _keep(it, cfg):
    return it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0


class EmulatorSIRModel(BaseEstimator):
    """Posterior sampler for the spatial SIR parameters given reported counts.

    Parameters
    ----------
    mean_emulator, cov_emulator : fitted emulators
    p : float
        Known reporting rate.
    init : dict
        Starting ``coords`` (and optionally ``s0``, ``nu``).
    s0 : int, optional
        Source site; defaults to the first design candidate.
    n_iter, burn_in, thin, random_state : MCMC schedule and seed.
    n_splines : int
        Spline coefficients per latent spatial basis vector.
    mean_only : bool
        Drop the covariance emulator and fix all deviations at zero.
    update_s0 : bool
        Also sample the source site among the design candidates.
    """

    def __init__(self, mean_emulator=None, cov_emulator=None, p=1.0, init=None, s0=None,
                 n_iter=20000, burn_in=5000, thin=10, n_splines=10, mean_only=False,
                 update_s0=False, prior_var=1e6, scale2=0.25, random_state=0):
        self.mean_emulator = mean_emulator
        self.cov_emulator = cov_emulator
        self.p = p
        self.init = init
        self.s0 = s0
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.n_splines = n_splines
        self.mean_only = mean_only
        self.update_s0 = update_s0
        self.prior_var = prior_var
        self.scale2 = scale2
        self.random_state = random_state

    def _config(self):
        return MCMCConfig(n_iter=self.n_iter, burn_in=self.burn_in, thin=self.thin,
                          seed=self.random_state, n_splines=self.n_splines,
                          mean_only=self.mean_only, update_s0=self.update_s0,
                          prior_var=self.prior_var, scale2=self.scale2)

    def fit(self, Y, times=None):
        if self.mean_emulator is None:
            raise InvalidArgumentError("a fitted mean emulator is required")
        Y = np.asarray(Y, dtype=float)
        if times is None:
            em_times = self.mean_emulator.times_
            times = em_times[1:] if em_times is not None else np.arange(1, Y.shape[1] + 1.0)
        data = ObservedData(Y, times, self.p)
        space = self.mean_emulator.space_
        init = dict(self.init or {})
        init.setdefault("coords", 0.5 * (space.lower + space.upper))
        init.setdefault("s0", self.s0 if self.s0 is not None else space.s0_candidates[0])
        init.setdefault("nu", NU_PRIOR_MEAN)
        self.result_ = run_mcmc(data, self.mean_emulator, self.cov_emulator, init, self._config())
        self.summary_ = self.result_.summary()
        return self

    def predict(self, X=None):
        """Posterior mean of the reported new-infection means."""
        return self.result_.fitted_lambda
