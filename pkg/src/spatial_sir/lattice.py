"""Spatial lattice, parameter containers and event rates of the spatial SIR jump process.

Sites on grid lattices are indexed row-major: site ``r * cols + c`` sits in
row ``r`` and column ``c``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InvalidArgumentError


@dataclass(frozen=True)
class Lattice:
    """Sites, symmetric adjacency and constant per-site populations."""

    neighbors: tuple[tuple[int, ...], ...]
    populations: np.ndarray

    def __post_init__(self):
        pops = np.asarray(self.populations, dtype=float)
        if pops.ndim != 1 or len(pops) != len(self.neighbors):
            raise InvalidArgumentError("populations must have one entry per site")
        if np.any(~np.isfinite(pops)) or np.any(pops <= 0):
            raise InvalidArgumentError("populations must be positive")
        nbrs = tuple(tuple(sorted(int(k) for k in row)) for row in self.neighbors)
        n = len(nbrs)
        for i, row in enumerate(nbrs):
            if len(set(row)) != len(row):
                raise InvalidArgumentError(f"duplicate neighbor at site {i}")
            for k in row:
                if not 0 <= k < n:
                    raise InvalidArgumentError(f"neighbor index {k} out of range")
                if k == i:
                    raise InvalidArgumentError(f"self-loop at site {i}")
                if i not in nbrs[k]:
                    raise InvalidArgumentError(f"adjacency not symmetric between {i} and {k}")
        pops.setflags(write=False)
        object.__setattr__(self, "neighbors", nbrs)
        object.__setattr__(self, "populations", pops)

    @property
    def n_sites(self) -> int:
        return len(self.neighbors)

    def adjacency(self) -> np.ndarray:
        """Dense 0/1 adjacency matrix."""
        a = np.zeros((self.n_sites, self.n_sites))
        for i, row in enumerate(self.neighbors):
            a[i, list(row)] = 1.0
        return a

    def edges(self) -> list[tuple[int, int]]:
        return [(i, k) for i, row in enumerate(self.neighbors) for k in row if i < k]

    @classmethod
    def from_edges(cls, n_sites, edges, populations) -> "Lattice":
        nbrs = [set() for _ in range(n_sites)]
        for i, k in edges:
            i, k = int(i), int(k)
            if not (0 <= i < n_sites and 0 <= k < n_sites):
                raise InvalidArgumentError(f"edge ({i}, {k}) out of range")
            if i == k:
                raise InvalidArgumentError(f"self-loop at site {i}")
            nbrs[i].add(k)
            nbrs[k].add(i)
        return cls(tuple(tuple(s) for s in nbrs), np.asarray(populations, dtype=float))

    def to_json(self, path):
        doc = {
            "n_s": self.n_sites,
            "populations": [float(p) for p in self.populations],
            "edges": [list(e) for e in self.edges()],
        }
        Path(path).write_text(json.dumps(doc, indent=2))

    @classmethod
    def from_json(cls, path) -> "Lattice":
        doc = json.loads(Path(path).read_text())
        try:
            n = int(doc["n_s"])
            pops = doc["populations"]
            edges = doc["edges"]
        except KeyError as exc:
            raise InvalidArgumentError(f"lattice file missing key {exc}") from None
        if len(pops) != n:
            raise InvalidArgumentError("populations length does not match n_s")
        return cls.from_edges(n, edges, pops)


def build_grid_lattice(rows, cols, population_per_site) -> Lattice:
    """Rook-adjacency grid with uniform populations, sites in row-major order."""
    if rows < 1 or cols < 1:
        raise InvalidArgumentError("grid dimensions must be at least 1")
    nbrs = []
    for r in range(rows):
        for c in range(cols):
            row = []
            if r > 0:
                row.append((r - 1) * cols + c)
            if c > 0:
                row.append(r * cols + c - 1)
            if c < cols - 1:
                row.append(r * cols + c + 1)
            if r < rows - 1:
                row.append((r + 1) * cols + c)
            nbrs.append(tuple(row))
    return Lattice(tuple(nbrs), np.full(rows * cols, float(population_per_site)))


@dataclass(frozen=True)
class BetaField:
    """Log-linear local infection rate ``beta(s) = exp(beta0 + beta1 * x(s))``."""

    beta0: float
    beta1: float
    x: np.ndarray


def beta_from_field(field: BetaField) -> np.ndarray:
    x = np.asarray(field.x, dtype=float)
    if np.any(~np.isfinite(x)):
        raise InvalidArgumentError("covariate contains non-finite values")
    beta = np.exp(field.beta0 + field.beta1 * x)
    if np.any(~np.isfinite(beta)) or np.any(beta <= 0):
        raise InvalidArgumentError("beta field overflowed")
    return beta


def read_covariate_csv(path, n_sites=None) -> np.ndarray:
    """Read a ``site,x`` CSV into a per-site array."""
    values = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            values[int(row["site"])] = float(row["x"])
    n = n_sites if n_sites is not None else len(values)
    if sorted(values) != list(range(n)):
        raise InvalidArgumentError("covariate file must list every site exactly once")
    return np.array([values[i] for i in range(n)])


@dataclass(frozen=True)
class Theta:
    """One parameter point of the jump process.

    ``beta`` holds one local rate per site; scalars are broadcast when the
    lattice size is known (see :meth:`for_lattice`).
    """

    beta: np.ndarray
    phi: float
    eta: float
    s0: int
    y0: int = 1
    t0: float = 0.0

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        if np.any(~np.isfinite(beta)) or np.any(beta < 0):
            raise InvalidArgumentError("beta must be finite and nonnegative")
        if not np.isfinite(self.phi) or self.phi < 0:
            raise InvalidArgumentError("phi must be nonnegative")
        if not np.isfinite(self.eta) or self.eta < 0:
            # eta = 0 is allowed for degenerate test configurations
            raise InvalidArgumentError("eta must be nonnegative")
        if self.y0 < 1:
            raise InvalidArgumentError("y0 must be at least 1")
        if self.s0 < 0:
            raise InvalidArgumentError("s0 must be a site index")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "s0", int(self.s0))

    def for_lattice(self, lattice: Lattice) -> "Theta":
        n = lattice.n_sites
        if self.s0 >= n:
            raise InvalidArgumentError(f"s0={self.s0} outside lattice of {n} sites")
        if self.beta.size == n:
            return self
        if self.beta.size == 1:
            return Theta(np.full(n, self.beta[0]), self.phi, self.eta, self.s0, self.y0, self.t0)
        raise InvalidArgumentError("beta length does not match the lattice")


@dataclass
class EpidemicState:
    x: np.ndarray
    y: np.ndarray
    t: float = 0.0

    def check(self, lattice: Lattice):
        x = np.asarray(self.x)
        y = np.asarray(self.y)
        if x.shape != (lattice.n_sites,) or y.shape != (lattice.n_sites,):
            raise InvalidArgumentError("state does not match lattice size")
        if np.any(x < 0) or np.any(y < 0) or np.any(x + y > lattice.populations):
            raise InvalidArgumentError("state violates 0 <= x + y <= N")


def initial_state(theta: Theta, lattice: Lattice) -> EpidemicState:
    """Everyone susceptible except ``y0`` infectious at the source site."""
    theta = theta.for_lattice(lattice)
    x = lattice.populations.astype(np.int64).copy()
    y = np.zeros(lattice.n_sites, dtype=np.int64)
    x[theta.s0] -= theta.y0
    y[theta.s0] = theta.y0
    return EpidemicState(x, y, theta.t0)


def infection_matrix(theta: Theta, lattice: Lattice) -> np.ndarray:
    """``W`` with ``W[i, k]`` the per-capita pressure of infectious at k on site i.

    Infection rate at i is ``X_i / N_i * (W @ Y)_i``.
    """
    theta = theta.for_lattice(lattice)
    return np.diag(theta.beta) + theta.phi * lattice.adjacency()


def event_rates(state: EpidemicState, theta: Theta, lattice: Lattice) -> np.ndarray:
    """Infection rates (first n_s entries) followed by recovery rates."""
    state.check(lattice)
    w = infection_matrix(theta, lattice)
    x = np.asarray(state.x, dtype=float)
    y = np.asarray(state.y, dtype=float)
    infection = x / lattice.populations * (w @ y)
    recovery = theta.eta * y
    return np.concatenate([infection, recovery])


@dataclass(frozen=True)
class ParameterMap:
    """Maps continuous design coordinates plus a source site to a :class:`Theta`.

    With no covariate the coordinates are ``(beta, phi)`` and beta is shared
    by all sites; with a covariate they are ``(beta0, beta1, phi)`` and
    ``beta(s) = exp(beta0 + beta1 * x(s))``.
    """

    eta: float
    y0: int = 1
    t0: float = 0.0
    covariate: np.ndarray | None = None

    @property
    def names(self) -> tuple[str, ...]:
        return ("beta", "phi") if self.covariate is None else ("beta0", "beta1", "phi")

    def to_theta(self, coords, s0) -> Theta:
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (len(self.names),):
            raise InvalidArgumentError(f"expected coordinates {self.names}")
        if self.covariate is None:
            beta, phi = coords
        else:
            beta = beta_from_field(BetaField(coords[0], coords[1], self.covariate))
            phi = coords[2]
        return Theta(beta, phi, self.eta, int(s0), self.y0, self.t0)
