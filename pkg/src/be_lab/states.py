"""Quantum states on a lattice, connected correlators and decay fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import linalg
from .errors import InsufficientDataError, InvalidParameterError, InvalidStateError
from .lattice import Lattice
from .operators import (PAULI, HamiltonianModel, LocalOperator, check_dim, embed_into,
                        partial_trace, pauli_string)

STATE_TOL = 1e-10


def _check_density(rho: np.ndarray, what: str = "state") -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"{what}: density matrix must be square")
    if np.abs(rho - rho.conj().T).max() > STATE_TOL:
        raise InvalidStateError(f"{what}: density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > STATE_TOL:
        raise InvalidStateError(f"{what}: trace is {np.trace(rho).real:.3g}, not 1")
    w = linalg.eigvalsh((rho + rho.conj().T) / 2)
    if w.min() < -STATE_TOL:
        raise InvalidStateError(f"{what}: not positive semidefinite (min eigenvalue {w.min():.3g})")
    return rho


class QuantumState:
    n_sites: int
    local_dim: int = 2
    kind = "abstract"

    def reduced(self, sites) -> np.ndarray:
        raise NotImplementedError

    def dense(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def is_product(self) -> bool:
        return False

    def expect(self, op: LocalOperator) -> complex:
        if not op.sites:
            return complex(op.block[0, 0])
        return complex(np.trace(self.reduced(op.sites) @ op.block))


@dataclass
class ProductState(QuantumState):
    factors: list = field(repr=False)
    local_dim: int = 2
    kind = "product"

    @property
    def n_sites(self) -> int:
        return len(self.factors)

    @property
    def is_product(self) -> bool:
        return True

    def is_maximally_mixed(self, tol: float = 1e-14) -> bool:
        eye = np.eye(self.local_dim) / self.local_dim
        return all(np.abs(f - eye).max() <= tol for f in self.factors)

    def reduced(self, sites) -> np.ndarray:
        out = np.ones((1, 1), dtype=complex)
        for s in sorted(sites):
            out = np.kron(out, self.factors[s])
        return out

    def site_probabilities(self) -> np.ndarray:
        """Diagonal of each factor in the computational basis, shape (n, d)."""
        return np.array([np.real(np.diag(f)) for f in self.factors])

    def dense(self) -> np.ndarray:
        check_dim(self.local_dim ** self.n_sites)
        return self.reduced(range(self.n_sites))


@dataclass
class DenseState(QuantumState):
    rho: np.ndarray = field(repr=False)
    n_sites: int = 0
    local_dim: int = 2
    kind = "dense"

    def reduced(self, sites) -> np.ndarray:
        return partial_trace(self.rho, self.n_sites, sites, self.local_dim)

    def dense(self) -> np.ndarray:
        return self.rho


@dataclass
class CommutingGibbs(QuantumState):
    """exp(-beta H)/Z for a commuting model; built lazily."""

    model: HamiltonianModel = field(repr=False)
    beta: float = 1.0
    kind = "commuting_gibbs"
    _rho: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_sites(self) -> int:
        return self.model.n_sites

    @property
    def local_dim(self) -> int:
        return self.model.local_dim

    def dense(self) -> np.ndarray:
        if self._rho is None:
            self._rho = gibbs_matrix(self.model.dense(), self.beta, diagonal=self.model.is_diagonal())
        return self._rho

    def reduced(self, sites) -> np.ndarray:
        return partial_trace(self.dense(), self.n_sites, sites, self.local_dim)


def gibbs_matrix(h: np.ndarray, beta: float, diagonal: bool = False) -> np.ndarray:
    if diagonal:
        e = np.real(np.diag(h))
        w = np.exp(-beta * (e - e.min()))
        return np.diag(w / w.sum()).astype(complex)
    e, v = linalg.eigh(h)
    w = np.exp(-beta * (e - e.min()))
    w /= w.sum()
    return (v * w) @ v.conj().T


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def maximally_mixed(n: int, local_dim: int = 2) -> ProductState:
    return ProductState([np.eye(local_dim, dtype=complex) / local_dim for _ in range(n)], local_dim)


def product_state(factors) -> ProductState:
    fs = [_check_density(f, f"factor {k}") for k, f in enumerate(factors)]
    if not fs:
        raise InvalidStateError("a product state needs at least one factor")
    d = fs[0].shape[0]
    if any(f.shape != (d, d) for f in fs):
        raise InvalidStateError("all factors must share the local dimension")
    return ProductState(fs, d)


def pure_product(vectors) -> ProductState:
    fs = []
    for v in vectors:
        v = np.asarray(v, dtype=complex)
        v = v / np.linalg.norm(v)
        fs.append(np.outer(v, v.conj()))
    return product_state(fs)


def random_product_state(n: int, rng: np.random.Generator, mixedness: float = 0.3) -> ProductState:
    """Random qubit factors with Bloch vectors of length in [1 - mixedness, 1]."""
    fs = []
    for _ in range(n):
        r = rng.normal(size=3)
        r *= (1 - mixedness * rng.random()) / np.linalg.norm(r)
        fs.append((np.eye(2) + r[0] * PAULI["X"] + r[1] * PAULI["Y"] + r[2] * PAULI["Z"]) / 2)
    return ProductState(fs, 2)


def dense_state(rho, n_sites: int, local_dim: int = 2) -> DenseState:
    rho = _check_density(rho)
    if rho.shape[0] != local_dim ** n_sites:
        raise InvalidStateError(f"dimension {rho.shape[0]} does not match {n_sites} sites")
    return DenseState(rho, n_sites, local_dim)


def ghz_state(n: int) -> DenseState:
    psi = np.zeros(2 ** n, dtype=complex)
    psi[0] = psi[-1] = 1 / math.sqrt(2)
    return DenseState(np.outer(psi, psi.conj()), n, 2)


def gibbs_state(model: HamiltonianModel, beta: float) -> QuantumState:
    if not np.isfinite(beta) or beta < 0:
        raise InvalidParameterError(f"inverse temperature must be finite and >= 0, got {beta}")
    if model.is_commuting():
        return CommutingGibbs(model, float(beta))
    check_dim(model.dim)
    return DenseState(gibbs_matrix(model.dense(), beta), model.n_sites, model.local_dim)


STATE_FAMILIES = ("maximally_mixed", "product_up", "product_plus", "product_random", "gibbs")


def state_from_config(cfg: dict, model: HamiltonianModel) -> QuantumState:
    kind = cfg.get("kind", "maximally_mixed")
    n = model.n_sites
    if kind == "maximally_mixed":
        return maximally_mixed(n, model.local_dim)
    if kind == "product_up":
        return pure_product([[1, 0]] * n)
    if kind == "product_plus":
        return pure_product([[1, 1]] * n)
    if kind == "product_random":
        return random_product_state(n, np.random.default_rng(cfg.get("seed", 0)), cfg.get("mixedness", 0.3))
    if kind == "gibbs":
        return gibbs_state(model, float(cfg.get("beta", 1.0)))
    raise InvalidParameterError(f"unknown state kind {kind!r}; known: {STATE_FAMILIES}")


# ---------------------------------------------------------------------------
# correlations
# ---------------------------------------------------------------------------

def connected_correlator(state: QuantumState, a: LocalOperator, b: LocalOperator) -> float:
    """|<AB> - <A><B>| in the given state."""
    reg = sorted(set(a.sites) | set(b.sites))
    if not reg:
        return 0.0
    ab = embed_into(a, reg) @ embed_into(b, reg)
    rho = state.reduced(reg)
    val = np.trace(rho @ ab) - state.expect(a) * state.expect(b)
    return float(abs(val))


@dataclass
class DecayFit:
    """Upper envelope alpha(l) of normalised connected correlators.

    exponential: alpha(l) = L0 exp(-l / rate)            (rate = correlation length)
    algebraic:   alpha(l) = L0 l^-(D + rate)             (rate = beta)
    L0 == 0 marks an uncorrelated state.
    """

    model: str
    L0: float
    rate: float
    D: int = 1
    convention: str = "with_min_support"
    distances: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    envelope: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def uncorrelated(self) -> bool:
        return self.L0 == 0.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.L0 == 0.0:
            return np.zeros_like(r)
        if self.model == "exponential":
            return self.L0 * np.exp(-r / self.rate)
        with np.errstate(divide="ignore"):
            return np.where(r > 0, self.L0 * np.abs(r) ** (-(self.D + self.rate)), np.inf)

    def to_dict(self) -> dict:
        return {"model": self.model, "L0": self.L0, "rate": self.rate, "D": self.D,
                "convention": self.convention}


def exponential_decay(L0: float, xi: float, D: int = 1) -> DecayFit:
    if xi <= 0 or L0 < 0:
        raise InvalidParameterError("exponential decay needs xi > 0 and L0 >= 0")
    return DecayFit("exponential", float(L0), float(xi), D)


def algebraic_decay(L0: float, beta: float, D: int = 1, convention: str = "with_min_support") -> DecayFit:
    if beta <= 0 or L0 < 0:
        raise InvalidParameterError("algebraic decay needs beta > 0 and L0 >= 0")
    return DecayFit("algebraic", float(L0), float(beta), D, convention)


def _probe_family(n_sites: int, family: str):
    """Yield LocalOperators used as correlation probes."""
    probes = []
    for s in range(n_sites):
        for p in "XYZ":
            probes.append(pauli_string(p, [s]))
    if family == "pauli12":
        for s in range(n_sites - 1):
            for p in ("XX", "YY", "ZZ"):
                probes.append(pauli_string(p, [s, s + 1]))
    elif family != "pauli1":
        raise InvalidParameterError(f"unknown probe family {family!r}")
    return probes


def correlation_envelope(state: QuantumState, lattice: Lattice, probes: str = "pauli1",
                         convention: str = "with_min_support"):
    """(distances, envelope): max normalised connected correlator per set distance."""
    if convention not in ("with_min_support", "without"):
        raise InvalidParameterError(f"unknown convention {convention!r}")
    ops = _probe_family(state.n_sites, probes)
    norms = [o.norm for o in ops]
    env = {}
    expect = [state.expect(o) for o in ops]
    for i, j in combinations(range(len(ops)), 2):
        a, b = ops[i], ops[j]
        if set(a.sites) & set(b.sites):
            continue
        dist = lattice.set_distance(a.sites, b.sites)
        reg = sorted(set(a.sites) | set(b.sites))
        ab = embed_into(a, reg) @ embed_into(b, reg)
        val = abs(np.trace(state.reduced(reg) @ ab) - expect[i] * expect[j])
        scale = norms[i] * norms[j]
        if convention == "with_min_support":
            scale *= min(len(a.sites), len(b.sites))
        env[dist] = max(env.get(dist, 0.0), val / scale)
    dists = np.array(sorted(env))
    return dists, np.array([env[d] for d in dists])


def fit_alpha(state: QuantumState, lattice: Lattice, model: str = "exponential", probes: str = "pauli1",
              convention: str = "with_min_support", D: int | None = None, floor: float = 1e-13) -> DecayFit:
    """Fit an upper envelope alpha(l) to the probe correlators.

    The log-linear least-squares fit fixes the rate; L0 is then raised until
    every sampled point lies on or below alpha.
    """
    if model not in ("exponential", "algebraic"):
        raise InvalidParameterError(f"unknown decay model {model!r}")
    if D is None:
        D = lattice.geometric_dim
    dists, env = correlation_envelope(state, lattice, probes, convention)
    if len(dists) < 3:
        raise InsufficientDataError(f"need at least 3 distinct distances, got {len(dists)}")
    if env.max() <= floor:
        return DecayFit(model, 0.0, 1.0, D, convention, dists, env)
    mask = env > floor
    if mask.sum() < 2:
        raise InsufficientDataError("fewer than two distances with resolvable correlations")
    x = dists[mask].astype(float)
    y = np.log(env[mask])
    if model == "algebraic":
        x = np.log(x)
    slope, _ = np.polyfit(x, y, 1)
    if slope >= 0:
        raise InsufficientDataError("correlations do not decay with distance")
    if model == "exponential":
        rate = -1.0 / slope
        L0 = float(np.max(env * np.exp(dists / rate)))
    else:
        rate = -slope - D
        if rate <= 0:
            raise InsufficientDataError(f"algebraic exponent {-slope:.3g} does not exceed D = {D}")
        L0 = float(np.max(env * dists.astype(float) ** (D + rate)))
    return DecayFit(model, L0, float(rate), D, convention, dists, env)
