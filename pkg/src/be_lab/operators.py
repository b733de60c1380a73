"""Local operators, Pauli strings, embedding and local Hamiltonians.

Tensor order is site-ascending: site 0 is the most significant factor, so
Z on site 0 of two qubits is diag(1, 1, -1, -1).
"""

from __future__ import annotations

import math

import os
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import InvalidParameterError, ResourceLimitError
from .lattice import Lattice, build_lattice

DEFAULT_DIM_CAP = 2 ** 14

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def dim_cap() -> int:
    raw = os.environ.get("BE_LAB_DIM_CAP")
    if raw is None:
        return DEFAULT_DIM_CAP
    try:
        cap = int(raw)
    except ValueError:
        raise InvalidParameterError(f"BE_LAB_DIM_CAP must be an integer, got {raw!r}")
    if cap < 1:
        raise InvalidParameterError("BE_LAB_DIM_CAP must be positive")
    return cap


def check_dim(dim: int) -> None:
    cap = dim_cap()
    if dim > cap:
        raise ResourceLimitError(f"Hilbert-space dimension {dim} exceeds cap {cap} (set BE_LAB_DIM_CAP)")


def _real_if_close(a: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(a) and not np.any(a.imag):
        return a.real.copy()
    return a


@dataclass(frozen=True)
class LocalOperator:
    """Operator acting on `sites` (ascending) times identity elsewhere."""

    sites: tuple
    block: np.ndarray = field(repr=False)
    local_dim: int = 2

    def __post_init__(self):
        k = len(self.sites)
        if self.block.shape != (self.local_dim ** k, self.local_dim ** k):
            raise InvalidParameterError(
                f"block shape {self.block.shape} does not match {k} sites of dimension {self.local_dim}")
        if list(self.sites) != sorted(set(self.sites)):
            raise InvalidParameterError(f"sites must be strictly ascending, got {self.sites}")

    @property
    def norm(self) -> float:
        return spectral_norm(self.block)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        b = self.block
        return bool(np.abs(b - b.conj().T).max(initial=0.0) <= tol * max(1.0, np.abs(b).max(initial=0.0)))

    def is_diagonal(self) -> bool:
        b = self.block
        return not np.any(b - np.diag(np.diag(b)))

    def __mul__(self, c):
        return LocalOperator(self.sites, self.block * c, self.local_dim)

    __rmul__ = __mul__


def local_operator(sites: Sequence[int], block, local_dim: int = 2) -> LocalOperator:
    """Build a LocalOperator, permuting `block` if `sites` are not ascending."""
    sites = [int(s) for s in sites]
    if len(set(sites)) != len(sites):
        raise InvalidParameterError(f"repeated site in {sites}")
    block = np.asarray(block, dtype=complex)
    k = len(sites)
    order = list(np.argsort(sites))
    if order != list(range(k)):
        t = block.reshape((local_dim,) * (2 * k))
        t = t.transpose(order + [k + o for o in order])
        block = t.reshape(local_dim ** k, local_dim ** k)
    return LocalOperator(tuple(sorted(sites)), block, local_dim)


def pauli_string(label: str, sites: Sequence[int], coeff: complex = 1.0) -> LocalOperator:
    label = label.upper()
    if len(label) != len(sites):
        raise InvalidParameterError(f"Pauli label {label!r} does not match sites {list(sites)}")
    if any(ch not in PAULI for ch in label):
        raise InvalidParameterError(f"bad Pauli label {label!r}")
    return local_operator(sites, coeff * _pauli_block(label))


@lru_cache(maxsize=256)
def _pauli_block(label: str) -> np.ndarray:
    block = np.array([[1.0 + 0j]])
    for ch in label:
        block = np.kron(block, PAULI[ch])
    block.setflags(write=False)
    return block


def embed_into(op: LocalOperator, register: Sequence[int]) -> np.ndarray:
    """Matrix of `op` on the ordered register of sites (must contain op.sites)."""
    register = list(register)
    pos = {s: k for k, s in enumerate(register)}
    try:
        where = [pos[s] for s in op.sites]
    except KeyError:
        raise InvalidParameterError(f"operator sites {op.sites} not inside register {register}")
    d, n, k = op.local_dim, len(register), len(op.sites)
    dim = d ** n
    check_dim(dim)
    rest = [p for p in range(n) if p not in where]
    full = np.kron(op.block, np.eye(d ** (n - k)))
    if where == list(range(k)):
        return _real_if_close(full)
    perm = where + rest
    inv = list(np.argsort(perm))
    t = full.reshape((d,) * (2 * n)).transpose(inv + [n + i for i in inv])
    return _real_if_close(t.reshape(dim, dim))


def embed(op: LocalOperator, n_sites: int) -> np.ndarray:
    if op.sites and op.sites[-1] >= n_sites:
        raise InvalidParameterError(f"site {op.sites[-1]} outside a system of {n_sites} sites")
    return embed_into(op, range(n_sites))


def partial_trace(a: np.ndarray, n_sites: int, keep: Sequence[int], local_dim: int = 2) -> np.ndarray:
    """Trace out all sites not in `keep` (ascending order is imposed)."""
    keep = sorted(int(k) for k in keep)
    d = local_dim
    t = a.reshape((d,) * (2 * n_sites))
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * n_sites > len(letters):
        raise ResourceLimitError("too many sites for partial trace")
    rows = list(letters[:n_sites])
    cols = list(letters[n_sites:2 * n_sites])
    for s in range(n_sites):
        if s not in keep:
            cols[s] = rows[s]
    out = "".join(rows[s] for s in keep) + "".join(cols[s] for s in keep)
    r = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    m = d ** len(keep)
    return r.reshape(m, m)


def _site_generators(d: int):
    if d == 2:
        return [PAULI["X"], PAULI["Y"], PAULI["Z"]]
    gens = []
    for a in range(d):
        for b in range(d):
            if a != b or a < d - 1:
                e = np.zeros((d, d), dtype=complex)
                e[a, b] = 1.0
                gens.append(e)
    return gens


def _site_commutator_norm(a: np.ndarray, n_sites: int, site: int, g: np.ndarray, d: int) -> float:
    left, right = d ** site, d ** (n_sites - site - 1)
    t = a.reshape(left, d, right, left, d, right)
    ga = np.einsum("ab,lbrmcs->larmcs", g, t)
    ag = np.einsum("lbrmcs,cd->lbrmds", t, g)
    return float(np.linalg.norm(ga - ag))


def detect_support(a: np.ndarray, n_sites: int, local_dim: int = 2, rtol: float = 1e-12) -> tuple:
    """Sites where `a` acts non-trivially.

    A site is trivial when `a` commutes with every single-site generator there,
    measured in Frobenius norm relative to the Frobenius norm of `a`.
    """
    scale = float(np.linalg.norm(a))
    if scale == 0.0:
        return ()
    gens = _site_generators(local_dim)
    out = []
    for s in range(n_sites):
        if any(_site_commutator_norm(a, n_sites, s, g, local_dim) > rtol * scale for g in gens):
            out.append(s)
    return tuple(out)


def reduce_to_support(a: np.ndarray, register: Sequence[int], local_dim: int = 2,
                      rtol: float = 1e-12) -> LocalOperator:
    """LocalOperator equal to `a` (given on `register`) with its detected support."""
    register = list(register)
    n = len(register)
    where = detect_support(a, n, local_dim, rtol)
    block = partial_trace(a, n, where, local_dim) / local_dim ** (n - len(where))
    return LocalOperator(tuple(register[w] for w in where), np.asarray(block, dtype=complex), local_dim)


def commutator(a, b):
    return a @ b - b @ a


def nested_commutator(x, y, n: int):
    """[X, Y]_n with [X, Y]_0 = Y and [X, Y]_n = [X, [X, Y]_(n-1)].

    Dense arrays in, dense array out. LocalOperators in, LocalOperator out
    with its support re-detected.
    """
    if n < 0:
        raise InvalidParameterError("commutator order must be >= 0")
    if isinstance(x, LocalOperator) or isinstance(y, LocalOperator):
        if not (isinstance(x, LocalOperator) and isinstance(y, LocalOperator)):
            raise InvalidParameterError("mix of LocalOperator and dense input")
        reg = sorted(set(x.sites) | set(y.sites))
        out = nested_commutator(embed_into(x, reg), embed_into(y, reg), n)
        return reduce_to_support(np.asarray(out, dtype=complex), reg, x.local_dim)
    out = y
    for _ in range(n):
        out = x @ out - out @ x
    return out


def spectral_norm(a: np.ndarray) -> float:
    """Largest singular value, from the eigenvalues of A (Hermitian) or of A^dagger A.

    Uses LAPACK's eigvalsh: norms are evaluated in inner loops of the certificate
    checks, where the in-repo solver is too slow.
    """
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    scale = np.abs(a).max()
    if scale == 0:
        return 0.0
    if np.abs(a - a.conj().T).max() <= 1e-14 * scale:
        return float(np.abs(np.linalg.eigvalsh((a + a.conj().T) / 2)).max())
    g = a.conj().T @ a
    return float(math.sqrt(max(np.linalg.eigvalsh((g + g.conj().T) / 2).max(), 0.0)))


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Term:
    anchor: int
    op: LocalOperator


@dataclass
class HamiltonianModel:
    lattice: Lattice
    terms: list
    local_dim: int = 2
    name: str = "custom"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    # models are treated as immutable once built; derived data is cached

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @property
    def dim(self) -> int:
        return self.local_dim ** self.n_sites

    def anchored(self) -> dict:
        """anchor -> list of LocalOperators sharing that anchor."""
        if "anchored" not in self._cache:
            groups = defaultdict(list)
            for t in self.terms:
                groups[t.anchor].append(t.op)
            self._cache["anchored"] = dict(sorted(groups.items()))
        return self._cache["anchored"]

    def anchor_operator(self, anchor: int) -> LocalOperator:
        """h_anchor: sum of all terms carrying this anchor."""
        ops = self.anchored().get(anchor, [])
        if not ops:
            return LocalOperator((), np.zeros((1, 1), dtype=complex), self.local_dim)
        reg = sorted(set().union(*[o.sites for o in ops]))
        total = sum(embed_into(o, reg) for o in ops)
        return LocalOperator(tuple(reg), np.asarray(total, dtype=complex), self.local_dim)

    @property
    def R(self) -> int:
        """Largest distance from a term's anchor to a site of its support."""
        if "R" not in self._cache:
            r = 0
            for t in self.terms:
                if t.op.sites:
                    r = max(r, int(np.max(self.lattice.distance(np.array(t.op.sites), t.anchor))))
            self._cache["R"] = r
        return self._cache["R"]

    @property
    def E(self) -> float:
        """Largest norm over the anchored sums h_j."""
        if "E" not in self._cache:
            self._cache["E"] = max((self.anchor_operator(a).norm for a in self.anchored()), default=0.0)
        return self._cache["E"]

    def anchor_matrix(self, anchor: int) -> np.ndarray:
        check_dim(self.dim)
        return embed(self.anchor_operator(anchor), self.n_sites)

    def dense(self) -> np.ndarray:
        check_dim(self.dim)
        h = np.zeros((self.dim, self.dim), dtype=complex)
        for t in self.terms:
            h += embed(t.op, self.n_sites)
        return _real_if_close(h)

    def is_diagonal(self) -> bool:
        return all(t.op.is_diagonal() for t in self.terms)

    def is_commuting(self, tol: float = 1e-12) -> bool:
        key = ("commuting", tol)
        if key not in self._cache:
            self._cache[key] = self._check_commuting(tol)
        return self._cache[key]

    def _check_commuting(self, tol: float) -> bool:
        ops = [t.op for t in self.terms]
        if all(o.is_diagonal() for o in ops):
            return True
        by_site = defaultdict(list)
        for k, o in enumerate(ops):
            for s in o.sites:
                by_site[s].append(k)
        pairs = {(i, j) for ks in by_site.values() for i in ks for j in ks if i < j}
        for i, j in sorted(pairs):
            c = nested_commutator(ops[i], ops[j], 1)
            if np.abs(c.block).max(initial=0.0) > tol * max(1.0, ops[i].norm * ops[j].norm):
                return False
        return True


def build_hamiltonian(lattice: Lattice, terms, local_dim: int = 2, name: str = "custom") -> HamiltonianModel:
    """Terms are dicts {"anchor", "pauli", "sites", "coeff"} or Term objects."""
    out = []
    n = lattice.n_sites
    for spec in terms:
        if isinstance(spec, Term):
            term = spec
        else:
            try:
                anchor = int(spec["anchor"])
                sites = [int(s) for s in spec["sites"]]
                coeff = spec.get("coeff", 1.0)
                if isinstance(coeff, (list, tuple)):
                    coeff = complex(coeff[0], coeff[1])
                op = pauli_string(spec["pauli"], sites, coeff)
            except (KeyError, TypeError) as exc:
                raise InvalidParameterError(f"bad term specification {spec!r}: {exc}")
            term = Term(anchor, op)
        if not 0 <= term.anchor < n or any(not 0 <= s < n for s in term.op.sites):
            raise InvalidParameterError(f"term outside lattice of {n} sites: {term}")
        if term.op.local_dim != local_dim:
            raise InvalidParameterError("local dimension mismatch")
        if not term.op.is_hermitian():
            raise InvalidParameterError(f"non-Hermitian term at anchor {term.anchor}")
        out.append(term)
    if not out:
        raise InvalidParameterError("a Hamiltonian needs at least one term")
    return HamiltonianModel(lattice, out, local_dim, name)


# ---------------------------------------------------------------------------
# model families
# ---------------------------------------------------------------------------

def zz_chain(n: int, J: float = 1.0) -> HamiltonianModel:
    lat = build_lattice("chain", n)
    terms = [{"anchor": i, "pauli": "ZZ", "sites": [i, i + 1], "coeff": J} for i in range(n - 1)]
    if n == 1:
        terms = [{"anchor": 0, "pauli": "Z", "sites": [0], "coeff": J}]
    return build_hamiltonian(lat, terms, name="zz_chain")


def tfim_chain(n: int, g: float = 1.0, J: float = 1.0) -> HamiltonianModel:
    """Open transverse-field Ising chain  -J sum Z_i Z_(i+1) - g sum X_i."""
    lat = build_lattice("chain", n)
    terms = [{"anchor": i, "pauli": "ZZ", "sites": [i, i + 1], "coeff": -J} for i in range(n - 1)]
    terms += [{"anchor": i, "pauli": "X", "sites": [i], "coeff": -g} for i in range(n)]
    return build_hamiltonian(lat, terms, name="tfim")


def field_chain(n: int, h: float = 1.0, pauli: str = "Z") -> HamiltonianModel:
    """Non-interacting sum of single-site fields (binomial spectrum)."""
    lat = build_lattice("chain", n)
    terms = [{"anchor": i, "pauli": pauli, "sites": [i], "coeff": h} for i in range(n)]
    return build_hamiltonian(lat, terms, name="field")


def zz_field_chain(n: int, J: float = 1.0, h: float = 0.5) -> HamiltonianModel:
    lat = build_lattice("chain", n)
    terms = [{"anchor": i, "pauli": "ZZ", "sites": [i, i + 1], "coeff": J} for i in range(n - 1)]
    terms += [{"anchor": i, "pauli": "Z", "sites": [i], "coeff": h} for i in range(n)]
    return build_hamiltonian(lat, terms, name="zz_field")


def random_two_local(n: int, rng: np.random.Generator, scale: float = 1.0) -> HamiltonianModel:
    """Random nearest-neighbour Hermitian chain: h_i on sites (i, i+1), norm <= scale."""
    lat = build_lattice("chain", n)
    terms = []
    for i in range(max(n - 1, 1)):
        sites = [i, i + 1] if n > 1 else [0]
        k = len(sites)
        g = rng.normal(size=(2 ** k, 2 ** k)) + 1j * rng.normal(size=(2 ** k, 2 ** k))
        h = (g + g.conj().T) / 2
        h *= scale / spectral_norm(h)
        terms.append(Term(i, LocalOperator(tuple(sites), h)))
    return build_hamiltonian(lat, terms, name="random_2local")


MODEL_FAMILIES = {
    "zz_chain": lambda n, p: zz_chain(n, p.get("J", 1.0)),
    "tfim": lambda n, p: tfim_chain(n, p.get("g", 1.0), p.get("J", 1.0)),
    "field": lambda n, p: field_chain(n, p.get("h", 1.0)),
    "zz_field": lambda n, p: zz_field_chain(n, p.get("J", 1.0), p.get("h", 0.5)),
    "random_2local": lambda n, p: random_two_local(n, np.random.default_rng(p.get("seed", 0))),
}


def model_from_config(cfg: dict, n: int | None = None) -> HamiltonianModel:
    """Build a model from {"family": ..., "n": ..., params} or explicit terms."""
    if "terms" in cfg:
        lat_cfg = cfg.get("lattice", {"kind": "chain", "extents": [cfg.get("n", n)]})
        lat = build_lattice(lat_cfg["kind"], lat_cfg.get("extents"), lat_cfg.get("wrap", False),
                            lat_cfg.get("metric"))
        return build_hamiltonian(lat, cfg["terms"])
    family = cfg.get("family", "zz_chain")
    if family not in MODEL_FAMILIES:
        raise InvalidParameterError(f"unknown model family {family!r}; known: {sorted(MODEL_FAMILIES)}")
    size = n if n is not None else cfg.get("n")
    if size is None or int(size) < 1:
        raise InvalidParameterError("model size n must be a positive integer")
    return MODEL_FAMILIES[family](int(size), cfg)
