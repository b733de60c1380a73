"""Spectral measures, Kolmogorov distance and characteristic functions."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import fft as sfft
from scipy.special import erfc

from . import linalg
from .errors import DegenerateSpectrumError, InvalidParameterError
from .operators import HamiltonianModel, check_dim
from .states import ProductState, QuantumState

MERGE_RTOL = 1e-10
# atoms lighter than this are roundoff (e.g. eigenstates orthogonal to rho) and are dropped
WEIGHT_FLOOR = 1e-14


@dataclass
class SpectralMeasure:
    """Atoms (distinct energies, ascending) with their weights Tr(P_n rho)."""

    energies: np.ndarray
    weights: np.ndarray
    method: str = "exact"
    info: dict = field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.energies))

    @property
    def variance(self) -> float:
        mu = self.mean
        return float(np.dot(self.weights, (self.energies - mu) ** 2))

    @property
    def std(self) -> float:
        return math.sqrt(max(self.variance, 0.0))

    def cdf(self, y) -> np.ndarray:
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        idx = np.searchsorted(self.energies, np.asarray(y, dtype=float), side="right")
        return cum[idx]

    def characteristic(self, omega) -> np.ndarray:
        return _phase_sum(self.energies, self.weights, omega, 0)

    def characteristic_derivative(self, omega) -> np.ndarray:
        return _phase_sum(self.energies, self.weights, omega, 1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eigenvalue", "weight"])
            for e, p in zip(self.energies, self.weights):
                w.writerow([f"{e:.17g}", f"{p:.17g}"])


@dataclass
class StandardizedMeasure(SpectralMeasure):
    mu: float = 0.0
    sigma: float = 1.0
    variance_ok: bool | None = None


def _phase_sum(energies, weights, omega, order: int, chunk: int = 1 << 22) -> np.ndarray:
    """sum_k w_k (i e_k)^order exp(i omega e_k), chunked over the grid."""
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    out = np.empty(om.shape, dtype=complex)
    coef = weights * (1j * energies) ** order if order else weights.astype(complex)
    step = max(1, chunk // max(len(energies), 1))
    flat = om.ravel()
    res = out.ravel()
    for s in range(0, flat.size, step):
        blk = flat[s:s + step]
        res[s:s + step] = np.exp(1j * np.outer(blk, energies)) @ coef
    return out if np.ndim(omega) else out[0]


def merge_atoms(energies: np.ndarray, weights: np.ndarray, tol: float):
    """Merge consecutive sorted energies closer than `tol` (weighted mean position)."""
    order = np.argsort(energies, kind="stable")
    e, w = energies[order], weights[order]
    if e.size == 0:
        return e, w
    breaks = np.flatnonzero(np.diff(e) >= tol) + 1
    starts = np.concatenate([[0], breaks])
    wsum = np.add.reduceat(w, starts)
    esum = np.add.reduceat(e * w, starts)
    plain = np.add.reduceat(e, starts) / np.diff(np.concatenate([starts, [e.size]]))
    pos = np.where(wsum > 0, esum / np.where(wsum > 0, wsum, 1.0), plain)
    return pos, wsum


def drop_light_atoms(energies: np.ndarray, weights: np.ndarray, floor: float = WEIGHT_FLOOR):
    keep = weights > floor
    w = weights[keep]
    return energies[keep], w / w.sum()


def _model_matrix(model) -> np.ndarray:
    if isinstance(model, HamiltonianModel):
        return model.dense()
    return np.asarray(model)


def spectral_measure(model, state: QuantumState, merge_rtol: float = MERGE_RTOL,
                     eig_method: str = "auto") -> SpectralMeasure:
    """Exact spectral measure of H in state rho, degeneracies merged."""
    h = _model_matrix(model)
    check_dim(h.shape[0])
    h = linalg.check_hermitian(h)
    if state.local_dim ** state.n_sites != h.shape[0]:
        raise InvalidParameterError("state and Hamiltonian dimensions differ")
    mixed = isinstance(state, ProductState) and state.is_maximally_mixed()
    if mixed:
        e = linalg.eigvalsh(h, eig_method)
        w = np.full(e.size, 1.0 / e.size)
    else:
        e, v = linalg.eigh(h, eig_method)
        rho = state.dense()
        w = np.real((v.conj() * (rho @ v)).sum(axis=0))
        w = np.where(w < 0, 0.0, w)
        w /= w.sum()
    scale = float(np.abs(e).max()) if e.size else 0.0
    tol = merge_rtol * scale
    pos, wts = drop_light_atoms(*merge_atoms(e, w, tol))
    return SpectralMeasure(pos, wts, "exact", {"merge_tol": tol, "norm_H": scale, "dim": int(h.shape[0])})


def standardize(measure: SpectralMeasure, c0: float | None = None, E: float | None = None,
                N: int | None = None) -> StandardizedMeasure:
    mu, sigma = measure.mean, measure.std
    if not sigma > 0:
        raise DegenerateSpectrumError("the energy distribution has zero variance")
    ok = None
    if c0 is not None and E is not None and N is not None:
        ok = bool(sigma ** 2 >= c0 * E ** 2 * N)
    return StandardizedMeasure((measure.energies - mu) / sigma, measure.weights.copy(), measure.method,
                               dict(measure.info), mu, sigma, ok)


def gaussian_cdf(y):
    return 0.5 * erfc(-np.asarray(y, dtype=float) / math.sqrt(2.0))


def kolmogorov_distance(measure: SpectralMeasure) -> float:
    """sup_y |F(y) - G(y)| for a step function F, evaluated exactly at the atoms."""
    cum = np.cumsum(measure.weights)
    g = gaussian_cdf(measure.energies)
    after = np.abs(cum - g)
    before = np.abs(cum - measure.weights - g)
    return float(max(after.max(initial=0.0), before.max(initial=0.0)))


# ---------------------------------------------------------------------------
# characteristic function
# ---------------------------------------------------------------------------

@dataclass
class CharacteristicCurve:
    omega: np.ndarray
    values: np.ndarray
    path: str
    measure: StandardizedMeasure | None = field(default=None, repr=False)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["omega", "re_phi", "im_phi"])
            for om, v in zip(self.omega, self.values):
                w.writerow([f"{om:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}"])


def characteristic_function(measure: StandardizedMeasure, omega, path: str = "eigen_sum",
                            model=None, state: QuantumState | None = None,
                            expm_tol: float = 1e-12) -> CharacteristicCurve:
    """phi(omega) = <exp(i omega H_std)> on a grid.

    eigen_sum uses the atoms; evolution computes Tr(rho expm(i omega H_std))
    from the model and state, independently of any eigendecomposition.
    """
    omega = np.asarray(omega, dtype=float)
    if path == "eigen_sum":
        vals = measure.characteristic(omega)
    elif path == "evolution":
        if model is None or state is None:
            raise InvalidParameterError("the evolution path needs the model and the state")
        h = _model_matrix(model)
        check_dim(h.shape[0])
        hs = (h - measure.mu * np.eye(h.shape[0])) / measure.sigma
        rho = state.dense()
        vals = np.array([np.trace(rho @ linalg.expm(1j * om * hs, expm_tol)) for om in omega.ravel()])
        vals = vals.reshape(omega.shape)
    else:
        raise InvalidParameterError(f"unknown path {path!r}")
    return CharacteristicCurve(omega, np.asarray(vals, dtype=complex), path, measure)


# ---------------------------------------------------------------------------
# fast path for commuting, computational-basis-diagonal models
# ---------------------------------------------------------------------------

def _energy_step(values: list, rtol: float = 1e-9, max_den: int = 1000) -> float:
    """Largest step such that every value is an integer multiple of it."""
    pos = [v for v in values if v > rtol * max(values + [1.0])]
    if not pos:
        return 1.0
    base = min(pos)
    den = 1
    for v in pos:
        fr = Fraction(v / base).limit_denominator(max_den)
        if abs(float(fr) - v / base) > rtol * (v / base):
            raise InvalidParameterError("term energies are not commensurate; use the exact path")
        den = den * fr.denominator // math.gcd(den, fr.denominator)
    step = base / den
    # collapse to the gcd of the integer multiples
    ints = [round(v / step) for v in pos]
    g = 0
    for k in ints:
        g = math.gcd(g, k)
    return step * g


def _batched_polymat(a: np.ndarray, b: np.ndarray) -> tuple:
    """Batched product of polynomial matrices: (n,S,S,La) x (n,S,S,Lb)."""
    la, lb = a.shape[-1], b.shape[-1]
    length = la + lb - 1
    if min(la, lb) <= 16:
        if la > lb:
            # iterate over the shorter polynomial
            out = np.zeros(a.shape[:3] + (length,))
            for j in range(lb):
                out[..., j:j + la] += np.einsum("nabk,nbc->nack", a, b[..., j])
            return out, False
        out = np.zeros(a.shape[:3] + (length,))
        for j in range(la):
            out[..., j:j + lb] += np.einsum("nab,nbck->nack", a[..., j], b)
        return out, False
    size = sfft.next_fast_len(length, real=True)
    fa = sfft.rfft(a, size, axis=-1)
    fb = sfft.rfft(b, size, axis=-1)
    fc = np.einsum("nabk,nbck->nack", fa, fb)
    return sfft.irfft(fc, size, axis=-1)[..., :length], True


def fast_commuting_measure(model: HamiltonianModel, state: QuantumState,
                           max_window: int = 8) -> SpectralMeasure:
    """Energy law of a diagonal commuting model in a product state.

    Sites are swept in index order with a transfer matrix that remembers the
    last `w` site values (w = largest index span of a term); the energy is
    tracked as a polynomial on the common energy grid and the transfer
    matrices are multiplied in a balanced tree (FFT for long polynomials).
    Only the computational-basis diagonal of each factor enters.
    """
    if not isinstance(state, ProductState):
        raise InvalidParameterError("the fast path requires a product state")
    if state.n_sites != model.n_sites:
        raise InvalidParameterError("state and model sizes differ")
    if not model.is_commuting():
        raise InvalidParameterError("non-commuting terms detected; use the exact path")
    if not model.is_diagonal():
        raise InvalidParameterError("terms are not diagonal in the computational basis; use the exact path")
    d, n = model.local_dim, model.n_sites
    probs = state.site_probabilities()

    terms = []
    for t in model.terms:
        vals = np.real(np.diag(t.op.block))
        terms.append((t.op.sites, vals))
    width = max(s[-1] - s[0] for s, _ in terms)
    if width > max_window or d ** width > 4096:
        raise InvalidParameterError(f"term index span {width} too wide for the fast path")
    offset = sum(float(v.min()) for _, v in terms)
    shifted = [v - v.min() for _, v in terms]
    step = _energy_step(sorted({float(x) for v in shifted for x in v}))
    inc_tables = []
    for (sites, _), v in zip(terms, shifted):
        k = np.rint(v / step).astype(np.int64)
        if np.abs(k * step - v).max() > 1e-9 * max(1.0, np.abs(v).max()):
            raise InvalidParameterError("term energies are not on a common grid")
        inc_tables.append((sites, k))
    closing = [[] for _ in range(n)]
    for sites, k in inc_tables:
        closing[sites[-1]].append((sites, k))

    w = width
    n_states = d ** w
    mats = []
    max_len = 1
    for s in range(n):
        # state a encodes values of sites s-w .. s-1 (most significant first)
        inc = np.zeros((n_states, d), dtype=np.int64)
        for a in range(n_states):
            digits = [(a // d ** (w - 1 - q)) % d for q in range(w)]
            for x in range(d):
                window = digits + [x]  # values of sites s-w .. s
                total = 0
                for sites, k in closing[s]:
                    idx = 0
                    for site in sites:
                        idx = idx * d + window[site - (s - w)]
                    total += k[idx]
                inc[a, x] = total
        mats.append(inc)
        max_len = max(max_len, int(inc.max()) + 1)
    tm = np.zeros((n, n_states, n_states, max_len))
    for s, inc in enumerate(mats):
        for a in range(n_states):
            for x in range(d):
                b = (a * d + x) % n_states if w > 0 else 0
                tm[s, a, b, inc[a, x]] += probs[s, x]
    used_fft = False
    while tm.shape[0] > 1:
        if tm.shape[0] % 2:
            eye = np.zeros((1,) + tm.shape[1:])
            eye[0, :, :, 0] = np.eye(n_states)
            tm = np.concatenate([tm, eye])
        tm, f = _batched_polymat(tm[0::2], tm[1::2])
        used_fft |= f
    poly = tm[0, 0].sum(axis=0)  # start from the all-zero window
    if used_fft:
        poly[poly < 1e-14 * poly.max()] = 0.0
    poly = np.where(poly < 0, 0.0, poly)
    poly /= poly.sum()
    nz = np.flatnonzero(poly > 0)
    energies, weights = drop_light_atoms((offset + step * nz).astype(float), poly[nz])
    return SpectralMeasure(energies, weights, "fast_commuting",
                           {"energy_step": step, "window": w, "fft": used_fft})


# ---------------------------------------------------------------------------
# cumulant window
# ---------------------------------------------------------------------------

def omega_star(R: float, D: int, E: float) -> float:
    """1 / (2 e^2 R^2D (R^2D + 1) E), with R clamped to >= 1."""
    r = max(float(R), 1.0) ** (2 * D)
    return 1.0 / (2 * math.e ** 2 * r * (r + 1) * E)


def cumulant_window_check(measure: SpectralMeasure, n_sites: int, E: float, R: float, D: int,
                          omega) -> dict:
    """Check |log phi + w^2/2| <= (2N / sigma^3)(w / w*)^3 on w <= w* sigma / 2.

    log phi is continued along the grid from omega = 0 (phase unwrapped).
    """
    std = measure if isinstance(measure, StandardizedMeasure) else standardize(measure)
    sigma = std.sigma
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 1 or omega.size == 0 or np.any(np.diff(omega) <= 0) or omega[0] < 0:
        raise InvalidParameterError("omega grid must be increasing and start at >= 0")
    grid = omega if omega[0] == 0 else np.concatenate([[0.0], omega])
    phi = std.characteristic(grid)
    with np.errstate(divide="ignore"):
        logphi = np.log(np.abs(phi)) + 1j * np.unwrap(np.angle(phi))
    if omega[0] != 0:
        logphi, phi, grid = logphi[1:], phi[1:], grid[1:]
    ws = omega_star(R, D, E)
    window = ws * sigma / 2
    lhs = np.abs(logphi + grid ** 2 / 2)
    lhs[grid == 0] = 0.0  # the continued logarithm starts at log phi(0) = log 1 = 0
    rhs = 2 * n_sites / sigma ** 3 * (grid / ws) ** 3
    inside = grid <= window
    viol = inside & (lhs > rhs * (1 + 1e-12) + 1e-15)
    return {
        "omega_star": ws, "window": window, "sigma": sigma,
        "omega": grid.tolist(), "lhs": lhs.tolist(), "rhs": rhs.tolist(),
        "in_window": inside.tolist(), "violations": int(viol.sum()),
        "holds": bool(not viol.any()), "points_in_window": int(inside.sum()),
    }
