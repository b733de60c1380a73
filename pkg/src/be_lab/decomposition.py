"""Layer decomposition of exp(i w H_std) and the ODE for the characteristic function.

For an anchor j the centred terms h_k - <h_k> are split by their anchor's
distance to j into shells of width 2 R l:

    z(0) = H_std,   z(m) = (1/sigma) sum_{k : d(k, j) > 2 R l m} (h_k - <h_k>)   (m >= 1)
    layer(m) = z(m - 1) - z(m).

Peeling the exponential layer by layer gives, exactly for every omega,

    phi'(w) = (-w + eta(w)) phi(w) + nu(w),

with eta and nu sums over anchors of the pieces computed in ``lemma_terms``.
The peeling uses the truncated Taylor polynomials of

    zeta(w) = exp(i w (X + Y)) exp(-i w X) exp(-i w Y)

built from the derivative recursion in ``zeta_derivatives``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, WindowViolationError
from .lattice import Lattice
from .linalg import expm
from .operators import HamiltonianModel, detect_support, embed, spectral_norm
from .spectral import spectral_measure, standardize
from .states import QuantumState


# ---------------------------------------------------------------------------
# zeta and its Taylor polynomials
# ---------------------------------------------------------------------------

def zeta_exact(x: np.ndarray, y: np.ndarray, omega: float) -> np.ndarray:
    return expm(1j * omega * (x + y)) @ expm(-1j * omega * x) @ expm(-1j * omega * y)


def zeta_derivatives(x: np.ndarray, y: np.ndarray, n_max: int) -> list:
    """[zeta^(n)(0) for n = 0..n_max].

    zeta' = zeta W with W(w) = i (e^{iwY} e^{iwX} Y e^{-iwX} e^{-iwY} - Y), whose
    k-th derivative at 0 is i^{k+1} sum_{m=1..k} binom(k, m) [Y, [X, Y]_m]_{k-m}.
    Leibniz then gives

        zeta^(n+1)(0) = sum_{k=1..n} sum_{m=1..k} n! / ((n-k)! (k-m)! m!)
                        i^{k+1} zeta^(n-k)(0) [Y, [X, Y]_m]_{k-m}.
    """
    if n_max < 0:
        raise InvalidParameterError("derivative order must be >= 0")
    dim = x.shape[0]
    eye = np.eye(dim, dtype=complex)
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    # xy[m] = [X, Y]_m ; nest[(m, q)] = [Y, [X, Y]_m]_q
    xy = [y]
    for _ in range(1, n_max):
        xy.append(x @ xy[-1] - xy[-1] @ x)
    nest = {}
    for m in range(1, n_max):
        cur = xy[m]
        nest[(m, 0)] = cur
        for q in range(1, n_max - m):
            cur = y @ cur - cur @ y
            nest[(m, q)] = cur
    out = [eye]
    for n in range(0, n_max):
        acc = np.zeros_like(eye)
        for k in range(1, n + 1):
            for m in range(1, k + 1):
                coef = math.factorial(n) / (math.factorial(n - k) * math.factorial(k - m) * math.factorial(m))
                acc += coef * (1j ** (k + 1)) * (out[n - k] @ nest[(m, k - m)])
        out.append(acc)
    return out


def zeta_taylor(derivs: list, omega: float, order: int) -> np.ndarray:
    """sum_{n <= order} w^n / n! zeta^(n)(0)."""
    if order >= len(derivs):
        raise InvalidParameterError(f"need derivatives up to {order}, have {len(derivs) - 1}")
    out = np.zeros_like(derivs[0])
    for n in range(order + 1):
        out = out + omega ** n / math.factorial(n) * derivs[n]
    return out


def zeta_taylor_derivative(derivs: list, omega: float, order: int, k: int) -> np.ndarray:
    """k-th omega-derivative of the degree-`order` Taylor polynomial."""
    out = np.zeros_like(derivs[0])
    for n in range(k, order + 1):
        out = out + omega ** (n - k) / math.factorial(n - k) * derivs[n]
    return out


# ---------------------------------------------------------------------------
# centred model and layers
# ---------------------------------------------------------------------------

@dataclass
class CenteredModel:
    """Dense centred anchor terms and the standardised Hamiltonian."""

    model: HamiltonianModel
    rho: np.ndarray = field(repr=False)
    hhat: dict = field(repr=False)
    sigma: float = 1.0
    H_std: np.ndarray = field(default=None, repr=False)

    @property
    def anchors(self):
        return list(self.hhat)

    def expect(self, a: np.ndarray) -> complex:
        return complex(np.einsum("ij,ji->", self.rho, a))


def center_model(model: HamiltonianModel, state: QuantumState) -> CenteredModel:
    rho = state.dense()
    n = model.n_sites
    hhat = {}
    for anchor in model.anchored():
        h = embed(model.anchor_operator(anchor), n).astype(complex)
        mean = np.einsum("ij,ji->", rho, h)
        hhat[anchor] = h - mean * np.eye(h.shape[0])
    total = sum(hhat.values())
    var = float(np.real(np.einsum("ij,ji->", rho, total @ total)))
    if not var > 0:
        raise InvalidParameterError("the Hamiltonian has zero variance in this state")
    sigma = math.sqrt(var)
    return CenteredModel(model, rho, hhat, sigma, total / sigma)


def effective_range(model: HamiltonianModel) -> int:
    """Interaction range used for shell widths; on-site models count as range 1."""
    return max(model.R, 1)


def check_lemma_window(R: int, ell: int, M: int, K: int, N: int, require_k_gt_1: bool = True) -> None:
    failed = []
    if require_k_gt_1 and not K > 1:
        failed.append(f"K > 1 (K = {K})")
    if K < 1:
        failed.append(f"K >= 1 (K = {K})")
    if not ell > 1:
        failed.append(f"l > 1 (l = {ell})")
    if M < 1:
        failed.append(f"M >= 1 (M = {M})")
    if not 2 * R * ell * K <= N:
        failed.append(f"2 R l K <= N ({2 * R * ell * K} > {N})")
    if not ell - M >= 1:
        failed.append(f"l - M >= 1 (l - M = {ell - M})")
    if failed:
        raise WindowViolationError("parameter window violated: " + "; ".join(failed), failed)


def tail_operators(cm: CenteredModel, j: int, ell: int, K: int, R: int) -> list:
    """[z(0), ..., z(K)] for anchor j."""
    lat = cm.model.lattice
    anchors = np.array(cm.anchors)
    dist = lat.distance(anchors, j)
    zs = [cm.H_std]
    dim = cm.H_std.shape[0]
    for m in range(1, K + 1):
        sel = anchors[dist > 2 * R * ell * m]
        z = sum((cm.hhat[int(a)] for a in sel), np.zeros((dim, dim), dtype=complex)) / cm.sigma
        zs.append(z)
    return zs


@dataclass
class ShellDecomposition:
    j: int
    ell: int
    R: int
    tails: list = field(repr=False)   # z(0..K)
    layers: list = field(repr=False)  # [None, layer(1..K)]

    def reconstruct(self) -> np.ndarray:
        return sum(self.layers[1:]) + self.tails[-1]


def shell_decomposition(cm: CenteredModel, j: int, ell: int, K: int) -> ShellDecomposition:
    """Layers and tails around anchor j; needs l > 1 and 2 R l K <= N."""
    R = effective_range(cm.model)
    failed = []
    if not ell > 1:
        failed.append(f"l > 1 (l = {ell})")
    if K < 1:
        failed.append(f"K >= 1 (K = {K})")
    if not 2 * R * ell * K <= cm.model.n_sites:
        failed.append(f"2 R l K <= N ({2 * R * ell * K} > {cm.model.n_sites})")
    if failed:
        raise WindowViolationError("shell window violated: " + "; ".join(failed), failed)
    zs = tail_operators(cm, j, ell, K, R)
    return ShellDecomposition(j, ell, R, zs, layer_operators(zs))


def layer_operators(zs: list) -> list:
    """[None, layer(1), ..., layer(K)] with layer(m) = z(m-1) - z(m)."""
    return [None] + [zs[m - 1] - zs[m] for m in range(1, len(zs))]


@dataclass
class AnchorTables:
    """Omega-independent data for one anchor: tails, layers, zeta derivatives."""

    j: int
    zs: list = field(repr=False)
    layers: list = field(repr=False)
    r_derivs: list = field(repr=False)  # index m = 1..K, (X, Y) = (-z(m-1), z(m))
    s_derivs: list = field(repr=False)  # index m = 1..K, (X, Y) = (-z(m), H_std)


def anchor_tables(cm: CenteredModel, j: int, ell: int, M: int, K: int, R: int) -> AnchorTables:
    zs = tail_operators(cm, j, ell, K, R)
    layers = layer_operators(zs)
    r_d = [None] + [zeta_derivatives(-zs[m - 1], zs[m], M) for m in range(1, K + 1)]
    s_d = [None] + [zeta_derivatives(-zs[m], cm.H_std, M) for m in range(1, K + 1)]
    return AnchorTables(j, zs, layers, r_d, s_d)


def rs_truncations(tables: AnchorTables, omega: float, M: int) -> tuple:
    """Truncated R_m and S_m (m = 1..K) at omega; index 0 unused."""
    K = len(tables.zs) - 1
    r = [None] + [zeta_taylor(tables.r_derivs[m], omega, M) for m in range(1, K + 1)]
    s = [None] + [zeta_taylor(tables.s_derivs[m], omega, M) for m in range(1, K + 1)]
    return r, s


def rs_exact(tables: AnchorTables, H_std: np.ndarray, omega: float) -> tuple:
    """Untruncated R_m = zeta(-z(m-1), z(m)) and S_m = zeta(-z(m), H_std)."""
    zs = tables.zs
    K = len(zs) - 1
    r = [None] + [zeta_exact(-zs[m - 1], zs[m], omega) for m in range(1, K + 1)]
    s = [None] + [zeta_exact(-zs[m], H_std, omega) for m in range(1, K + 1)]
    return r, s


# ---------------------------------------------------------------------------
# eta / nu
# ---------------------------------------------------------------------------

ETA_KEYS = ("eta1", "eta2", "eta3")
NU_KEYS = ("nu1", "nu2", "nu3", "nu4", "nu5")


def anchor_terms(cm: CenteredModel, tables: AnchorTables, omega: float, M: int, truncated=None,
                 operators: dict | None = None) -> dict:
    """eta_{k,j}(omega) and nu_{k,j}(omega) for one anchor (before the i/sigma factor).

    If `operators` is a dict it is filled with the lists xi, Xi, gamma, Gamma
    (index m = 1..K, entry 0 unused).
    """
    ex = cm.expect
    zs, layers = tables.zs, tables.layers
    K = len(zs) - 1
    dim = cm.H_std.shape[0]
    eye = np.eye(dim, dtype=complex)
    hj = cm.hhat[tables.j]
    r_t, s_t = truncated if truncated is not None else rs_truncations(tables, omega, M)

    e_z = [expm(1j * omega * z) for z in zs]
    e_layer = [None] + [expm(1j * omega * layers[m]) for m in range(1, K + 1)]
    e_rest = [None] + [expm(-1j * omega * (cm.H_std - zs[m])) for m in range(1, K + 1)]

    xi = [eye] + [e_layer[m] @ r_t[m] - eye for m in range(1, K + 1)]
    big_xi = [None] + [e_z[m - 1] - e_layer[m] @ r_t[m] @ e_z[m] for m in range(1, K + 1)]
    gam = [None] + [e_rest[m] @ s_t[m] - eye for m in range(1, K + 1)]
    big_gam = [None] + [e_z[m] - e_rest[m] @ s_t[m] @ e_z[0] for m in range(1, K + 1)]
    if operators is not None:
        operators.update(xi=[None] + xi[1:], Xi=big_xi, gamma=gam, Gamma=big_gam)

    # prods[m] = h_j xi^1 ... xi^m
    prods = [hj]
    for m in range(1, K + 1):
        prods.append(prods[-1] @ xi[m])
    ep = [ex(p) for p in prods]

    out = {}
    lead = ep[1] if K >= 2 else 0.0
    out["eta1"] = lead - 1j * omega * ex(hj @ layers[1])
    out["eta2"] = -1j * omega * ex(hj @ zs[1])
    eta3 = (ep[1] * ex(gam[2])) if K >= 2 else 0.0
    for m in range(2, K):
        eta3 += ep[m] * ex(eye + gam[m + 1])
    out["eta3"] = eta3

    out["nu1"] = ex(prods[K] @ e_z[K])
    out["nu2"] = sum(ex(prods[m - 1] @ big_xi[m]) for m in range(1, K + 1))
    out["nu3"] = sum(ex(prods[m] @ (e_z[m + 1] - ex(e_z[m + 1]) * eye)) for m in range(0, K))
    out["nu4"] = sum((ep[m] * ex(big_gam[m + 1]) for m in range(1, K)), 0.0)
    out["nu5"] = sum((ep[m] * ex((gam[m + 1] - ex(gam[m + 1]) * eye) @ e_z[0]) for m in range(1, K)), 0.0)
    return {k: complex(v) for k, v in out.items()}


@dataclass
class LemmaTerms:
    omega: float
    eta: complex
    nu: complex
    phi: complex
    dphi: complex
    per_anchor: dict = field(repr=False)
    sigma: float = 1.0

    @property
    def residual(self) -> float:
        return abs(self.dphi - ((-self.omega + self.eta) * self.phi + self.nu))


class Decomposition:
    """Reusable setup for one (model, state, l, M, K)."""

    def __init__(self, model: HamiltonianModel, state: QuantumState, ell: int, M: int, K: int,
                 strict: bool = True):
        self.R = effective_range(model)
        check_lemma_window(self.R, ell, M, K, model.n_sites, require_k_gt_1=strict)
        self.model, self.state = model, state
        self.ell, self.M, self.K = ell, M, K
        self.cm = center_model(model, state)
        self.tables = {j: anchor_tables(self.cm, j, ell, M, K, self.R) for j in self.cm.anchors}
        self._measure = standardize(spectral_measure(model, state))

    def terms(self, omega: float) -> LemmaTerms:
        if omega < 0:
            raise InvalidParameterError("omega must be >= 0")
        per = {j: anchor_terms(self.cm, t, omega, self.M) for j, t in self.tables.items()}
        pref = 1j / self.cm.sigma
        eta = pref * sum(sum(d[k] for k in ETA_KEYS) for d in per.values())
        nu = pref * sum(sum(d[k] for k in NU_KEYS) for d in per.values())
        phi = complex(self._measure.characteristic(omega))
        dphi = complex(self._measure.characteristic_derivative(omega))
        return LemmaTerms(float(omega), complex(eta), complex(nu), phi, dphi, per, self.cm.sigma)


def lemma_terms(model: HamiltonianModel, state: QuantumState, ell: int, M: int, K: int, omega,
                strict: bool = True) -> list:
    dec = Decomposition(model, state, ell, M, K, strict)
    return [dec.terms(float(w)) for w in np.atleast_1d(omega)]


def verify_ode_residual(model: HamiltonianModel, state: QuantumState, ell: int, M: int, K: int, omega,
                        rtol: float = 1e-8) -> dict:
    """Residual |phi' - (-w + eta) phi - nu| against rtol (1 + |phi'|).

    K = 1 is accepted here: the identity holds for any K >= 1, while the
    bounds on eta and nu need K > 1.
    """
    dec = Decomposition(model, state, ell, M, K, strict=False)
    rows = []
    for w in np.atleast_1d(omega):
        t = dec.terms(float(w))
        tol = rtol * (1 + abs(t.dphi))
        rows.append({"omega": t.omega, "residual": t.residual, "tolerance": tol,
                     "ok": bool(t.residual <= tol), "eta": t.eta, "nu": t.nu})
    return {"rows": rows, "max_residual": max(r["residual"] for r in rows),
            "holds": all(r["ok"] for r in rows)}


# ---------------------------------------------------------------------------
# cluster-expansion certificates
# ---------------------------------------------------------------------------

@dataclass
class ClusterReport:
    rate: float
    lam: float
    gamma: float
    support_size: int
    derivative_violations: list
    support_violations: list
    window_violations: list
    checks: int = 0

    @property
    def violations(self) -> int:
        return len(self.derivative_violations) + len(self.support_violations) + len(self.window_violations)

    def to_dict(self) -> dict:
        return {"rate": self.rate, "lambda": self.lam, "gamma": self.gamma, "support_size": self.support_size,
                "checks": self.checks, "violations": self.violations,
                "derivative_violations": self.derivative_violations,
                "support_violations": self.support_violations,
                "window_violations": self.window_violations}


def cluster_certificates(x: np.ndarray, y: np.ndarray, lattice: Lattice, R: int, B: float, D: int, c_D: float,
                         n_max: int = 5, M_max: int = 6, n_omega: int = 10, rtol: float = 1e-9) -> ClusterReport:
    """Check the derivative bound, the support growth and the small-omega bounds for zeta.

    rate = 2 lambda sqrt(gamma) with lambda = 2 c_D (2R)^D B and
    gamma = max(1, |supp [X, Y]| / (4 c_D (2R)^D)).
    """
    n = lattice.n_sites
    comm = x @ y - y @ x
    supp = detect_support(comm, n)
    vol = c_D * (2 * R) ** D
    lam = 2 * vol * B
    gamma = max(1.0, len(supp) / (4 * vol))
    rate = 2 * lam * math.sqrt(gamma)
    top = max(n_max, M_max)
    derivs = zeta_derivatives(x, y, top)
    checks = 0
    dv, sv, wv = [], [], []
    for k in range(n_max + 1):
        nrm = spectral_norm(derivs[k])
        bound = rate ** k * math.factorial(k)
        checks += 1
        if nrm > bound * (1 + rtol):
            dv.append({"n": k, "norm": nrm, "bound": bound})
    # support of zeta^M is the union of the supports of its derivatives
    supports = [set()] + [set(detect_support(derivs[k], n)) for k in range(1, top + 1)]
    for M in range(M_max + 1):
        actual = set().union(*supports[: M + 1])
        radius = 2 * R * (M - 2)
        allowed = set(lattice.ball(supp, radius)) if (M >= 2 and supp) else set()
        checks += 1
        if not actual <= allowed:
            sv.append({"M": M, "extra_sites": sorted(actual - allowed), "radius": radius})
    w_max = 1.0 / (2 * rate) if rate > 0 else 1.0
    grid = w_max * np.arange(1, n_omega + 1) / (n_omega + 1)
    for w in grid:
        exact = zeta_exact(x, y, w)
        for M in range(M_max + 1):
            tm = zeta_taylor(derivs, w, M)
            checks += 3
            a = spectral_norm(tm)
            if a > 2 * (1 - 2.0 ** (-(M + 1))) * (1 + rtol):
                wv.append({"omega": w, "M": M, "check": "norm", "value": a})
            b = spectral_norm(exact - tm)
            bb = 2 * (rate * w) ** (M + 1)
            if b > bb * (1 + rtol) + 1e-13:
                wv.append({"omega": w, "M": M, "check": "remainder", "value": b, "bound": bb})
            for k in range(1, M + 1):
                c = spectral_norm(zeta_taylor_derivative(derivs, w, M, k))
                cb = 2 * math.factorial(k) * rate ** k
                if c > cb * (1 + rtol):
                    wv.append({"omega": w, "M": M, "check": f"derivative{k}", "value": c, "bound": cb})
    return ClusterReport(rate, lam, gamma, len(supp), dv, sv, wv, checks)


def random_cluster_instance(rng: np.random.Generator, max_sites: int = 6, min_sites: int = 3):
    """Random nearest-neighbour (X, Y) pair on a chain: each bond carries an X term and/or
    a Y term with probability 0.6 (one bond of each is forced), norms drawn in [0.2, 1].
    Returns (X, Y, lattice, B)."""
    from .lattice import build_lattice
    from .operators import local_operator

    n = int(rng.integers(min_sites, max_sites + 1))
    lat = build_lattice("chain", n)
    dim = 2 ** n
    x = np.zeros((dim, dim), dtype=complex)
    y = np.zeros((dim, dim), dtype=complex)
    B = 0.0
    # at least one X bond and one Y bond, so that neither operator vanishes
    forced = (int(rng.integers(n - 1)), int(rng.integers(n - 1)))
    for b in range(n - 1):
        for t, target in enumerate((x, y)):
            if rng.random() < 0.6 or b == forced[t]:
                g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
                h = g + g.conj().T
                scale = rng.uniform(0.2, 1.0)
                h *= scale / np.linalg.norm(h, 2)
                B = max(B, scale)
                target += embed(local_operator((b, b + 1), h), n)
    return x, y, lat, B
