"""Constant pipeline: C_alpha, the derivation constants, c1..c5, envelopes and bounds.

Everything here is scalar arithmetic on positive quantities. Theorem-level
bounds always come with their precondition ledger; when any precondition
fails the report is marked not applicable and carries no bound.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import zeta as hurwitz_zeta

from .errors import EnvelopeInapplicableError, InvalidParameterError, WindowViolationError
from .esseen import DEFAULT_C
from .spectral import omega_star
from .states import DecayFit

LOG2 = math.log(2.0)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass
class ModelParams:
    N: int
    D: int
    c_D: float
    R: float
    E: float
    c0: float
    sigma: float
    decay: DecayFit | None = None
    convention: str = "eq4"
    commuting: bool = False
    product: bool = False

    def __post_init__(self):
        for name in ("N", "D", "c_D", "R", "E", "c0", "sigma"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.convention not in ("eq4", "eq8"):
            raise InvalidParameterError(f"unknown convention {self.convention!r}")

    @property
    def variance_ok(self) -> bool:
        return bool(self.sigma ** 2 >= self.c0 * self.E ** 2 * self.N * (1 - 1e-12))

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("N", "D", "c_D", "R", "E", "c0", "sigma", "convention",
                                             "commuting", "product")}
        out["decay"] = self.decay.to_dict() if self.decay is not None else None
        out["variance_ok"] = self.variance_ok
        return out


def _zero_decay(D: int) -> DecayFit:
    return DecayFit("exponential", 0.0, 1.0, D)


# ---------------------------------------------------------------------------
# C_alpha and series
# ---------------------------------------------------------------------------

def eulerian(n: int) -> list:
    """Row n of the Eulerian numbers A(n, 0..n-1) (A(0) = [1])."""
    row = [1]
    for m in range(1, n + 1):
        new = [0] * m
        for k in range(m):
            left = (k + 1) * row[k] if k < len(row) else 0
            right = (m - k) * row[k - 1] if 0 < k <= len(row) else 0
            new[k] = left + right
        row = new
    return row


def _polylog_neg(j: int, q: float) -> float:
    """sum_{t >= 0} t^j q^t for 0 <= q < 1."""
    if j == 0:
        return 1.0 / (1.0 - q)
    a = eulerian(j)
    return q * sum(c * q ** k for k, c in enumerate(a)) / (1.0 - q) ** (j + 1)


def c_alpha(decay: DecayFit | None, ell: float, c_D: float, D: int) -> float:
    """C_alpha(l) = c_D sum_{r >= l} alpha(r) (r + 1)^(D - 1)."""
    if ell < 1:
        raise InvalidParameterError("C_alpha needs l >= 1")
    if decay is None or decay.L0 == 0.0:
        return 0.0
    start = math.ceil(ell - 1e-12)
    k = D - 1
    if decay.model == "exponential":
        q = math.exp(-1.0 / decay.rate)
        # sum_{r >= start} q^r (r+1)^k = q^-1 sum_{s >= start+1} s^k q^s
        a = start + 1
        total = sum(math.comb(k, j) * a ** (k - j) * _polylog_neg(j, q) for j in range(k + 1))
        return c_D * decay.L0 * q ** (a - 1) * total
    if decay.model == "algebraic":
        p = D + decay.rate
        if not p - k > 1:
            raise InvalidParameterError("algebraic decay series diverges (need beta > 0)")
        # (r+1)^k = sum_j binom(k, j) r^j
        total = sum(math.comb(k, j) * float(hurwitz_zeta(p - j, start)) for j in range(k + 1))
        return c_D * decay.L0 * total
    raise InvalidParameterError(f"unknown decay model {decay.model!r}")


def s_series(D: float, rtol: float = 1e-14) -> float:
    """s_D = sum_{m >= 0} (m + 2)^D 2^-m, summed until the geometric tail bound is below rtol."""
    total, m = 0.0, 0
    while True:
        t = (m + 2) ** D * 2.0 ** (-m)
        total += t
        ratio = ((m + 3) / (m + 2)) ** D / 2
        if ratio < 1 and t * ratio / (1 - ratio) <= rtol * total:
            return total
        m += 1


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

@dataclass
class ConstantTable:
    Gamma: float
    s_Dm1: float
    s_2Dm1: float
    s_3Dm1: float
    B1: float
    B2: float
    B3: float
    B4: float
    B5: float
    B6: float
    Omega1: float
    Omega2: float
    Omega3: float
    Omega3_table: float
    ell: int
    M: int
    K: int

    @property
    def omega_max(self) -> float:
        return min(self.Omega1, self.Omega2, self.Omega3)

    def to_dict(self) -> dict:
        return asdict(self)


def shared_constants(p: ModelParams) -> dict:
    """Constants that depend on the lattice, range and decay only."""
    D, R, c_D = p.D, p.R, p.c_D
    vol = c_D * (2 * R) ** D
    gamma = max(4 * vol, 2 * c_D ** 2 * (2 * R) ** D)
    s1, s2, s3 = s_series(D - 1), s_series(2 * (D - 1)), s_series(3 * (D - 1))
    b1 = (vol + math.sqrt(2) * gamma) ** 2
    b2 = 2 * (vol + gamma)
    b3 = 2 * (vol + 2 ** ((D - 1) / 2) * gamma)
    b4 = b1 + b3 ** 2 * (1 + 2 * s2)
    b5 = 12 * b2 ** 2 * R ** (D / 2) * math.sqrt(1 + c_alpha(p.decay, 1, c_D, D)) * s3
    b6 = 0.0 if p.commuting else gamma ** 2 * s1
    return {"Gamma": gamma, "s_Dm1": s1, "s_2Dm1": s2, "s_3Dm1": s3,
            "B1": b1, "B2": b2, "B3": b3, "B4": b4, "B5": b5, "B6": b6}


def table_constants(p: ModelParams, ell: int, M: int, K: int) -> ConstantTable:
    if min(ell, M, K) < 1:
        raise InvalidParameterError("l, M, K must be positive integers")
    s = shared_constants(p)
    D, E, sig = p.D, p.E, p.sigma
    om1 = sig / (2 * E * s["Gamma"] * ell ** (D / 2) * K ** ((D - 1) / 2))
    om2 = sig / (2 * s["B2"] * E * ell ** D * K ** (D - 1))
    om3 = p.c0 * sig / (4 * s["B4"] * E * ell ** (2 * D))
    om3t = p.c0 * sig / (s["B4"] * E * ell ** (2 * D))
    return ConstantTable(Omega1=om1, Omega2=om2, Omega3=om3, Omega3_table=om3t, ell=ell, M=M, K=K, **s)


@dataclass
class LemmaConstants:
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c3_tilde: float
    convention: str = "eq4"

    @property
    def c3_used(self) -> float:
        return self.c3_tilde if self.convention == "eq8" else self.c3

    def as_tuple(self) -> tuple:
        return (self.c1, self.c2, self.c3_used, self.c4, self.c5)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["c3_used"] = self.c3_used
        return d


def lemma_window_failures(p: ModelParams, ell: int, M: int, K: int) -> list:
    failed = []
    if not K > 1:
        failed.append(f"K > 1 (K = {K})")
    if not ell > 1:
        failed.append(f"l > 1 (l = {ell})")
    if M < 1:
        failed.append(f"M >= 1 (M = {M})")
    if not ell - M >= 1:
        failed.append(f"l - M >= 1 (l - M = {ell - M})")
    if not 2 * p.R * ell * K <= p.N:
        failed.append(f"2 R l K <= N ({2 * p.R * ell * K:g} > {p.N})")
    return failed


def lemma_c_constants(p: ModelParams, table: ConstantTable, ell: int, M: int, K: int) -> LemmaConstants:
    failed = lemma_window_failures(p, ell, M, K)
    if failed:
        raise WindowViolationError("parameter window violated: " + "; ".join(failed), failed)
    D, R, N, c0 = p.D, p.R, p.N, p.c0
    decay = p.decay if p.decay is not None else _zero_decay(D)
    c1 = (2 * R) ** D / c0 * c_alpha(decay, 2 * R * (ell - 1), p.c_D, D)
    c2 = table.B4 / c0 ** 1.5 * ell ** (2 * D) / math.sqrt(N)
    alpha_val = 0.0 if decay.L0 == 0 else float(decay(2 * R * (ell - M - 1)))
    c3 = 8 * R / math.sqrt(c0) * math.sqrt(N) * ell * alpha_val
    c4 = table.B2 / c0 * ell ** D * K ** (D - 1) / 2 ** (K - 1)
    # the B6 term is formed in log space: 2^M l^(D (M - 3) / 2) overflows for large M
    b6_term = 0.0
    if table.B6 > 0:
        b6_term = table.B6 * math.exp(-(M * LOG2 + (D / 2) * (M - 3) * math.log(ell) + 0.5 * math.log(N)))
    c5 = (table.B5 * ell ** (2 * D + D / 2) / N + b6_term) / c0 ** 1.5
    return LemmaConstants(c1, c2, c3, c4, c5, c3 / (4 * R * ell), p.convention)


# ---------------------------------------------------------------------------
# envelope and Delta estimate
# ---------------------------------------------------------------------------

def phi_envelope(omega, c: LemmaConstants, omega_max: float | None = None):
    """Upper envelope for |phi(w) - exp(-w^2/2)| inside the window."""
    if not c.c1 < 0.5:
        raise EnvelopeInapplicableError(f"envelope needs c1 < 1/2 (c1 = {c.c1:.6g})", ["c1 < 1/2"])
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0) or (omega_max is not None and np.any(w > omega_max * (1 + 1e-12))):
        raise WindowViolationError(f"omega outside [0, {omega_max}]", ["omega in window"])
    c1, c2, c3, c4, c5 = c.as_tuple()
    with np.errstate(divide="ignore"):
        m = np.minimum(np.where(w > 0, 8 / np.where(w > 0, w, 1), np.inf), w)
    out = (np.exp(-w ** 2 / 6) * w ** 2 * (c1 / 2 + c2 * w / 3)
           + 4 * (c4 + c5 * w) * (1 - np.exp(-w ** 2 / 4)) + c3 * m)
    return out if out.ndim else float(out)


def delta_estimate(c: LemmaConstants, Omega: float, C: float = DEFAULT_C, omega_max: float | None = None) -> float:
    if not Omega > 0 or (omega_max is not None and Omega > omega_max * (1 + 1e-12)):
        raise WindowViolationError(f"Omega = {Omega} outside (0, {omega_max}]", ["Omega in window"])
    c1, c2, c3, c4, c5 = c.as_tuple()
    return (C / Omega + 6 * c1 / (2 * math.pi) + math.sqrt(6) * c2 / math.sqrt(math.pi)
            + 8 / math.pi * (c3 + c4) * (1 + math.log(Omega)) + 8 * c5 * Omega / math.pi)


# ---------------------------------------------------------------------------
# theorem-level evaluators
# ---------------------------------------------------------------------------

def b7_exponential(D, R, xi, c0, Gamma, B2, B4) -> float:
    return min(math.sqrt(c0) * LOG2 ** ((D - 1) / 2) * R ** (D / 2) / (2 * Gamma * (2 * xi) ** (D / 2)),
               math.sqrt(c0) * LOG2 ** (D - 1) * R ** D / (2 * B2 * (2 * xi) ** D),
               c0 * math.sqrt(c0) * R ** (2 * D) / (4 * B4 * (2 * xi) ** (2 * D)))


def b7_algebraic(D, c0, Gamma, B2, B4) -> float:
    return min(math.sqrt(c0) * LOG2 ** ((D - 1) / 2) / (2 * Gamma),
               math.sqrt(c0) * LOG2 ** (D - 1) / (2 * B2),
               c0 * math.sqrt(c0) / (4 * B4))


def f1_exponential(N, D, R, c_D, c0, L0, xi, B2, B4, B5, B6, B7, C=DEFAULT_C) -> float:
    """The bracket multiplying (log N)^(2D) / sqrt(N) for exponential decay."""
    lg = math.log(N)
    t1 = C / B7
    t2 = 6 * c_D * L0 * xi ** D / ((2 * math.pi * c0 * R ** (D - 1)) * lg ** (D + 1) * N ** 1.5)
    t3 = math.sqrt(6) * B4 * (2 * xi) ** (2 * D) / (math.sqrt(math.pi) * c0 ** 1.5 * R ** (2 * D))
    pre = 16 * xi * L0 / (math.sqrt(c0) * lg ** (2 * D - 2)) \
        + 2 * B2 * (2 * xi) ** D / (c0 * R ** D * LOG2 ** (D - 1) * math.sqrt(N))
    post = (1 + math.log(B7)) / lg + (0.5 - 2 * D * math.log(lg) / lg)
    t4 = 8 / math.pi * pre * post
    t5 = 8 * B7 * B5 * (2 * xi) ** (5 * D / 2) / (math.pi * c0 ** 1.5 * R ** (5 * D / 2) * lg ** (3 * D / 2))
    t6 = 8 * B7 * B6 / (math.pi * c0 ** 1.5 * N ** (xi * LOG2 / (2 * R) - 0.5)
                        * lg ** ((D / 2) * (xi / (2 * R) * lg + 5)))
    return t1 + t2 + t3 + t4 + t5 + t6


def f2_algebraic(N, D, R, c_D, c0, L0, beta, delta, B2, B4, B5, B6, B7t, C=DEFAULT_C, eq8=False) -> float:
    """The bracket multiplying N^-(1/2 - 2 delta D) for algebraic decay.

    eq8=False: correlations weighted by min support size; eq8=True: plain norm
    weighting, which changes only the third term.
    """
    lg = math.log(N)
    t1 = C / B7t
    t2 = N ** (-((beta + 2 * D) * delta - 0.5)) * 6 * c_D * L0 * (2 * R) ** (D - 1) \
        / (2 * beta * math.pi * c0 * (2 * R) ** beta)
    t3 = math.sqrt(6) * B4 * 2 ** (2 * D) / (math.sqrt(math.pi) * c0 ** 1.5)
    bracket = 8 * (1 + math.log(B7t)) / math.pi + 8 / math.pi * (0.5 - 2 * delta * D) * lg
    if eq8:
        t4 = N ** (-((beta + 3 * D) * delta - 1)) * bracket * 4 * L0 / (math.sqrt(c0) * R ** (beta + D))
    else:
        t4 = N ** (-((beta + 3 * D - 1) * delta - 1)) * bracket * 16 * R * L0 / (math.sqrt(c0) * R ** (beta + D))
    t5 = (lg / LOG2) ** (D - 1) / N ** (0.5 + delta * D) * bracket * 2 * B2 * 2 ** D / c0
    t6 = N ** (-3 * D * delta / 2) * 8 * B5 * B7t * 2 ** (5 * D / 2) / (math.pi * c0 ** 1.5)
    nd = N ** delta
    # 2^(N^delta / 2) overflows long before the term itself stops underflowing to 0
    log_den = 1.5 * math.log(c0) + nd / 2 * LOG2 + (0.5 + delta * D * (4 + 0.5 * (nd / 2 - 3))) * lg
    t7 = 8 * B6 * B7t * math.exp(-log_den) if B6 > 0 else 0.0
    return t1 + t2 + t3 + t4 + t5 + t6 + t7


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class BoundReport:
    variant: str
    applicable: bool
    delta_bound: float | None
    preconditions: list
    omega: float | None = None
    ell: int | None = None
    M: int | None = None
    K: int | None = None
    constants: dict = field(default_factory=dict)
    table: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def failed(self) -> list:
        return [name for name, ok in self.preconditions if not ok]

    def to_dict(self) -> dict:
        return {"variant": self.variant, "applicable": self.applicable,
                "delta_bound": self.delta_bound if self.applicable else "not-applicable",
                "preconditions": [{"name": n, "holds": bool(ok)} for n, ok in self.preconditions],
                "omega": self.omega, "l": self.ell, "M": self.M, "K": self.K,
                "constants": self.constants, "table": self.table, "extra": self.extra}


def _finish(variant, pre, value, **kw) -> BoundReport:
    ok = all(h for _, h in pre) and value is not None and math.isfinite(value) and value >= 0
    return BoundReport(variant, ok, float(value) if ok else None, pre, **kw)


def exponential_recipe(N: int, R: float, xi: float) -> tuple:
    ell = math.ceil(xi / R * math.log(N)) + 1
    return ell, max(1, (ell - 1) // 2), int(math.floor(math.log2(N)))


def algebraic_recipe(N: int, delta: float) -> tuple:
    ell = math.ceil(N ** delta) + 1
    return ell, max(1, (ell - 1) // 2), int(math.floor(math.log2(N)))


def epsilon_interval(beta: float, D: int, eq8: bool) -> tuple:
    """Admissible epsilon range used by the proof (upper end open)."""
    if eq8:
        return 0.0, (beta - D) / (2 * (beta + 3 * D))
    return 0.0, (beta - D - 1) / (2 * (beta + 3 * D - 1))


def _common_checks(p: ModelParams, ell, M, K) -> list:
    return [("variance: sigma^2 >= c0 E^2 N", p.variance_ok), ("K > 1", K > 1), ("l > 1", ell > 1),
            ("M >= 1", M >= 1), ("l - M >= 1", ell - M >= 1), ("2 R l K <= N", 2 * p.R * ell * K <= p.N)]


def theorem_bound(p: ModelParams, variant: str | None = None, eps: float = 0.0, C: float = DEFAULT_C) -> BoundReport:
    """Theorem-level Delta bound following the proof recipes for (l, M, K, Omega)."""
    decay = p.decay
    if decay is None:
        raise InvalidParameterError("theorem bounds need a decay model")
    if variant is None:
        variant = "exponential" if decay.model == "exponential" else (
            "algebraic_eq8" if p.convention == "eq8" else "algebraic")
    N, D, R = p.N, p.D, p.R
    s = shared_constants(p)
    lg = math.log(N)
    if variant == "exponential":
        xi = decay.rate
        ell, M, K = exponential_recipe(N, R, xi)
        pre = [("decay model is exponential", decay.model == "exponential"),
               ("N > e^2", N > math.e ** 2),
               ("N > 4 xi (log N)^2 / log 2", N > 4 * xi * lg ** 2 / LOG2),
               ("N > floor(e^(2R/xi)) (M > 1)", N > math.floor(math.exp(min(2 * R / xi, 700))))]
        pre += _common_checks(p, ell, M, K)
        b7 = b7_exponential(D, R, xi, p.c0, s["Gamma"], s["B2"], s["B4"])
        omega = b7 * math.sqrt(N) / lg ** (2 * D)
        f = f1_exponential(N, D, R, p.c_D, p.c0, decay.L0, xi, s["B2"], s["B4"], s["B5"], s["B6"], b7, C)
        value = f * lg ** (2 * D) / math.sqrt(N)
        extra = {"f1": f, "B7": b7}
    elif variant in ("algebraic", "algebraic_eq8"):
        eq8 = variant == "algebraic_eq8"
        beta = decay.rate
        shift = 3 * D if eq8 else 3 * D - 1
        lo, hi = epsilon_interval(beta, D, eq8)
        beta_ok = beta > (D if eq8 else D + 1)
        if beta_ok and not lo <= eps < hi:
            raise InvalidParameterError(f"epsilon must lie in [{lo}, {hi:.6g})")
        delta = 1 / (beta + shift) + eps / (2 * D)
        ell, M, K = algebraic_recipe(N, delta)
        pre = [("decay model is algebraic", decay.model == "algebraic"),
               (f"beta > {'D' if eq8 else 'D + 1'}", beta_ok),
               (f"N > floor(2^(beta + {shift}))", N > math.floor(2.0 ** (beta + shift))),
               ("N > 4 R N^delta log N / log 2", N > 4 * R * N ** delta * lg / LOG2),
               ("N > floor(2^(1/delta)) (M > 1)", N > math.floor(2.0 ** (1 / delta)))]
        pre += _common_checks(p, ell, M, K)
        b7 = b7_algebraic(D, p.c0, s["Gamma"], s["B2"], s["B4"])
        omega = b7 * N ** (0.5 - 2 * delta * D)
        f = f2_algebraic(N, D, R, p.c_D, p.c0, decay.L0, beta, delta, s["B2"], s["B4"], s["B5"], s["B6"], b7, C, eq8)
        value = f / N ** (0.5 - 2 * delta * D)
        extra = {"f2": f, "B7": b7, "delta": delta, "epsilon": eps, "rate_exponent": 0.5 - 2 * delta * D}
    else:
        raise InvalidParameterError(f"unknown theorem variant {variant!r}")

    constants, table = {}, {}
    try:
        tab = table_constants(p, ell, M, K)
        lc = lemma_c_constants(p, tab, ell, M, K)
        constants, table = lc.to_dict(), tab.to_dict()
        pre.append(("c1 < 1/2", lc.c1 < 0.5))
        pre.append(("Omega <= min(Omega1, Omega2, Omega3)", omega <= tab.omega_max * (1 + 1e-12)))
        extra["lemma3_estimate"] = delta_estimate(lc, omega, C) if omega > 0 else None
    except WindowViolationError:
        pass
    return _finish(variant, pre, value, omega=omega, ell=ell, M=M, K=K, constants=constants, table=table, extra=extra)


def product_bound(p: ModelParams, C: float = DEFAULT_C) -> BoundReport:
    ws = omega_star(p.R, p.D, p.E)
    b1 = (math.sqrt(p.c0) * ws * p.E) ** -3
    cprime = min(ws * p.sigma / (2 * math.sqrt(p.N)), 1 / (4 * b1))
    value = (C + 4 * b1) / (cprime * math.sqrt(p.N))
    pre = [("product state", p.product), ("variance: sigma^2 >= c0 E^2 N", p.variance_ok)]
    return _finish("product", pre, value, omega=cprime * math.sqrt(p.N),
                   extra={"omega_star": ws, "B1_tilde": b1, "C_prime": cprime})


def lemma_report(p: ModelParams, ell: int, M: int, K: int, C: float = DEFAULT_C) -> BoundReport:
    """Lemma-level Delta estimate at fixed (l, M, K) with Omega = min(Omega1, Omega2, Omega3)."""
    pre = [("variance: sigma^2 >= c0 E^2 N", p.variance_ok)]
    fails = lemma_window_failures(p, ell, M, K)
    pre += [(f, False) for f in fails]
    if fails:
        return _finish("lemma", pre, None, ell=ell, M=M, K=K)
    tab = table_constants(p, ell, M, K)
    lc = lemma_c_constants(p, tab, ell, M, K)
    pre.append(("c1 < 1/2", lc.c1 < 0.5))
    omega = tab.omega_max
    value = delta_estimate(lc, omega, C)
    return _finish("lemma", pre, value, omega=omega, ell=ell, M=M, K=K,
                   constants=lc.to_dict(), table=tab.to_dict())


def smallest_window(p: ModelParams) -> tuple | None:
    """(l, M, K) = (2, 1, 2) if it satisfies the lemma window, else None."""
    ell, M, K = 2, 1, 2
    return (ell, M, K) if not lemma_window_failures(p, ell, M, K) else None
