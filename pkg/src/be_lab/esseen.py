"""Esseen smoothing inequality: kernels, right-hand side and certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import InvalidParameterError
from .spectral import CharacteristicCurve, SpectralMeasure, kolmogorov_distance, standardize

DEFAULT_C = 3.05
KHAT_SQ_INTEGRAL = 2.0 / 3.0  # integral of (1 - |w|)^2 over [-1, 1]


# ---------------------------------------------------------------------------
# smoothing kernels
# ---------------------------------------------------------------------------

def kernel_hat(omega):
    """Triangle 1 - |w| on [-1, 1]."""
    return np.maximum(1.0 - np.abs(np.asarray(omega, dtype=float)), 0.0)


def kernel_density(y):
    """K(y) = (1/2pi) (sin(y/2) / (y/2))^2, the inverse transform of kernel_hat."""
    y = np.asarray(y, dtype=float)
    half = y / 2
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(half == 0, 1.0, np.sin(half) / np.where(half == 0, 1.0, half))
    return s ** 2 / (2 * math.pi)


def smoothing_density(y):
    """H(y) proportional to K(y/2)^2, normalised to unit mass: (3 pi / 2) K(y/2)^2."""
    return 1.5 * math.pi * kernel_density(np.asarray(y, dtype=float) / 2) ** 2


def _triangle_autoconv(s):
    s = np.abs(np.asarray(s, dtype=float))
    inner = 2.0 / 3.0 - s ** 2 + s ** 3 / 2
    outer = (2.0 - s) ** 3 / 6
    return np.where(s <= 1, inner, np.where(s <= 2, outer, 0.0))


def smoothing_hat(omega):
    """Fourier transform of smoothing_density: (khat * khat)(2w) / int khat^2.

    Piecewise cubic, equal to 1 at 0 and vanishing for |w| >= 1.
    """
    return _triangle_autoconv(2 * np.asarray(omega, dtype=float)) / KHAT_SQ_INTEGRAL


def kernel_values(y=None, omega=None) -> dict:
    """K(y), H(y), khat(omega), hhat(omega) on the given points."""
    out = {}
    if y is not None:
        out["K"] = kernel_density(y)
        out["H"] = smoothing_density(y)
    if omega is not None:
        out["khat"] = kernel_hat(omega)
        out["hhat"] = smoothing_hat(omega)
    return out


@lru_cache(maxsize=1)
def smoothing_moment(blocks: int = 2000) -> float:
    """b = int |y| H(y) dy, computed by quadrature.

    With u = y/4 the integrand is (12/pi) sin^4(u)/u^3. It is integrated over
    [0, pi * blocks] block by block; past that point sin^4 is replaced by its
    mean 3/8, which is exact up to O(u^-4) because the block ends sit on zeros
    of sin.
    """
    f = lambda u: 12 / math.pi * (math.sin(u) ** 4 / u ** 3 if u > 1e-8 else u)
    total = 0.0
    for k in range(blocks):
        val, _ = quad(f, k * math.pi, (k + 1) * math.pi, epsabs=1e-16, epsrel=1e-13, limit=100)
        total += val
    a = math.pi * blocks
    return total + 12 / math.pi * 3 / (16 * a * a)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, n0: int = 64, max_level: int = 40) -> float:
    """Adaptive Simpson's rule, refined breadth-first with vectorised evaluation of `f`."""
    if b <= a:
        return 0.0
    x = np.linspace(a, b, 2 * n0 + 1)
    fx = np.asarray(f(x), dtype=float)
    lo, mid, hi = x[0:-1:2], x[1::2], x[2::2]
    flo, fmid, fhi = fx[0:-1:2], fx[1::2], fx[2::2]
    whole = (hi - lo) / 6 * (flo + 4 * fmid + fhi)
    tols = np.full(lo.size, tol / n0)
    total = 0.0
    level = 0
    while lo.size:
        lm, rm = (lo + mid) / 2, (mid + hi) / 2
        vals = np.asarray(f(np.concatenate([lm, rm])), dtype=float)
        flm, frm = vals[: lm.size], vals[lm.size:]
        left = (mid - lo) / 6 * (flo + 4 * flm + fmid)
        right = (hi - mid) / 6 * (fmid + 4 * frm + fhi)
        err = left + right - whole
        done = (np.abs(err) <= 15 * tols) | (level >= max_level)
        total += float(np.sum((left + right + err / 15)[done]))
        keep = ~done
        lo, mid, hi = (np.concatenate([lo[keep], mid[keep]]), np.concatenate([lm[keep], rm[keep]]),
                       np.concatenate([mid[keep], hi[keep]]))
        flo, fmid, fhi = (np.concatenate([flo[keep], fmid[keep]]), np.concatenate([flm[keep], frm[keep]]),
                          np.concatenate([fmid[keep], fhi[keep]]))
        whole = np.concatenate([left[keep], right[keep]])
        tols = np.concatenate([tols[keep], tols[keep]]) / 2
        level += 1
    return total


# ---------------------------------------------------------------------------
# right-hand side
# ---------------------------------------------------------------------------

def _phi_evaluator(curve, omega_max: float):
    """Callable w -> phi(w); exact from atoms when available, else spline on the grid."""
    if isinstance(curve, SpectralMeasure):
        return curve.characteristic
    if isinstance(curve, CharacteristicCurve) and curve.measure is not None:
        return curve.measure.characteristic
    om = np.asarray(curve.omega, dtype=float)
    if om.size < 4 or om.max() < omega_max * (1 - 1e-12) or om.min() > omega_max / 100:
        raise InvalidParameterError(f"curve grid [{om.min():.3g}, {om.max():.3g}] does not cover (0, {omega_max:.3g}]")
    vals = np.asarray(curve.values)
    if om[0] > 0:
        om = np.concatenate([[0.0], om])
        vals = np.concatenate([[1.0 + 0j], vals])
    re, im = CubicSpline(om, vals.real), CubicSpline(om, vals.imag)
    return lambda w: re(w) + 1j * im(w)


def esseen_integrand(phi_fn, omega):
    omega = np.asarray(omega, dtype=float)
    safe = np.where(omega == 0, 1.0, omega)
    val = np.abs(phi_fn(omega) - np.exp(-omega ** 2 / 2)) / safe
    return np.where(omega == 0, 0.0, val)


def esseen_integral(curve, omega_max: float, tol: float = 1e-10) -> float:
    """(2/pi) int_0^Omega |phi(w) - exp(-w^2/2)| / w dw."""
    if not omega_max > 0:
        raise InvalidParameterError("Omega must be positive")
    fn = _phi_evaluator(curve, omega_max)
    return 2 / math.pi * adaptive_simpson(lambda w: esseen_integrand(fn, w), 0.0, float(omega_max), tol)


def esseen_rhs(curve, omega_max: float, C: float = DEFAULT_C, tol: float = 1e-10) -> float:
    """C / Omega + (2/pi) int_0^Omega |phi - exp(-w^2/2)| / w dw."""
    if not C > 0:
        raise InvalidParameterError("the Esseen constant must be positive")
    return C / omega_max + esseen_integral(curve, omega_max, tol)


@dataclass
class EsseenReport:
    delta: float
    C: float
    omegas: list
    rhs: list
    integrals: list = field(repr=False)

    @property
    def min_rhs(self) -> float:
        return min(self.rhs)

    @property
    def holds(self) -> bool:
        return all(self.delta <= r for r in self.rhs)

    @property
    def empirical_C(self) -> float:
        """Smallest C for which delta <= rhs holds at every Omega of the sweep."""
        return max(max(0.0, om * (self.delta - i)) for om, i in zip(self.omegas, self.integrals))

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "omega_sweep": [{"omega": o, "rhs": r} for o, r in zip(self.omegas, self.rhs)],
            "min_rhs": self.min_rhs,
            "holds": self.holds,
            "C": self.C,
            "empirical_C": self.empirical_C,
        }


def verify_esseen(measure: SpectralMeasure, omegas, C: float = DEFAULT_C, tol: float = 1e-10) -> EsseenReport:
    std = measure if hasattr(measure, "sigma") else standardize(measure)
    delta = kolmogorov_distance(std)
    omegas = [float(o) for o in omegas]
    if not omegas or any(o <= 0 for o in omegas):
        raise InvalidParameterError("Omega sweep must be non-empty and positive")
    ints = [esseen_integral(std, o, tol) for o in omegas]
    return EsseenReport(delta, float(C), omegas, [C / o + i for o, i in zip(omegas, ints)], ints)
