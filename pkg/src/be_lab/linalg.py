"""Dense Hermitian eigensolvers and the matrix exponential.

Two in-repo eigensolvers:

* Householder reduction to real symmetric tridiagonal form followed by
  implicit-shift QL (the default for dimensions up to ``inrepo_max()``);
* cyclic Jacobi, slower but independent, used to cross-check the first.

Above ``inrepo_max()`` the dispatcher hands the work to LAPACK through
``numpy.linalg.eigh``; the in-repo routines are pure Python/numba and their
O(n^3) Householder sweep is not blocked.
"""

from __future__ import annotations

import math
import os

import numpy as np
from numba import njit

from .errors import InvalidParameterError

HERMITIAN_RTOL = 1e-12
DEFAULT_INREPO_MAX = 512


def inrepo_max() -> int:
    raw = os.environ.get("BE_LAB_INREPO_EIG_MAX")
    return int(raw) if raw else DEFAULT_INREPO_MAX


def check_hermitian(a: np.ndarray, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidParameterError(f"expected a square matrix, got shape {a.shape}")
    scale = np.abs(a).max(initial=0.0)
    if np.abs(a - a.conj().T).max(initial=0.0) > rtol * max(scale, 1e-300) and scale > 0:
        raise InvalidParameterError("matrix is not Hermitian within tolerance")
    h = (a + a.conj().T) / 2
    if np.iscomplexobj(h) and not np.any(h.imag):
        h = h.real
    return h


# ---------------------------------------------------------------------------
# Householder tridiagonalisation
# ---------------------------------------------------------------------------

@njit(cache=True)
def _householder(a, q, want_q):
    """Reduce Hermitian `a` (complex, in place) to tridiagonal form; accumulate into `q`."""
    n = a.shape[0]
    for k in range(n - 2):
        m = n - k - 1
        v = a[k + 1:, k].copy()
        xnorm = 0.0
        for i in range(m):
            xnorm += v[i].real ** 2 + v[i].imag ** 2
        xnorm = math.sqrt(xnorm)
        if xnorm == 0.0:
            continue
        x0 = v[0]
        phase = x0 / abs(x0) if x0 != 0 else 1.0 + 0j
        alpha = -phase * xnorm
        v[0] -= alpha
        vnorm = 0.0
        for i in range(m):
            vnorm += v[i].real ** 2 + v[i].imag ** 2
        vnorm = math.sqrt(vnorm)
        if vnorm == 0.0:
            continue
        v /= vnorm
        # p = sub v, w = p - (v^dagger p) v, sub -= 2 v w^dagger + 2 w v^dagger
        p = np.zeros(m, dtype=np.complex128)
        for i in range(m):
            acc = 0j
            for jj in range(m):
                acc += a[k + 1 + i, k + 1 + jj] * v[jj]
            p[i] = acc
        kk = 0j
        for i in range(m):
            kk += v[i].conjugate() * p[i]
        w = p - kk * v
        for i in range(m):
            vi, wi = v[i], w[i]
            for jj in range(m):
                a[k + 1 + i, k + 1 + jj] -= 2 * (vi * w[jj].conjugate() + wi * v[jj].conjugate())
        a[k + 1, k] = alpha
        a[k, k + 1] = alpha.conjugate()
        for i in range(k + 2, n):
            a[i, k] = 0
            a[k, i] = 0
        if want_q:
            for r in range(n):
                acc = 0j
                for jj in range(m):
                    acc += q[r, k + 1 + jj] * v[jj]
                for jj in range(m):
                    q[r, k + 1 + jj] -= 2 * acc * v[jj].conjugate()


def tridiagonalize(a: np.ndarray, want_q: bool = True):
    """Return (diag, offdiag, Q) with a = Q T Q^dagger and T real symmetric tridiagonal.

    offdiag[k] couples k and k+1; Q absorbs the phases that make T real.
    """
    real_input = not np.iscomplexobj(a)
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    q = np.eye(n, dtype=complex) if want_q else np.zeros((1, 1), dtype=complex)
    _householder(a, q, want_q)
    if want_q and real_input and not np.any(q.imag):
        q = q.real
    elif not want_q:
        q = None
    diag = np.real(np.diag(a)).copy()
    off = np.array([a[k + 1, k] for k in range(n - 1)])
    if real_input:
        off = off.real
    # phase rescaling T' = P^dagger T P with real non-negative off-diagonal
    phases = np.ones(n, dtype=complex)
    for k in range(n - 1):
        mag = abs(off[k])
        phases[k + 1] = phases[k] * (off[k] / mag if mag > 0 else 1.0)
    e = np.abs(off).astype(float)
    if want_q:
        if np.iscomplexobj(q) or np.iscomplexobj(off):
            q = q * phases[None, :]
        else:
            q = q * phases.real[None, :]
    return diag, e, q


@njit(cache=True)
def _tql(d, e, zt, want_vectors):
    """Implicit-shift QL on a symmetric tridiagonal matrix (in place).

    d: diagonal (n), e: off-diagonal padded to n with e[n-1] = 0,
    zt: rotations are accumulated into rows of zt (zt = Z^T).
    """
    n = d.shape[0]
    eps = 2.220446049250313e-16
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > 100:
                return -1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if want_vectors:
                    for k in range(zt.shape[1]):
                        f = zt[i + 1, k]
                        zt[i + 1, k] = s * zt[i, k] + c * f
                        zt[i, k] = c * zt[i, k] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return 0


def tridiagonal_eigh(diag, off, want_vectors: bool = True):
    n = len(diag)
    d = np.array(diag, dtype=float)
    e = np.zeros(n)
    e[: n - 1] = off
    zt = np.eye(n) if want_vectors else np.zeros((1, 1))
    if n > 1 and _tql(d, e, zt, want_vectors) != 0:
        raise ArithmeticError("QL iteration failed to converge")
    order = np.argsort(d, kind="stable")
    return d[order], (zt[order].T if want_vectors else None)


def eigh_householder_ql(a: np.ndarray, vectors: bool = True):
    h = check_hermitian(a)
    if h.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0))
    diag, off, q = tridiagonalize(h, want_q=vectors)
    w, z = tridiagonal_eigh(diag, off, vectors)
    if not vectors:
        return w, None
    return w, q @ z


def eigh_jacobi(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60):
    """Cyclic complex Jacobi; returns ascending eigenvalues and eigenvectors."""
    h = np.array(check_hermitian(a), dtype=complex)
    n = h.shape[0]
    v = np.eye(n, dtype=complex)
    scale = max(np.linalg.norm(h), 1e-300)
    for _ in range(max_sweeps):
        off = np.linalg.norm(h - np.diag(np.diag(h)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = h[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                app, aqq = h[p, p].real, h[q, q].real
                theta = 0.5 * math.atan2(2 * mag, aqq - app)
                c, s = math.cos(theta), math.sin(theta)
                # U acts on columns p, q: [[c, s], [-s conj(phase), c conj(phase)]]
                u = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                cols = h[:, [p, q]] @ u
                h[:, p], h[:, q] = cols[:, 0], cols[:, 1]
                rows = u.conj().T @ h[[p, q], :]
                h[p, :], h[q, :] = rows[0], rows[1]
                h[p, q] = h[q, p] = 0.0
                vc = v[:, [p, q]] @ u
                v[:, p], v[:, q] = vc[:, 0], vc[:, 1]
    w = np.real(np.diag(h))
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigh(a: np.ndarray, method: str = "auto"):
    """Ascending eigenvalues and orthonormal eigenvectors of a Hermitian matrix."""
    a = check_hermitian(a)
    if method == "auto":
        method = "householder_ql" if a.shape[0] <= inrepo_max() else "lapack"
    if method == "householder_ql":
        return eigh_householder_ql(a, True)
    if method == "jacobi":
        return eigh_jacobi(a)
    if method == "lapack":
        return np.linalg.eigh(a)
    raise InvalidParameterError(f"unknown eigensolver {method!r}")


def eigvalsh(a: np.ndarray, method: str = "auto") -> np.ndarray:
    a = check_hermitian(a)
    if method == "auto":
        method = "householder_ql" if a.shape[0] <= inrepo_max() else "lapack"
    if method == "householder_ql":
        return eigh_householder_ql(a, False)[0]
    if method == "jacobi":
        return eigh_jacobi(a)[0]
    if method == "lapack":
        return np.linalg.eigvalsh(a)
    raise InvalidParameterError(f"unknown eigensolver {method!r}")


# ---------------------------------------------------------------------------
# matrix exponential
# ---------------------------------------------------------------------------

def _taylor_order(theta: float, tol: float) -> int:
    term, m = 1.0, 0
    while True:
        m += 1
        term *= theta / m
        # remainder after degree m is bounded by the next term times 1/(1 - theta/(m+2))
        nxt = term * theta / (m + 1)
        if nxt / (1 - theta / (m + 2)) <= tol or m >= 40:
            return m


def expm(a: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """exp(a) by scaling and squaring with a truncated Taylor series.

    The scaled matrix has 1-norm <= 1/2 and the Taylor degree is chosen so the
    per-step truncation error times 2^s stays below `tol`.
    """
    a = np.asarray(a)
    n = a.shape[0]
    if n == 0:
        return a.copy()
    norm = float(np.abs(a).sum(axis=0).max())
    s = 0 if norm <= 0.5 else int(math.ceil(math.log2(norm / 0.5)))
    b = a / 2.0 ** s
    theta = norm / 2.0 ** s
    m = _taylor_order(theta, max(tol / 2.0 ** s, 1e-18))
    eye = np.eye(n, dtype=b.dtype)
    out = eye.copy()
    for k in range(m, 0, -1):  # Horner: I + b/1 (I + b/2 (I + ...))
        out = eye + (b @ out) / k
    for _ in range(s):
        out = out @ out
    return out
