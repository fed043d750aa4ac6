"""Hot loops: Hermitian Jacobi eigensolver, tridiagonal QL, and gate application.

Each kernel exists twice.  The ``*_numba`` variant is a scalar-loop routine
compiled by numba; the ``*_numpy`` variant does the same arithmetic with
vectorized numpy and is what runs when ``ENTROQ_DISABLE_NUMBA`` is set.  The
undecorated public names dispatch on :data:`entroq._accel.NUMBA_ENABLED`.
Both variants are always importable so tests and the benchmark can compare
them side by side.
"""
from __future__ import annotations

from functools import lru_cache
import math

import numpy as np

from ._accel import NUMBA_ENABLED, njit

_JACOBI_MAX_SWEEPS = 100
_QL_MAX_ITER = 60


# Hermitian Jacobi
#
# One rotation zeroes a_pq = r e^{i phi}.  It is G = D R with D = diag(.., e^{-i phi} at q)
# making the pair real, and R the classical real Jacobi rotation:
#   G_pp = c, G_pq = s, G_qp = -s e^{-i phi}, G_qq = c e^{-i phi}.
# A <- G^dagger A G, V <- V G.


def _jacobi_loops(a, tol):
    n = a.shape[0]
    v = np.eye(n, dtype=np.complex128)
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = 0.0
        scale = 0.0
        for p in range(n):
            scale += abs(a[p, p]) ** 2
            for q in range(p + 1, n):
                off += abs(a[p, q]) ** 2
        if off <= tol * tol * max(scale + 2.0 * off, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r < 1e-300:
                    continue
                ph = apq / r
                phc = ph.conjugate()
                app = a[p, p].real
                aqq = a[q, q].real
                tau = (aqq - app) / (2.0 * r)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                gqp = -s * phc
                gqq = c * phc
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp + gqp * akq
                    a[k, q] = s * akp + gqq * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * ph * aqk
                    a[q, k] = s * apk + c * ph * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = app - t * r
                a[q, q] = aqq + t * r
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp + gqp * vkq
                    v[k, q] = s * vkp + gqq * vkq
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i].real
    return w, v


_jacobi_jit = njit(_jacobi_loops)


def _sort_desc(w, v):
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def jacobi_eigh_numba(m: np.ndarray, tol: float = 1e-15):
    a = np.array(m, dtype=np.complex128, copy=True)
    w, v = _jacobi_jit(a, tol)
    return _sort_desc(w, v)


def jacobi_eigh_numpy(m: np.ndarray, tol: float = 1e-15):
    a = np.array(m, dtype=np.complex128, copy=True)
    n = a.shape[0]
    v = np.eye(n, dtype=np.complex128)
    iu = np.triu_indices(n, 1)
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = float(np.sum(np.abs(a[iu]) ** 2))
        scale = float(np.sum(np.abs(np.diag(a)) ** 2))
        if off <= tol * tol * max(scale + 2.0 * off, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r < 1e-300:
                    continue
                ph = apq / r
                phc = ph.conjugate()
                app = a[p, p].real
                aqq = a[q, q].real
                tau = (aqq - app) / (2.0 * r)
                t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                cp, cq = a[:, p].copy(), a[:, q]
                a[:, p] = c * cp - s * phc * cq
                a[:, q] = s * cp + c * phc * cq
                rp, rq = a[p, :].copy(), a[q, :]
                a[p, :] = c * rp - s * ph * rq
                a[q, :] = s * rp + c * ph * rq
                a[p, q] = a[q, p] = 0.0
                a[p, p] = app - t * r
                a[q, q] = aqq + t * r
                vp, vq = v[:, p].copy(), v[:, q]
                v[:, p] = c * vp - s * phc * vq
                v[:, q] = s * vp + c * phc * vq
    return _sort_desc(np.diag(a).real.copy(), v)


# Symmetric tridiagonal QL with implicit shifts (tql2 lineage).


def _tql_loops(d, e, z):
    n = d.shape[0]
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= 2.220446049250313e-16 * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > _QL_MAX_ITER:
                raise RuntimeError("tridiagonal QL did not converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                for k in range(n):
                    f = z[k, i + 1]
                    z[k, i + 1] = s * z[k, i] + c * f
                    z[k, i] = c * z[k, i] - s * f
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, z


_tql_jit = njit(_tql_loops)


def _tql_prepare(diag, offdiag):
    d = np.array(diag, dtype=np.float64, copy=True)
    n = d.shape[0]
    e = np.zeros(n)
    e[: n - 1] = offdiag
    return d, e, np.eye(n)


def _tql_finish(d, z):
    order = np.argsort(d, kind="stable")
    return d[order], z[:, order]


def tridiag_eigh_numba(diag, offdiag):
    return _tql_finish(*_tql_jit(*_tql_prepare(diag, offdiag)))


def tridiag_eigh_numpy(diag, offdiag):
    # Scalar loops on plain arrays; node counts stay small (m <= 64).
    return _tql_finish(*_tql_loops(*_tql_prepare(diag, offdiag)))


# Gate application.
#
# A compiled gate list is (mats[B, G, 2, 2], targets[G], partners[G], ctrls[G]).
# partners[g] >= 0 marks a SWAP between targets[g] and partners[g] (mats unused).
# ctrls[g] is a bitmask of control qubits that must all be 1.
# Little-endian: qubit k is bit k of the row index.


def _apply_loops(states, mats, targets, partners, ctrls):
    nb = states.shape[0]
    dim = states.shape[1]
    ncol = states.shape[2]
    ng = targets.shape[0]
    for b in range(nb):
        for g in range(ng):
            tq = targets[g]
            bit = 1 << tq
            cm = ctrls[g]
            if partners[g] >= 0:
                bit2 = 1 << partners[g]
                for i in range(dim):
                    if (i & bit) == 0 and (i & bit2) != 0 and (i & cm) == cm:
                        j = (i | bit) & ~bit2
                        for c in range(ncol):
                            tmp = states[b, i, c]
                            states[b, i, c] = states[b, j, c]
                            states[b, j, c] = tmp
                continue
            m00 = mats[b, g, 0, 0]
            m01 = mats[b, g, 0, 1]
            m10 = mats[b, g, 1, 0]
            m11 = mats[b, g, 1, 1]
            for i in range(dim):
                if (i & bit) == 0 and (i & cm) == cm:
                    j = i | bit
                    for c in range(ncol):
                        x0 = states[b, i, c]
                        x1 = states[b, j, c]
                        states[b, i, c] = m00 * x0 + m01 * x1
                        states[b, j, c] = m10 * x0 + m11 * x1
    return states


_apply_jit = njit(_apply_loops)


@lru_cache(maxsize=4096)
def _pair_indices(dim: int, target: int, partner: int, ctrl: int):
    idx = np.arange(dim)
    bit = 1 << target
    sel = ((idx & bit) == 0) & ((idx & ctrl) == ctrl)
    if partner >= 0:
        bit2 = 1 << partner
        sel &= (idx & bit2) != 0
        lo = idx[sel]
        return lo, (lo | bit) & ~bit2
    lo = idx[sel]
    return lo, lo | bit


def apply_gates_numba(states, mats, targets, partners, ctrls):
    return _apply_jit(states, mats, targets, partners, ctrls)


def apply_gates_numpy(states, mats, targets, partners, ctrls):
    dim = states.shape[1]
    for g in range(targets.shape[0]):
        lo, hi = _pair_indices(dim, int(targets[g]), int(partners[g]), int(ctrls[g]))
        x0 = states[:, lo, :].copy()
        x1 = states[:, hi, :]
        if partners[g] >= 0:
            states[:, lo, :] = x1
            states[:, hi, :] = x0
            continue
        m = mats[:, g]
        states[:, lo, :] = m[:, 0, 0, None, None] * x0 + m[:, 0, 1, None, None] * x1
        states[:, hi, :] = m[:, 1, 0, None, None] * x0 + m[:, 1, 1, None, None] * x1
    return states


if NUMBA_ENABLED:
    jacobi_eigh = jacobi_eigh_numba
    tridiag_eigh = tridiag_eigh_numba
    apply_gates = apply_gates_numba
else:
    jacobi_eigh = jacobi_eigh_numpy
    tridiag_eigh = tridiag_eigh_numpy
    apply_gates = apply_gates_numpy
