"""Flooding density-evolution loops over a protograph.

Messages live in ``(E, 4)`` float arrays ordered ``(w, x, y, z)``.  Check and
variable neighbourhoods are given in CSR form (``ptr``, ``idx`` into edges).
Leave-one-out products use prefix/suffix sweeps, so no division is needed and
zero factors are handled exactly.

The variable side needs, for the ``j != i`` inputs,

    P = prod (w_j + x_j)        Q = sum_k y_k prod_{j != k} (w_j + x_j)

which are the constant and linear coefficients of ``prod (a_j + y_j t)``;
prefix/suffix pairs ``(P, Q)`` compose as ``(P1 P2, P1 Q2 + Q1 P2)``.

Status codes returned by the loops: 0 halted below threshold, 1 stalled,
2 hit the iteration cap.
"""

from __future__ import annotations

import numpy as np

from .._backend import njit

SUCCESS, STALLED, MAX_ITER = 0, 1, 2


# --- numba -------------------------------------------------------------------

@njit
def _check_phase_nb(v2c, c2v, cptr, cidx):
    nc = len(cptr) - 1
    dmax = 0
    for c in range(nc):
        dmax = max(dmax, cptr[c + 1] - cptr[c])
    pre = np.empty((dmax + 1, 4))
    suf = np.empty((dmax + 1, 4))
    for c in range(nc):
        a, b = cptr[c], cptr[c + 1]
        d = b - a
        pre[0, :] = 1.0
        for j in range(d):
            e = cidx[a + j]
            w, x, y, z = v2c[e, 0], v2c[e, 1], v2c[e, 2], v2c[e, 3]
            pre[j + 1, 0] = pre[j, 0] * (1.0 - w)
            pre[j + 1, 1] = pre[j, 1] * (1.0 - w - x)
            pre[j + 1, 2] = pre[j, 2] * (y + z)
            pre[j + 1, 3] = pre[j, 3] * z
        suf[d, :] = 1.0
        for j in range(d - 1, -1, -1):
            e = cidx[a + j]
            w, x, y, z = v2c[e, 0], v2c[e, 1], v2c[e, 2], v2c[e, 3]
            suf[j, 0] = suf[j + 1, 0] * (1.0 - w)
            suf[j, 1] = suf[j + 1, 1] * (1.0 - w - x)
            suf[j, 2] = suf[j + 1, 2] * (y + z)
            suf[j, 3] = suf[j + 1, 3] * z
        for j in range(d):
            e = cidx[a + j]
            p0 = pre[j, 0] * suf[j + 1, 0]
            p1 = pre[j, 1] * suf[j + 1, 1]
            p2 = pre[j, 2] * suf[j + 1, 2]
            p3 = pre[j, 3] * suf[j + 1, 3]
            c2v[e, 0] = 1.0 - p0
            c2v[e, 1] = p0 - p1
            c2v[e, 2] = p2 - p3
            c2v[e, 3] = p3


@njit
def _var_phase_nb(c2v, v2c, vptr, vidx, eps, p, node_h):
    """Variable update; also writes ``(eps + p) * A_node`` per variable node."""
    nv = len(vptr) - 1
    dmax = 0
    for v in range(nv):
        dmax = max(dmax, vptr[v + 1] - vptr[v])
    preP = np.empty(dmax + 1)
    preQ = np.empty(dmax + 1)
    sufP = np.empty(dmax + 1)
    sufQ = np.empty(dmax + 1)
    q = 1.0 - eps - p
    for v in range(nv):
        a, b = vptr[v], vptr[v + 1]
        d = b - a
        preP[0] = 1.0
        preQ[0] = 0.0
        for j in range(d):
            e = vidx[a + j]
            s = c2v[e, 0] + c2v[e, 1]
            y = c2v[e, 2]
            preQ[j + 1] = preQ[j] * s + preP[j] * y
            preP[j + 1] = preP[j] * s
        sufP[d] = 1.0
        sufQ[d] = 0.0
        for j in range(d - 1, -1, -1):
            e = vidx[a + j]
            s = c2v[e, 0] + c2v[e, 1]
            y = c2v[e, 2]
            sufQ[j] = sufQ[j + 1] * s + sufP[j + 1] * y
            sufP[j] = sufP[j + 1] * s
        node_h[v] = (eps + p) * (preP[d] + preQ[d])
        for j in range(d):
            e = vidx[a + j]
            P = preP[j] * sufP[j + 1]
            Q = preP[j] * sufQ[j + 1] + preQ[j] * sufP[j + 1]
            A = P + Q
            v2c[e, 0] = p * A
            v2c[e, 1] = eps * A
            v2c[e, 2] = q * P
            v2c[e, 3] = q * Q + (1.0 - A)


@njit
def de_loop_nb(v2c, cptr, cidx, vptr, vidx, eps, p, max_iter, halt, stall, history):
    """Run flooding iterations in place on ``v2c``.

    Returns ``(c2v, node_h, iterations, status)``; ``history`` (length
    ``max_iter`` or 0) receives the node-averaged unverified probability.
    """
    E = v2c.shape[0]
    nv = len(vptr) - 1
    c2v = np.zeros((E, 4))
    node_h = np.zeros(nv)
    prev = -1.0
    status = MAX_ITER
    it = 0
    keep = len(history) > 0
    while it < max_iter:
        _check_phase_nb(v2c, c2v, cptr, cidx)
        _var_phase_nb(c2v, v2c, vptr, vidx, eps, p, node_h)
        it += 1
        h = node_h.mean() if nv > 0 else 0.0
        if keep:
            history[it - 1] = h
        if h < halt:
            status = SUCCESS
            break
        if prev >= 0.0 and abs(h - prev) < stall:
            status = STALLED
            break
        prev = h
    return c2v, node_h, it, status


def regular_loop_np(m0, l, r, eps, p, max_iter, halt, stall, history):
    """Closed-form regular-ensemble iteration; returns ``(v2c, c2v, h, it, status)``."""
    w, x, y, z = m0[0], m0[1], m0[2], m0[3]
    cw = cx = cy = cz = 0.0
    q = 1.0 - eps - p
    prev = -1.0
    h = 0.0
    status = MAX_ITER
    it = 0
    keep = len(history) > 0
    while it < max_iter:
        cw = 1.0 - (1.0 - w) ** (r - 1)
        cx = (1.0 - w) ** (r - 1) - (1.0 - w - x) ** (r - 1)
        cy = (y + z) ** (r - 1) - z ** (r - 1)
        cz = z ** (r - 1)
        s = cw + cx
        P = s ** (l - 1)
        Q = (l - 1) * cy * s ** (l - 2)
        A = P + Q
        w, x, y, z = p * A, eps * A, q * P, q * Q + (1.0 - A)
        h = (eps + p) * (s ** l + l * cy * s ** (l - 1))
        it += 1
        if keep:
            history[it - 1] = h
        if h < halt:
            status = SUCCESS
            break
        if prev >= 0.0 and abs(h - prev) < stall:
            status = STALLED
            break
        prev = h
    v2c = np.array([w, x, y, z])
    c2v = np.array([cw, cx, cy, cz])
    return v2c, c2v, h, it, status


# --- numpy -------------------------------------------------------------------

def padded_neighbourhoods(node_of_edge: np.ndarray, n: int) -> np.ndarray:
    """``(n, dmax)`` edge indices per node, padded with ``-1``."""
    order = np.argsort(node_of_edge, kind="stable")
    counts = np.bincount(node_of_edge, minlength=n)
    dmax = int(counts.max()) if n else 0
    out = np.full((n, dmax), -1, dtype=np.int64)
    slot = np.arange(len(order)) - np.repeat(np.cumsum(counts) - counts, counts)
    out[node_of_edge[order], slot] = order
    return out


def _loo_prod(f: np.ndarray) -> np.ndarray:
    n, d = f.shape
    pre = np.ones((n, d + 1))
    suf = np.ones((n, d + 1))
    np.cumprod(f, axis=1, out=pre[:, 1:])
    np.cumprod(f[:, ::-1], axis=1, out=suf[:, -2::-1])
    return pre[:, :-1] * suf[:, 1:]


def de_loop_np(v2c, cpad, vpad, eps, p, max_iter, halt, stall, history):
    """Vectorised twin of :func:`de_loop_nb` working on padded neighbourhoods.

    Padding slots read a neutral message: verified ``(0, 0, 0, 1)`` on the
    check side and incorrect ``(0, 1, 0, 0)`` on the variable side.
    """
    E = v2c.shape[0]
    nv, dv = vpad.shape
    q = 1.0 - eps - p
    v_ext = np.zeros((E + 1, 4))
    v_ext[:E] = v2c
    v_ext[E] = (0.0, 0.0, 0.0, 1.0)
    c_ext = np.zeros((E + 1, 4))
    c_ext[E] = (0.0, 1.0, 0.0, 0.0)
    cmask = cpad >= 0
    vmask = vpad >= 0
    cgather = np.where(cmask, cpad, E)
    vgather = np.where(vmask, vpad, E)
    node_h = np.zeros(nv)
    prev = -1.0
    status = MAX_ITER
    it = 0
    while it < max_iter:
        g = v_ext[cgather]
        w, x, y, z = g[..., 0], g[..., 1], g[..., 2], g[..., 3]
        p0 = _loo_prod(1.0 - w)
        p1 = _loo_prod(1.0 - w - x)
        p2 = _loo_prod(y + z)
        p3 = _loo_prod(z)
        out = np.stack([1.0 - p0, p0 - p1, p2 - p3, p3], axis=-1)
        c_ext[cpad[cmask]] = out[cmask]

        g = c_ext[vgather]
        s = g[..., 0] + g[..., 1]
        yy = g[..., 2]
        preP = np.ones((nv, dv + 1))
        preQ = np.zeros((nv, dv + 1))
        sufP = np.ones((nv, dv + 1))
        sufQ = np.zeros((nv, dv + 1))
        for j in range(dv):
            preQ[:, j + 1] = preQ[:, j] * s[:, j] + preP[:, j] * yy[:, j]
            preP[:, j + 1] = preP[:, j] * s[:, j]
        for j in range(dv - 1, -1, -1):
            sufQ[:, j] = sufQ[:, j + 1] * s[:, j] + sufP[:, j + 1] * yy[:, j]
            sufP[:, j] = sufP[:, j + 1] * s[:, j]
        P = preP[:, :-1] * sufP[:, 1:]
        Q = preP[:, :-1] * sufQ[:, 1:] + preQ[:, :-1] * sufP[:, 1:]
        A = P + Q
        out = np.stack([p * A, eps * A, q * P, q * Q + (1.0 - A)], axis=-1)
        v_ext[vpad[vmask]] = out[vmask]
        node_h = (eps + p) * (preP[:, dv] + preQ[:, dv])

        it += 1
        h = float(node_h.mean()) if nv else 0.0
        if len(history):
            history[it - 1] = h
        if h < halt:
            status = SUCCESS
            break
        if prev >= 0.0 and abs(h - prev) < stall:
            status = STALLED
            break
        prev = h
    v2c[:] = v_ext[:E]
    return c_ext[:E].copy(), node_h, it, status


regular_loop_nb = njit(regular_loop_np)
