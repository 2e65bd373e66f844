"""Message-passing LM2 verification decoder on a sparse integer matrix.

All arithmetic is int64 with wrap-around, i.e. exact in Z/2**64.  Every
message the decoder could verify equals a true signal value, and those fit
in int64, so verified values come out exact.  Division by a matrix entry is
multiplication by its inverse mod 2**64 (entries are odd).

Edges are indexed in row-major order; ``rptr`` delimits rows and
``cptr``/``cidx`` give each column's edges.

Halt codes: 0 all symbols verified, 1 stalled (no new verified message),
2 iteration cap.
"""

from __future__ import annotations

import numpy as np

from .._backend import njit

ALL_VERIFIED, STALLED, MAX_ITERS = 0, 1, 2


@njit
def _symbol_rule(vals, vers, d, skip):
    """Apply the symbol rules to inputs ``0..d-1`` except position ``skip``.

    Returns ``(verified, value, conflict)``; ``conflict`` is set when two
    rules (or two matching pairs) would give different values.
    """
    found = False
    value = 0
    conflict = False
    # verified input
    for j in range(d):
        if j != skip and vers[j]:
            if not found:
                found = True
                value = vals[j]
            elif vals[j] != value:
                conflict = True
    # zero input
    for j in range(d):
        if j != skip and vals[j] == 0:
            if not found:
                found = True
                value = 0
            elif value != 0:
                conflict = True
            break
    # two matching inputs
    for j in range(d):
        vj = vals[j]
        if j == skip or vj == 0:
            continue
        for k in range(j + 1, d):
            if k != skip and vals[k] == vj:
                if not found:
                    found = True
                    value = vj
                elif vj != value:
                    conflict = True
    return found, value, conflict


@njit
def lm2_decode_nb(rptr, cptr, cidx, coef, inv, y, max_iters):
    E = len(coef)
    M = len(rptr) - 1
    N = len(cptr) - 1
    v_val = np.zeros(E, dtype=np.int64)
    v_ver = np.zeros(E, dtype=np.bool_)
    c_val = np.zeros(E, dtype=np.int64)
    c_ver = np.zeros(E, dtype=np.bool_)
    est = np.zeros(N, dtype=np.int64)
    ver = np.zeros(N, dtype=np.bool_)
    verified_at = np.full(N, -1, dtype=np.int64)
    dmax = 0
    for v in range(N):
        dmax = max(dmax, cptr[v + 1] - cptr[v])
    loc_val = np.zeros(dmax, dtype=np.int64)
    loc_ver = np.zeros(dmax, dtype=np.bool_)
    conflicts = 0
    prev_msgs = 0
    n_ver = 0
    reason = MAX_ITERS
    it = 0
    while it < max_iters:
        it += 1
        # check half-step
        for r in range(M):
            a, b = rptr[r], rptr[r + 1]
            s = y[r]
            unv = 0
            for e in range(a, b):
                s -= coef[e] * v_val[e]
                if not v_ver[e]:
                    unv += 1
            for e in range(a, b):
                c_val[e] = (s + coef[e] * v_val[e]) * inv[e]
                c_ver[e] = (unv - (0 if v_ver[e] else 1)) == 0
        # symbol half-step and node decisions
        msgs = 0
        for v in range(N):
            a, d = cptr[v], cptr[v + 1] - cptr[v]
            for j in range(d):
                loc_val[j] = c_val[cidx[a + j]]
                loc_ver[j] = c_ver[cidx[a + j]]
            for j in range(d):
                ok, val, _ = _symbol_rule(loc_val, loc_ver, d, j)
                e = cidx[a + j]
                v_ver[e] = ok
                v_val[e] = val if ok else 0
                if ok:
                    msgs += 1
            if not ver[v]:
                ok, val, bad = _symbol_rule(loc_val, loc_ver, d, -1)
                if bad:
                    conflicts += 1
                if ok:
                    ver[v] = True
                    est[v] = val
                    verified_at[v] = it
                    n_ver += 1
        if n_ver == N:
            reason = ALL_VERIFIED
            break
        if msgs == prev_msgs:
            reason = STALLED
            break
        prev_msgs = msgs
    return est, ver, verified_at, it, reason, conflicts


def _rule_vectorised(vals, vers, mask, skip):
    """Numpy form of the symbol rules on padded ``(N, d)`` inputs.

    ``skip`` is a column index to exclude, or ``-1`` for node-level decisions.
    """
    n, d = vals.shape
    use = mask.copy()
    if skip >= 0:
        use[:, skip] = False
    found = np.zeros(n, dtype=bool)
    value = np.zeros(n, dtype=np.int64)
    conflict = np.zeros(n, dtype=bool)

    def offer(cand_ok, cand_val):
        nonlocal found, value, conflict
        conflict |= found & cand_ok & (cand_val != value)
        take = cand_ok & ~found
        value = np.where(take, cand_val, value)
        found = found | cand_ok

    for j in range(d):
        offer(use[:, j] & vers[:, j], vals[:, j])
    zero = (use & (vals == 0)).any(axis=1)
    offer(zero, np.zeros(n, dtype=np.int64))
    for j in range(d):
        for k in range(j + 1, d):
            ok = use[:, j] & use[:, k] & (vals[:, j] == vals[:, k]) & (vals[:, j] != 0)
            offer(ok, vals[:, j])
    return found, value, conflict


def lm2_decode_np(rptr, cpad, coef, inv, y, max_iters):
    """Vectorised twin of :func:`lm2_decode_nb`; ``cpad`` is ``(N, d)`` padded with -1."""
    E = len(coef)
    N, d = cpad.shape
    row_of = np.repeat(np.arange(len(rptr) - 1), np.diff(rptr))
    mask = cpad >= 0
    gather = np.where(mask, cpad, 0)
    v_val = np.zeros(E, dtype=np.int64)
    v_ver = np.zeros(E, dtype=bool)
    est = np.zeros(N, dtype=np.int64)
    ver = np.zeros(N, dtype=bool)
    verified_at = np.full(N, -1, dtype=np.int64)
    conflicts = 0
    prev_msgs = 0
    reason = MAX_ITERS
    it = 0
    with np.errstate(over="ignore"):
        while it < max_iters:
            it += 1
            contrib = coef * v_val
            cs = np.concatenate([[0], np.cumsum(contrib)])
            s = y - (cs[rptr[1:]] - cs[rptr[:-1]])
            cu = np.concatenate([[0], np.cumsum(~v_ver)])
            unv = cu[rptr[1:]] - cu[rptr[:-1]]
            c_val = (s[row_of] + contrib) * inv
            c_ver = (unv[row_of] - (~v_ver)) == 0

            vals = c_val[gather]
            vers = c_ver[gather] & mask
            new_val = np.zeros(E, dtype=np.int64)
            new_ver = np.zeros(E, dtype=bool)
            for j in range(d):
                ok, val, _ = _rule_vectorised(vals, vers, mask, j)
                sel = mask[:, j]
                e = cpad[sel, j]
                new_ver[e] = ok[sel]
                new_val[e] = np.where(ok, val, 0)[sel]
            v_val, v_ver = new_val, new_ver

            ok, val, bad = _rule_vectorised(vals, vers, mask, -1)
            fresh = ok & ~ver
            conflicts += int((bad & ~ver).sum())
            est = np.where(fresh, val, est)
            verified_at = np.where(fresh, it, verified_at)
            ver = ver | ok

            msgs = int(v_ver.sum())
            if ver.all():
                reason = ALL_VERIFIED
                break
            if msgs == prev_msgs:
                reason = STALLED
                break
            prev_msgs = msgs
    return est, ver, verified_at, it, reason, conflicts
