"""Independent reference computations used by the tests.

Nothing here shares code with the package: the DE oracles enumerate message
types and apply the verification rules directly, and the decoder oracle runs
on unbounded integers with exact rational division.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

E, I, C, V = range(4)


def _check_type(types):
    if E in types:
        return E
    if I in types:
        return I
    if C in types:
        return C
    return V


def _var_type(types, channel):
    """channel: 'erased', 'error' or 'correct'."""
    n_v = sum(t == V for t in types)
    n_c = sum(t == C for t in types)
    event_a = n_v == 0 and n_c <= 1
    if not event_a:
        return V
    if channel == "erased":
        return E
    if channel == "error":
        return I
    return C if n_c == 0 else V


def enumerate_check(others):
    """Output distribution of a check node given the other edges' distributions."""
    out = np.zeros(4)
    for combo in itertools.product(range(4), repeat=len(others)):
        pr = 1.0
        for m, t in zip(others, combo):
            pr *= m[t]
        if pr:
            out[_check_type(combo)] += pr
    return out


def enumerate_var(others, eps, p):
    out = np.zeros(4)
    chans = (("erased", p), ("error", eps), ("correct", 1.0 - eps - p))
    for combo in itertools.product(range(4), repeat=len(others)):
        pr = 1.0
        for m, t in zip(others, combo):
            pr *= m[t]
        if not pr:
            continue
        for ch, pc in chans:
            out[_var_type(combo, ch)] += pr * pc
    return out


def lm2_two_variable_step(a, b, l, r, eps):
    """One round of the regular LM2 recursion in its two-variable form.

    ``b`` is the probability that a message is incorrect and ``a`` that it
    is correct but unverified; everything else is verified.  Returns the
    check-to-variable pair and the following variable-to-check pair.
    """
    b_chk = 1.0 - (1.0 - b) ** (r - 1)
    a_chk = (1.0 - b) ** (r - 1) - (1.0 - a - b) ** (r - 1)
    stuck = b_chk ** (l - 1) + (l - 1) * a_chk * b_chk ** (l - 2)
    b_var = eps * stuck
    a_var = (1.0 - eps) * b_chk ** (l - 1)
    return (a_chk, b_chk), (a_var, b_var)


def reference_lm2_decode(M, N, entries, y, max_iters):
    """Plain LM2 message passing on exact integers.

    ``entries`` is a list of ``(row, col, value)``; ``y`` holds Python ints.
    Returns ``(estimates, verified, iterations)`` with the same halting rule
    as the package decoder (stop when no new verified message appears).
    """
    edges = list(entries)
    by_row = [[] for _ in range(M)]
    by_col = [[] for _ in range(N)]
    for e, (r, c, _) in enumerate(edges):
        by_row[r].append(e)
        by_col[c].append(e)
    v_msg = [(0, False)] * len(edges)
    est = [0] * N
    ver = [False] * N
    prev = 0
    it = 0
    while it < max_iters:
        it += 1
        c_msg = [None] * len(edges)
        for r in range(M):
            for e in by_row[r]:
                others = [f for f in by_row[r] if f != e]
                s = Fraction(y[r]) - sum(Fraction(edges[f][2]) * v_msg[f][0] for f in others)
                c_msg[e] = (s / edges[e][2], all(v_msg[f][1] for f in others))

        def rule(inputs):
            for val, vf in inputs:
                if vf:
                    return True, val
            for val, _ in inputs:
                if val == 0:
                    return True, 0
            for (v1, _), (v2, _) in itertools.combinations(inputs, 2):
                if v1 == v2:
                    return True, v1
            return False, 0

        new = [None] * len(edges)
        for c in range(N):
            for e in by_col[c]:
                ok, val = rule([c_msg[f] for f in by_col[c] if f != e])
                new[e] = (val if ok else 0, ok)
            if not ver[c]:
                ok, val = rule([c_msg[f] for f in by_col[c]])
                if ok:
                    ver[c], est[c] = True, val
        v_msg = new
        n_msgs = sum(vf for _, vf in v_msg)
        if all(ver):
            break
        if n_msgs == prev:
            break
        prev = n_msgs
    return est, ver, it
