"""Four-type density evolution for LM2 verification decoding.

A message is erased (E), incorrect (I), correct but unverified (C) or
verified (V); a distribution over these is stored as ``(w, x, y, z)``.

The single-node updates here evaluate the products literally, one output
edge at a time.  They are the reference against which the iteration kernels
in :mod:`sccs.kernels.de` are tested; :func:`run_de` uses the kernels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from ._backend import resolve_backend
from .ensemble import Protograph
from .kernels import de as _k

VERIFIED = (0.0, 0.0, 0.0, 1.0)

STATUS_NAMES = {_k.SUCCESS: "success", _k.STALLED: "stalled", _k.MAX_ITER: "max_iterations"}


@dataclass(frozen=True)
class MessageDist:
    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        vals = self.as_array()
        if np.any(vals < -1e-12) or np.any(vals > 1 + 1e-12):
            raise ValueError(f"components must lie in [0, 1]: {tuple(vals)}")
        if abs(vals.sum() - 1.0) > 1e-12:
            raise ValueError(f"components must sum to 1, got {vals.sum()!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=float)

    def __array__(self, dtype=None, copy=None):
        a = self.as_array()
        return a if dtype is None else a.astype(dtype)

    @classmethod
    def from_array(cls, a) -> "MessageDist":
        w, x, y, z = (float(t) for t in a)
        return cls(w, x, y, z)


@dataclass(frozen=True)
class ChannelParams:
    """``epsilon``: probability a symbol is nonzero; ``p``: erasure probability."""

    epsilon: float
    p: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0 or self.p < 0 or self.epsilon + self.p > 1 + 1e-15:
            raise ValueError(f"invalid channel: epsilon={self.epsilon}, p={self.p}")


@dataclass(frozen=True)
class StopRule:
    max_iterations: int = 200_000
    halt_threshold: float = 1e-9
    stall_tolerance: float = 1e-12

    def to_dict(self) -> dict:
        return {"max_iterations": self.max_iterations,
                "halt_threshold": self.halt_threshold,
                "stall_tolerance": self.stall_tolerance}


@dataclass(frozen=True)
class RegularEnsemble:
    """Uncoupled ``(l, r)`` ensemble, iterated with the closed-form updates."""

    l: int
    r: int

    def __post_init__(self):
        if self.l < 2 or self.r < 2:
            raise ValueError(f"degrees must be at least 2, got ({self.l}, {self.r})")

    @property
    def label(self) -> str:
        return f"({self.l},{self.r})"

    L = None


Ensemble = Union[Protograph, RegularEnsemble]


def _as_inputs(inputs) -> np.ndarray:
    a = np.array([np.asarray(m, dtype=float) for m in inputs], dtype=float)
    return a.reshape(-1, 4)


def de_init(ch: ChannelParams) -> MessageDist:
    """Initial variable-to-check distribution: every symbol is guessed to be 0."""
    return MessageDist(ch.p, ch.epsilon, 1.0 - ch.epsilon - ch.p, 0.0)


def check_update(inputs: Sequence) -> np.ndarray:
    """Outgoing distributions of a check node, one row per edge.

    ``inputs`` is a sequence of ``d`` distributions (``MessageDist`` or
    length-4 arrays).  Row ``i`` of the result depends only on inputs ``j != i``.
    """
    m = _as_inputs(inputs)
    d = len(m)
    if d == 0:
        raise ValueError("check node needs at least one edge")
    out = np.empty((d, 4))
    for i in range(d):
        o = np.delete(m, i, axis=0)
        w, x, y, z = o.T
        not_erased = np.prod(1.0 - w)
        all_correct = np.prod(1.0 - w - x)
        all_cv = np.prod(y + z)
        all_v = np.prod(z)
        out[i] = (1.0 - not_erased, not_erased - all_correct, all_cv - all_v, all_v)
    return out


def _event_a(others: np.ndarray) -> tuple[float, float]:
    """Probabilities that all inputs are E/I, and that exactly one is C and the rest E/I."""
    s = others[:, 0] + others[:, 1]
    y = others[:, 2]
    P = float(np.prod(s))
    Q = 0.0
    for k in range(len(others)):
        Q += y[k] * np.prod(np.delete(s, k))
    return P, float(Q)


def var_update(inputs: Sequence, ch: ChannelParams) -> np.ndarray:
    """Outgoing distributions of a variable node, one row per edge."""
    m = _as_inputs(inputs)
    d = len(m)
    if d == 0:
        raise ValueError("variable node needs at least one edge")
    eps, p = ch.epsilon, ch.p
    q = 1.0 - eps - p
    out = np.empty((d, 4))
    for i in range(d):
        P, Q = _event_a(np.delete(m, i, axis=0))
        A = P + Q
        out[i] = (p * A, eps * A, q * P, q * Q + (1.0 - A))
    return out


def regular_check_update(m, r: int) -> np.ndarray:
    """Check update of the ``(l, r)``-regular ensemble (all inputs equal to ``m``)."""
    if r < 2:
        raise ValueError(f"r must be at least 2, got {r}")
    w, x, y, z = np.asarray(m, dtype=float)
    e = r - 1
    return np.array([
        1.0 - (1.0 - w) ** e,
        (1.0 - w) ** e - (1.0 - w - x) ** e,
        (y + z) ** e - z ** e,
        z ** e,
    ])


def regular_var_update(m, l: int, ch: ChannelParams) -> np.ndarray:
    """Variable update of the ``(l, r)``-regular ensemble; ``0**0`` is 1."""
    if l < 2:
        raise ValueError(f"l must be at least 2, got {l}")
    w, x, y, z = np.asarray(m, dtype=float)
    eps, p = ch.epsilon, ch.p
    s = w + x
    P = s ** (l - 1)
    Q = (l - 1) * y * s ** (l - 2)
    A = P + Q
    q = 1.0 - eps - p
    return np.array([p * A, eps * A, q * P, q * Q + (1.0 - A)])


def node_event_prob(incoming: Sequence) -> float:
    """Probability that all ``d`` inputs are E/I except at most one C."""
    P, Q = _event_a(_as_inputs(incoming))
    return P + Q


def node_unverified_prob(incoming: Sequence, ch: ChannelParams) -> float:
    """Probability that a variable node ends unverified with a wrong estimate.

    This is ``(epsilon + p)`` times :func:`node_event_prob`: a symbol whose
    value is 0 and known to the channel is never in error.
    """
    return (ch.epsilon + ch.p) * node_event_prob(incoming)


# --- fixed-point iteration ---------------------------------------------------

@dataclass(frozen=True)
class _Graph:
    cptr: np.ndarray
    cidx: np.ndarray
    vptr: np.ndarray
    vidx: np.ndarray
    cpad: np.ndarray
    vpad: np.ndarray


_graph_cache: dict[int, tuple[Protograph, _Graph]] = {}


def _csr(node_of_edge: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.argsort(node_of_edge, kind="stable").astype(np.int64)
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(node_of_edge, minlength=n), out=ptr[1:])
    return ptr, idx


def _graph_of(g: Protograph) -> _Graph:
    hit = _graph_cache.get(id(g))
    if hit is not None and hit[0] is g:
        return hit[1]
    var_of, chk_of = g.edges[:, 0], g.edges[:, 1]
    cptr, cidx = _csr(chk_of, g.num_check_positions)
    vptr, vidx = _csr(var_of, g.num_var_positions)
    graph = _Graph(cptr, cidx, vptr, vidx,
                   _k.padded_neighbourhoods(chk_of, g.num_check_positions),
                   _k.padded_neighbourhoods(var_of, g.num_var_positions))
    if len(_graph_cache) > 64:
        _graph_cache.clear()
    _graph_cache[id(g)] = (g, graph)
    return graph


@dataclass
class DeFixedPoint:
    """Outcome of :func:`run_de`.

    ``status`` is ``"success"`` (average below the halt threshold),
    ``"stalled"`` (a nonzero fixed point) or ``"max_iterations"``.
    ``per_position_unverified`` is indexed by chain position (a single entry
    for uncoupled ensembles).
    """

    label: str
    channel: ChannelParams
    var_to_check: np.ndarray
    check_to_var: np.ndarray
    per_position_unverified: np.ndarray
    avg_unverified: float
    status: str
    iterations_used: int
    stop: StopRule = field(default_factory=StopRule)
    history: np.ndarray | None = None

    @property
    def converged(self) -> bool:
        return self.status != "max_iterations"

    @property
    def success(self) -> bool:
        return self.status == "success"

    def to_dict(self) -> dict:
        return {
            "ensemble": self.label,
            "epsilon": self.channel.epsilon,
            "p": self.channel.p,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "status": self.status,
            "avg_unverified": self.avg_unverified,
            "per_position_unverified": self.per_position_unverified.tolist(),
            "stop": self.stop.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def run_de(
    ensemble: Ensemble,
    ch: ChannelParams,
    stop: StopRule | None = None,
    *,
    backend: str | None = None,
    record_history: bool = False,
) -> DeFixedPoint:
    """Iterate density evolution from :func:`de_init` until a stop condition.

    Each iteration is one full check half-step followed by one variable
    half-step.  ``ensemble`` is either a :class:`Protograph` (edge-wise
    updates) or a :class:`RegularEnsemble` (closed forms).
    """
    stop = stop or StopRule()
    backend = resolve_backend(backend)
    m0 = de_init(ch).as_array()
    hist = np.zeros(stop.max_iterations if record_history else 0)
    args = (ch.epsilon, ch.p, int(stop.max_iterations),
            float(stop.halt_threshold), float(stop.stall_tolerance), hist)

    if isinstance(ensemble, RegularEnsemble):
        loop = _k.regular_loop_nb if backend == "numba" else _k.regular_loop_np
        v2c, c2v, h, it, status = loop(m0, ensemble.l, ensemble.r, *args)
        per_pos = np.array([h])
        v2c, c2v = v2c[None, :], c2v[None, :]
    else:
        g = ensemble
        gr = _graph_of(g)
        v2c = np.tile(m0, (g.num_edges, 1))
        if backend == "numba":
            c2v, node_h, it, status = _k.de_loop_nb(
                v2c, gr.cptr, gr.cidx, gr.vptr, gr.vidx, *args)
        else:
            c2v, node_h, it, status = _k.de_loop_np(v2c, gr.cpad, gr.vpad, *args)
        counts = np.bincount(g.var_position)
        per_pos = np.bincount(g.var_position, weights=node_h) / np.maximum(counts, 1)
        h = float(node_h.mean()) if len(node_h) else 0.0

    return DeFixedPoint(
        label=ensemble.label,
        channel=ch,
        var_to_check=v2c,
        check_to_var=c2v,
        per_position_unverified=per_pos,
        avg_unverified=float(h),
        status=STATUS_NAMES[int(status)],
        iterations_used=int(it),
        stop=stop,
        history=hist[: int(it)].copy() if record_history else None,
    )
