"""Instance-level LM2 reconstruction and its Monte-Carlo harness.

Signals carry exact integer values.  Drawing nonzero values from a range of
``2**(value_bits-1)`` makes accidental value agreements (the only source of
false verification) as unlikely as they would be with continuous values,
while keeping every comparison exact.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ._backend import resolve_backend
from .ensemble import MeasurementMatrixInstance, Protograph, lift_protograph
from .kernels import lm2 as _k

log = logging.getLogger(__name__)

HALT_REASONS = {_k.ALL_VERIFIED: "all_verified", _k.STALLED: "stalled",
                _k.MAX_ITERS: "max_iters"}

_MOD = 1 << 64


@dataclass(frozen=True, eq=False)
class SignalVector:
    values: np.ndarray
    support: np.ndarray
    value_bits: int = 63
    seed: int | None = None

    @property
    def N(self) -> int:
        return len(self.values)

    @property
    def K(self) -> int:
        return len(self.support)


def gen_sparse_signal(N: int, K: int | None = None, *, epsilon: float | None = None,
                      value_bits: int = 63, seed=None) -> SignalVector:
    """Exactly ``K``-sparse integer signal with a uniformly random support.

    Give either ``K`` or ``epsilon`` (then ``K = round(epsilon * N)``).
    Nonzero values are uniform on ``[-(2**(b-1) - 1), 2**(b-1) - 1] \\ {0}``.
    """
    if (K is None) == (epsilon is None):
        raise ValueError("give exactly one of K or epsilon")
    if K is None:
        K = int(round(epsilon * N))
    if not 0 <= K <= N:
        raise ValueError(f"need 0 <= K <= N, got K={K}, N={N}")
    if not 32 <= value_bits <= 64:
        raise ValueError(f"value_bits must be in [32, 64], got {value_bits}")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(N, size=K, replace=False)).astype(np.int64)
    mag = rng.integers(1, 2 ** (value_bits - 1) - 1, size=K, endpoint=True, dtype=np.int64)
    sign = rng.choice(np.array([-1, 1], dtype=np.int64), size=K)
    values = np.zeros(N, dtype=np.int64)
    values[support] = mag * sign
    return SignalVector(values, support, value_bits,
                        None if seed is None else int(seed))


def measure(m: MeasurementMatrixInstance, x) -> np.ndarray:
    """``Phi @ x`` as int64 residues modulo ``2**64`` (two's complement)."""
    xv = np.asarray(getattr(x, "values", x), dtype=np.int64)
    if len(xv) != m.N:
        raise ValueError(f"signal length {len(xv)} does not match N={m.N}")
    y = np.zeros(m.M, dtype=np.int64)
    with np.errstate(over="ignore"):
        np.add.at(y, m.rows, m.values * xv[m.cols])
    return y


def measure_exact(m: MeasurementMatrixInstance, x) -> list[int]:
    """Same product in unbounded Python integers."""
    xv = [int(t) for t in getattr(x, "values", x)]
    if len(xv) != m.N:
        raise ValueError(f"signal length {len(xv)} does not match N={m.N}")
    y = [0] * m.M
    for r, c, v in zip(m.rows.tolist(), m.cols.tolist(), m.values.tolist()):
        y[r] += v * xv[c]
    return y


def _to_int64(v: int) -> int:
    v %= _MOD
    return v - _MOD if v >= 1 << 63 else v


@dataclass(frozen=True, eq=False)
class _DecoderGraph:
    rptr: np.ndarray
    cptr: np.ndarray
    cidx: np.ndarray
    cpad: np.ndarray
    coef: np.ndarray
    inv: np.ndarray


def _inverse_mod_2_64(a: np.ndarray) -> np.ndarray:
    """Inverse of odd int64 values in Z/2^64 by Newton iteration."""
    a = a.view(np.uint64)
    x = a.copy()  # a*a = 1 mod 8, so x is correct to 3 bits
    for _ in range(5):  # 3 -> 6 -> 12 -> 24 -> 48 -> 96 bits
        x = x * (np.uint64(2) - a * x)
    return x.view(np.int64)


def _decoder_graph(m: MeasurementMatrixInstance) -> _DecoderGraph:
    rptr = np.zeros(m.M + 1, dtype=np.int64)
    np.cumsum(np.bincount(m.rows, minlength=m.M), out=rptr[1:])
    cidx = np.argsort(m.cols, kind="stable").astype(np.int64)
    cdeg = np.bincount(m.cols, minlength=m.N)
    cptr = np.zeros(m.N + 1, dtype=np.int64)
    np.cumsum(cdeg, out=cptr[1:])
    d = int(cdeg.max()) if m.N else 0
    cpad = np.full((m.N, d), -1, dtype=np.int64)
    slot = np.arange(m.nnz) - np.repeat(cptr[:-1], cdeg)
    cpad[m.cols[cidx], slot] = cidx
    coef = m.values.astype(np.int64)
    if np.any(coef % 2 == 0):
        raise ValueError("matrix entries must be odd to be invertible mod 2**64")
    inv = _inverse_mod_2_64(coef)
    return _DecoderGraph(rptr, cptr, cidx, cpad, coef, inv)


@dataclass
class DecodeResult:
    """Decoder output.

    ``estimates`` is 0 wherever ``verified`` is false.  ``verified_at`` holds
    the iteration at which each symbol was first verified (-1 if never).
    ``conflicts`` counts node decisions where the symbol rules disagreed,
    which can only happen after a false verification.
    """

    estimates: np.ndarray
    verified: np.ndarray
    verified_at: np.ndarray
    iterations_used: int
    halted_reason: str
    conflicts: int = 0

    @property
    def verified_set(self) -> np.ndarray:
        return np.flatnonzero(self.verified)

    def unverified_after(self, t: int) -> np.ndarray:
        """Mask of symbols still unverified after ``t`` iterations."""
        return (self.verified_at < 0) | (self.verified_at > t)


def lm2_decode(m: MeasurementMatrixInstance, y, max_iters: int = 1000,
               *, backend: str | None = None) -> DecodeResult:
    """Flooding LM2 verification decoding of ``y = Phi x``.

    ``y`` may hold Python integers of any size or int64 residues; only its
    value modulo ``2**64`` is used.
    """
    y = np.array([_to_int64(int(v)) for v in y], dtype=np.int64) \
        if not (isinstance(y, np.ndarray) and y.dtype == np.int64) else y
    if len(y) != m.M:
        raise ValueError(f"measurement length {len(y)} does not match M={m.M}")
    g = _decoder_graph(m)
    if resolve_backend(backend) == "numba":
        out = _k.lm2_decode_nb(g.rptr, g.cptr, g.cidx, g.coef, g.inv, y, int(max_iters))
    else:
        out = _k.lm2_decode_np(g.rptr, g.cpad, g.coef, g.inv, y, int(max_iters))
    est, ver, at, it, reason, conflicts = out
    if conflicts:
        log.debug("LM2 decoder met %d conflicting symbol decisions", conflicts)
    return DecodeResult(est, ver, at, int(it), HALT_REASONS[int(reason)], int(conflicts))


def audit_false_verification(r: DecodeResult, truth) -> int:
    """Number of symbols verified to a value different from the truth."""
    tv = np.asarray(getattr(truth, "values", truth), dtype=np.int64)
    if len(tv) != len(r.estimates):
        raise ValueError("result and truth lengths differ")
    return int(np.count_nonzero(r.verified & (r.estimates != tv)))


def recovered(r: DecodeResult, truth) -> np.ndarray:
    """Mask of symbols whose final estimate is verified-correct or a correct default 0."""
    tv = np.asarray(getattr(truth, "values", truth), dtype=np.int64)
    return r.estimates == tv


# --- Monte Carlo -------------------------------------------------------------

@dataclass
class TrialStats:
    """Aggregate over ``trials`` decodes at one sparsity.

    ``mean_unverified_fraction`` averages, over trials, the fraction of the
    ``N`` symbols left unverified with a wrong estimate (i.e. nonzero symbols
    the decoder did not recover).
    """

    l: int
    r: int
    L: int | None
    lift_size: int
    N: int
    K: int
    epsilon: float
    trials: int
    full_success_count: int
    mean_unverified_fraction: float
    false_verification_count: int
    conflict_count: int
    seed: int
    shared_instance: bool = False
    entry_rule: str = "continuous"

    @property
    def success_rate(self) -> float:
        return self.full_success_count / self.trials

    def to_row(self) -> dict:
        return {
            "l": self.l, "r": self.r, "L": "" if self.L is None else self.L,
            "lift_size": self.lift_size, "N": self.N, "K": self.K,
            "epsilon": self.epsilon, "trials": self.trials,
            "success_rate": self.success_rate,
            "mean_unverified": self.mean_unverified_fraction,
            "fv_count": self.false_verification_count, "seed": self.seed,
        }


TRIAL_CSV_FIELDS = ["l", "r", "L", "lift_size", "N", "K", "epsilon", "trials",
                    "success_rate", "mean_unverified", "fv_count", "seed"]


def trial_stats_csv(stats: list[TrialStats]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TRIAL_CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for s in stats:
        w.writerow(s.to_row())
    return buf.getvalue()


def _trial_seeds(seed: int, *key: int) -> int:
    state = np.random.SeedSequence(seed, spawn_key=key).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def _one_trial(args):
    g, lift_size, eps, gi, trial, max_iters, seed, shared, value_bits, entry_rule, backend = args
    inst_key = (0,) if shared else (1, trial)
    inst = lift_protograph(g, lift_size, seed=_trial_seeds(seed, *inst_key),
                           entry_rule=entry_rule)
    x = gen_sparse_signal(inst.N, epsilon=eps, value_bits=value_bits,
                          seed=_trial_seeds(seed, 2, gi, trial))
    res = lm2_decode(inst, measure(inst, x), max_iters, backend=backend)
    wrong = ~recovered(res, x)
    return (x.K, inst.N, bool(not wrong.any()), float(wrong.mean()),
            audit_false_verification(res, x), res.conflicts)


def monte_carlo(
    g: Protograph,
    lift_size: int,
    epsilon_grid,
    trials: int,
    max_iters: int = 1000,
    seed: int = 0,
    *,
    shared_instance: bool = False,
    value_bits: int = 63,
    entry_rule: str = "continuous",
    jobs: int = 1,
    backend: str | None = None,
) -> list[TrialStats]:
    """Decode ``trials`` random instances at each sparsity in ``epsilon_grid``.

    Instance ``t`` is drawn from ``(seed, t)`` and reused across the grid
    (or a single instance is used throughout with ``shared_instance``); the
    signal is drawn from ``(seed, grid index, t)``.  Results do not depend on
    ``jobs``.

    The default ``entry_rule`` is ``"continuous"``: with +-1 entries two
    checks on a 4-cycle can agree on a wrong value, so false verification
    is not negligible.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    grid = [float(e) for e in epsilon_grid]
    jobs_list = [(g, lift_size, eps, gi, t, max_iters, seed, shared_instance,
                  value_bits, entry_rule, backend)
                 for gi, eps in enumerate(grid) for t in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outs = list(ex.map(_one_trial, jobs_list, chunksize=max(1, trials // jobs)))
    else:
        outs = [_one_trial(a) for a in jobs_list]

    stats = []
    for gi, eps in enumerate(grid):
        chunk = outs[gi * trials:(gi + 1) * trials]
        fv = sum(o[4] for o in chunk)
        if fv:
            log.error("false verification: %d symbols at epsilon=%g", fv, eps)
        stats.append(TrialStats(
            l=g.l, r=g.r, L=g.L, lift_size=lift_size, N=chunk[0][1], K=chunk[0][0],
            epsilon=eps, trials=trials,
            full_success_count=sum(o[2] for o in chunk),
            mean_unverified_fraction=float(np.mean([o[3] for o in chunk])),
            false_verification_count=fv,
            conflict_count=sum(o[5] for o in chunk),
            seed=seed, shared_instance=shared_instance, entry_rule=entry_rule,
        ))
    return stats


def stats_dict(s: TrialStats) -> dict:
    d = asdict(s)
    d["success_rate"] = s.success_rate
    return d
