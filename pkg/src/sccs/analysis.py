"""Threshold search, EXIT-like curves and (delta, rho) phase sweeps."""

from __future__ import annotations

import csv
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .density_evolution import (ChannelParams, Ensemble, RegularEnsemble, StopRule,
                                run_de)
from .ensemble import Protograph, design_sampling_ratio, make_coupled_protograph

log = logging.getLogger(__name__)


class ThresholdError(RuntimeError):
    pass


def default_stop(ensemble: Ensemble) -> StopRule:
    """Default stop rule; coupled chains get at least ``500 * L`` iterations."""
    L = getattr(ensemble, "L", None)
    base = StopRule()
    if L:
        return StopRule(max(base.max_iterations, 500 * L), base.halt_threshold,
                        base.stall_tolerance)
    return base


def _sampling_ratio(ensemble: Ensemble) -> Fraction:
    if isinstance(ensemble, RegularEnsemble):
        return Fraction(ensemble.l, ensemble.r)
    return design_sampling_ratio(ensemble)


@dataclass
class ThresholdResult:
    label: str
    l: int
    r: int
    L: int | None
    p: float
    epsilon_star: float
    bracket: tuple[float, float]
    bisection_steps: int
    resolution: float
    saturated: bool = False
    stop: StopRule = field(default_factory=StopRule)

    def to_dict(self) -> dict:
        return {"ensemble": self.label, "l": self.l, "r": self.r, "L": self.L,
                "p": self.p, "epsilon_star": self.epsilon_star,
                "bracket": list(self.bracket), "bisection_steps": self.bisection_steps,
                "resolution": self.resolution, "saturated": self.saturated,
                "stop": self.stop.to_dict()}


def find_threshold(ensemble: Ensemble, p: float = 0.0, resolution: float = 1e-4,
                   stop: StopRule | None = None, *, backend: str | None = None
                   ) -> ThresholdResult:
    """Bisection for the largest sparsity at which DE drives the error to zero.

    A trial value succeeds when :func:`run_de` halts below the stop rule's
    threshold.  The search starts from ``[0, 1 - p]``; if even ``1 - p``
    succeeds the result is returned with ``saturated=True``.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    stop = stop or default_stop(ensemble)

    def ok(eps: float) -> bool:
        return run_de(ensemble, ChannelParams(eps, p), stop, backend=backend).success

    lo, hi = 0.0, 1.0 - p
    if not ok(lo):
        raise ThresholdError(f"DE fails at epsilon=0 for {ensemble.label}; check the stop rule")
    common = dict(label=ensemble.label, l=ensemble.l, r=ensemble.r,
                  L=getattr(ensemble, "L", None), p=p, resolution=resolution, stop=stop)
    if ok(hi):
        return ThresholdResult(epsilon_star=hi, bracket=(hi, hi), bisection_steps=0,
                               saturated=True, **common)
    steps = 0
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        steps += 1
    return ThresholdResult(epsilon_star=0.5 * (lo + hi), bracket=(lo, hi),
                           bisection_steps=steps, **common)


@dataclass
class ExitCurve:
    """DE fixed-point value ``h`` over a sparsity grid.

    ``status`` records the stop reason per point; ``"max_iterations"``
    marks points that did not converge.
    """

    label: str
    l: int
    r: int
    L: int | None
    p: float
    epsilon: np.ndarray
    h: np.ndarray
    raw: np.ndarray
    status: list[str]

    def bracket(self) -> tuple[float | None, float | None]:
        """Largest grid point that succeeded and smallest one after it that did not."""
        ok = np.array([s == "success" for s in self.status])
        fail = np.flatnonzero(~ok)
        if fail.size == 0:
            return float(self.epsilon[-1]), None
        first = fail[0]
        return (float(self.epsilon[first - 1]) if first > 0 else None,
                float(self.epsilon[first]))

    def rows(self):
        for e, h, s in zip(self.epsilon, self.h, self.status):
            yield {"ensemble": self.label, "l": self.l, "r": self.r,
                   "L": "" if self.L is None else self.L, "p": self.p,
                   "epsilon": float(e), "value": float(h), "status": s}


def _exit_point(args):
    ensemble, eps, p, stop, backend = args
    res = run_de(ensemble, ChannelParams(eps, p), stop, backend=backend)
    # node event probability without the (eps + p) factor
    raw = res.avg_unverified / (eps + p) if eps + p > 0 else 0.0
    return res.avg_unverified, raw, res.status


def _pool_map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(a) for a in items]


def exit_curve(ensemble: Ensemble, epsilon_grid, p: float = 0.0,
               stop: StopRule | None = None, *, jobs: int = 1,
               backend: str | None = None) -> ExitCurve:
    grid = np.asarray(list(epsilon_grid), dtype=float)
    if grid.size == 0:
        raise ValueError("empty epsilon grid")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("epsilon grid must be strictly increasing")
    if grid[0] < 0 or grid[-1] > 1 - p + 1e-12:
        raise ValueError(f"grid must lie in [0, {1 - p}]")
    grid = np.minimum(grid, 1.0 - p)
    stop = stop or default_stop(ensemble)
    outs = _pool_map(_exit_point, [(ensemble, float(e), p, stop, backend) for e in grid], jobs)
    h = np.array([o[0] for o in outs])
    raw = np.array([o[1] for o in outs])
    status = [o[2] for o in outs]
    for e, s in zip(grid, status):
        if s == "max_iterations":
            log.warning("DE did not converge at epsilon=%g for %s", e, ensemble.label)
    return ExitCurve(ensemble.label, ensemble.l, ensemble.r, getattr(ensemble, "L", None),
                     p, grid, h, raw, status)


@dataclass
class PhasePoint:
    """One circle of the phase diagram.

    ``delta`` and ``rho`` are exact fractions (``rho * delta == epsilon_star``).
    ``error`` is set when the threshold search for this point failed.
    """

    l: int
    k: int
    L: int | None
    coupled: bool
    delta: Fraction
    epsilon_star: float
    rho: Fraction
    error: str | None = None

    def row(self) -> dict:
        return {"l": self.l, "k": self.k, "L": "" if self.L is None else self.L,
                "delta": float(self.delta), "rho": float(self.rho),
                "epsilon_star": self.epsilon_star, "coupled": int(self.coupled)}


def _phase_job(args):
    l, k, L, p, resolution, backend = args
    ens = make_coupled_protograph(l, k * l, L) if L is not None else RegularEnsemble(l, k * l)
    delta = _sampling_ratio(ens)
    try:
        res = find_threshold(ens, p, resolution, backend=backend)
    except Exception as exc:  # recorded per point, the sweep carries on
        return PhasePoint(l, k, L, L is not None, delta, float("nan"), Fraction(0), repr(exc))
    rho = Fraction(res.epsilon_star) / delta
    return PhasePoint(l, k, L, L is not None, delta, res.epsilon_star, rho)


def phase_sweep(l: int, k_list, L: int, p: float = 0.0, resolution: float = 1e-3,
                *, jobs: int = 1, backend: str | None = None,
                progress: bool = False) -> list[PhasePoint]:
    """Uncoupled and coupled threshold per ``k``; returned in ``k`` order, uncoupled first."""
    ks = [int(k) for k in k_list]
    if any(k < 2 for k in ks):
        raise ValueError("every k must be at least 2")
    if L < 1:
        raise ValueError("L must be positive")
    items = [(l, k, Lc, p, resolution, backend) for k in ks for Lc in (None, L)]
    if jobs > 1:
        return _pool_map(_phase_job, items, jobs)
    out = []
    for i, it in enumerate(items):
        out.append(_phase_job(it))
        if progress:
            print(f"[phase] {i + 1}/{len(items)} k={it[1]} L={it[2]}", file=sys.stderr)
    return out


EXIT_CSV_FIELDS = ["ensemble", "l", "r", "L", "p", "epsilon", "value"]
PHASE_CSV_FIELDS = ["l", "k", "L", "delta", "rho", "epsilon_star", "coupled"]


def _csv(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def exit_curve_csv(curve: ExitCurve) -> str:
    return _csv(curve.rows(), EXIT_CSV_FIELDS + ["status"])


def phase_csv(points: list[PhasePoint]) -> str:
    return _csv((pt.row() for pt in points), PHASE_CSV_FIELDS)
