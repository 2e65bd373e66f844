"""``sccs`` command line: ensemble, exit, threshold, phase, simulate.

Every output embeds the resolved :class:`RunConfig`.  JSON outputs carry it
under ``"config"``; CSV and triplet outputs start with ``# config: {...}``.
Passing such a file back through ``--config`` reproduces the run.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from .analysis import (default_stop, exit_curve, exit_curve_csv, find_threshold,
                       phase_csv, phase_sweep)
from .density_evolution import RegularEnsemble, StopRule
from .ensemble import (ENTRY_RULES, lift_protograph, make_coupled_protograph,
                       make_regular_protograph)
from .lm2_decoder import monte_carlo, stats_dict, trial_stats_csv

SUBCOMMANDS = ("ensemble", "exit", "threshold", "phase", "simulate")
DEFAULT_EXIT_GRID = "0:1:0.005"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    l: int = 4
    r: int | None = None
    L: int | None = None
    lift: int | None = None
    k: list[int] = field(default_factory=list)
    grid: list[float] = field(default_factory=list)
    p: float = 0.0
    max_iterations: int | None = None
    halt_threshold: float = 1e-9
    stall_tolerance: float = 1e-12
    resolution: float | None = None
    trials: int = 10
    max_iters: int = 1000
    seed: int = 0
    entry_rule: str = "signed_unit"
    value_bits: int = 63
    shared_instance: bool = False
    format: str = "csv"
    out: str | None = None
    jobs: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def stop_rule(self) -> StopRule:
        cap = self.max_iterations or default_stop(self.de_ensemble()).max_iterations
        return StopRule(cap, self.halt_threshold, self.stall_tolerance)

    def validate(self) -> None:
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if self.l < 2:
            raise ConfigError("--l must be at least 2")
        if self.subcommand != "phase":
            if self.r is None:
                raise ConfigError("--r is required")
            if self.r < self.l:
                raise ConfigError("need r >= l")
            if self.L is not None and self.r % self.l:
                raise ConfigError("coupled ensembles need r to be a multiple of l")
        if self.L is not None and self.L < 1:
            raise ConfigError("--L must be positive")
        if not 0 <= self.p < 1:
            raise ConfigError("--p must lie in [0, 1)")
        if self.subcommand in ("exit", "simulate") and not self.grid:
            raise ConfigError("empty epsilon grid")
        if any(e < 0 or e > 1 - self.p + 1e-12 for e in self.grid):
            raise ConfigError(f"grid values must lie in [0, {1 - self.p}]")
        if self.subcommand == "phase":
            if not self.k or any(k < 2 for k in self.k):
                raise ConfigError("--k needs values >= 2")
            if self.L is None:
                raise ConfigError("phase needs --L")
        if self.subcommand == "simulate":
            if self.lift is None or self.lift < 1:
                raise ConfigError("simulate needs --lift >= 1")
            if self.trials < 1:
                raise ConfigError("--trials must be positive")
            if self.p != 0:
                raise ConfigError("instance decoding supports p = 0 only")
        if self.resolution is not None and self.resolution <= 0:
            raise ConfigError("--resolution must be positive")
        if self.entry_rule not in ENTRY_RULES:
            raise ConfigError(f"--entry-rule must be one of {ENTRY_RULES}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if self.jobs < 1:
            raise ConfigError("--jobs must be positive")

    def protograph(self):
        if self.L is None:
            return make_regular_protograph(self.l, self.r)
        return make_coupled_protograph(self.l, self.r, self.L)

    def de_ensemble(self):
        if self.L is None:
            return RegularEnsemble(self.l, self.r)
        return make_coupled_protograph(self.l, self.r, self.L)


# --- parsing -----------------------------------------------------------------

def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (inclusive) or a comma list."""
    text = text.strip()
    if ":" in text:
        try:
            start, stop, step = (float(t) for t in text.split(":"))
        except ValueError:
            raise ConfigError(f"bad grid {text!r}; expected start:stop:step") from None
        if step <= 0 or stop < start:
            return []
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(n)]
    return [float(t) for t in text.split(",") if t.strip()]


def parse_k(text: str) -> list[int]:
    """``2..10`` or ``2,3,5``."""
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(t) for t in text.split(",") if t.strip()]


def _load_config_file(path: str) -> dict:
    text = open(path).read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        d = json.loads(text)
        return d.get("config", d)
    for line in text.splitlines():
        if line.startswith("# config:"):
            return json.loads(line[len("# config:"):])
    raise ConfigError(f"no embedded config found in {path}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sccs", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"sccs {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common(p, *, need_grid=False):
        p.add_argument("--config", help="re-run the config embedded in a previous output")
        p.add_argument("--l", type=int, default=4)
        p.add_argument("--r", type=int)
        p.add_argument("--L", type=int)
        p.add_argument("--p", type=float, default=0.0)
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--out", help="output path (default: standard output)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        p.add_argument("--max-iterations", type=int, help="DE iteration cap")
        p.add_argument("--halt-threshold", type=float, default=1e-9)
        p.add_argument("--stall-tolerance", type=float, default=1e-12)
        if need_grid:
            p.add_argument("--grid", default=None,
                           help="start:stop:step or comma list (exit default 0:1:0.005)")

    p = sub.add_parser("ensemble", help="build a protograph or a lifted instance")
    common(p)
    p.add_argument("--lift", type=int)
    p.add_argument("--entry-rule", choices=ENTRY_RULES, default="signed_unit")

    p = sub.add_parser("exit", help="EXIT-like curve from DE fixed points")
    common(p, need_grid=True)

    p = sub.add_parser("threshold", help="DE threshold by bisection")
    common(p)
    p.add_argument("--resolution", type=float, default=1e-4)

    p = sub.add_parser("phase", help="(delta, rho) phase-transition points")
    common(p)
    p.add_argument("--k", default="2..10")
    p.add_argument("--resolution", type=float, default=1e-3)

    p = sub.add_parser("simulate", help="Monte-Carlo LM2 decoding")
    common(p, need_grid=True)
    p.add_argument("--lift", type=int)
    p.add_argument("--eps", help="alias for --grid")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--value-bits", type=int, default=63)
    p.add_argument("--shared-instance", action="store_true")
    p.add_argument("--entry-rule", choices=ENTRY_RULES, default="continuous",
                   help="matrix entries; +-1 entries allow false verification on 4-cycles")
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    if ns.config:
        d = _load_config_file(ns.config)
        if d.get("subcommand") != ns.subcommand:
            raise ConfigError(f"config is for {d.get('subcommand')!r}, not {ns.subcommand!r}")
        d["out"] = ns.out
        return RunConfig.from_dict(d)
    d = {"subcommand": ns.subcommand, "l": ns.l, "r": ns.r, "L": ns.L, "p": ns.p,
         "format": ns.format, "out": ns.out, "seed": ns.seed, "jobs": ns.jobs,
         "max_iterations": ns.max_iterations, "halt_threshold": ns.halt_threshold,
         "stall_tolerance": ns.stall_tolerance}
    grid = getattr(ns, "grid", None)
    if grid is None:
        grid = getattr(ns, "eps", None)
    if grid is None and ns.subcommand == "exit":
        grid = DEFAULT_EXIT_GRID
        d["grid"] = [e for e in parse_grid(grid) if e <= 1 - ns.p + 1e-12]
    elif grid is not None:
        d["grid"] = parse_grid(grid)
    for name in ("lift", "resolution", "trials", "max_iters", "value_bits",
                 "shared_instance", "entry_rule"):
        if hasattr(ns, name):
            d[name] = getattr(ns, name)
    if ns.subcommand == "phase":
        d["k"] = parse_k(ns.k)
    return RunConfig.from_dict(d)


# --- commands ----------------------------------------------------------------

def _header(cfg: RunConfig) -> dict:
    d = cfg.to_dict()
    d.pop("out")
    return {"tool": "sccs", "version": __version__, "config": d}


def _emit(cfg: RunConfig, result, csv_text: str) -> str:
    head = _header(cfg)
    if cfg.format == "json":
        text = json.dumps({**head, "result": result}, indent=1) + "\n"
    else:
        text = (f"# sccs {__version__}\n# config: {json.dumps(head['config'])}\n"
                + csv_text)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return text


def _summary(cfg: RunConfig, msg: str) -> None:
    # keep piped data clean when the data itself goes to stdout
    print(msg, file=sys.stdout if cfg.out else sys.stderr)


def cmd_ensemble(cfg: RunConfig) -> str:
    g = cfg.protograph()
    if cfg.lift is None:
        obj = g.to_dict()
        lines = ["var,check"] + [f"{v},{c}" for v, c in g.edges.tolist()]
        return _emit(cfg, obj, "\n".join(lines) + "\n")
    inst = lift_protograph(g, cfg.lift, seed=cfg.seed, entry_rule=cfg.entry_rule)
    body = [f"{inst.M} {inst.N} {inst.nnz}"]
    body += [f"{r} {c} {v}" for r, c, v in
             zip(inst.rows.tolist(), inst.cols.tolist(), inst.values.tolist())]
    return _emit(cfg, inst.to_dict(), "\n".join(body) + "\n")


def cmd_exit(cfg: RunConfig) -> str:
    curve = exit_curve(cfg.de_ensemble(), cfg.grid, cfg.p, cfg.stop_rule(), jobs=cfg.jobs)
    lo, hi = curve.bracket()
    flagged = sum(s == "max_iterations" for s in curve.status)
    _summary(cfg, f"{curve.label}: last success at {lo}, first failure at {hi}"
                  + (f" ({flagged} points did not converge)" if flagged else ""))
    result = [dict(row) for row in curve.rows()]
    return _emit(cfg, result, exit_curve_csv(curve))


def cmd_threshold(cfg: RunConfig) -> str:
    res = find_threshold(cfg.de_ensemble(), cfg.p, cfg.resolution or 1e-4, cfg.stop_rule())
    _summary(cfg, f"{res.label}: epsilon* = {res.epsilon_star:.6f} "
                  f"bracket [{res.bracket[0]:.6f}, {res.bracket[1]:.6f}]")
    d = res.to_dict()
    csv_text = ("ensemble,l,r,L,p,epsilon_star,eps_low,eps_high,bisection_steps\n"
                f"{res.label},{res.l},{res.r},{'' if res.L is None else res.L},{res.p},"
                f"{res.epsilon_star},{res.bracket[0]},{res.bracket[1]},{res.bisection_steps}\n")
    return _emit(cfg, d, csv_text)


def cmd_phase(cfg: RunConfig) -> str:
    pts = phase_sweep(cfg.l, cfg.k, cfg.L, cfg.p, cfg.resolution or 1e-3,
                      jobs=cfg.jobs, progress=True)
    for pt in pts:
        if pt.error:
            print(f"[phase] k={pt.k} L={pt.L}: {pt.error}", file=sys.stderr)
    result = [{**pt.row(), "delta_exact": str(pt.delta), "rho_exact": str(pt.rho),
               "error": pt.error} for pt in pts]
    return _emit(cfg, result, phase_csv(pts))


def cmd_simulate(cfg: RunConfig) -> str:
    stats = monte_carlo(cfg.protograph(), cfg.lift, cfg.grid, cfg.trials, cfg.max_iters,
                        cfg.seed, shared_instance=cfg.shared_instance,
                        value_bits=cfg.value_bits, entry_rule=cfg.entry_rule, jobs=cfg.jobs)
    for s in stats:
        print(f"[simulate] eps={s.epsilon:g} success={s.success_rate:.3f} "
              f"fv={s.false_verification_count}", file=sys.stderr)
    return _emit(cfg, [stats_dict(s) for s in stats], trial_stats_csv(stats))


COMMANDS = {"ensemble": cmd_ensemble, "exit": cmd_exit, "threshold": cmd_threshold,
            "phase": cmd_phase, "simulate": cmd_simulate}


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except (ConfigError, ValueError) as exc:
        ap.error(str(exc))
    COMMANDS[cfg.subcommand](cfg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
