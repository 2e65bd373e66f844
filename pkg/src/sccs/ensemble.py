"""Regular and spatially coupled protographs, and their random liftings.

A protograph is a small bipartite multigraph.  Variable nodes of the
protograph are called *positions* here (the coupled chain additionally groups
them by chain index, see :attr:`Protograph.var_position`).  Lifting replaces
each protograph edge by a random permutation between ``lift_size`` copies of
its endpoints, giving a sparse measurement matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

ENTRY_RULES = ("signed_unit", "continuous")

# magnitude bound for continuous-mode entries; kept odd so they are units mod 2**64
CONTINUOUS_ENTRY_BITS = 31


class LiftingError(RuntimeError):
    """Raised when parallel protograph edges cannot be lifted without collisions."""


def _frozen(a, dtype=np.int64) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Protograph:
    """Bipartite base multigraph.

    Attributes
    ----------
    num_var_positions, num_check_positions : int
        Node counts on each side.
    edges : np.ndarray
        ``(E, 2)`` array of ``(var, check)`` pairs.  Parallel edges appear as
        repeated rows.
    l, r : int
        Nominal variable and check degrees of the ensemble.
    L : int or None
        Chain length for coupled ensembles, ``None`` for the regular one.
    var_position : np.ndarray
        Chain index of every variable node (all zero for the regular
        protograph).  Used to report per-position statistics.
    """

    num_var_positions: int
    num_check_positions: int
    edges: np.ndarray
    l: int
    r: int
    L: int | None = None
    var_position: np.ndarray = field(default=None)

    def __post_init__(self):
        edges = _frozen(self.edges).reshape(-1, 2)
        object.__setattr__(self, "edges", edges)
        vp = self.var_position
        if vp is None:
            vp = np.zeros(self.num_var_positions, dtype=np.int64)
        object.__setattr__(self, "var_position", _frozen(vp))
        if len(self.var_position) != self.num_var_positions:
            raise ValueError("var_position must have one entry per variable node")
        if edges.size and (
            edges[:, 0].min() < 0
            or edges[:, 0].max() >= self.num_var_positions
            or edges[:, 1].min() < 0
            or edges[:, 1].max() >= self.num_check_positions
        ):
            raise ValueError("edge endpoint out of range")

    @property
    def label(self) -> str:
        if self.L is None:
            return f"({self.l},{self.r})"
        return f"({self.l},{self.r},{self.L})"

    @property
    def k(self) -> Fraction:
        return Fraction(self.r, self.l)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_chain_positions(self) -> int:
        return int(self.var_position.max()) + 1 if self.num_var_positions else 0

    def var_degrees(self) -> np.ndarray:
        return np.bincount(self.edges[:, 0], minlength=self.num_var_positions)

    def check_degrees(self) -> np.ndarray:
        return np.bincount(self.edges[:, 1], minlength=self.num_check_positions)

    def to_dict(self) -> dict:
        return {
            "kind": "protograph",
            "label": self.label,
            "l": self.l,
            "r": self.r,
            "L": self.L,
            "num_var_positions": self.num_var_positions,
            "num_check_positions": self.num_check_positions,
            "edges": self.edges.tolist(),
            "var_position": self.var_position.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Protograph":
        return cls(
            num_var_positions=int(d["num_var_positions"]),
            num_check_positions=int(d["num_check_positions"]),
            edges=np.asarray(d["edges"], dtype=np.int64).reshape(-1, 2),
            l=int(d["l"]),
            r=int(d["r"]),
            L=None if d.get("L") is None else int(d["L"]),
            var_position=d.get("var_position"),
        )

    def __eq__(self, other):
        if not isinstance(other, Protograph):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((self.label, self.num_var_positions, self.num_check_positions,
                     self.edges.tobytes()))


def make_regular_protograph(l: int, r: int) -> Protograph:
    """Smallest protograph of the ``(l, r)``-regular ensemble.

    Uses ``r/g`` variable nodes and ``l/g`` check nodes, ``g = gcd(l, r)``,
    with every variable-check pair joined by ``g`` parallel edges.
    """
    if l < 2 or r < 2:
        raise ValueError(f"degrees must be at least 2, got l={l}, r={r}")
    if l > r:
        raise ValueError(f"need l <= r, got l={l}, r={r}")
    g = math.gcd(l, r)
    nv, nc = r // g, l // g
    edges = [(v, c) for v in range(nv) for c in range(nc) for _ in range(g)]
    return Protograph(nv, nc, edges, l=l, r=r)


def make_coupled_protograph(l: int, r: int, L: int) -> Protograph:
    """Terminated spatially coupled ``(l, r=k*l, L)`` chain.

    Each of the ``L`` chain positions carries ``k`` variable nodes; every one
    of them has one edge to each of the checks at positions ``i, ..., i+l-1``.
    There are ``L + l - 1`` check positions, the ``l - 1`` at either end having
    reduced degree.
    """
    if l < 2:
        raise ValueError(f"l must be at least 2, got {l}")
    if L < 1:
        raise ValueError(f"chain length must be positive, got L={L}")
    if r % l:
        raise ValueError(f"r={r} is not a multiple of l={l}")
    k = r // l
    if k < 2:
        raise ValueError(f"need r = k*l with k >= 2, got r={r}, l={l}")
    edges = []
    var_position = []
    for i in range(L):
        for s in range(k):
            v = i * k + s
            var_position.append(i)
            edges.extend((v, i + j) for j in range(l))
    return Protograph(k * L, L + l - 1, edges, l=l, r=r, L=L,
                      var_position=var_position)


def design_sampling_ratio(g: Protograph) -> Fraction:
    """``M/N`` of any lifting of ``g``, as an exact fraction."""
    return Fraction(g.num_check_positions, g.num_var_positions)


def coupled_sampling_ratio(l: int, k: int, L: int) -> Fraction:
    """Closed form ``1/k + (l-1)/(k L)`` for the coupled chain."""
    return Fraction(1, k) + Fraction(l - 1, k * L)


@dataclass(frozen=True, eq=False)
class MeasurementMatrixInstance:
    """Lifted sparse measurement matrix in triplet form.

    Entries are sorted by ``(row, col)``.  ``label`` names the protograph the
    instance was lifted from.
    """

    M: int
    N: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    lift_size: int
    seed: int | None = None
    label: str = ""
    entry_rule: str = "signed_unit"

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.int64)
        if not (len(rows) == len(cols) == len(vals)):
            raise ValueError("rows, cols and values must have equal length")
        order = np.lexsort((cols, rows))
        for name, a in (("rows", rows), ("cols", cols), ("values", vals)):
            object.__setattr__(self, name, _frozen(a[order]))

    @property
    def nnz(self) -> int:
        return len(self.values)

    def col_degrees(self) -> np.ndarray:
        return np.bincount(self.cols, minlength=self.N)

    def row_degrees(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.M)

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix((self.values, (self.rows, self.cols)), shape=(self.M, self.N))

    def to_dict(self) -> dict:
        return {
            "kind": "instance",
            "label": self.label,
            "M": self.M,
            "N": self.N,
            "lift_size": self.lift_size,
            "seed": self.seed,
            "entry_rule": self.entry_rule,
            "entries": np.stack([self.rows, self.cols, self.values], axis=1).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementMatrixInstance":
        ent = np.asarray(d["entries"], dtype=np.int64).reshape(-1, 3)
        return cls(
            M=int(d["M"]), N=int(d["N"]),
            rows=ent[:, 0], cols=ent[:, 1], values=ent[:, 2],
            lift_size=int(d["lift_size"]), seed=d.get("seed"),
            label=d.get("label", ""), entry_rule=d.get("entry_rule", "signed_unit"),
        )

    def __eq__(self, other):
        if not isinstance(other, MeasurementMatrixInstance):
            return NotImplemented
        return (
            (self.M, self.N, self.lift_size, self.seed, self.label, self.entry_rule)
            == (other.M, other.N, other.lift_size, other.seed, other.label, other.entry_rule)
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def _lift_bundle(rng: np.random.Generator, Z: int, m: int, max_retries: int) -> list[np.ndarray]:
    """``m`` permutations of ``range(Z)`` that disagree at every point.

    Each permutation is drawn uniformly and conflicting points are repaired
    by random transpositions that never add conflicts.  A bundle that is
    still conflicting after ``max_retries`` rounds is redrawn from scratch,
    up to ``max_retries`` times.
    """
    if m > Z:
        raise LiftingError(f"{m} parallel edges cannot be lifted with lift_size={Z}")
    for _attempt in range(max_retries):
        perms = _try_bundle(rng, Z, m, max_retries)
        if perms is not None:
            return perms
    raise LiftingError(f"could not resolve parallel edges after {max_retries} retries")


def _try_bundle(rng, Z, m, rounds):
    perms: list[np.ndarray] = []
    for _ in range(m):
        perm = rng.permutation(Z)
        if perms:
            prev = np.stack(perms)
            for _round in range(rounds):
                bad = np.flatnonzero((prev == perm).any(axis=0))
                if bad.size == 0:
                    break
                partners = rng.integers(0, Z, size=bad.size)
                for t, u in zip(bad, partners):
                    a, b = perm[u], perm[t]
                    # t is fixed by the swap; u must not get worse
                    if (prev[:, t] == a).any():
                        continue
                    if (prev[:, u] == b).any() and not (prev[:, u] == a).any():
                        continue
                    perm[t], perm[u] = a, b
            if (prev == perm).any():
                return None
        perms.append(perm)
    return perms


def lift_protograph(
    g: Protograph,
    lift_size: int,
    seed=None,
    entry_rule: str = "signed_unit",
    max_retries: int = 100,
) -> MeasurementMatrixInstance:
    """Random permutation lifting of ``g``.

    Variable node ``v`` becomes columns ``v*Z .. v*Z+Z-1`` and check node ``c``
    rows ``c*Z .. c*Z+Z-1``; every protograph edge is replaced by a uniformly
    random permutation.  Parallel edges get permutations that never coincide,
    so the matrix has no duplicate entries.
    """
    if lift_size < 1:
        raise ValueError(f"lift_size must be positive, got {lift_size}")
    if entry_rule not in ENTRY_RULES:
        raise ValueError(f"unknown entry_rule {entry_rule!r}")
    Z = int(lift_size)
    rng = np.random.default_rng(seed)

    bundles: dict[tuple[int, int], int] = {}
    for v, c in g.edges.tolist():
        bundles[(v, c)] = bundles.get((v, c), 0) + 1

    t = np.arange(Z, dtype=np.int64)
    rows, cols = [], []
    for (v, c), m in bundles.items():
        for perm in _lift_bundle(rng, Z, m, max_retries):
            rows.append(c * Z + perm)
            cols.append(v * Z + t)
    rows = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, np.int64)

    n = len(rows)
    if entry_rule == "signed_unit":
        values = rng.choice(np.array([-1, 1], dtype=np.int64), size=n)
    else:
        half = rng.integers(0, 2 ** (CONTINUOUS_ENTRY_BITS - 1), size=n, dtype=np.int64)
        values = (2 * half + 1) * rng.choice(np.array([-1, 1], dtype=np.int64), size=n)

    return MeasurementMatrixInstance(
        M=g.num_check_positions * Z, N=g.num_var_positions * Z,
        rows=rows, cols=cols, values=values, lift_size=Z,
        seed=None if seed is None else int(seed),
        label=g.label, entry_rule=entry_rule,
    )


# --- serialization -----------------------------------------------------------

def to_json(obj, path=None) -> str:
    text = json.dumps(obj.to_dict())
    if path is not None:
        Path(path).write_text(text)
    return text


def from_json(text_or_path):
    """Load a protograph or instance from JSON text or a file path."""
    if isinstance(text_or_path, Path) or (
        isinstance(text_or_path, str) and not text_or_path.lstrip().startswith("{")
    ):
        text = Path(text_or_path).read_text()
    else:
        text = text_or_path
    d = json.loads(text)
    kind = d.get("kind")
    if kind == "protograph":
        return Protograph.from_dict(d)
    if kind == "instance":
        return MeasurementMatrixInstance.from_dict(d)
    raise ValueError(f"unrecognised descriptor kind {kind!r}")


def write_triplets(inst: MeasurementMatrixInstance, path) -> None:
    """Plain-text sparse format: ``M N nnz`` header, then ``row col value`` lines."""
    with open(path, "w") as fh:
        fh.write(f"{inst.M} {inst.N} {inst.nnz}\n")
        for r, c, v in zip(inst.rows.tolist(), inst.cols.tolist(), inst.values.tolist()):
            fh.write(f"{r} {c} {v}\n")


def read_triplets(path, **meta) -> MeasurementMatrixInstance:
    """Inverse of :func:`write_triplets`; ``meta`` fills the non-matrix fields.

    Lines starting with ``#`` are skipped.
    """
    with open(path) as fh:
        line = fh.readline()
        while line.startswith("#"):
            line = fh.readline()
        M, N, nnz = (int(t) for t in line.split())
        data = np.loadtxt(fh, dtype=np.int64, ndmin=2, comments="#")
    if nnz == 0:
        data = np.zeros((0, 3), dtype=np.int64)
    if data.shape != (nnz, 3):
        raise ValueError(f"expected {nnz} triplets, found {data.shape[0]}")
    meta.setdefault("lift_size", 1)
    return MeasurementMatrixInstance(M=M, N=N, rows=data[:, 0], cols=data[:, 1],
                                     values=data[:, 2], **meta)
