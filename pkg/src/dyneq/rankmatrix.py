"""The rank matrix of an equivalence and the constraints it satisfies.

Entry r^i_j counts how many level-i contact forms of the target match
level-j contact forms of the source in an adapted coframe. It is computed
here from dimensions of intersections of two filtrations,

    d_{i,j} = dim( span of pulled-back target levels 0..i  ∩  span of source levels 0..j ),

which are independent of any choice of adapted coframe, by
r^i_j = d_{i,j} - d_{i-1,j} - d_{i,j-1} + d_{i-1,j-1}.

Rows i index target levels, columns j source levels. Beyond the core
(rows 0..q+1, columns 0..p+1) the matrix is assumed stationary along
diagonals: r^i_j = r^(i-1)_(j-1) whenever i >= q+2 or j >= p+2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .blockmat import check_stationary_blocks, compute_blocks
from .equivmap import EquivalencePair
from .errors import InvariantViolation, PreconditionError
from .symexpr import Sampler, generic_rank, numeric_rank, sample

__all__ = [
    "RankMatrix", "FiltrationDims", "Check", "ValidationReport", "Constraint", "NonGenericWarning",
    "generic_rank", "filtration_dims", "rank_matrix", "validate_rank_matrix", "constraints",
    "reduce_index", "DEFAULT_MARGIN",
]

DEFAULT_MARGIN = 2


class NonGenericWarning(UserWarning):
    """Sample points disagreed about a dimension; the generic (max) value was used."""


def reduce_index(i: int, j: int, p: int, q: int) -> tuple[int, int] | None:
    """Map (i, j) to its representative in the core, or None for a structural zero."""
    if i < 0 or j < 0 or j > p + i or i > q + j:
        return None
    shift = max(i - (q + 1), j - (p + 1), 0)
    shift = min(shift, i, j)
    return i - shift, j - shift


@dataclass
class RankMatrix:
    p: int
    q: int
    n1: int
    n2: int
    m: int
    r1: int
    r2: int
    window: list[list[int]]
    margin: int = DEFAULT_MARGIN
    dims: dict[tuple[int, int], int] | None = field(default=None, compare=False, repr=False)

    @property
    def rows(self) -> int:
        return len(self.window)

    @property
    def cols(self) -> int:
        return len(self.window[0]) if self.window else 0

    def entry(self, i: int, j: int) -> int:
        """r^i_j, reading the window where possible and the stationary tail elsewhere."""
        if i < 0 or j < 0:
            return 0
        if i < self.rows and j < self.cols:
            return self.window[i][j]
        if j > self.p + i or i > self.q + j:
            return 0
        while (i >= self.rows or j >= self.cols) and i > 0 and j > 0:
            i, j = i - 1, j - 1
        if i < self.rows and j < self.cols:
            return self.window[i][j]
        return 0

    def row_sum(self, i: int) -> int:
        return sum(self.entry(i, j) for j in range(self.p + i + 1))

    def col_sum(self, j: int) -> int:
        return sum(self.entry(i, j) for i in range(self.q + j + 1))

    def to_dict(self) -> dict[str, Any]:
        return {
            "p": self.p, "q": self.q, "n1": self.n1, "n2": self.n2, "m": self.m,
            "r1": self.r1, "r2": self.r2, "margin": self.margin,
            "window": [list(row) for row in self.window],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RankMatrix:
        return cls(d["p"], d["q"], d["n1"], d["n2"], d["m"], d["r1"], d["r2"],
                   [list(map(int, row)) for row in d["window"]], d.get("margin", DEFAULT_MARGIN))

    def lines(self) -> list[str]:
        width = max(1, max((len(str(x)) for row in self.window for x in row), default=1))
        out = [" ".join(str(x).rjust(width) for x in row) + " ..." for row in self.window]
        out.append(" ".join("." .rjust(width) for _ in range(self.cols)) + " ...")
        return out


# --------------------------------------------------------------------------
# Constraints
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Constraint:
    """sum(coef * r[cell]) + const  (== 0 | <= 0), cells given as (i, j)."""

    name: str
    indices: tuple
    terms: tuple[tuple[tuple[int, int], int], ...]
    const: int
    kind: str  # "eq" or "le"

    def value(self, r: RankMatrix) -> int:
        return sum(c * r.entry(i, j) for (i, j), c in self.terms) + self.const

    def holds(self, r: RankMatrix) -> bool:
        v = self.value(r)
        return v == 0 if self.kind == "eq" else v <= 0


def _lin(name, indices, plus: Iterable[tuple[int, int]], minus: Iterable[tuple[int, int]],
         const: int, kind: str) -> Constraint:
    acc: dict[tuple[int, int], int] = {}
    for c in plus:
        acc[c] = acc.get(c, 0) + 1
    for c in minus:
        acc[c] = acc.get(c, 0) - 1
    terms = tuple(sorted((c, k) for c, k in acc.items() if k))
    return Constraint(name, tuple(indices), terms, const, kind)


def constraints(p: int, q: int, n1: int, n2: int, m: int, margin: int = DEFAULT_MARGIN) -> list[Constraint]:
    """Linear equalities and inequalities on the entries, for constrained entries
    in rows 0..q+margin and columns 0..p+q+margin."""
    rows, cols = q + margin, p + q + margin
    out: list[Constraint] = []
    out.append(_lin("col-sum", (0,), [(i, 0) for i in range(q + 1)], [], -n1, "eq"))
    out.append(_lin("row-sum", (0,), [(0, j) for j in range(p + 1)], [], -n2, "eq"))
    for k in range(1, cols + 1):
        out.append(_lin("col-sum", (k,), [(i, k) for i in range(q + k + 1)], [], -m, "eq"))
    for k in range(1, rows + 1):
        out.append(_lin("row-sum", (k,), [(k, j) for j in range(p + k + 1)], [], -m, "eq"))
    for i in range(1, rows + 1):
        for j in range(1, cols + 1):
            out.append(_lin("inner/row", (i, j), [(i, j)], [(i + 1, k) for k in range(j + 2)], 0, "le"))
            out.append(_lin("inner/col", (i, j), [(i, j)], [(k, j + 1) for k in range(i + 2)], 0, "le"))
    for j in range(1, cols + 1):
        out.append(_lin("top-row/next", (0, j), [(0, j)], [(0, j + 1), (1, j + 1)], 0, "le"))
        out.append(_lin("top-row/count", (0, j), [(0, j)], [(1, k) for k in range(j + 2)], -(n2 - m), "le"))
    for i in range(1, rows + 1):
        out.append(_lin("left-col/next", (i, 0), [(i, 0)], [(i + 1, 0), (i + 1, 1)], 0, "le"))
        out.append(_lin("left-col/count", (i, 0), [(i, 0)], [(k, 1) for k in range(i + 2)], -(n1 - m), "le"))
    out.append(_lin("corner/source", (0, 0), [(0, 0)], [(0, 1), (1, 1)], -(n1 - m), "le"))
    out.append(_lin("corner/target", (0, 0), [(0, 0)], [(1, 0), (1, 1)], -(n2 - m), "le"))
    return out


@dataclass
class Check:
    name: str
    indices: tuple
    ok: bool
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "indices": list(self.indices), "ok": self.ok, "detail": self.detail}


@dataclass
class ValidationReport:
    checks: list[Check]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self, include_tail: bool = True) -> list[Check]:
        return [c for c in self.checks if not c.ok and (include_tail or c.name != "tail")]

    def summary(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for c in self.checks:
            family = c.name.split("/")[0]
            slot = out.setdefault(family, {"passed": 0, "failed": 0})
            slot["passed" if c.ok else "failed"] += 1
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"ok": self.ok, "summary": self.summary(),
                "failures": [c.to_dict() for c in self.failures()]}


def validate_rank_matrix(r: RankMatrix) -> ValidationReport:
    """Every structural constraint on a rank matrix window, with verdicts."""
    checks: list[Check] = []
    p, q, w = r.p, r.q, r.margin
    want = (q + w + 1, p + q + w + 1)
    shape_ok = r.rows == want[0] and all(len(row) == want[1] for row in r.window)
    checks.append(Check("shape", want, shape_ok, f"expected {want[0]} x {want[1]}"))
    checks.append(Check("height", (p, q), p > 0 and q > 0, "rank matrices need p, q > 0"))
    for i, row in enumerate(r.window):
        for j, x in enumerate(row):
            if x < 0:
                checks.append(Check("nonnegative", (i, j), False, f"r^{i}_{j} = {x}"))
            if (j > p + i or i > q + j) and x != 0:
                checks.append(Check("zero-pattern", (i, j), False, f"r^{i}_{j} = {x} must be 0"))
    checks.append(Check("positive-ranks", (r.r1, r.r2), r.r1 >= 1 and r.r2 >= 1, "r1, r2 >= 1"))
    checks.append(Check("budget", (r.r1, r.r2), 2 <= r.r1 + r.r2 <= r.m,
                        f"2 <= r1 + r2 = {r.r1 + r.r2} <= m = {r.m}"))
    for k in range(r.rows):
        if p + k < r.cols:
            x = r.window[k][p + k]
            checks.append(Check("diagonal/source", (k, p + k), x == r.r1, f"r^{k}_{p + k} = {x}, r1 = {r.r1}"))
    for k in range(r.cols):
        if q + k < r.rows:
            x = r.window[q + k][k]
            checks.append(Check("diagonal/target", (q + k, k), x == r.r2, f"r^{q + k}_{k} = {x}, r2 = {r.r2}"))
    for i in range(1, r.rows):
        for j in range(1, len(r.window[i])):
            if i >= q + 2 or j >= p + 2:
                ok = r.window[i][j] == r.window[i - 1][j - 1]
                checks.append(Check("tail", (i, j), ok,
                                    f"r^{i}_{j} = {r.window[i][j]} vs r^{i - 1}_{j - 1} = {r.window[i - 1][j - 1]}"))
    if shape_ok:
        for c in constraints(p, q, r.n1, r.n2, r.m, w):
            v = c.value(r)
            ok = c.holds(r)
            rel = "== 0" if c.kind == "eq" else "<= 0"
            checks.append(Check(c.name, c.indices, ok, f"residual {v} {rel}"))
    return ValidationReport(checks)


# --------------------------------------------------------------------------
# Geometry
# --------------------------------------------------------------------------


@dataclass
class FiltrationDims:
    """d_{i,j} for 0 <= i <= i_max, 0 <= j <= j_max; negative indices give 0."""

    d: dict[tuple[int, int], int]
    i_max: int
    j_max: int
    consistent: bool = True

    def __call__(self, i: int, j: int) -> int:
        if i < 0 or j < 0:
            return 0
        return self.d[(i, j)]


def filtration_dims(pair: EquivalencePair, i_max: int, j_max: int, s: Sampler) -> FiltrationDims:
    """Intersection dimensions of the pulled-back target filtration with the
    source filtration, at generic points (max over samples)."""
    p = pair.phi.order
    if j_max < p + i_max:
        j_max = p + i_max
    fam = compute_blocks(pair, "forward", i_max, s)
    stacked = fam.stacked(i_max, j_max)
    flat = [e for row in stacked for e in row]
    rows, cols = len(stacked), len(stacked[0])
    smp = sample(flat, s, pair.phi.source.box_map)
    mats = smp.values.T.reshape(smp.count, rows, cols)
    row_ends = np.cumsum(fam.row_sizes[: i_max + 1])
    col_ends = np.cumsum(fam.col_sizes[: j_max + 1])

    per_sample = np.zeros((smp.count, i_max + 1, j_max + 1), dtype=int)
    full = np.zeros((smp.count, i_max + 1), dtype=int)
    tail = np.zeros((smp.count, i_max + 1, j_max + 1), dtype=int)
    for t, mat in enumerate(mats):
        for i in range(i_max + 1):
            u = mat[: row_ends[i]]
            full[t, i] = numeric_rank(u)
            for j in range(j_max + 1):
                tail[t, i, j] = numeric_rank(u[:, col_ends[j]:])
            per_sample[t, i] = full[t, i] - tail[t, i]
    generic = full.max(axis=0)[:, None] - tail.max(axis=0)
    consistent = bool((per_sample == generic[None]).all())
    if not consistent:
        warnings.warn("filtration dimensions vary across sample points; using generic values",
                      NonGenericWarning, stacklevel=2)
    d = {(i, j): int(generic[i, j]) for i in range(i_max + 1) for j in range(j_max + 1)}
    return FiltrationDims(d, i_max, j_max, consistent)


def rank_matrix(pair: EquivalencePair, s: Sampler, margin: int = DEFAULT_MARGIN) -> RankMatrix:
    p, q = pair.phi.order, pair.psi.order
    if p == 0 or q == 0:
        raise PreconditionError(f"rank matrix undefined at height ({p}, {q}); needs p, q > 0")
    if margin < 1:
        raise ValueError("window margin must be at least 1")
    rows, cols = q + margin, p + q + margin
    trunc = max(rows, p + q + 2)
    inf = check_stationary_blocks(compute_blocks(pair, "forward", trunc, s),
                      compute_blocks(pair, "backward", p + q + 2, s), s)
    dims = filtration_dims(pair, rows, cols, s)
    window = [[dims(i, j) - dims(i - 1, j) - dims(i, j - 1) + dims(i - 1, j - 1)
               for j in range(cols + 1)] for i in range(rows + 1)]
    rm = RankMatrix(p, q, pair.n1, pair.n2, pair.m, inf.r1, inf.r2, window, margin,
                    dims={k: v for k, v in dims.d.items() if k[0] <= rows and k[1] <= cols})
    report = validate_rank_matrix(rm)
    hard = report.failures(include_tail=False)
    if hard:
        names = ", ".join(f"{c.name}{list(c.indices)}" for c in hard[:5])
        raise InvariantViolation(f"computed rank matrix violates {names}", hard)
    if report.failures():
        warnings.warn("rank matrix tail is not diagonally stationary inside the window",
                      NonGenericWarning, stacklevel=2)
    return rm


def reconstruct_dims(r: RankMatrix) -> dict[tuple[int, int], int]:
    """Partial sums sum_{i' <= i, j' <= j} r^i'_j' over the window."""
    out = {}
    for i in range(r.rows):
        for j in range(r.cols):
            out[(i, j)] = sum(r.window[a][b] for a in range(i + 1) for b in range(j + 1))
    return out
