"""Which heights (p, q) are not ruled out for given state and control counts.

Everything here is integer arithmetic: the height inequality, the special
rules for heights with a zero entry, and a complete backtracking search for
a rank-matrix window that satisfies every known linear constraint. Results
mean "not ruled out by the necessary conditions", never "realizable".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .errors import InvalidQuery, WindowTooSmall
from .rankmatrix import DEFAULT_MARGIN, RankMatrix, constraints, reduce_index


@dataclass(frozen=True)
class HeightQuery:
    n1: int
    n2: int
    m: int
    p: int
    q: int
    r1: int
    r2: int

    def __post_init__(self):
        vals = (self.n1, self.n2, self.m, self.p, self.q, self.r1, self.r2)
        if any(v < 0 for v in vals):
            raise InvalidQuery(f"all quantities must be nonnegative: {vals}")
        if self.m < 1:
            raise InvalidQuery("m must be at least 1")
        if self.p > 0 and self.q > 0:
            if self.r1 < 1 or self.r2 < 1:
                raise InvalidQuery("r1 and r2 must be at least 1 when p, q > 0")
            if self.r1 + self.r2 > self.m:
                raise InvalidQuery(f"r1 + r2 = {self.r1 + self.r2} exceeds m = {self.m}")


@dataclass(frozen=True)
class HeightReport:
    """For p, q > 0: lhs/rhs of the height inequality. For a zero entry the
    balance n1 + p against n2 + q is reported instead (``rule`` says which)."""

    query: HeightQuery
    rule: str
    delta: int
    lhs: int
    rhs: int
    admissible: bool
    equality_case: bool | None

    @property
    def tight(self) -> bool:
        return self.lhs == self.rhs

    def to_dict(self) -> dict[str, Any]:
        q = self.query
        return {
            "p": q.p, "q": q.q, "r1": q.r1, "r2": q.r2,
            "rule": self.rule, "delta": self.delta, "lhs": self.lhs, "rhs": self.rhs,
            "admissible": self.admissible, "tight": self.tight, "equality_case": self.equality_case,
        }


def check_height(query: HeightQuery) -> HeightReport:
    n1, n2, m, p, q, r1, r2 = (query.n1, query.n2, query.m, query.p, query.q, query.r1, query.r2)
    if p > 0 and q > 0:
        delta = m - r1 - r2
        lhs = min((p - 1) * delta + r1 * p + n1, (q - 1) * delta + r2 * q + n2)
        rhs = max(r1 * p + n1, r2 * q + n2)
        eq = (n1 + r1 * p == n2 + r2 * q) if delta == 0 else None
        return HeightReport(query, "inequality", delta, lhs, rhs, lhs >= rhs, eq)
    # a zero entry: static (both zero) or reachable by partial prolongation
    if p == 0 and q == 0:
        ok = n1 == n2
    elif m == 1:
        ok = False
    elif p == 0:
        ok = q == n1 - n2
    else:
        ok = p == n2 - n1
    return HeightReport(query, "zero-height", m - r1 - r2, n1 + p, n2 + q, ok, None)


@dataclass(frozen=True)
class HeightEntry:
    p: int
    q: int
    r1: int
    r2: int
    report: HeightReport

    def to_dict(self) -> dict[str, Any]:
        return self.report.to_dict()


def enumerate_heights(n1: int, n2: int, m: int, p_max: int, q_max: int) -> list[HeightEntry]:
    """Heights and infinity ranks not ruled out, in a fixed order: the static
    candidate, zero-entry heights, then p, q >= 1 row-major with (r1, r2)."""
    if min(p_max, q_max) < 0:
        raise InvalidQuery("bounds must be nonnegative")
    HeightQuery(n1, n2, m, 0, 0, 0, 0)  # validates n1, n2, m
    out: list[HeightEntry] = []

    def consider(p, q, r1, r2):
        rep = check_height(HeightQuery(n1, n2, m, p, q, r1, r2))
        if rep.admissible:
            out.append(HeightEntry(p, q, r1, r2, rep))

    consider(0, 0, 0, 0)
    for q in range(1, q_max + 1):
        consider(0, q, 0, 0)
    for p in range(1, p_max + 1):
        consider(p, 0, 0, 0)
    for p in range(1, p_max + 1):
        for q in range(1, q_max + 1):
            for r1 in range(1, m):
                for r2 in range(1, m - r1 + 1):
                    consider(p, q, r1, r2)
    return out


# --------------------------------------------------------------------------
# Rank-matrix search
# --------------------------------------------------------------------------


class _Infeasible(Exception):
    pass


class _Problem:
    """Linear integer constraints over the free core cells."""

    def __init__(self, n1, n2, m, p, q, r1, r2, margin):
        self.p, self.q = p, q
        fixed: dict[tuple[int, int], int] = {}
        for k in range(2):
            fixed[(k, p + k)] = r1
            fixed[(q + k, k)] = r2
        self.fixed = fixed
        cells = []
        for i in range(q + 2):
            for j in range(p + 2):
                if reduce_index(i, j, p, q) == (i, j) and (i, j) not in fixed:
                    cells.append((i, j))
        self.cells = cells  # row-major order
        index = {c: k for k, c in enumerate(cells)}
        ub = max(n1, n2, m)
        self.lo = [0] * len(cells)
        self.hi = [ub] * len(cells)
        self.rows: list[tuple[list[tuple[int, int]], int, str]] = []
        for con in constraints(p, q, n1, n2, m, margin):
            acc: dict[int, int] = {}
            const = con.const
            for (i, j), c in con.terms:
                rep = reduce_index(i, j, p, q)
                if rep is None:
                    continue
                if rep in fixed:
                    const += c * fixed[rep]
                else:
                    acc[index[rep]] = acc.get(index[rep], 0) + c
            terms = [(v, c) for v, c in acc.items() if c]
            if not terms:
                if (con.kind == "eq" and const != 0) or const > 0:
                    raise _Infeasible
                continue
            self.rows.append((terms, const, con.kind))
        self.watch: list[list[int]] = [[] for _ in cells]
        for r, (terms, _, _) in enumerate(self.rows):
            for v, _ in terms:
                self.watch[v].append(r)

    def propagate(self, lo: list[int], hi: list[int], queue: list[int]) -> None:
        """Bounds propagation to a fixpoint; raises _Infeasible on a wipeout."""
        pending = set(queue)
        stack = list(pending)
        while stack:
            r = stack.pop()
            pending.discard(r)
            terms, const, kind = self.rows[r]
            mins = [c * (lo[v] if c > 0 else hi[v]) for v, c in terms]
            maxs = [c * (hi[v] if c > 0 else lo[v]) for v, c in terms]
            total_min = sum(mins) + const
            total_max = sum(maxs) + const
            if total_min > 0 or (kind == "eq" and total_max < 0):
                raise _Infeasible
            for (v, c), mn, mx in zip(terms, mins, maxs):
                # sum of the others stays >= total_min - mn, so c*x <= -(total_min - mn)
                cap = -(total_min - mn)
                new_lo, new_hi = lo[v], hi[v]
                if c > 0:
                    new_hi = min(new_hi, cap // c)
                else:
                    new_lo = max(new_lo, -(cap // -c))
                if kind == "eq":
                    floor = -(total_max - mx)  # c*x >= floor
                    if c > 0:
                        new_lo = max(new_lo, -((-floor) // c))
                    else:
                        new_hi = min(new_hi, floor // c)
                if new_lo > new_hi:
                    raise _Infeasible
                if (new_lo, new_hi) != (lo[v], hi[v]):
                    lo[v], hi[v] = new_lo, new_hi
                    for r2 in self.watch[v]:
                        if r2 not in pending:
                            pending.add(r2)
                            stack.append(r2)

    def _satisfied(self, x: list[int]) -> bool:
        for terms, const, kind in self.rows:
            total = sum(c * x[v] for v, c in terms) + const
            if total > 0 or (kind == "eq" and total != 0):
                return False
        return True

    def solve(self) -> list[int] | None:
        lo, hi = list(self.lo), list(self.hi)
        try:
            self.propagate(lo, hi, list(range(len(self.rows))))
        except _Infeasible:
            return None
        return self._search(lo, hi, 0)

    def _search(self, lo, hi, start) -> list[int] | None:
        v = start
        while v < len(lo) and lo[v] == hi[v]:
            v += 1
        if v == len(lo):
            return list(lo) if self._satisfied(lo) else None
        for value in range(lo[v], hi[v] + 1):
            lo2, hi2 = list(lo), list(hi)
            lo2[v] = hi2[v] = value
            try:
                self.propagate(lo2, hi2, self.watch[v])
            except _Infeasible:
                continue
            found = self._search(lo2, hi2, v + 1)
            if found is not None:
                return found
        return None


def search_rank_matrix(n1: int, n2: int, m: int, p: int, q: int, r1: int, r2: int,
                       window_margin: int = DEFAULT_MARGIN) -> RankMatrix | None:
    """First window (row-major, smallest values first) satisfying every
    constraint with a diagonally stationary tail, or None if there is none."""
    if window_margin < 1:
        raise WindowTooSmall(
            f"window margin {window_margin} cannot express the sum and tail constraints; use >= 1")
    if p < 1 or q < 1:
        raise InvalidQuery("rank-matrix search needs p, q >= 1")
    HeightQuery(n1, n2, m, p, q, r1, r2)
    try:
        prob = _Problem(n1, n2, m, p, q, r1, r2, window_margin)
    except _Infeasible:
        return None
    values = prob.solve()
    if values is None:
        return None
    core = dict(prob.fixed)
    core.update(zip(prob.cells, values))
    rows, cols = q + window_margin, p + q + window_margin
    window = []
    for i in range(rows + 1):
        row = []
        for j in range(cols + 1):
            rep = reduce_index(i, j, p, q)
            row.append(0 if rep is None else core[rep])
        window.append(row)
    return RankMatrix(p, q, n1, n2, m, r1, r2, window, window_margin)
