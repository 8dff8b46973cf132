"""Coefficient blocks of pulled-back contact forms.

For a map Phi: M^(p) -> N, the level-k contact forms of N pull back to
combinations of the contact forms of M. Block (k, j) holds the coefficients
on the level-j forms of M; it is the Jacobian of the lifted level-k target
coordinates with respect to the level-j source coordinates, because every
differential dz of M equals its contact form plus a multiple of dt.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .equivmap import EquivalenceMap, EquivalencePair, contact_residuals, lift
from .errors import ContactResidualError, PreconditionError, PropertyViolation
from .symexpr import (
    ZERO,
    Expr,
    Sampler,
    differentiate,
    generic_rank,
    sample,
    substitute_many,
    zero_flags,
)

Matrix = list[list[Expr]]
Direction = Literal["forward", "backward"]


@dataclass
class BlockFamily:
    """Blocks (k, j) for target levels k <= K and source levels j <= base + k."""

    direction: str
    base_order: int
    truncation: int
    blocks: dict[tuple[int, int], Matrix]
    row_sizes: list[int]
    col_sizes: list[int]
    map: EquivalenceMap

    def block(self, k: int, j: int) -> Matrix:
        if (k, j) in self.blocks:
            return self.blocks[(k, j)]
        if 0 <= k <= self.truncation and j > self.base_order + k:
            return [[ZERO] * self.col_sizes[j] for _ in range(self.row_sizes[k])] \
                if j < len(self.col_sizes) else [[] for _ in range(self.row_sizes[k])]
        raise KeyError((k, j))

    def leading(self, k: int) -> Matrix:
        """The outermost nonzero block of row level k."""
        return self.blocks[(k, self.base_order + k)]

    def stacked(self, levels: int, col_levels: int) -> Matrix:
        """Rows of target levels 0..levels over columns of source levels 0..col_levels."""
        out: Matrix = []
        for k in range(levels + 1):
            rows = [[] for _ in range(self.row_sizes[k])]
            for j in range(col_levels + 1):
                blk = self.blocks.get((k, j))
                for r in range(self.row_sizes[k]):
                    rows[r].extend(blk[r] if blk is not None else [ZERO] * self.col_sizes[j])
            out.extend(rows)
        return out


def _jacobian(exprs: list[Expr], coords) -> Matrix:
    return [[differentiate(e, z) for z in coords] for e in exprs]


def _family(phi: EquivalenceMap, truncation: int, s: Sampler | None, direction: str) -> BlockFamily:
    src, tgt, p = phi.source, phi.target, phi.order
    lifted = lift(phi, truncation)
    target_levels = [tgt.level_coordinates(k) for k in range(truncation + 1)]
    col_levels = [src.level_coordinates(j) for j in range(p + truncation + 2)]
    blocks: dict[tuple[int, int], Matrix] = {}
    beyond: list[Expr] = []
    for k, coords in enumerate(target_levels):
        comps = [lifted[y] for y in coords]
        for j in range(p + k + 1):
            blocks[(k, j)] = _jacobian(comps, col_levels[j])
        beyond.extend(e for row in _jacobian(comps, col_levels[p + k + 1]) for e in row)
    if s is not None:
        residual = contact_residuals(phi)
        if not all(zero_flags(residual, s, src.box_map)):
            raise ContactResidualError(
                f"{direction} map {phi.name}: pulled-back level-0 contact forms keep a dt component")
        live = [e for e in beyond if e is not ZERO]
        if live and not all(zero_flags(live, s, src.box_map)):
            raise PropertyViolation(f"{direction} family leaves its band", (direction,))
    return BlockFamily(direction, p, truncation, blocks,
                       [len(c) for c in target_levels], [len(c) for c in col_levels], phi)


def compute_blocks(pair: EquivalencePair, direction: Direction = "forward",
                   truncation: int | None = None, s: Sampler | None = None) -> BlockFamily:
    """Blocks A^k_j (forward, from phi) or B^k_j (backward, from psi).

    ``truncation`` defaults to p + q + 2. With a sampler, the level-0 dt
    residual and the band shape are checked by zero tests.
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be forward or backward, not {direction!r}")
    if truncation is None:
        truncation = pair.phi.order + pair.psi.order + 2
    phi = pair.phi if direction == "forward" else pair.psi
    return _family(phi, truncation, s, direction)


@dataclass
class InfinityData:
    A_inf: Matrix
    B_inf: Matrix
    r1: int
    r2: int


def _require_positive_height(fwd: BlockFamily, bwd: BlockFamily) -> None:
    if fwd.base_order == 0 or bwd.base_order == 0:
        raise PreconditionError(
            f"stationarity and rank properties are only asserted for p, q > 0 "
            f"(got p = {fwd.base_order}, q = {bwd.base_order})")


def _differences(a: Matrix, b: Matrix) -> list[Expr]:
    return [x - y if x is not y else ZERO for ra, rb in zip(a, b) for x, y in zip(ra, rb)]


def check_stationary_blocks(fwd: BlockFamily, bwd: BlockFamily, s: Sampler) -> InfinityData:
    """Stationarity of the leading blocks, rank agreement with level 0, and
    the rank budget 2 <= r1 + r2 <= m. Raises :class:`PropertyViolation`."""
    _require_positive_height(fwd, bwd)
    m = fwd.map.source.m
    ranks = []
    for fam, label in ((fwd, "A"), (bwd, "B")):
        base = fam.base_order
        ref = fam.leading(1)
        boxes = fam.map.source.box_map
        for k in range(2, fam.truncation + 1):
            diff = [d for d in _differences(fam.leading(k), ref) if d is not ZERO]
            if diff and not all(zero_flags(diff, s, boxes)):
                raise PropertyViolation(
                    f"{label}^{k}_{base + k} differs from {label}^1_{base + 1}", (label, k, base + k))
        r_inf = generic_rank(ref, s, boxes)
        r_lead = generic_rank(fam.leading(0), s, boxes)
        if r_inf == 0:
            raise PropertyViolation(f"{label}_inf vanishes", (label, 1, base + 1))
        if r_lead != r_inf:
            raise PropertyViolation(
                f"rank {label}^0_{base} = {r_lead} but rank {label}_inf = {r_inf}", (label, 0, base))
        ranks.append(r_inf)
    r1, r2 = ranks
    if not 2 <= r1 + r2 <= m:
        raise PropertyViolation(
            f"rank budget violated: r1 + r2 = {r1 + r2} outside [2, m = {m}]", ("A_inf", "B_inf"))
    return InfinityData(fwd.leading(1), bwd.leading(1), r1, r2)


def composed(entries: list[Expr], inner: EquivalenceMap) -> list[Expr]:
    """Entries written over the coordinates of inner.target, pulled back to inner.source."""
    depth = 0
    tgt = inner.target
    bases = {c.name: c.order for c in tgt.controls}
    for e in entries:
        for v in e.free:
            if v.name in bases and v.order >= bases[v.name]:
                depth = max(depth, v.order - bases[v.name])
    return substitute_many(entries, lift(inner, depth))


def _numeric_blocks(exprs: list[Expr], s: Sampler, boxes) -> tuple[np.ndarray, np.ndarray]:
    smp = sample(exprs, s, boxes)
    return smp.values, smp.scales()


def infinity_product_residual(fwd: BlockFamily, bwd: BlockFamily, s: Sampler) -> float:
    """max |(B_inf o Phi) A_inf| relative to the entry scale, over sample points."""
    _require_positive_height(fwd, bwd)
    m = fwd.map.source.m
    a = [e for row in fwd.leading(1) for e in row]
    b = composed([e for row in bwd.leading(1) for e in row], fwd.map)
    vals, scales = _numeric_blocks(a + b, s, fwd.map.source.box_map)
    worst = 0.0
    for t in range(vals.shape[1]):
        amat = vals[: m * m, t].reshape(m, m)
        bmat = vals[m * m:, t].reshape(m, m)
        scale = max(1.0, float(scales[:, t].max()))
        worst = max(worst, float(np.abs(bmat @ amat).max()) / scale ** 2)
    return worst


def product_identity_residual(pair: EquivalencePair, s: Sampler, window: int | None = None) -> float:
    """Check sum_l (B^k_l o Phi) A^l_j = delta_kj I for k <= window, all j.

    Returns the largest deviation relative to the entry scale at the sample
    points; a value near machine precision confirms the families are inverse.
    """
    p, q = pair.phi.order, pair.psi.order
    window = p + q + 1 if window is None else window
    fwd = compute_blocks(pair, "forward", q + window)
    bwd = compute_blocks(pair, "backward", window)
    cols = p + q + window
    a_stack = fwd.stacked(q + window, cols)
    b_stack = bwd.stacked(window, q + window)
    a_flat = [e for row in a_stack for e in row]
    b_flat = composed([e for row in b_stack for e in row], pair.phi)
    vals, scales = _numeric_blocks(a_flat + b_flat, s, pair.phi.source.box_map)
    ar, ac = len(a_stack), len(a_stack[0])
    br, bc = len(b_stack), len(b_stack[0])
    worst = 0.0
    for t in range(vals.shape[1]):
        amat = vals[: ar * ac, t].reshape(ar, ac)
        bmat = vals[ar * ac:, t].reshape(br, bc)
        prod = bmat @ amat
        eye = np.zeros_like(prod)
        eye[:, :br] = np.eye(br)
        scale = max(1.0, float(scales[:, t].max()))
        worst = max(worst, float(np.abs(prod - eye).max()) / scale ** 2)
    return worst
