"""Control systems, their prolongations, contact coframes and the total derivative."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import NotAControlSystem
from .symexpr import (
    ONE,
    TIME,
    ZERO,
    Expr,
    Kind,
    Sampler,
    Scope,
    Variable,
    add,
    derive,
    differentiate,
    generic_rank,
    is_identically_zero,
    mul,
    neg,
    sym,
)


@dataclass(frozen=True)
class ControlSystem:
    """An autonomous control system x' = f(x, u).

    A control ``u`` with ``order`` o stands for the jet ``u@o``; its higher
    jets ``u@(o+j)`` are the coordinates of the prolongations. ``boxes`` holds
    per-coordinate sampling intervals for systems whose maps are only defined
    on part of the default box.
    """

    name: str
    states: tuple[Variable, ...]
    controls: tuple[Variable, ...]
    dynamics: tuple[Expr, ...]
    boxes: tuple[tuple[Variable, tuple[float, float]], ...] = ()
    _dt_memo: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def m(self) -> int:
        return len(self.controls)

    @property
    def box_map(self) -> dict[Variable, tuple[float, float]]:
        return dict(self.boxes)

    def jet(self, alpha: int, level: int) -> Variable:
        """Coordinate of control ``alpha`` differentiated ``level`` times."""
        return self.controls[alpha].shifted(level).as_kind(Kind.CONTROL)

    def level_coordinates(self, level: int) -> list[Variable]:
        """Coordinates whose differentials anchor the level-``level`` contact forms."""
        if level == 0:
            return list(self.states)
        return [self.jet(a, level - 1) for a in range(self.m)]

    def coordinates(self, order: int = 0) -> list[Variable]:
        """Coordinates of the ``order``-th total prolongation, level by level."""
        out = list(self.states)
        for level in range(order + 1):
            out.extend(self.jet(a, level) for a in range(self.m))
        return out

    def scope(self, order: int | None = None, constants: Mapping[str, Expr] | None = None) -> Scope:
        """Parser scope over states and control jets up to ``order`` (unbounded if None)."""
        jets = {c.name: (c.order, order) for c in self.controls}
        return Scope(self.states, jets=jets, constants=constants)

    def rule(self, v: Variable) -> Expr:
        """Image of a coordinate under the total time derivative."""
        for x, f in zip(self.states, self.dynamics):
            if x == v:
                return f
        for c in self.controls:
            if c.name == v.name and v.order >= c.order:
                return sym(v.shifted(1).as_kind(Kind.CONTROL))
        if v == TIME:
            return ZERO
        raise ValueError(f"{v} is not a coordinate of any prolongation of {self.name}")

    def same_structure(self, other: ControlSystem) -> bool:
        """Equality up to the system name."""
        return (self.states == other.states and self.controls == other.controls
                and self.dynamics == other.dynamics)


def _check_layout(name, states, controls, dynamics) -> None:
    if not states:
        raise ValueError(f"system {name}: needs at least one state")
    if not controls:
        raise ValueError(f"system {name}: needs at least one control")
    if len(dynamics) != len(states):
        raise ValueError(f"system {name}: {len(states)} states but {len(dynamics)} dynamics")
    keys = [v.sort_key() for v in (*states, *controls)]
    if len(set(keys)) != len(keys):
        raise ValueError(f"system {name}: duplicate coordinate")
    bases = [c.name for c in controls]
    if len(set(bases)) != len(bases):
        raise ValueError(f"system {name}: two controls share the base name")
    for x in states:
        for c in controls:
            if x.name == c.name and x.order >= c.order:
                raise ValueError(f"system {name}: state {x} collides with jets of control {c}")
    allowed = set(states) | set(controls)
    for x, f in zip(states, dynamics):
        stray = [str(v) for v in f.free if v not in allowed]
        if stray:
            raise ValueError(f"system {name}: dynamics of {x} use undeclared {', '.join(sorted(stray))}")


def make_system(
    states: Sequence[Variable],
    controls: Sequence[Variable],
    dynamics: Sequence[Expr],
    name: str = "M",
    sampler: Sampler | None = None,
    boxes: Mapping[Variable, tuple[float, float]] | None = None,
) -> ControlSystem:
    """Validate and build a control system; the control Jacobian must have
    generic rank m."""
    states = tuple(v.as_kind(Kind.STATE) for v in states)
    controls = tuple(v.as_kind(Kind.CONTROL) for v in controls)
    dynamics = tuple(dynamics)
    _check_layout(name, states, controls, dynamics)
    box_items = tuple(sorted((boxes or {}).items(), key=lambda kv: kv[0].sort_key()))
    sys = ControlSystem(name, states, controls, dynamics, box_items)
    jac = [[differentiate(f, u) for u in controls] for f in dynamics]
    rank = generic_rank(jac, sampler or Sampler(), sys.box_map)
    if rank < len(controls):
        raise NotAControlSystem(
            f"system {name}: control Jacobian has generic rank {rank} < m = {len(controls)}")
    return sys


def total_prolong(sys: ControlSystem, k: int, name: str | None = None) -> ControlSystem:
    """Adjoin jets of all controls up to order k-1 as states."""
    if k < 0:
        raise ValueError("prolongation order must be nonnegative")
    if k == 0:
        return sys
    return partial_prolong(sys, {c.name: k for c in sys.controls}, name or f"{sys.name}^({k})",
                           level_major=True)


def partial_prolong(sys: ControlSystem, orders: Mapping[str, int], name: str | None = None,
                    level_major: bool = False) -> ControlSystem:
    """Adjoin ``orders[u]`` jets of each control ``u`` as states (u@o, u@o+1, ...)."""
    known = {c.name for c in sys.controls}
    unknown = set(orders) - known
    if unknown:
        raise ValueError(f"system {sys.name} has no control {', '.join(sorted(unknown))}")
    ks = [int(orders.get(c.name, 0)) for c in sys.controls]
    if any(k < 0 for k in ks):
        raise ValueError("prolongation orders must be nonnegative")
    if not any(ks):
        return sys
    if level_major:
        pairs = [(a, j) for j in range(max(ks)) for a in range(sys.m) if j < ks[a]]
    else:
        pairs = [(a, j) for a in range(sys.m) for j in range(ks[a])]
    new_states = [sys.jet(a, j).as_kind(Kind.STATE) for a, j in pairs]
    new_dyn = [sym(sys.jet(a, j + 1)) for a, j in pairs]
    controls = tuple(sys.jet(a, ks[a]) for a in range(sys.m))
    suffix = ",".join(f"{c.name}:{k}" for c, k in zip(sys.controls, ks))
    return ControlSystem(
        name or f"{sys.name}^({suffix})",
        sys.states + tuple(new_states),
        controls,
        sys.dynamics + tuple(new_dyn),
        sys.boxes,
    )


def total_derivative(sys: ControlSystem, e: Expr) -> Expr:
    """D_t e = sum f_i de/dx_i + sum u@(k+1) de/du@k (autonomous, so no t term)."""
    return derive(e, sys.rule, sys._dt_memo)


def iterated_total_derivative(sys: ControlSystem, e: Expr, k: int) -> list[Expr]:
    """[e, D_t e, ..., D_t^k e]."""
    out = [e]
    for _ in range(k):
        out.append(total_derivative(sys, out[-1]))
    return out


# --------------------------------------------------------------------------
# Forms
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OneForm:
    """a dt + sum_z c_z dz with finitely many nonzero coefficients."""

    dt: Expr
    coeffs: tuple[tuple[Variable, Expr], ...]

    @classmethod
    def of(cls, dt: Expr, coeffs: Mapping[Variable, Expr]) -> OneForm:
        items = tuple(sorted(((v, c) for v, c in coeffs.items() if c is not ZERO),
                             key=lambda vc: vc[0].sort_key()))
        return cls(dt, items)

    def terms(self) -> list[tuple[Variable, Expr]]:
        """All (basis, coefficient) pairs with dt written as d(TIME)."""
        out = list(self.coeffs)
        if self.dt is not ZERO:
            out.append((TIME, self.dt))
        return out

    def coefficient(self, v: Variable) -> Expr:
        if v == TIME:
            return self.dt
        for w, c in self.coeffs:
            if w == v:
                return c
        return ZERO

    def __str__(self) -> str:
        parts = [f"({c})*d{v}" for v, c in self.coeffs]
        if self.dt is not ZERO:
            parts.append(f"({self.dt})*dt")
        return " + ".join(parts) or "0"


@dataclass(frozen=True)
class Coframe:
    """Contact forms by level: level 0 has n forms, every other level m."""

    levels: tuple[tuple[OneForm, ...], ...]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def count(self) -> int:
        return sum(len(level) for level in self.levels)


def contact_coframe(sys: ControlSystem, depth: int) -> Coframe:
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    levels = [tuple(OneForm.of(neg(f), {x: ONE}) for x, f in zip(sys.states, sys.dynamics))]
    for k in range(1, depth + 1):
        levels.append(tuple(OneForm.of(neg(sym(sys.jet(a, k))), {sys.jet(a, k - 1): ONE})
                            for a in range(sys.m)))
    return Coframe(tuple(levels))


# Two-forms as {(a, b): coefficient of da ^ db} with a < b in sort order.
TwoForm = dict


def _key(v: Variable) -> tuple:
    # dt sorts first
    return (0, "", 0) if v == TIME else (1, *v.sort_key())


def _accumulate(out: TwoForm, a: Variable, b: Variable, c: Expr) -> None:
    if a == b or c is ZERO:
        return
    if _key(a) > _key(b):
        a, b, c = b, a, neg(c)
    out[(a, b)] = add(out.get((a, b), ZERO), c)


def exterior_derivative(form: OneForm) -> TwoForm:
    """d(sum c_z dz) = sum_w sum_z dc_z/dw dw ^ dz (coefficients are time independent)."""
    out: TwoForm = {}
    for z, c in form.terms():
        for w in c.free:
            _accumulate(out, w, z, differentiate(c, w))
    return out


def wedge(a: OneForm, b: OneForm) -> TwoForm:
    out: TwoForm = {}
    for v, c in a.terms():
        for w, d in b.terms():
            _accumulate(out, v, w, mul(c, d))
    return out


def structure_equation_residual(sys: ControlSystem, level: int) -> list[Expr]:
    """Coefficients of d(omega^k) + omega^(k+1) ^ dt for every form at level k >= 1.

    All of them vanish identically for a correctly built coframe.
    """
    if level < 1:
        raise ValueError("the structure equation is stated for levels >= 1")
    cf = contact_coframe(sys, level + 1)
    dt = OneForm.of(ONE, {})
    residual = []
    for form, nxt in zip(cf.levels[level], cf.levels[level + 1]):
        total = exterior_derivative(form)
        for key, c in wedge(nxt, dt).items():
            total[key] = add(total.get(key, ZERO), c)
        residual.extend(total.values())
    return residual


def check_structure_equation(sys: ControlSystem, level: int, sampler: Sampler | None = None) -> bool:
    s = sampler or Sampler()
    return all(is_identically_zero(r, s, sys.box_map) for r in structure_equation_residual(sys, level))


def parse_orders(text: str) -> dict[str, int]:
    """'u1=1,u2=2' or 'u1:1 u2:2' -> {'u1': 1, 'u2': 2}."""
    out = {}
    for chunk in text.replace(",", " ").split():
        sep = "=" if "=" in chunk else ":"
        name, _, value = chunk.partition(sep)
        if not value:
            raise ValueError(f"bad prolongation order {chunk!r}; expected name=k")
        out[name.strip()] = int(value)
    return out


def describe(sys: ControlSystem) -> list[str]:
    """Human-readable listing of the equations."""
    lines = [f"system {sys.name}: n = {sys.n}, m = {sys.m}",
             f"  controls: {', '.join(str(c) for c in sys.controls)}"]
    lines += [f"  d/dt {x} = {f}" for x, f in zip(sys.states, sys.dynamics)]
    return lines


def variables_of(items: Iterable[Expr]) -> set[Variable]:
    out: set[Variable] = set()
    for e in items:
        out |= e.free
    return out
