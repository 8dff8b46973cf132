"""Candidate equivalence maps between control systems and their verification.

A map Phi: M^(p) -> N is given by one expression per state and per control
of N, written over the coordinates of M prolonged p times. Its lift to the
jet levels of N is obtained by differentiating the control components along
the dynamics of M.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .errors import ControlCountMismatch
from .jetspace import ControlSystem, iterated_total_derivative, total_derivative
from .symexpr import (
    ZERO,
    Expr,
    Sampler,
    Variable,
    add,
    differentiate,
    generic_rank,
    neg,
    nonzero_witness,
    substitute_many,
    sym,
    zero_flags,
)


@dataclass(frozen=True)
class EquivalenceMap:
    source: ControlSystem
    target: ControlSystem
    order: int
    state_components: tuple[Expr, ...]
    control_components: tuple[Expr, ...]
    name: str = ""

    def __post_init__(self):
        label = self.name or f"{self.source.name}->{self.target.name}"
        if self.order < 0:
            raise ValueError(f"map {label}: order must be nonnegative")
        if len(self.state_components) != self.target.n:
            raise ValueError(f"map {label}: {len(self.state_components)} state components "
                             f"for {self.target.n} target states")
        if len(self.control_components) != self.target.m:
            raise ValueError(f"map {label}: {len(self.control_components)} control components "
                             f"for {self.target.m} target controls")
        allowed = set(self.source.coordinates(self.order))
        for e in self.components:
            stray = sorted(str(v) for v in e.free if v not in allowed)
            if stray:
                raise ValueError(f"map {label}: {', '.join(stray)} not coordinates of "
                                 f"{self.source.name} prolonged {self.order} times")

    @property
    def components(self) -> tuple[Expr, ...]:
        return self.state_components + self.control_components

    @property
    def target_coordinates(self) -> list[Variable]:
        return list(self.target.states) + list(self.target.controls)


@dataclass(frozen=True)
class EquivalencePair:
    phi: EquivalenceMap
    psi: EquivalenceMap
    name: str = ""

    def __post_init__(self):
        if self.phi.source.m != self.phi.target.m:
            raise ControlCountMismatch(
                f"{self.phi.source.name} has {self.phi.source.m} controls but "
                f"{self.phi.target.name} has {self.phi.target.m}; equivalent systems "
                "must have the same number of controls")
        if not (self.phi.source.same_structure(self.psi.target)
                and self.phi.target.same_structure(self.psi.source)):
            raise ValueError("phi and psi must map between the same two systems in opposite directions")

    @property
    def m(self) -> int:
        return self.phi.source.m

    @property
    def n1(self) -> int:
        return self.phi.source.n

    @property
    def n2(self) -> int:
        return self.phi.target.n


def lift(phi: EquivalenceMap, depth: int) -> dict[Variable, Expr]:
    """Induced map on target coordinates through control-jet level ``depth``."""
    out: dict[Variable, Expr] = dict(zip(phi.target.states, phi.state_components))
    towers = [iterated_total_derivative(phi.source, c, depth) for c in phi.control_components]
    for level in range(depth + 1):
        for a, tower in enumerate(towers):
            out[phi.target.jet(a, level)] = tower[level]
    return out


def prolong_map(phi: EquivalenceMap, depth: int) -> list[Expr]:
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    return list(lift(phi, depth).values())


def contact_residuals(phi: EquivalenceMap) -> list[Expr]:
    """dt-coefficients of the pulled-back level-0 target contact forms:
    D_t(phi_y) - g(phi) for each target state y with dynamics g."""
    level0 = lift(phi, 0)
    pulled = substitute_many(phi.target.dynamics, level0)
    return [add(total_derivative(phi.source, c), neg(g))
            for c, g in zip(phi.state_components, pulled)]


def submersion_rank(phi: EquivalenceMap, s: Sampler) -> int:
    coords = phi.source.coordinates(phi.order)
    jac = [[differentiate(c, z) for z in coords] for c in phi.components]
    return generic_rank(jac, s, phi.source.box_map)


def check_submersion(phi: EquivalenceMap, s: Sampler) -> bool:
    return submersion_rank(phi, s) == phi.target.n + phi.target.m


def check_contact_preservation(phi: EquivalenceMap, s: Sampler) -> bool:
    return all(zero_flags(contact_residuals(phi), s, phi.source.box_map))


def roundtrip_residuals(first: EquivalenceMap, second: EquivalenceMap) -> list[Expr]:
    """second o first^(q) minus the identity, one entry per state/control of first.source."""
    composed = substitute_many(second.components, lift(first, second.order))
    coords = first.source.states + first.source.controls
    return [add(e, neg(sym(z))) for e, z in zip(composed, coords)]


def check_roundtrip(pair: EquivalencePair, s: Sampler) -> bool:
    fwd = roundtrip_residuals(pair.phi, pair.psi)
    bwd = roundtrip_residuals(pair.psi, pair.phi)
    return (all(zero_flags(fwd, s, pair.phi.source.box_map))
            and all(zero_flags(bwd, s, pair.psi.source.box_map)))


def jet_dependence(phi: EquivalenceMap, s: Sampler) -> list[int]:
    """Per level 0..order, whether some component genuinely depends on that
    level's control jets (1) or not (0)."""
    src = phi.source
    out = []
    for level in range(phi.order + 1):
        parts = [differentiate(c, src.jet(a, level)) for c in phi.components for a in range(src.m)]
        live = [d for d in parts if d is not ZERO]
        out.append(int(bool(live) and not all(zero_flags(live, s, src.box_map))))
    return out


def effective_order(phi: EquivalenceMap, s: Sampler) -> int:
    """Smallest k with no genuine dependence on control jets above level k."""
    dep = jet_dependence(phi, s)
    levels = [k for k, d in enumerate(dep) if d]
    return max(levels) if levels else 0


def _point_json(pt: dict[Variable, float] | None) -> dict[str, float] | None:
    if pt is None:
        return None
    return {str(v): round(x, 12) for v, x in sorted(pt.items(), key=lambda kv: kv[0].sort_key())}


@dataclass
class MapChecks:
    name: str
    declared_order: int
    effective_order: int
    submersion_ok: bool
    contact_ok: bool
    minimal_order_ok: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "declared_order": self.declared_order,
            "effective_order": self.effective_order,
            "submersion_ok": self.submersion_ok,
            "contact_ok": self.contact_ok,
            "minimal_order_ok": self.minimal_order_ok,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> MapChecks:
        return cls(**d)


@dataclass
class VerificationReport:
    """Outcome of all checks on a candidate pair.

    ``balance`` compares n1 + p with n2 + q; for two controls the equality is
    a known necessary condition, for other m it is shown for reference. It is
    informational and does not enter the verdict.
    """

    pair: str
    height: tuple[int, int]
    n1: int
    n2: int
    m: int
    phi: MapChecks
    psi: MapChecks
    roundtrip_ok: dict[str, bool]
    p_q_consistency: bool | None
    balance: dict[str, Any]
    failures: list[str] = field(default_factory=list)
    failure_witness: dict[str, float] | None = None
    seed: int = 42
    trials: int = 5

    @property
    def ok(self) -> bool:
        flags = [self.phi.submersion_ok, self.phi.contact_ok, self.phi.minimal_order_ok,
                 self.psi.submersion_ok, self.psi.contact_ok, self.psi.minimal_order_ok,
                 *self.roundtrip_ok.values()]
        if self.p_q_consistency is not None:
            flags.append(self.p_q_consistency)
        return all(flags)

    def to_dict(self) -> dict[str, Any]:
        return {
            "pair": self.pair,
            "verdict": "pass" if self.ok else "fail",
            "height": list(self.height),
            "n1": self.n1,
            "n2": self.n2,
            "m": self.m,
            "phi": self.phi.to_dict(),
            "psi": self.psi.to_dict(),
            "roundtrip_ok": dict(self.roundtrip_ok),
            "p_q_consistency": self.p_q_consistency,
            "balance": dict(self.balance),
            "failures": list(self.failures),
            "failure_witness": self.failure_witness,
            "seed": self.seed,
            "trials": self.trials,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> VerificationReport:
        return cls(
            pair=d["pair"],
            height=tuple(d["height"]),
            n1=d["n1"],
            n2=d["n2"],
            m=d["m"],
            phi=MapChecks.from_dict(d["phi"]),
            psi=MapChecks.from_dict(d["psi"]),
            roundtrip_ok=dict(d["roundtrip_ok"]),
            p_q_consistency=d["p_q_consistency"],
            balance=dict(d["balance"]),
            failures=list(d["failures"]),
            failure_witness=d["failure_witness"],
            seed=d["seed"],
            trials=d["trials"],
        )

    def lines(self) -> list[str]:
        def flag(b):
            return "ok" if b else "FAIL"

        p, q = self.height
        out = [f"pair {self.pair}: {'PASS' if self.ok else 'FAIL'}",
               f"  height (p, q) = ({p}, {q});  n1 = {self.n1}, n2 = {self.n2}, m = {self.m}"]
        for label, mc in (("phi", self.phi), ("psi", self.psi)):
            out.append(f"  {label} {mc.name}: submersion {flag(mc.submersion_ok)}, "
                       f"contact {flag(mc.contact_ok)}, order {mc.effective_order}/"
                       f"{mc.declared_order} {flag(mc.minimal_order_ok)}")
        for k, v in self.roundtrip_ok.items():
            out.append(f"  roundtrip {k}: {flag(v)}")
        if self.p_q_consistency is not None:
            out.append(f"  height dichotomy (n1 = n2): {flag(self.p_q_consistency)}")
        b = self.balance
        out.append(f"  balance n1 + p = {b['lhs']}, n2 + q = {b['rhs']}: "
                   f"{'equal' if b['holds'] else 'different'}"
                   f"{' (required for m = 2)' if b['required'] else ''}")
        if self.failures:
            out.append(f"  failed checks: {', '.join(self.failures)}")
        if self.failure_witness:
            pt = ", ".join(f"{k}={v:.6g}" for k, v in self.failure_witness.items())
            out.append(f"  witness: {pt}")
        return out


def _map_checks(phi: EquivalenceMap, s: Sampler) -> MapChecks:
    eff = effective_order(phi, s)
    return MapChecks(
        name=phi.name or f"{phi.source.name}->{phi.target.name}",
        declared_order=phi.order,
        effective_order=eff,
        submersion_ok=check_submersion(phi, s),
        contact_ok=check_contact_preservation(phi, s),
        minimal_order_ok=eff == phi.order,
    )


def verify_equivalence(pair: EquivalencePair, s: Sampler) -> VerificationReport:
    phi_c = _map_checks(pair.phi, s)
    psi_c = _map_checks(pair.psi, s)
    fwd = roundtrip_residuals(pair.phi, pair.psi)
    bwd = roundtrip_residuals(pair.psi, pair.phi)
    rt = {
        "psi_after_phi": all(zero_flags(fwd, s, pair.phi.source.box_map)),
        "phi_after_psi": all(zero_flags(bwd, s, pair.psi.source.box_map)),
    }
    p, q = phi_c.effective_order, psi_c.effective_order
    n1, n2 = pair.n1, pair.n2
    dichotomy = None
    if n1 == n2:
        dichotomy = (p == 0 and q == 0) or (p > 0 and q > 0)
    balance = {"lhs": n1 + p, "rhs": n2 + q, "holds": n1 + p == n2 + q, "required": pair.m == 2}

    failures: list[str] = []
    witness = None
    checks = [
        ("phi submersion", phi_c.submersion_ok, None),
        ("phi contact", phi_c.contact_ok, (contact_residuals(pair.phi), pair.phi.source)),
        ("phi minimal order", phi_c.minimal_order_ok, None),
        ("psi submersion", psi_c.submersion_ok, None),
        ("psi contact", psi_c.contact_ok, (contact_residuals(pair.psi), pair.psi.source)),
        ("psi minimal order", psi_c.minimal_order_ok, None),
        ("roundtrip psi o phi", rt["psi_after_phi"], (fwd, pair.phi.source)),
        ("roundtrip phi o psi", rt["phi_after_psi"], (bwd, pair.psi.source)),
        ("height dichotomy", dichotomy is not False, None),
    ]
    for label, ok, residual in checks:
        if ok:
            continue
        failures.append(label)
        if residual is not None and witness is None:
            exprs, system = residual
            witness = _point_json(nonzero_witness(exprs, s, system.box_map))

    return VerificationReport(
        pair=pair.name or f"{pair.phi.source.name}<->{pair.phi.target.name}",
        height=(p, q), n1=n1, n2=n2, m=pair.m, phi=phi_c, psi=psi_c,
        roundtrip_ok=rt, p_q_consistency=dichotomy, balance=balance,
        failures=failures, failure_witness=witness, seed=s.seed, trials=s.trials,
    )


def identity_map(system: ControlSystem, target: ControlSystem | None = None, name: str = "") -> EquivalenceMap:
    """Coordinate identity from ``system`` onto a system with the same layout."""
    target = target or system
    return EquivalenceMap(system, target, 0, tuple(sym(x) for x in system.states),
                          tuple(sym(u) for u in system.controls), name or f"id:{system.name}")


def composed_components(outer: EquivalenceMap, inner: EquivalenceMap) -> list[Expr]:
    """Components of outer o inner^(outer.order)."""
    return substitute_many(outer.components, lift(inner, outer.order))


__all__ = [
    "EquivalenceMap", "EquivalencePair", "VerificationReport", "MapChecks", "lift",
    "prolong_map", "contact_residuals", "check_submersion", "check_contact_preservation",
    "roundtrip_residuals", "check_roundtrip", "effective_order", "verify_equivalence",
    "identity_map", "jet_dependence", "submersion_rank", "composed_components",
]
