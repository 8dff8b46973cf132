"""Problem files: systems, maps and pairs in an INI-style text format.

Example::

    [sampler]
    seed = 42

    [params]
    e = 1/2

    [system M]
    states = [x1, x2]
    controls = [u]
    dynamics.x1 = "x2"
    dynamics.x2 = "u"

    [system M1]
    prolong = M
    order = 1

    [map Phi]
    from = M
    to = N
    order = 2
    let.w = "u@1 + x1"
    state.y1 = "w"
    control.v = "u@2"

    [pair main]
    phi = Phi
    psi = Psi

Besides ``order``, a derived system may give ``orders = u1:1, u2:2`` for a
partial prolongation. ``box.<var> = [lo, hi]`` narrows the sampling interval
of one coordinate.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .equivmap import EquivalenceMap, EquivalencePair
from .errors import ParseError, ProblemFileError
from .jetspace import ControlSystem, make_system, parse_orders, partial_prolong, total_prolong
from .symexpr import Const, Expr, Kind, Sampler, Scope, Variable, parse_expr

_VAR = re.compile(r"^([A-Za-z_][A-Za-z_0-9]*)(?:@(\d+))?$")


@dataclass
class ProblemFile:
    name: str
    systems: dict[str, ControlSystem] = field(default_factory=dict)
    maps: dict[str, EquivalenceMap] = field(default_factory=dict)
    pairs: dict[str, EquivalencePair] = field(default_factory=dict)
    params: dict[str, Expr] = field(default_factory=dict)
    seed: int = 42
    trials: int = 5
    box: tuple[float, float] = (-2.0, 2.0)
    text: str = ""

    def sampler(self, seed: int | None = None, trials: int | None = None) -> Sampler:
        return Sampler(seed=self.seed if seed is None else seed,
                       box=self.box, trials=self.trials if trials is None else trials)

    def pair(self, name: str | None = None) -> EquivalencePair:
        if not self.pairs:
            raise ProblemFileError(f"{self.name} defines no pairs")
        if name is None:
            return next(iter(self.pairs.values()))
        try:
            return self.pairs[name]
        except KeyError:
            raise ProblemFileError(
                f"{self.name} has no pair {name!r}; available: {', '.join(self.pairs)}") from None

    def system(self, name: str) -> ControlSystem:
        try:
            return self.systems[name]
        except KeyError:
            raise ProblemFileError(
                f"{self.name} has no system {name!r}; available: {', '.join(self.systems)}") from None


def _unquote(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def _list(value: str) -> list[str]:
    value = value.strip()
    if value.startswith("[") and value.endswith("]"):
        value = value[1:-1]
    return [item.strip() for item in value.split(",") if item.strip()]


def _variable(text: str, kind: Kind) -> Variable:
    m = _VAR.match(text)
    if m is None:
        raise ProblemFileError(f"bad variable name {text!r}")
    return Variable(m.group(1), int(m.group(2) or 0), kind)


def _interval(text: str) -> tuple[float, float]:
    parts = _list(text)
    if len(parts) != 2:
        raise ProblemFileError(f"interval needs two numbers, got {text!r}")
    lo, hi = (float(p) for p in parts)
    if not lo < hi:
        raise ProblemFileError(f"empty interval {text!r}")
    return lo, hi


def _split_sections(cp: configparser.ConfigParser) -> dict[str, dict[str, configparser.SectionProxy]]:
    out: dict[str, dict[str, configparser.SectionProxy]] = {"system": {}, "map": {}, "pair": {}}
    for section in cp.sections():
        head, _, name = section.partition(" ")
        name = name.strip()
        if head in out:
            if not name:
                raise ProblemFileError(f"section [{section}] needs a name")
            out[head][name] = cp[section]
        elif head not in ("sampler", "params"):
            raise ProblemFileError(f"unknown section [{section}]")
    return out


def parse_problem(text: str, name: str = "<input>") -> ProblemFile:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=name)
    except configparser.Error as exc:
        raise ProblemFileError(f"{name}: {exc}") from None
    prob = ProblemFile(name=name, text=text)
    try:
        _fill(prob, cp)
    except ParseError as exc:
        raise type(exc)(f"{name}: {exc}") from None
    except ValueError as exc:
        raise ProblemFileError(f"{name}: {exc}") from None
    return prob


def _fill(prob: ProblemFile, cp: configparser.ConfigParser) -> None:
    if cp.has_section("sampler"):
        sec = cp["sampler"]
        prob.seed = sec.getint("seed", prob.seed)
        prob.trials = sec.getint("trials", prob.trials)
        if "box" in sec:
            prob.box = _interval(sec["box"])
    if cp.has_section("params"):
        for key, value in cp["params"].items():
            e = parse_expr(_unquote(value), Scope(constants=prob.params))
            if not isinstance(e, Const):
                raise ProblemFileError(f"parameter {key} must be a constant")
            prob.params[key] = e
    sections = _split_sections(cp)
    sampler = prob.sampler()
    building: set[str] = set()

    def build_system(sname: str) -> ControlSystem:
        if sname in prob.systems:
            return prob.systems[sname]
        if sname not in sections["system"]:
            raise ProblemFileError(f"unknown system {sname!r}")
        if sname in building:
            raise ProblemFileError(f"system {sname!r} is defined in terms of itself")
        building.add(sname)
        sec = sections["system"][sname]
        boxes = {}
        for key, value in sec.items():
            if key.startswith("box."):
                boxes[_variable(key[4:], Kind.STATE)] = _interval(value)
        if "prolong" in sec:
            base = build_system(sec["prolong"].strip())
            if "orders" in sec:
                sys = partial_prolong(base, parse_orders(sec["orders"]), sname)
            else:
                sys = total_prolong(base, int(sec.get("order", "1")), sname)
            if sys is base:
                sys = ControlSystem(sname, base.states, base.controls, base.dynamics, base.boxes)
            if boxes:
                merged = {**sys.box_map, **boxes}
                sys = ControlSystem(sys.name, sys.states, sys.controls, sys.dynamics,
                                    tuple(sorted(merged.items(), key=lambda kv: kv[0].sort_key())))
        else:
            for req in ("states", "controls"):
                if req not in sec:
                    raise ProblemFileError(f"system {sname}: missing {req!r}")
            states = [_variable(v, Kind.STATE) for v in _list(sec["states"])]
            controls = [_variable(v, Kind.CONTROL) for v in _list(sec["controls"])]
            scope = Scope([*states, *controls], constants=prob.params)
            dynamics = []
            for x in states:
                key = f"dynamics.{x}"
                if key not in sec:
                    raise ProblemFileError(f"system {sname}: missing {key}")
                dynamics.append(parse_expr(_unquote(sec[key]), scope))
            declared = {f"dynamics.{x}" for x in states}
            extra = [k for k in sec if k.startswith("dynamics.") and k not in declared]
            if extra:
                raise ProblemFileError(f"system {sname}: {extra[0]} names no state")
            sys = make_system(states, controls, dynamics, sname, sampler, boxes)
        building.discard(sname)
        prob.systems[sname] = sys
        return sys

    for sname in sections["system"]:
        build_system(sname)

    for mname, sec in sections["map"].items():
        for req in ("from", "to", "order"):
            if req not in sec:
                raise ProblemFileError(f"map {mname}: missing {req!r}")
        src = build_system(sec["from"].strip())
        tgt = build_system(sec["to"].strip())
        order = int(sec["order"])
        scope = src.scope(order, prob.params)
        lets: dict[str, Expr] = {}
        for key, value in sec.items():
            if key.startswith("let."):
                lets[key[4:]] = parse_expr(_unquote(value), scope.with_definitions(lets))
        scope = scope.with_definitions(lets)

        def component(prefix: str, var: Variable) -> Expr:
            key = f"{prefix}.{var}"
            if key not in sec:
                raise ProblemFileError(f"map {mname}: missing {key}")
            return parse_expr(_unquote(sec[key]), scope)

        known = {f"state.{x}" for x in tgt.states} | {f"control.{u}" for u in tgt.controls}
        for key in sec:
            if key.startswith(("state.", "control.")) and key not in known:
                raise ProblemFileError(f"map {mname}: {key} is not a coordinate of {tgt.name}")
        prob.maps[mname] = EquivalenceMap(
            src, tgt, order,
            tuple(component("state", x) for x in tgt.states),
            tuple(component("control", u) for u in tgt.controls),
            mname,
        )

    for pname, sec in sections["pair"].items():
        refs = []
        for role in ("phi", "psi"):
            ref = sec.get(role, "").strip()
            if ref not in prob.maps:
                raise ProblemFileError(f"pair {pname}: unknown map {ref!r} for {role}")
            refs.append(prob.maps[ref])
        prob.pairs[pname] = EquivalencePair(refs[0], refs[1], pname)


def builtin_names() -> list[str]:
    files = resources.files("dyneq").joinpath("corpus")
    return sorted(p.name[:-4] for p in files.iterdir() if p.name.endswith(".ini"))


def builtin_text(name: str) -> str:
    res = resources.files("dyneq").joinpath("corpus", f"{name}.ini")
    if not res.is_file():
        raise ProblemFileError(f"no builtin example {name!r}; available: {', '.join(builtin_names())}")
    return res.read_text(encoding="utf-8")


def load_problem(source: str) -> ProblemFile:
    """Read a problem from a file path, or from the builtin corpus by name."""
    path = Path(source)
    if path.is_file():
        return parse_problem(path.read_text(encoding="utf-8"), str(path))
    if source in builtin_names():
        return parse_problem(builtin_text(source), source)
    raise ProblemFileError(f"{source!r} is neither a file nor a builtin example "
                           f"({', '.join(builtin_names())})")


__all__ = ["ProblemFile", "parse_problem", "load_problem", "builtin_names", "builtin_text"]
