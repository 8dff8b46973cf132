"""Minimal symbolic expressions over jet coordinates.

Expressions are immutable, hash-consed DAG nodes: structurally identical
subexpressions are the same Python object, so identity comparison is
structural comparison and derivatives/evaluations can be memoized per node.

Simplification is deliberately shallow (constant folding, flattening of
sums and products). Deciding whether an expression vanishes is left to
randomized evaluation, see :func:`is_identically_zero`.
"""

from __future__ import annotations

import enum
import re
import threading
import weakref
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateSampling, ParseError, SingularPoint, UnknownIdentifier

ZERO_ATOL = 1e-9
ZERO_RTOL = 1e-9
RANK_RTOL = 1e-8
SINGULAR_GUARD = 1e-3
MAX_RESAMPLES = 20


class Kind(enum.Enum):
    TIME = "time"
    STATE = "state"
    CONTROL = "control-jet"


@dataclass(frozen=True)
class Variable:
    """A coordinate. Identity is ``(name, order)``; ``kind`` is the role it
    plays in the system that declared it and is not part of equality."""

    name: str
    order: int = 0
    kind: Kind = field(default=Kind.STATE, compare=False)

    def __str__(self) -> str:
        return self.name if self.order == 0 else f"{self.name}@{self.order}"

    def __repr__(self) -> str:
        return f"Variable({self})"

    def sort_key(self) -> tuple[str, int]:
        return (self.name, self.order)

    def shifted(self, k: int) -> Variable:
        return Variable(self.name, self.order + k, self.kind)

    def as_kind(self, kind: Kind) -> Variable:
        return Variable(self.name, self.order, kind)


TIME = Variable("t", 0, Kind.TIME)

# Point: assignment of real numbers to variables.
Point = Mapping[Variable, float]


# --------------------------------------------------------------------------
# Nodes
# --------------------------------------------------------------------------

_EMPTY: frozenset = frozenset()
_TABLE: weakref.WeakValueDictionary = weakref.WeakValueDictionary()
_LOCK = threading.Lock()


class Expr:
    __slots__ = ("args", "free", "_dcache", "__weakref__")
    precedence = 5

    args: tuple[Expr, ...]
    free: frozenset

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return add(self, neg(_coerce(other)))

    def __rsub__(self, other):
        return add(_coerce(other), neg(self))

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("only integer powers are supported")
        return power(self, n)

    def __repr__(self) -> str:
        return f"Expr({to_string(self)})"

    def __str__(self) -> str:
        return to_string(self)


class Const(Expr):
    __slots__ = ("value",)
    value: Fraction

    @property
    def precedence(self):  # type: ignore[override]
        v = self.value
        return 5 if v >= 0 and v.denominator == 1 else 2


class Sym(Expr):
    __slots__ = ("var",)
    var: Variable


class Add(Expr):
    __slots__ = ()
    precedence = 1


class Mul(Expr):
    __slots__ = ()
    precedence = 2


class Div(Expr):
    __slots__ = ()
    precedence = 2


class Pow(Expr):
    __slots__ = ("exp",)
    precedence = 4
    exp: int


class Sin(Expr):
    __slots__ = ()


class Cos(Expr):
    __slots__ = ()


class Atan2(Expr):
    __slots__ = ()


def _intern(cls, key, args: tuple, **payload) -> Expr:
    k = (cls, key)
    node = _TABLE.get(k)
    if node is not None:
        return node
    with _LOCK:
        node = _TABLE.get(k)
        if node is None:
            node = object.__new__(cls)
            node.args = args
            node._dcache = None
            for name, value in payload.items():
                setattr(node, name, value)
            if cls is Sym:
                node.free = frozenset((payload["var"],))
            elif not args:
                node.free = _EMPTY
            elif len(args) == 1:
                node.free = args[0].free
            else:
                node.free = frozenset().union(*(a.free for a in args))
            _TABLE[k] = node
    return node


def const(value) -> Const:
    if isinstance(value, Const):
        return value
    if isinstance(value, float):
        if not np.isfinite(value):
            raise ValueError(f"non-finite constant {value}")
    v = Fraction(value)
    return _intern(Const, v, (), value=v)


def sym(var: Variable) -> Sym:
    return _intern(Sym, var, (), var=var)


ZERO = const(0)
ONE = const(1)
MINUS_ONE = const(-1)


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, Variable):
        return sym(x)
    if isinstance(x, (int, float, Fraction)):
        return const(x)
    raise TypeError(f"cannot make an expression from {type(x).__name__}")


def add(*terms: Expr) -> Expr:
    flat: list[Expr] = []
    c = Fraction(0)
    for t in terms:
        if isinstance(t, Add):
            for s in t.args:
                if isinstance(s, Const):
                    c += s.value
                else:
                    flat.append(s)
        elif isinstance(t, Const):
            c += t.value
        else:
            flat.append(t)
    if c != 0:
        flat.insert(0, const(c))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    args = tuple(flat)
    return _intern(Add, args, args)


def mul(*factors: Expr) -> Expr:
    flat: list[Expr] = []
    c = Fraction(1)
    for f in factors:
        if isinstance(f, Mul):
            for s in f.args:
                if isinstance(s, Const):
                    c *= s.value
                else:
                    flat.append(s)
        elif isinstance(f, Const):
            c *= f.value
        else:
            flat.append(f)
        if c == 0:
            return ZERO
    if c != 1:
        flat.insert(0, const(c))
    if not flat:
        return ONE
    if len(flat) == 1:
        return flat[0]
    args = tuple(flat)
    return _intern(Mul, args, args)


def neg(e: Expr) -> Expr:
    return mul(MINUS_ONE, e)


def power(base: Expr, n: int) -> Expr:
    if n == 0:
        return ONE
    if n == 1:
        return base
    if isinstance(base, Const) and not (base.value == 0 and n < 0):
        return const(base.value**n)
    return _intern(Pow, (base, n), (base,), exp=n)


def div(num: Expr, den: Expr) -> Expr:
    if isinstance(den, Const) and den.value != 0:
        return mul(const(1 / den.value), num)
    if num is ZERO:
        return ZERO
    args = (num, den)
    return _intern(Div, args, args)


def sin(a: Expr) -> Expr:
    if a is ZERO:
        return ZERO
    return _intern(Sin, (a,), (a,))


def cos(a: Expr) -> Expr:
    if a is ZERO:
        return ONE
    return _intern(Cos, (a,), (a,))


def atan2(y: Expr, x: Expr) -> Expr:
    args = (y, x)
    return _intern(Atan2, args, args)


# --------------------------------------------------------------------------
# Traversal, substitution, differentiation
# --------------------------------------------------------------------------


def postorder(roots: Iterable[Expr], descend: Callable[[Expr], bool] | None = None) -> list[Expr]:
    """Unique nodes reachable from ``roots``, children before parents.

    Iterative, so deep derivative towers do not hit the recursion limit.
    Nodes for which ``descend`` is false are emitted without their children.
    """
    seen: set[int] = set()
    out: list[Expr] = []
    for root in roots:
        if id(root) in seen:
            continue
        stack: list[tuple[Expr, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                out.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            if descend is None or descend(node):
                for child in reversed(node.args):
                    if id(child) not in seen:
                        stack.append((child, False))
    return out


def rebuild(node: Expr, args: Sequence[Expr]) -> Expr:
    """Same operator as ``node`` applied to new arguments."""
    if isinstance(node, Add):
        return add(*args)
    if isinstance(node, Mul):
        return mul(*args)
    if isinstance(node, Pow):
        return power(args[0], node.exp)
    if isinstance(node, Div):
        return div(args[0], args[1])
    if isinstance(node, Sin):
        return sin(args[0])
    if isinstance(node, Cos):
        return cos(args[0])
    if isinstance(node, Atan2):
        return atan2(args[0], args[1])
    return node


def substitute(e: Expr, mapping: Mapping[Variable, Expr]) -> Expr:
    """Simultaneous substitution of variables by expressions."""
    return substitute_many([e], mapping)[0]


def substitute_many(exprs: Sequence[Expr], mapping: Mapping[Variable, Expr]) -> list[Expr]:
    if not mapping:
        return list(exprs)
    keys = frozenset(mapping)
    memo: dict[int, Expr] = {}
    nodes = postorder(exprs, descend=lambda n: not n.free.isdisjoint(keys))
    for node in nodes:
        if node.free.isdisjoint(keys):
            memo[id(node)] = node
        elif isinstance(node, Sym):
            memo[id(node)] = _coerce(mapping[node.var])
        else:
            memo[id(node)] = rebuild(node, [memo[id(a)] for a in node.args])
    return [memo[id(e)] for e in exprs]


def derive(
    e: Expr,
    rule: Callable[[Variable], Expr],
    memo: dict | None = None,
    relevant: Callable[[Expr], bool] | None = None,
) -> Expr:
    """Apply the derivation that sends each variable ``v`` to ``rule(v)``.

    Covers both partial derivatives (``rule`` is an indicator) and total
    derivatives along a vector field. ``memo`` maps nodes to results and may
    be shared between calls that use the same rule.
    """
    if memo is None:
        memo = {}
    if relevant is None:
        relevant = lambda n: bool(n.free)  # noqa: E731
    for node in postorder([e], descend=lambda n: n not in memo and relevant(n)):
        if node in memo:
            continue
        if not relevant(node):
            memo[node] = ZERO
            continue
        memo[node] = _derive_node(node, rule, [memo[a] for a in node.args])
    return memo[e]


def _derive_node(node: Expr, rule, d: list[Expr]) -> Expr:
    if isinstance(node, Sym):
        return rule(node.var)
    if isinstance(node, Const):
        return ZERO
    a = node.args
    if isinstance(node, Add):
        return add(*d)
    if isinstance(node, Mul):
        terms = []
        for i, di in enumerate(d):
            if di is ZERO:
                continue
            terms.append(mul(*a[:i], di, *a[i + 1:]))
        return add(*terms)
    if isinstance(node, Pow):
        if d[0] is ZERO:
            return ZERO
        return mul(const(node.exp), power(a[0], node.exp - 1), d[0])
    if isinstance(node, Div):
        num, den = a
        dn, dd = d
        first = div(dn, den) if dn is not ZERO else ZERO
        second = neg(div(mul(num, dd), power(den, 2))) if dd is not ZERO else ZERO
        return add(first, second)
    if isinstance(node, Sin):
        return mul(cos(a[0]), d[0])
    if isinstance(node, Cos):
        return neg(mul(sin(a[0]), d[0]))
    if isinstance(node, Atan2):
        y, x = a
        dy, dx = d
        return div(add(mul(x, dy), neg(mul(y, dx))), add(power(y, 2), power(x, 2)))
    raise TypeError(f"unknown node {type(node).__name__}")


class _PartialMemo(dict):
    """Derivative memo that also consults per-node caches for one variable."""

    def __init__(self, var: Variable):
        super().__init__()
        self.var = var

    def __contains__(self, node) -> bool:
        return dict.__contains__(self, node) or (node._dcache is not None and self.var in node._dcache)

    def __getitem__(self, node):
        if dict.__contains__(self, node):
            return dict.__getitem__(self, node)
        return node._dcache[self.var]


def differentiate(e: Expr, v: Variable) -> Expr:
    """Exact partial derivative by structural rules."""
    if v not in e.free:
        return ZERO
    if e._dcache is not None and v in e._dcache:
        return e._dcache[v]
    memo = _PartialMemo(v)
    result = derive(e, lambda w: ONE if w == v else ZERO, memo, lambda n: v in n.free)
    for node, value in dict.items(memo):
        if node._dcache is None:
            node._dcache = {}
        node._dcache[v] = value
    return result


def free_variables(e: Expr) -> list[Variable]:
    return sorted(e.free, key=Variable.sort_key)


# --------------------------------------------------------------------------
# Printing
# --------------------------------------------------------------------------


def _const_str(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    return f"{v.numerator}/{v.denominator}"


def to_string(e: Expr) -> str:
    """Render in the input grammar; ``parse_expr(to_string(e))`` rebuilds ``e``
    up to constant folding."""
    out: dict[int, str] = {}
    for node in postorder([e]):
        out[id(node)] = _render(node, out)
    return out[id(e)]


def _wrap(child: Expr, out: dict[int, str], min_prec: int) -> str:
    s = out[id(child)]
    if child.precedence < min_prec:
        return f"({s})"
    return s


def _render(node: Expr, out: dict[int, str]) -> str:
    if isinstance(node, Const):
        return _const_str(node.value)
    if isinstance(node, Sym):
        return str(node.var)
    if isinstance(node, Add):
        parts = []
        for i, t in enumerate(node.args):
            negative, body = _split_sign(t, out)
            if i == 0:
                parts.append(f"-{body}" if negative else body)
            else:
                parts.append(f" - {body}" if negative else f" + {body}")
        return "".join(parts)
    if isinstance(node, Mul):
        negative, body = _split_sign(node, out)
        return f"-{body}" if negative else body
    if isinstance(node, Div):
        num, den = node.args
        return f"{_wrap(num, out, 2)}/{_wrap(den, out, 3)}"
    if isinstance(node, Pow):
        return f"{_wrap(node.args[0], out, 5)}^{node.exp}"
    if isinstance(node, Sin):
        return f"sin({out[id(node.args[0])]})"
    if isinstance(node, Cos):
        return f"cos({out[id(node.args[0])]})"
    if isinstance(node, Atan2):
        return f"atan2({out[id(node.args[0])]}, {out[id(node.args[1])]})"
    raise TypeError(type(node).__name__)


def _split_sign(t: Expr, out: dict[int, str]) -> tuple[bool, str]:
    """Pull a leading negative coefficient out of a term for infix printing."""
    if isinstance(t, Const) and t.value < 0:
        return True, _const_str(-t.value) if t.value.denominator == 1 else f"({_const_str(-t.value)})"
    if isinstance(t, Mul):
        factors = list(t.args)
        negative = False
        if isinstance(factors[0], Const) and factors[0].value < 0:
            negative = True
            c = -factors[0].value
            if c == 1:
                factors = factors[1:]
            else:
                factors[0] = const(c)
        rendered = []
        for f in factors:
            if isinstance(f, Const):
                s = _const_str(f.value)
                rendered.append(f"({s})" if f.value.denominator != 1 else s)
            else:
                rendered.append(_wrap(f, out, 3))
        return negative, "*".join(rendered)
    return False, _wrap(t, out, 2) if isinstance(t, Add) else out[id(t)]


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),@]))"
)
_FUNCTIONS = {"sin": 1, "cos": 1, "atan2": 2}


class Scope:
    """Identifier resolution for the parser.

    ``variables`` maps ``(name, order)`` to declared variables. ``jets`` maps a
    control base name to ``(base order, max level or None)`` so that every jet
    ``name@k`` with ``base <= k <= base + max level`` resolves. ``constants``
    and ``definitions`` are substituted at parse time.
    """

    def __init__(
        self,
        variables: Iterable[Variable] = (),
        jets: Mapping[str, tuple[int, int | None]] | None = None,
        constants: Mapping[str, Expr] | None = None,
        definitions: Mapping[str, Expr] | None = None,
    ):
        self.variables = {v.sort_key(): v for v in variables}
        self.jets = dict(jets or {})
        self.constants = dict(constants or {})
        self.definitions = dict(definitions or {})

    def resolve(self, name: str, order: int | None) -> Expr:
        if order is None:
            if name in self.definitions:
                return self.definitions[name]
            if name in self.constants:
                return self.constants[name]
            order = 0
        v = self.variables.get((name, order))
        if v is not None:
            return sym(v)
        if name in self.jets:
            base, top = self.jets[name]
            if order >= base and (top is None or order - base <= top):
                return sym(Variable(name, order, Kind.CONTROL))
        label = name if order == 0 else f"{name}@{order}"
        raise UnknownIdentifier(f"unknown identifier {label!r}")

    def with_definitions(self, definitions: Mapping[str, Expr]) -> Scope:
        s = Scope(constants=self.constants, definitions={**self.definitions, **definitions})
        s.variables = self.variables
        s.jets = self.jets
        return s

    @classmethod
    def of(cls, variables: Iterable[Variable], constants: Mapping[str, float] | None = None) -> Scope:
        return cls(variables, constants={k: const(v) for k, v in (constants or {}).items()})


class _Parser:
    def __init__(self, text: str, scope: Scope):
        self.text = text
        self.scope = scope
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                if text[pos:].strip() == "":
                    break
                raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
            kind = m.lastgroup
            if kind is None:
                break
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.i = 0

    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def at(self, value: str) -> bool:
        t = self.peek()
        return t is not None and t[0] == "op" and t[1] == value

    def take(self) -> tuple[str, str, int]:
        t = self.peek()
        if t is None:
            raise ParseError("unexpected end of input", len(self.text), self.text)
        self.i += 1
        return t

    def expect(self, value: str) -> None:
        t = self.peek()
        if t is None or t[1] != value:
            where = t[2] if t else len(self.text)
            raise ParseError(f"expected {value!r}", where, self.text)
        self.i += 1

    def integer(self) -> int:
        sign = 1
        if self.at("-"):
            self.take()
            sign = -1
        t = self.take()
        if t[0] != "num" or not t[1].isdigit():
            raise ParseError("expected integer", t[2], self.text)
        return sign * int(t[1])

    def parse(self) -> Expr:
        if not self.tokens:
            raise ParseError("empty expression", 0, self.text)
        e = self.expr()
        t = self.peek()
        if t is not None:
            raise ParseError(f"unexpected {t[1]!r}", t[2], self.text)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.at("+") or self.at("-"):
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else add(e, neg(rhs))
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.at("*") or self.at("/"):
            op = self.take()[1]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self) -> Expr:
        # '-' binds looser than '^' so that -x^2 means -(x^2)
        if self.at("-"):
            self.take()
            return neg(self.unary())
        if self.at("+"):
            self.take()
            return self.unary()
        return self.factor()

    def factor(self) -> Expr:
        b = self.base()
        if self.at("^"):
            self.take()
            b = power(b, self.integer())
        return b

    def base(self) -> Expr:
        t = self.take()
        kind, value, pos = t
        if kind == "num":
            return const(Fraction(value))
        if kind == "ident":
            if value in _FUNCTIONS:
                if not self.at("("):
                    raise ParseError(f"{value} needs an argument list", pos, self.text)
                self.take()
                args = [self.expr()]
                while self.at(","):
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != _FUNCTIONS[value]:
                    raise ParseError(f"{value} takes {_FUNCTIONS[value]} argument(s)", pos, self.text)
                return {"sin": sin, "cos": cos, "atan2": atan2}[value](*args)
            order = None
            if self.at("@"):
                self.take()
                nt = self.take()
                if nt[0] != "num" or not nt[1].isdigit():
                    raise ParseError("expected jet order after '@'", nt[2], self.text)
                order = int(nt[1])
            try:
                return self.scope.resolve(value, order)
            except UnknownIdentifier as exc:
                raise UnknownIdentifier(str(exc), pos, self.text) from None
        if kind == "op" and value == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ParseError(f"unexpected {value!r}", pos, self.text)


def parse_expr(text: str, scope: Scope | Iterable[Variable]) -> Expr:
    if not isinstance(scope, Scope):
        scope = Scope(scope)
    return _Parser(text, scope).parse()


# --------------------------------------------------------------------------
# Numeric evaluation
# --------------------------------------------------------------------------

_OP_CONST, _OP_SYM, _OP_ADD, _OP_MUL, _OP_DIV, _OP_POW, _OP_SIN, _OP_COS, _OP_ATAN2 = range(9)
_OPCODES = {Const: _OP_CONST, Sym: _OP_SYM, Add: _OP_ADD, Mul: _OP_MUL, Div: _OP_DIV,
            Pow: _OP_POW, Sin: _OP_SIN, Cos: _OP_COS, Atan2: _OP_ATAN2}


class Program:
    """A batch of expressions compiled to a flat instruction list over the
    union DAG, evaluated column-wise on arrays of sample points."""

    def __init__(self, roots: Sequence[Expr]):
        self.roots = list(roots)
        nodes = postorder(self.roots)
        index = {id(n): i for i, n in enumerate(nodes)}
        self.code = []
        for n in nodes:
            op = _OPCODES[type(n)]
            payload = n.value if op == _OP_CONST else n.var if op == _OP_SYM else n.exp if op == _OP_POW else None
            self.code.append((op, tuple(index[id(a)] for a in n.args), payload))
        self.root_index = [index[id(r)] for r in self.roots]
        self.variables = sorted(frozenset().union(*(r.free for r in self.roots)) if self.roots else (),
                                key=Variable.sort_key)
        self._nodes = nodes  # keeps ids valid
        self._index = index
        self._reach: list[np.ndarray] | None = None

    def reachable(self) -> list[np.ndarray]:
        if self._reach is None:
            self._reach = [np.array([self._index[id(n)] for n in postorder([r])], dtype=int)
                           for r in self.roots]
        return self._reach

    def run(self, values: Mapping[Variable, np.ndarray], guard: float) -> tuple[np.ndarray, np.ndarray]:
        """Evaluate every node. Returns (node values [N, T], singular mask [T])."""
        t = None
        for arr in values.values():
            t = len(np.atleast_1d(arr))
            break
        if t is None:
            t = 1
        out = np.empty((len(self.code), t))
        singular = np.zeros(t, dtype=bool)
        with np.errstate(all="ignore"):
            for i, (op, ch, payload) in enumerate(self.code):
                if op == _OP_CONST:
                    out[i] = float(payload)
                elif op == _OP_SYM:
                    try:
                        out[i] = values[payload]
                    except KeyError:
                        raise ValueError(f"point does not assign {payload}") from None
                elif op == _OP_ADD:
                    out[i] = out[list(ch)].sum(axis=0)
                elif op == _OP_MUL:
                    out[i] = out[list(ch)].prod(axis=0)
                elif op == _OP_DIV:
                    den = out[ch[1]]
                    singular |= np.abs(den) <= guard
                    out[i] = out[ch[0]] / den
                elif op == _OP_POW:
                    base = out[ch[0]]
                    if payload < 0:
                        singular |= np.abs(base) <= guard
                    out[i] = base**payload
                elif op == _OP_SIN:
                    out[i] = np.sin(out[ch[0]])
                elif op == _OP_COS:
                    out[i] = np.cos(out[ch[0]])
                else:
                    y, x = out[ch[0]], out[ch[1]]
                    singular |= y * y + x * x <= guard * guard
                    out[i] = np.arctan2(y, x)
        singular |= ~np.isfinite(out).all(axis=0)
        return out, singular


def evaluate(e: Expr, pt: Point) -> float:
    """Value of ``e`` at ``pt``; raises :class:`SingularPoint` at a pole."""
    prog = Program([e])
    values = {v: np.array([float(pt[v])]) for v in prog.variables if v in pt}
    missing = [str(v) for v in prog.variables if v not in pt]
    if missing:
        raise ValueError(f"point does not assign {', '.join(missing)}")
    out, singular = prog.run(values, guard=0.0)
    if singular[0]:
        raise SingularPoint(f"singular sample point for {to_string(e)}")
    return float(out[prog.root_index[0], 0])


@dataclass
class Sampler:
    """Seeded source of generic points. Identical seeds replay identical
    draws; a sampler is stateful and must not be shared across threads."""

    seed: int = 42
    box: tuple[float, float] = (-2.0, 2.0)
    trials: int = 5

    def __post_init__(self):
        self._rng = np.random.default_rng(self.seed)

    def draw(self, variables: Iterable[Variable], count: int | None = None,
             boxes: Mapping[Variable, tuple[float, float]] | None = None) -> dict[Variable, np.ndarray]:
        count = self.trials if count is None else count
        boxes = boxes or {}
        out = {}
        for v in sorted(set(variables), key=Variable.sort_key):
            lo, hi = boxes.get(v, self.box)
            out[v] = self._rng.uniform(lo, hi, count)
        return out


@dataclass
class Samples:
    """Values of a batch of expressions at the non-singular sample points."""

    program: Program
    points: dict[Variable, np.ndarray]
    nodes: np.ndarray  # [N, T]

    @property
    def values(self) -> np.ndarray:
        return self.nodes[self.program.root_index]

    @property
    def count(self) -> int:
        return self.nodes.shape[1]

    def scales(self) -> np.ndarray:
        """Max |subterm| per root and point, [R, T]."""
        absn = np.abs(self.nodes)
        return np.stack([absn[idx].max(axis=0) for idx in self.program.reachable()]) \
            if self.program.roots else np.zeros((0, self.count))

    def point(self, k: int) -> dict[Variable, float]:
        return {v: float(a[k]) for v, a in self.points.items()}


def sample(exprs: Sequence[Expr], s: Sampler,
           boxes: Mapping[Variable, tuple[float, float]] | None = None,
           program: Program | None = None) -> Samples:
    """Evaluate ``exprs`` at ``s.trials`` random points, redrawing points that
    land within the singular guard of a pole (up to 20 rounds)."""
    prog = program or Program(exprs)
    pts = s.draw(prog.variables, boxes=boxes)
    nodes, singular = prog.run(pts, SINGULAR_GUARD)
    for _ in range(MAX_RESAMPLES):
        if not singular.any():
            break
        bad = np.flatnonzero(singular)
        fresh = s.draw(prog.variables, count=len(bad), boxes=boxes)
        for v in prog.variables:
            pts[v][bad] = fresh[v]
        sub_nodes, sub_sing = prog.run({v: pts[v][bad] for v in prog.variables}, SINGULAR_GUARD)
        nodes[:, bad] = sub_nodes
        singular[bad] = sub_sing
    keep = ~singular
    if not keep.any():
        raise DegenerateSampling(
            f"all {s.trials} sample points singular after {MAX_RESAMPLES} redraws")
    return Samples(prog, {v: a[keep] for v, a in pts.items()}, nodes[:, keep])


def zero_flags(exprs: Sequence[Expr], s: Sampler, boxes=None,
               atol: float = ZERO_ATOL, rtol: float = ZERO_RTOL) -> list[bool]:
    """Batch version of :func:`is_identically_zero`."""
    flags = [e is ZERO for e in exprs]
    todo = [i for i, f in enumerate(flags) if not f]
    if not todo:
        return flags
    smp = sample([exprs[i] for i in todo], s, boxes)
    ok = (np.abs(smp.values) <= atol + rtol * smp.scales()).all(axis=1)
    for i, flag in zip(todo, ok):
        flags[i] = bool(flag)
    return flags


def is_identically_zero(e: Expr, s: Sampler, boxes=None) -> bool:
    """Randomized zero test: |e| <= atol + rtol*scale at every sampled point,
    where scale is the largest subterm magnitude seen while evaluating."""
    return zero_flags([e], s, boxes)[0]


def nonzero_witness(exprs: Sequence[Expr], s: Sampler, boxes=None) -> dict[Variable, float] | None:
    """A sample point where some expression is visibly nonzero, if any."""
    live = [e for e in exprs if e is not ZERO]
    if not live:
        return None
    smp = sample(live, s, boxes)
    bad = np.abs(smp.values) > ZERO_ATOL + ZERO_RTOL * smp.scales()
    cols = np.flatnonzero(bad.any(axis=0))
    if len(cols) == 0:
        return None
    return smp.point(int(cols[0]))


def numeric_rank(a: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if a.size == 0:
        return 0
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int((sv > rtol * sv[0]).sum())


def sample_matrix(mat: Sequence[Sequence[Expr]], s: Sampler, boxes=None) -> np.ndarray:
    """Numeric copies of a matrix of expressions, [T, rows, cols]."""
    rows = len(mat)
    cols = len(mat[0]) if rows else 0
    flat = [e for row in mat for e in row]
    if not flat:
        return np.zeros((s.trials, rows, cols))
    smp = sample(flat, s, boxes)
    return smp.values.T.reshape(smp.count, rows, cols)


def generic_rank(mat: Sequence[Sequence[Expr]], s: Sampler, boxes=None) -> int:
    """Maximum numeric rank over the sample points (rank only drops on
    special loci)."""
    if not mat or not mat[0]:
        return 0
    if all(e is ZERO for row in mat for e in row):
        return 0
    return max(numeric_rank(a) for a in sample_matrix(mat, s, boxes))
