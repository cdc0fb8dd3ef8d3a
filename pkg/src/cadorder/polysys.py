"""Sparse multivariate polynomials over the integers.

A :class:`Polynomial` is an immutable map from exponent vectors to nonzero
Python ``int`` coefficients.  Terms are kept in graded-lexicographic order
(highest total degree first, ties broken lexicographically, larger first), so
rendering and hashing are deterministic.
"""
from __future__ import annotations

import heapq
import json
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

Exponents = tuple[int, ...]


class ParseError(ValueError):
    """Raised for malformed polynomial text; ``position`` is a 0-based offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class UnknownVariableError(ParseError):
    pass


class ProblemFileError(ValueError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


def grlex_key(exps: Exponents) -> tuple:
    """Sort key placing the graded-lex *largest* monomial first."""
    return (-sum(exps), tuple(-e for e in exps))


def _canonical(acc: Mapping[Exponents, int]) -> dict[Exponents, int]:
    return dict(sorted(((e, c) for e, c in acc.items() if c), key=lambda t: grlex_key(t[0])))


# Exponent vectors are packed into one int (first variable most significant)
# for the inner loops of multiplication and division.  Lex order on vectors is
# then integer order on keys, and multiplying monomials is adding keys.
_SLOT_BITS = 24


def _pack(exps: Exponents) -> int:
    key = 0
    for e in exps:
        if e >> (_SLOT_BITS - 1):  # keep one spare bit so a single product cannot overflow a slot
            raise OverflowError(f"exponent {e} too large")
        key = (key << _SLOT_BITS) | e
    return key


@lru_cache(maxsize=None)
def _high_bits(nvars: int) -> int:
    """Key with only the spare top bit of every slot set."""
    return _pack_unchecked((1 << (_SLOT_BITS - 1),) * nvars)


def _pack_unchecked(exps: Exponents) -> int:
    key = 0
    for e in exps:
        key = (key << _SLOT_BITS) | e
    return key


def _unpack(key: int, nvars: int) -> Exponents:
    mask = (1 << _SLOT_BITS) - 1
    out = [0] * nvars
    for i in range(nvars - 1, -1, -1):
        out[i] = key & mask
        key >>= _SLOT_BITS
    return tuple(out)


def _packed(p: Polynomial) -> dict[int, int]:
    return {_pack(e): c for e, c in p._terms.items()}


def _from_packed(acc: Mapping[int, int], nvars: int) -> Polynomial:
    return Polynomial._trusted({_unpack(k, nvars): c for k, c in acc.items() if c}, nvars)


def packed_mul(a: Mapping[int, int], b: Mapping[int, int]) -> dict[int, int]:
    if len(a) > len(b):
        a, b = b, a
    acc: dict[int, int] = {}
    get = acc.get
    for k1, c1 in a.items():
        for k2, c2 in b.items():
            k = k1 + k2
            acc[k] = get(k, 0) + c1 * c2
    return {k: c for k, c in acc.items() if c}


def packed_sub(a: Mapping[int, int], b: Mapping[int, int]) -> dict[int, int]:
    acc = dict(a)
    get = acc.get
    for k, c in b.items():
        acc[k] = get(k, 0) - c
    return {k: c for k, c in acc.items() if c}


def packed_exact_div(a: Mapping[int, int], b: Mapping[int, int], nvars: int) -> dict[int, int]:
    """Quotient of packed polynomials; raises ArithmeticError unless exact.

    Division by leading terms in lex order terminates and is exact precisely
    when ``b`` divides ``a``.
    """
    if not b:
        raise ZeroDivisionError("division by the zero polynomial")
    if len(b) == 1 and 0 in b:
        d = b[0]
        out = {}
        for k, c in a.items():
            q, r = divmod(c, d)
            if r:
                raise ArithmeticError("inexact division by constant")
            out[k] = q
        return out
    lead_k = max(b)
    lead_c = b[lead_k]
    high = _high_bits(nvars)
    if len(b) == 1:  # monomial divisor
        out = {}
        for k, c in a.items():
            q, r = divmod(c, lead_c)
            if r or ((k | high) - lead_k) & high != high:
                raise ArithmeticError("inexact polynomial division")
            out[k - lead_k] = q
        return out
    rest = [(k, c) for k, c in b.items() if k != lead_k]
    rem = dict(a)
    heap = [-k for k in rem]
    heapq.heapify(heap)
    quot: dict[int, int] = {}
    while heap:
        k = -heapq.heappop(heap)
        c = rem.pop(k, 0)
        if not c:
            continue  # stale heap entry
        if ((k | high) - lead_k) & high != high:  # some exponent of k is below the divisor's
            raise ArithmeticError("inexact polynomial division")
        q_c, r = divmod(c, lead_c)
        if r:
            raise ArithmeticError("inexact polynomial division")
        q_k = k - lead_k
        quot[q_k] = q_c
        for ok, oc in rest:
            t = q_k + ok
            val = rem.get(t, 0) - q_c * oc
            if val:
                if t not in rem:
                    heapq.heappush(heap, -t)
                rem[t] = val
            else:
                rem.pop(t, None)
    return quot


class Polynomial:
    __slots__ = ("_terms", "_nvars", "_hash")

    def __init__(self, terms: Mapping[Exponents, int] | Iterable[tuple[Exponents, int]], nvars: int):
        if nvars < 0:
            raise ValueError("nvars must be non-negative")
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Exponents, int] = {}
        for exps, coeff in items:
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars:
                raise ValueError(f"exponent vector {exps} does not have length {nvars}")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            if not isinstance(coeff, int) or isinstance(coeff, bool):
                raise TypeError(f"coefficient {coeff!r} is not an integer")
            acc[exps] = acc.get(exps, 0) + coeff
        self._terms = _canonical(acc)
        self._nvars = nvars
        self._hash = None

    @classmethod
    def _trusted(cls, acc: dict[Exponents, int], nvars: int) -> Polynomial:
        """Build from an already-valid exponent map, skipping input validation."""
        obj = cls.__new__(cls)
        obj._terms = _canonical(acc)
        obj._nvars = nvars
        obj._hash = None
        return obj

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> Polynomial:
        return cls({}, nvars)

    @classmethod
    def constant(cls, c: int, nvars: int) -> Polynomial:
        return cls({(0,) * nvars: c}, nvars)

    @classmethod
    def variable(cls, v: int, nvars: int) -> Polynomial:
        exps = [0] * nvars
        exps[v] = 1
        return cls({tuple(exps): 1}, nvars)

    # -- basic queries ------------------------------------------------------

    @property
    def nvars(self) -> int:
        return self._nvars

    @property
    def terms(self) -> dict[Exponents, int]:
        return dict(self._terms)

    def items(self) -> Iterator[tuple[Exponents, int]]:
        return iter(self._terms.items())

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(not any(e) for e in self._terms)

    def constant_value(self) -> int:
        if not self.is_constant():
            raise ValueError("polynomial is not constant")
        return self._terms.get((0,) * self._nvars, 0)

    def leading(self) -> tuple[Exponents, int]:
        """Leading term in graded-lex order."""
        if not self._terms:
            raise ValueError("zero polynomial has no leading term")
        return next(iter(self._terms.items()))

    def variables(self) -> frozenset[int]:
        """Indices of variables occurring with positive exponent."""
        out = set()
        for exps in self._terms:
            out.update(i for i, e in enumerate(exps) if e)
        return frozenset(out)

    def degree_in(self, v: int) -> int:
        return degree_in(self, v)

    def total_degree(self) -> int:
        return max((sum(e) for e in self._terms), default=0)

    def content(self) -> int:
        """Non-negative gcd of the coefficients (0 for the zero polynomial)."""
        return math.gcd(*self._terms.values()) if self._terms else 0

    def primitive(self) -> Polynomial:
        """Divide out the content and make the leading coefficient positive."""
        if not self._terms:
            return self
        g = self.content()
        if self.leading()[1] < 0:
            g = -g
        if g == 1:
            return self
        return Polynomial({e: c // g for e, c in self._terms.items()}, self._nvars)

    def sort_key(self) -> tuple:
        """Total order on polynomials used to emit sets deterministically."""
        return tuple((grlex_key(e), c) for e, c in self._terms.items())

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: Polynomial) -> None:
        if other._nvars != self._nvars:
            raise ValueError(f"nvars mismatch: {self._nvars} vs {other._nvars}")

    def _coerce(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, int) and not isinstance(other, bool):
            return Polynomial.constant(other, self._nvars)
        return NotImplemented

    def __add__(self, other) -> Polynomial:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        acc = dict(self._terms)
        for e, c in other._terms.items():
            acc[e] = acc.get(e, 0) + c
        return Polynomial._trusted(acc, self._nvars)

    __radd__ = __add__

    def __neg__(self) -> Polynomial:
        return Polynomial._trusted({e: -c for e, c in self._terms.items()}, self._nvars)

    def __sub__(self, other) -> Polynomial:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other) -> Polynomial:
        return (-self) + other

    def __mul__(self, other) -> Polynomial:
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return _from_packed(packed_mul(_packed(self), _packed(other)), self._nvars)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> Polynomial:
        if k < 0:
            raise ValueError("negative power")
        result = Polynomial.constant(1, self._nvars)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def exact_div(self, other: Polynomial) -> Polynomial:
        """Quotient ``self / other``; raises ArithmeticError unless it is exact."""
        self._check(other)
        return _from_packed(packed_exact_div(_packed(self), _packed(other), self._nvars), self._nvars)

    def derivative(self, v: int) -> Polynomial:
        out = {}
        for e, c in self._terms.items():
            if e[v]:
                ne = list(e)
                ne[v] -= 1
                out[tuple(ne)] = c * e[v]
        return Polynomial(out, self._nvars)

    def coefficients_in(self, v: int) -> list[Polynomial]:
        """Coefficients with respect to variable ``v``; entry ``i`` multiplies ``v**i``."""
        d = degree_in(self, v)
        buckets: list[dict[Exponents, int]] = [{} for _ in range(d + 1)]
        for e, c in self._terms.items():
            ne = list(e)
            ne[v] = 0
            buckets[e[v]][tuple(ne)] = c
        return [Polynomial._trusted(b, self._nvars) for b in buckets]

    def substitute(self, values: Mapping[int, int]) -> Polynomial:
        """Substitute integers for some variables (their exponents become 0)."""
        out: dict[Exponents, int] = {}
        for e, c in self._terms.items():
            ne = list(e)
            for v, val in values.items():
                c *= val ** e[v]
                ne[v] = 0
            t = tuple(ne)
            out[t] = out.get(t, 0) + c
        return Polynomial(out, self._nvars)

    # -- equality, hashing, display ----------------------------------------

    def __eq__(self, other) -> bool:
        if isinstance(other, int) and not isinstance(other, bool):
            return self.is_constant() and self.constant_value() == other
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._nvars == other._nvars and self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self._nvars, tuple(self._terms.items())))
        return self._hash

    def to_text(self, variables: Sequence[str]) -> str:
        return render_polynomial(self, variables)

    def __repr__(self) -> str:
        names = [f"x{i + 1}" for i in range(self._nvars)]
        return f"Polynomial({render_polynomial(self, names)!r}, nvars={self._nvars})"


@dataclass(frozen=True)
class Monomial:
    exponents: Exponents
    coefficient: int

    @property
    def total_degree(self) -> int:
        return sum(self.exponents)


@dataclass(frozen=True)
class ProblemInstance:
    id: str
    variables: tuple[str, ...]
    polys: tuple[Polynomial, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "polys", tuple(self.polys))
        n = len(self.variables)
        if n < 2:
            raise ValueError(f"problem {self.id!r}: at least 2 variables are required")
        if len(set(self.variables)) != n:
            raise ValueError(f"problem {self.id!r}: duplicate variable names")
        if not self.polys:
            raise ValueError(f"problem {self.id!r}: no polynomials")
        for p in self.polys:
            if p.nvars != n:
                raise ValueError(f"problem {self.id!r}: polynomial has {p.nvars} variables, expected {n}")

    @property
    def n(self) -> int:
        return len(self.variables)


def degree_in(p: Polynomial, v: int) -> int:
    if not 0 <= v < p.nvars:
        raise IndexError(f"variable index {v} out of range for {p.nvars} variables")
    return max((e[v] for e, _ in p.items()), default=0)


def monomial_stats(p: Polynomial) -> list[Monomial]:
    return [Monomial(e, c) for e, c in p.items()]


# -- parsing -----------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(?P<int>\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*^()])|(?P<bad>\S))")


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.index = {name: i for i, name in enumerate(variables)}
        if len(self.index) != len(variables):
            raise ValueError("variable names must be distinct")
        self.n = len(variables)
        self.tokens = self._tokenize()
        self.pos = 0

    def _tokenize(self) -> list[tuple[str, str, int]]:
        out = []
        i = 0
        text = self.text
        while i < len(text):
            m = _TOKEN.match(text, i)
            if m is None:  # only trailing whitespace left
                break
            kind = m.lastgroup
            start = m.start(kind)
            if kind == "bad":
                ch = m.group(kind)
                if ch in "./":
                    raise ParseError(f"non-integer coefficient ({ch!r})", start, text)
                raise ParseError(f"unexpected character {ch!r}", start, text)
            out.append((kind, m.group(kind), start))
            i = m.end()
        out.append(("end", "", len(text)))
        return out

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.pos]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok=None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(message, tok[2], self.text)

    def parse(self) -> Polynomial:
        if self.peek()[0] == "end":
            raise self.error("empty expression")
        p = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return p

    def expr(self) -> Polynomial:
        acc = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            t = self.term()
            acc = acc + t if op == "+" else acc - t
        return acc

    def term(self) -> Polynomial:
        acc = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            acc = acc * self.factor()
        return acc

    def factor(self) -> Polynomial:
        if self.peek()[0] == "op" and self.peek()[1] in "+-":  # unary sign binds looser than ^
            return -self.factor() if self.take()[1] == "-" else self.factor()
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            tok = self.peek()
            if tok[0] != "int":
                raise self.error("exponent must be a positive integer literal", tok)
            self.take()
            k = int(tok[1])
            if k == 0:
                raise self.error("exponent must be a positive integer literal", tok)
            if self.peek()[0] == "op" and self.peek()[1] == "^":
                raise self.error("chained exponent")
            base = base ** k
        return base

    def atom(self) -> Polynomial:
        kind, value, start = self.peek()
        if kind == "int":
            self.take()
            return Polynomial.constant(int(value), self.n)
        if kind == "name":
            self.take()
            if value not in self.index:
                raise UnknownVariableError(f"unknown variable {value!r}", start, self.text)
            return Polynomial.variable(self.index[value], self.n)
        if kind == "op" and value == "(":
            self.take()
            inner = self.expr()
            if self.peek()[1] != ")":
                raise self.error("expected ')'")
            self.take()
            return inner
        if kind == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected token {value!r}")


def parse_polynomial(text: str, variables: Sequence[str]) -> Polynomial:
    """Parse integer-coefficient polynomial text such as ``"x1^2*x2 - 3*x3 + 1"``."""
    return _Parser(text, variables).parse()


def render_polynomial(p: Polynomial, variables: Sequence[str]) -> str:
    if len(variables) != p.nvars:
        raise ValueError("variable list does not match nvars")
    if p.is_zero():
        return "0"
    parts = []
    for i, (exps, c) in enumerate(p.items()):
        factors = [name if e == 1 else f"{name}^{e}" for name, e in zip(variables, exps) if e]
        mag = abs(c)
        if not factors:
            body = str(mag)
        elif mag == 1:
            body = "*".join(factors)
        else:
            body = "*".join([str(mag)] + factors)
        if i == 0:
            parts.append(("-" if c < 0 else "") + body)
        else:
            parts.append(("- " if c < 0 else "+ ") + body)
    return " ".join(parts)


# -- problem files -----------------------------------------------------------

def problem_from_record(record: dict) -> ProblemInstance:
    if not isinstance(record, dict):
        raise ValueError("record is not a JSON object")
    missing = {"id", "vars", "polys"} - record.keys()
    if missing:
        raise ValueError(f"missing keys {sorted(missing)}")
    pid, names, polys = record["id"], record["vars"], record["polys"]
    if not isinstance(pid, str):
        raise ValueError("id must be a string")
    if not isinstance(names, list) or not all(isinstance(v, str) for v in names):
        raise ValueError("vars must be a list of strings")
    if not isinstance(polys, list) or not all(isinstance(s, str) for s in polys):
        raise ValueError("polys must be a list of strings")
    if len(set(names)) != len(names):
        raise ValueError("duplicate variable names")
    return ProblemInstance(pid, tuple(names), tuple(parse_polynomial(s, names) for s in polys))


def parse_problem_file(path: str | Path) -> list[ProblemInstance]:
    problems: list[ProblemInstance] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                prob = problem_from_record(record)
            except (ValueError, TypeError) as exc:  # JSONDecodeError is a ValueError
                raise ProblemFileError(str(exc), lineno) from exc
            if prob.id in seen:
                raise ProblemFileError(f"duplicate id {prob.id!r}", lineno)
            seen.add(prob.id)
            problems.append(prob)
    return problems


def problem_to_record(problem: ProblemInstance) -> dict:
    return {
        "id": problem.id,
        "vars": list(problem.variables),
        "polys": [render_polynomial(p, problem.variables) for p in problem.polys],
    }


def write_problem_file(path: str | Path, problems: Iterable[ProblemInstance]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for prob in problems:
            fh.write(json.dumps(problem_to_record(prob), separators=(",", ":")) + "\n")
