"""Resultants, discriminants and a coefficient/discriminant/resultant projection."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Sequence

from .polysys import (
    Polynomial,
    ProblemInstance,
    _SLOT_BITS,
    _from_packed,
    _packed,
    degree_in,
    packed_exact_div,
    packed_mul,
    packed_sub,
)


@dataclass(frozen=True)
class ProjectionLevel:
    eliminated: int | None  # None for the input level
    polys: tuple[Polynomial, ...]


def sylvester_matrix(p: Polynomial, q: Polynomial, v: int) -> list[list[Polynomial]]:
    """Sylvester matrix of ``p`` and ``q`` in ``v`` with polynomial entries."""
    m, n = degree_in(p, v), degree_in(q, v)
    zero = Polynomial.zero(p.nvars)
    pc = p.coefficients_in(v)[::-1]  # leading coefficient first
    qc = q.coefficients_in(v)[::-1]
    size = m + n
    rows = []
    for i in range(n):
        rows.append([zero] * i + pc + [zero] * (size - m - 1 - i))
    for i in range(m):
        rows.append([zero] * i + qc + [zero] * (size - n - 1 - i))
    return rows


def bareiss_determinant(matrix: Sequence[Sequence[Polynomial]], nvars: int) -> Polynomial:
    """Fraction-free Gaussian elimination over Z[x]; every division is exact."""
    # Entries are handled as packed exponent dicts to keep the O(size^3) loop lean.
    a = [[_packed(e) for e in row] for row in matrix]
    size = len(a)
    if size == 0:
        return Polynomial.constant(1, nvars)
    # Intermediate entries are minors, so their exponents stay below 2*size*max_exp.
    max_exp = max((max(e, default=0) for row in matrix for x in row for e, _ in x.items()), default=0)
    if 2 * size * max_exp >= 1 << (_SLOT_BITS - 1):
        raise OverflowError("exponents too large for packed elimination")
    sign = 1
    prev = {0: 1}
    for k in range(size - 1):
        if not a[k][k]:
            swap = next((r for r in range(k + 1, size) if a[r][k]), None)
            if swap is None:
                return Polynomial.zero(nvars)
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        pivot, row_k = a[k][k], a[k]
        unit = prev == {0: 1}
        for i in range(k + 1, size):
            row_i = a[i]
            aik = row_i[k]
            for j in range(k + 1, size):
                num = packed_mul(pivot, row_i[j]) if row_i[j] else {}
                if aik and row_k[j]:
                    num = packed_sub(num, packed_mul(aik, row_k[j]))
                row_i[j] = num if unit or not num else packed_exact_div(num, prev, nvars)
            row_i[k] = {}
        prev = pivot
    det = _from_packed(a[size - 1][size - 1], nvars)
    return -det if sign < 0 else det


@lru_cache(maxsize=65536)
def resultant(p: Polynomial, q: Polynomial, v: int) -> Polynomial:
    if p.nvars != q.nvars:
        raise ValueError("nvars mismatch")
    if p.is_zero() and q.is_zero():
        raise ValueError("resultant of two zero polynomials is undefined")
    if p.is_zero() or q.is_zero():
        return Polynomial.zero(p.nvars)
    dp, dq = degree_in(p, v), degree_in(q, v)
    if dq == 0:
        return q ** dp
    if dp == 0:
        return p ** dq
    return bareiss_determinant(sylvester_matrix(p, q, v), p.nvars)


def leading_coefficient(p: Polynomial, v: int) -> Polynomial:
    return p.coefficients_in(v)[-1]


def discriminant(p: Polynomial, v: int) -> Polynomial:
    d = degree_in(p, v)
    if d < 2:
        raise ValueError(f"discriminant needs degree >= 2 in the variable, got {d}")
    res = resultant(p, p.derivative(v), v)
    # An inexact quotient here is a bug, not a user error; let ArithmeticError escape.
    quot = res.exact_div(leading_coefficient(p, v))
    return -quot if (d * (d - 1) // 2) % 2 else quot


def normalize_set(polys: Iterable[Polynomial]) -> tuple[Polynomial, ...]:
    """Drop constants, remove content and sign, dedupe, sort canonically."""
    seen = {p.primitive() for p in polys if not p.is_constant()}
    return tuple(sorted(seen, key=Polynomial.sort_key))


def project_step(polys: Iterable[Polynomial], v: int) -> tuple[Polynomial, ...]:
    polys = list(polys)
    out: list[Polynomial] = []
    active = []
    for p in polys:
        if p.is_zero():
            continue
        d = degree_in(p, v)
        if d == 0:
            out.append(p)
            continue
        active.append(p)
        out.extend(p.coefficients_in(v))
        if d >= 2:
            out.append(discriminant(p, v))
    for p, q in combinations(normalize_set(active), 2):
        out.append(resultant(p, q, v))
    return normalize_set(out)


def _mentioned(polys: Iterable[Polynomial]) -> set[int]:
    out: set[int] = set()
    for p in polys:
        out |= p.variables()
    return out


def check_ordering(problem: ProblemInstance, ordering: Sequence[int]) -> tuple[int, ...]:
    seq = tuple(int(v) for v in ordering)
    if sorted(seq) != list(range(problem.n)):
        raise ValueError(f"{seq} is not a permutation of range({problem.n})")
    return seq


def full_projection(problem: ProblemInstance, ordering: Sequence[int]) -> list[ProjectionLevel]:
    """Input level followed by one level per elimination.

    Stops early once the current set is empty or mentions at most one variable;
    further steps could only reproduce constants or pass-through copies.
    """
    seq = check_ordering(problem, ordering)
    levels = [ProjectionLevel(None, normalize_set(problem.polys))]
    for v in seq[:-1]:
        current = levels[-1].polys
        if not current or len(_mentioned(current)) <= 1:
            break
        levels.append(ProjectionLevel(v, project_step(current, v)))
    return levels


def projection_closure(levels: Sequence[ProjectionLevel]) -> tuple[Polynomial, ...]:
    """Union of all levels as a canonical set."""
    return normalize_set(p for lvl in levels for p in lvl.polys)
