"""Brown's degree-based ordering heuristic and the sotd projection heuristic.

Orderings are elimination sequences of variable indices, first-eliminated
first.  An ordering's index is its rank in the lexicographic enumeration of
all permutations of ``range(n)``, which is what ``itertools.permutations``
yields.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations, product
from typing import Sequence

from .algebra import full_projection, normalize_set, project_step, projection_closure
from .polysys import Polynomial, ProblemInstance

MAX_SOTD_VARIABLES = 6


@dataclass(frozen=True, order=True)
class Ordering:
    index: int
    sequence: tuple[int, ...] = field(compare=False)

    @classmethod
    def from_sequence(cls, seq: Sequence[int]) -> Ordering:
        seq = tuple(int(v) for v in seq)
        return cls(ordering_index(seq), seq)

    @classmethod
    def from_index(cls, index: int, n: int) -> Ordering:
        return cls(index, ordering_from_index(index, n))

    def names(self, variables: Sequence[str]) -> list[str]:
        return [variables[v] for v in self.sequence]


def ordering_index(seq: Sequence[int]) -> int:
    """Lexicographic rank (Lehmer code) of a permutation of ``range(n)``."""
    n = len(seq)
    if sorted(seq) != list(range(n)):
        raise ValueError(f"{tuple(seq)} is not a permutation of range({n})")
    rank = 0
    remaining = list(range(n))
    for i, v in enumerate(seq):
        pos = remaining.index(v)
        rank += pos * math.factorial(n - 1 - i)
        remaining.pop(pos)
    return rank


def ordering_from_index(index: int, n: int) -> tuple[int, ...]:
    if not 0 <= index < math.factorial(n):
        raise ValueError(f"ordering index {index} out of range for n={n}")
    remaining = list(range(n))
    out = []
    for i in range(n):
        f = math.factorial(n - 1 - i)
        pos, index = divmod(index, f)
        out.append(remaining.pop(pos))
    return tuple(out)


def all_orderings(n: int) -> list[Ordering]:
    return [Ordering(i, seq) for i, seq in enumerate(permutations(range(n)))]


@dataclass(frozen=True)
class HeuristicPrediction:
    orderings: tuple[Ordering, ...]
    scores: dict[int, int] | None = None

    def __post_init__(self):
        if not self.orderings:
            raise ValueError("a prediction needs at least one ordering")
        if len({o.index for o in self.orderings}) != len(self.orderings):
            raise ValueError("duplicate orderings in prediction")

    @property
    def indices(self) -> list[int]:
        return [o.index for o in self.orderings]


def brown_criteria(problem: ProblemInstance) -> list[tuple[int, int, int]]:
    """Per variable: (max individual degree, max total degree of containing terms, containing-term count)."""
    crit = []
    for v in range(problem.n):
        deg = tdeg = count = 0
        for p in problem.polys:
            for exps, _ in p.items():
                if exps[v]:
                    deg = max(deg, exps[v])
                    tdeg = max(tdeg, sum(exps))
                    count += 1
        crit.append((deg, tdeg, count))
    return crit


def brown_orderings(problem: ProblemInstance) -> HeuristicPrediction:
    crit = brown_criteria(problem)
    groups: dict[tuple[int, int, int], list[int]] = {}
    for v, c in enumerate(crit):
        groups.setdefault(c, []).append(v)
    blocks = [groups[key] for key in sorted(groups)]
    seqs = (sum(choice, ()) for choice in product(*(permutations(b) for b in blocks)))
    orderings = sorted(Ordering.from_sequence(s) for s in seqs)
    return HeuristicPrediction(tuple(orderings))


def _sotd_of(polys: Sequence[Polynomial]) -> int:
    return sum(sum(e) for p in polys for e, _ in p.items())


def _mentions_at_most_one(polys: Sequence[Polynomial]) -> bool:
    seen: set[int] = set()
    for p in polys:
        seen |= p.variables()
        if len(seen) > 1:
            return False
    return True


class _ProjectionCache:
    """Projection sets shared between orderings with a common prefix."""

    def __init__(self, problem: ProblemInstance):
        self.problem = problem
        self.levels: dict[tuple[int, ...], tuple[Polynomial, ...] | None] = {
            (): normalize_set(problem.polys)
        }

    def level(self, prefix: tuple[int, ...]) -> tuple[Polynomial, ...] | None:
        """Set after eliminating ``prefix``, or None once projection has stopped."""
        if prefix not in self.levels:
            parent = self.level(prefix[:-1])
            if parent is None or not parent or _mentions_at_most_one(parent):
                self.levels[prefix] = None
            else:
                self.levels[prefix] = project_step(parent, prefix[-1])
        return self.levels[prefix]

    def sotd(self, seq: tuple[int, ...]) -> int:
        union: set[Polynomial] = set()
        for k in range(len(seq)):
            lvl = self.level(seq[:k])
            if lvl is None:
                break
            union.update(lvl)
        return _sotd_of(list(union))


def sotd_value(problem: ProblemInstance, ordering: Ordering | Sequence[int]) -> int:
    """Sum of total degrees over the union of the input and all projection levels."""
    seq = ordering.sequence if isinstance(ordering, Ordering) else ordering
    return _sotd_of(projection_closure(full_projection(problem, seq)))


def sotd_orderings(problem: ProblemInstance) -> HeuristicPrediction:
    if problem.n > MAX_SOTD_VARIABLES:
        raise ValueError(f"sotd enumerates n! orderings; n={problem.n} exceeds {MAX_SOTD_VARIABLES}")
    cache = _ProjectionCache(problem)
    scores = {o.index: cache.sotd(o.sequence) for o in all_orderings(problem.n)}
    best = min(scores.values())
    winners = tuple(Ordering.from_index(i, problem.n) for i, s in scores.items() if s == best)
    return HeuristicPrediction(winners, scores)
