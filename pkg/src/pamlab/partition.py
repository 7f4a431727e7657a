"""Grouping of all pairs ``{i < j}`` of ``{1..p}`` into blocks with disjoint indices.

Arrange ``p`` (odd) points on a circle.  Block ``i`` leaves point ``i`` out
and pairs its neighbours symmetrically, ``(i - r, i + r)`` for
``r = 1..(p-1)/2``.  No index repeats inside a block, and each pair
occurs in exactly one block because the chord ``{a, b}`` has a single
midpoint on an odd circle.  For even ``p``, apply the odd construction to
``{1..p-1}`` and complete block ``i`` with ``(i, p)``, which makes every
block a perfect matching (the round-robin circle method).
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

Pair = tuple[int, int]


@dataclass(frozen=True)
class PartitionSchedule:
    """``groups[k]`` lists the pairs of block ``k + 1`` as sorted 1-based ``(i, j)``, ``i < j``.

    ``oriented`` keeps the construction's orientation (used only for display).
    """

    p: int
    groups: tuple[tuple[Pair, ...], ...]
    oriented: tuple[tuple[Pair, ...], ...] | None = field(default=None, compare=False)

    @property
    def n_pairs(self) -> int:
        return sum(len(g) for g in self.groups)

    def display(self) -> str:
        rows = self.oriented if self.oriented is not None else self.groups
        lines = []
        for k, g in enumerate(rows, start=1):
            terms = " + ".join(f"B(x{a}-x{b})" for a, b in g)
            lines.append(f"G{k}: {terms}")
        return "\n".join(lines)

    def as_sets(self) -> list[frozenset[Pair]]:
        return [frozenset(g) for g in self.groups]


def _odd_blocks(p: int) -> list[list[Pair]]:
    # 0-based circle arithmetic, 1-based labels out
    half = (p - 1) // 2
    return [[((i - r) % p + 1, (i + r) % p + 1) for r in range(1, half + 1)] for i in range(p)]


def build_partition(p: int) -> PartitionSchedule:
    if p < 2:
        raise ValueError("p must be >= 2")
    if p % 2:
        oriented = _odd_blocks(p)
    else:
        oriented = [blk + [(p, i + 1)] for i, blk in enumerate(_odd_blocks(p - 1))]
    groups = tuple(tuple(tuple(sorted(pr)) for pr in blk) for blk in oriented)
    return PartitionSchedule(p, groups, tuple(tuple(b) for b in oriented))


@dataclass
class PartitionReport:
    valid: bool
    n_pairs: int
    n_groups: int
    violation: str | None = None
    witness: object = None


def verify_partition(s: PartitionSchedule) -> PartitionReport:
    """Check every schedule invariant; report the first failure with a witness."""
    p = s.p

    def fail(msg, witness):
        return PartitionReport(False, s.n_pairs, len(s.groups), msg, witness)

    for g in s.groups:
        for pr in g:
            i, j = pr
            if not (1 <= i < j <= p):
                return fail("pair outside 1 <= i < j <= p", pr)
    census = Counter(pr for g in s.groups for pr in g)
    for pr, c in sorted(census.items()):
        if c > 1:
            return fail(f"pair {pr} appears {c} times", pr)
    for i in range(1, p + 1):
        for j in range(i + 1, p + 1):
            if (i, j) not in census:
                return fail(f"pair {(i, j)} missing", (i, j))
    half = p // 2
    want_groups = p if p % 2 else p - 1
    if len(s.groups) != want_groups:
        return fail(f"expected {want_groups} groups, found {len(s.groups)}", len(s.groups))
    for k, g in enumerate(s.groups, start=1):
        if len(g) != half:
            return fail(f"group {k} has {len(g)} pairs, expected {half}", k)
        idx = Counter(x for pr in g for x in pr)
        rep = [x for x, c in idx.items() if c > 1]
        if rep:
            return fail(f"index {rep[0]} repeats in group {k}", (k, rep[0]))
        if p % 2 and k in idx:
            return fail(f"group {k} involves its excluded index", (k, k))
        if not p % 2 and set(idx) != set(range(1, p + 1)):
            return fail(f"group {k} is not a perfect matching", k)
    return PartitionReport(True, s.n_pairs, len(s.groups))
