"""Independent reference implementations used only by the tests.

None of these share code with the package: they are deliberately naive
(exhaustive search, Warshall closure, hand-summed residuals).
"""

from __future__ import annotations

import itertools
from decimal import Decimal, getcontext

# log2(2n + 2) to 40 digits, computed with Decimal and frozen here.
# n: (sample space, H bits)
FROZEN_ENTROPY = {
    0: (2, 1.0),
    1: (4, 2.0),
    4: (10, 3.321928094887362),
    9: (20, 4.321928094887363),
}


def entropy_bits_decimal(space: int) -> float:
    getcontext().prec = 40
    return float(Decimal(space).ln() / Decimal(2).ln())


def simple_paths(links, source, target):
    """Every simple path as a tuple of link ids; ``links`` is [(id, a, b)]."""
    out = []

    def walk(node, seen, used):
        if node == target:
            out.append(tuple(used))
            return
        for lid, a, b in links:
            if lid in used:
                continue
            nxt = b if a == node else a if b == node else None
            if nxt is None or nxt in seen:
                continue
            walk(nxt, seen | {nxt}, used + [lid])

    walk(source, {source}, [])
    return out


def max_disjoint_bruteforce(links, source, target) -> int:
    """Largest set of pairwise link-disjoint simple paths, by exhaustive search."""
    paths = [frozenset(p) for p in simple_paths(links, source, target)]
    best = 0

    def grow(start, used, count):
        nonlocal best
        best = max(best, count)
        for i in range(start, len(paths)):
            if not paths[i] & used:
                grow(i + 1, used | paths[i], count + 1)

    grow(0, frozenset(), 0)
    return best


def reachable_closure(domains, trust):
    """Warshall transitive-reflexive closure of the trust relation."""
    doms = sorted(domains)
    reach = {(a, b): a == b or (a, b) in trust for a in doms for b in doms}
    for k in doms:
        for i in doms:
            if reach[(i, k)]:
                for j in doms:
                    if reach[(k, j)]:
                        reach[(i, j)] = True
    return reach


def msdnd_secure_bruteforce(domains, source, valuators, trust, observer) -> bool:
    """Secure iff no domain the observer reaches can value the proposition.

    The source values it for itself only; other holders value it for anyone.
    """
    reach = reachable_closure(domains, trust)
    if observer == source:
        return False
    return not any(reach[(observer, d)] for d in valuators if d != source)


def all_digraphs(nodes):
    pairs = [(a, b) for a in nodes for b in nodes if a != b]
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        yield frozenset(p for p, on in zip(pairs, bits) if on)


def conservation_residual(readings, balancing):
    """|sum gen - sum load - sum export - losses| summed by hand."""
    total = 0.0
    for r in readings:
        if r.signal == "generation":
            total += r.value
        elif r.signal in ("load", "net_export"):
            total -= r.value
        elif r.signal == "losses" and r.source == balancing:
            total -= r.value
    return abs(total)
