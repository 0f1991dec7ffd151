"""Brute-force reference computations used to cross-check the library."""

from __future__ import annotations

from fractions import Fraction


def jaccard_bytes(a, b) -> Fraction:
    """Jaccard over explicit byte-offset sets."""
    left = set(range(a.start, a.end))
    right = set(range(b.start, b.end))
    return Fraction(len(left & right), len(left | right))


def intersect_oracle(custom, srl, threshold) -> set:
    kept = set()
    for c in custom:
        for s in srl:
            if c.sentence_index == s.sentence_index and jaccard_bytes(c.span, s.span) >= threshold:
                kept.add((c.span, c.entity_type))
    return kept


def pairs_oracle(items) -> list:
    out = []
    for i in range(len(items)):
        for j in range(len(items)):
            if i < j:
                out.append((items[i], items[j]))
    return out


def wup_oracle(parent: dict, a: str, b: str) -> Fraction:
    """Wu-Palmer from full root paths: deepest shared prefix of the two paths."""

    def root_path(term):
        path = [term]
        while parent[path[-1]] != path[-1]:
            path.append(parent[path[-1]])
        return list(reversed(path))

    pa, pb = root_path(a), root_path(b)
    common = [x for x in pa if x in pb]
    lcs_depth = max(pa.index(x) + 1 for x in common)
    return Fraction(2 * lcs_depth, len(pa) + len(pb))


def query_oracle(edges, pattern, hops):
    def ok(value, want):
        return want in (None, "*") or value == want

    if hops == 1:
        s, l, o = pattern
        return sorted({e for e in edges if ok(e[0], s) and ok(e[1], l) and ok(e[2], o)})
    s, l1, l2, o = pattern
    out = set()
    for a in edges:
        for b in edges:
            if a[2] == b[0] and ok(a[0], s) and ok(a[1], l1) and ok(b[1], l2) and ok(b[2], o):
                out.add((a[0], a[1], a[2], b[1], b[2]))
    return sorted(out)
