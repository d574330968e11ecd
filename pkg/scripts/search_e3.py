"""Search nilpotent structure equations with coefficients in {0, +1, -1} for
Frölicher spectral sequences that first degenerate at E_3 or later.

d phi^i may only involve generators of lower index (nilpotent ordering) and
must be of type (2,0) + (1,1) (integrability); d^2 = 0 is checked by
build_model. n = 3 is enumerated exhaustively and the hit with the fewest
terms (positive signs preferred) becomes the catalog entry nilmanifold_e3.
n = 4 is only tried when n = 3 has no hit.

    python scripts/search_e3.py
"""

from __future__ import annotations

import itertools
import sys

from frolicher.errors import IntegrabilityError
from frolicher.models import StructureSpec, build_model
from frolicher.spectral import degeneration_page


def slots(n: int) -> list[tuple[int, tuple[int, int]]]:
    out = []
    for i in range(1, n):
        lower = range(i)
        for a, b in itertools.combinations(lower, 2):
            out.append((i, (a, b)))
        for a in lower:
            for b in lower:
                out.append((i, (a, n + b)))
    return out


def page_of(n: int, terms: dict) -> int | None:
    eqs = [dict() for _ in range(n)]
    for (i, pair), c in terms.items():
        eqs[i][pair] = c
    try:
        model = build_model(StructureSpec(n, tuple(eqs)))
    except IntegrabilityError:
        return None
    return degeneration_page(model.bicomplex)


def search_n3() -> list:
    hits, s = [], slots(3)
    for coeffs in itertools.product((0, 1, -1), repeat=len(s)):
        terms = {slot: c for slot, c in zip(s, coeffs) if c}
        r = page_of(3, terms)
        if r is not None and r >= 3:
            hits.append(terms)
    return hits


def search_n4(max_terms: int = 3):
    s = slots(4)
    for count in range(1, max_terms + 1):
        for chosen in itertools.combinations(s, count):
            terms = {slot: 1 for slot in chosen}
            r = page_of(4, terms)
            if r is not None and r >= 3:
                return terms, r
    return None


def simplest(hits: list) -> dict:
    return min(hits, key=lambda t: (len(t), sum(c < 0 for c in t.values()), sorted(t)))


if __name__ == "__main__":
    h3 = search_n3()
    print(f"n=3: {len(h3)} structures with degeneration page >= 3")
    if h3:
        print(f"simplest: {simplest(h3)}")
    else:
        print(f"n=4 first hit: {search_n4()}")
    sys.exit(0)
