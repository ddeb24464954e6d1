"""Independent reference computations the package is checked against.

They deliberately take a different route from the implementation: n-grams
are counted by brute-force pairing, the LCS by enumerating subsequences,
and cosine similarity by plain Python arithmetic over explicit vectors.
"""

from __future__ import annotations

import itertools
import math


def tokens(text: str) -> list[str]:
    out, cur = [], []
    for ch in text.lower():
        if ch.isalnum():
            cur.append(ch)
        elif cur:
            out.append("".join(cur))
            cur = []
    if cur:
        out.append("".join(cur))
    return out


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def rouge_n(candidate: str, reference: str, n: int) -> tuple[float, float, float]:
    cand = [tuple(c) for c in zip(*(tokens(candidate)[i:] for i in range(n)))]
    ref = [tuple(r) for r in zip(*(tokens(reference)[i:] for i in range(n)))]
    # greedy one-to-one matching: each reference n-gram may be used once
    used = [False] * len(ref)
    overlap = 0
    for g in cand:
        for j, h in enumerate(ref):
            if not used[j] and g == h:
                used[j] = True
                overlap += 1
                break
    p = overlap / len(cand) if cand else 0.0
    r = overlap / len(ref) if ref else 0.0
    return p, r, _f1(p, r)


def lcs_by_enumeration(a: list[str], b: list[str]) -> int:
    """Longest subsequence of the shorter list that is also a subsequence of the other."""
    if len(a) > len(b):
        a, b = b, a

    def is_subsequence(sub, seq) -> bool:
        it = iter(seq)
        return all(any(x == y for y in it) for x in sub)

    for k in range(len(a), 0, -1):
        for idx in itertools.combinations(range(len(a)), k):
            if is_subsequence([a[i] for i in idx], b):
                return k
    return 0


def rouge_l(candidate: str, reference: str) -> tuple[float, float, float]:
    c, r = tokens(candidate), tokens(reference)
    lcs = lcs_by_enumeration(c, r)
    p = lcs / len(c) if c else 0.0
    rec = lcs / len(r) if r else 0.0
    return p, rec, _f1(p, rec)


def one_hot_cosine(pred_labels, truth_labels, vocabulary) -> float:
    def encode(labels):
        vec = []
        for label in labels:
            vec += [1.0 if label == v else 0.0 for v in vocabulary]
        return vec

    a, b = encode(pred_labels), encode(truth_labels)
    dot = sum(x * y for x, y in zip(a, b))
    na, nb = math.sqrt(sum(x * x for x in a)), math.sqrt(sum(y * y for y in b))
    return 0.0 if na == 0 or nb == 0 else dot / (na * nb)


def kappa_by_sets(triples) -> float:
    phi = {i for i, (v, t, _) in enumerate(triples) if v == t}
    psi = {i for i, (v, _, f) in enumerate(triples) if v == f}
    return len(phi & psi) / len(psi)
