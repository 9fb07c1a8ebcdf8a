#!/usr/bin/env python3
"""Stand-alone CIDEr-D / METEOR reference computation for the desk corpus.

Reads a JSON-lines corpus ({item_id, candidate, references}) and prints
per-item CIDEr-D and exact-match METEOR scores with 17 significant digits.
Written independently of the Rust crate; used to freeze test expectations.
"""
import itertools
import json
import math
import re
import sys
from collections import Counter


def tokenize(text):
    return re.findall(r"[^\W_]+|[^\w\s]|_", text.lower())


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def cider_d(items, sigma=6.0):
    n_items = len(items)
    df = Counter()
    for it in items:
        seen = set()
        for ref in it["refs"]:
            for n in range(1, 5):
                seen.update(ngrams(ref, n).keys())
        df.update(seen)
    log_n = math.log(n_items)

    def vec(tokens, n):
        return {g: c * (log_n - math.log(max(1.0, df[g]))) for g, c in ngrams(tokens, n).items()}

    scores = []
    for it in items:
        cand = it["cand"]
        per_ref = []
        for ref in it["refs"]:
            total = 0.0
            for n in range(1, 5):
                vh, vr = vec(cand, n), vec(ref, n)
                nh = math.sqrt(sum(v * v for v in vh.values()))
                nr = math.sqrt(sum(v * v for v in vr.values()))
                num = sum(min(vh[g], vr.get(g, 0.0)) * vr.get(g, 0.0) for g in vh)
                val = num / (nh * nr) if nh != 0 and nr != 0 else 0.0
                delta = len(cand) - len(ref)
                total += val * math.exp(-(delta ** 2) / (2 * sigma ** 2))
            per_ref.append(total / 4.0)
        scores.append(10.0 * sum(per_ref) / len(per_ref))
    return scores


def meteor_exact(cand, ref, alpha=0.9, beta=3.0, gamma=0.5):
    """Exact-match METEOR with the true minimum chunk count (exhaustive)."""
    best = None
    m, n = len(cand), len(ref)
    target = sum((Counter(cand) & Counter(ref)).values())
    if target == 0:
        return 0.0

    def search(i, used, pairs):
        nonlocal best
        if i == m:
            if len(pairs) == target:
                chunks = 0
                prev = None
                for (a, b) in pairs:
                    if prev is None or not (a == prev[0] + 1 and b == prev[1] + 1):
                        chunks += 1
                    prev = (a, b)
                best = chunks if best is None else min(best, chunks)
            return
        search(i + 1, used, pairs)
        for j in range(n):
            if j not in used and ref[j] == cand[i]:
                search(i + 1, used | {j}, pairs + [(i, j)])

    search(0, frozenset(), [])
    p, r = target / m, target / n
    fmean = p * r / (alpha * p + (1 - alpha) * r)
    return fmean * (1 - gamma * (best / target) ** beta)


def main():
    items = []
    for line in open(sys.argv[1]):
        if line.strip():
            d = json.loads(line)
            items.append({
                "id": d["item_id"],
                "cand": tokenize(d["candidate"]),
                "refs": [tokenize(r) for r in d["references"]],
            })
    for it, score in zip(items, cider_d(items)):
        met = max(meteor_exact(it["cand"], r) for r in it["refs"])
        print(f'{it["id"]}\tcider_d={score:.17g}\tmeteor_exact={met:.17g}')


if __name__ == "__main__":
    main()
