"""Independent reference implementations used by the tests.

These deliberately share no code with the package: plain loops over Python
containers, no numpy vectorisation, no reuse of package helpers.
"""

import itertools
import math


def brute_force_subgraph(triples, main, topics, max_hops=2):
    """Union of triples incident to ``main`` and every triple on an
    undirected simple path of length <= max_hops from ``main`` to a topic."""
    triples = list(dict.fromkeys(triples))
    ends = lambda t: (t[0], t[2])
    chosen = {t for t in triples if main in ends(t)}
    topics = [x for x in topics if x != main and any(x in ends(t) for t in triples)]
    for length in range(1, max_hops + 1):
        for path in itertools.product(triples, repeat=length):
            node = main
            visited = [main]
            ok = True
            for t in path:
                a, b = ends(t)
                if a == node:
                    nxt = b
                elif b == node:
                    nxt = a
                else:
                    ok = False
                    break
                if nxt in visited:
                    ok = False
                    break
                visited.append(nxt)
                node = nxt
            if ok and node in topics:
                chosen.update(path)
    return {tuple(t) for t in chosen}


def power_iteration_pagerank(edges, nodes, damping=0.85, iters=1000):
    """Textbook PageRank with uniform dangling redistribution, fixed iterations."""
    n = len(nodes)
    out = {v: [] for v in nodes}
    for s, t in dict.fromkeys(edges):
        out[s].append(t)
    rank = {v: 1.0 / n for v in nodes}
    for _ in range(iters):
        dangling = sum(rank[v] for v in nodes if not out[v])
        new = {v: (1.0 - damping) / n + damping * dangling / n for v in nodes}
        for v in nodes:
            for t in out[v]:
                new[t] += damping * rank[v] / len(out[v])
        rank = new
    return rank


def scalar_log_softmax(row, k):
    m = max(row)
    return row[k] - m - math.log(sum(math.exp(x - m) for x in row))


def exhaustive_search(logprob_fn, vocab_size, eos, max_len):
    """Best length-normalised sequence over all continuations.

    ``logprob_fn(prefix)`` returns the next-token log-probabilities. Sequences
    end at eos or at max_len. Returns (tokens, logprob) with the same tie
    rule as the search under test: higher score, then lower tokens, then shorter.
    """
    best = None
    stack = [((), 0.0)]
    while stack:
        prefix, lp = stack.pop()
        dist = logprob_fn(prefix)
        for tok in range(vocab_size):
            if not math.isfinite(dist[tok]):
                continue
            seq, total = prefix + (tok,), lp + dist[tok]
            if tok == eos or len(seq) == max_len:
                key = (-(total / len(seq)), seq, len(seq))
                if best is None or key < best[0]:
                    best = (key, seq, total)
            else:
                stack.append((seq, total))
    return best[1], best[2]


def lcs_brute(a, b):
    """Longest common subsequence by enumerating subsequences of ``a``."""
    best = 0
    for r in range(len(a) + 1):
        for idx in itertools.combinations(range(len(a)), r):
            sub = [a[i] for i in idx]
            it = iter(b)
            if all(x in it for x in sub):
                best = max(best, r)
    return best


def corpus_bleu_reference(cands, refs, max_n=4):
    """Textbook corpus BLEU using list scans instead of hashed counts."""
    matched = [0] * max_n
    total = [0] * max_n
    c_len = sum(len(c) for c in cands)
    r_len = sum(len(r) for r in refs)
    for cand, ref in zip(cands, refs):
        for n in range(1, max_n + 1):
            cand_grams = [tuple(cand[i : i + n]) for i in range(len(cand) - n + 1)]
            ref_grams = [tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)]
            total[n - 1] += len(cand_grams)
            pool = list(ref_grams)
            for g in cand_grams:
                if g in pool:
                    pool.remove(g)
                    matched[n - 1] += 1
    if c_len == 0 or 0 in matched or 0 in total:
        return 0.0
    geo = math.exp(sum(math.log(m / t) for m, t in zip(matched, total)) / max_n)
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    return 100 * bp * geo
