"""Corpus BLEU and ROUGE-1/2/L."""

import math
from collections import Counter
from dataclasses import dataclass, field


def ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates, references, max_n=4, smooth=False):
    """Corpus BLEU in [0, 100] with pooled clipped n-gram counts.

    Without smoothing any zero pooled precision gives 0. ``smooth`` adds one
    to numerator and denominator for n > 1.
    """
    if not candidates:
        raise ValueError("bleu needs at least one candidate")
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} references")
    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            c, r = ngrams(cand, n), ngrams(ref, n)
            matches[n - 1] += sum(min(k, r[g]) for g, k in c.items())
            totals[n - 1] += max(len(cand) - n + 1, 0)
    if cand_len == 0:
        return 0.0
    log_p = 0.0
    for n in range(max_n):
        m, t = matches[n], totals[n]
        if smooth and n > 0:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_p += math.log(m / t)
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return 100.0 * bp * math.exp(log_p / max_n)


def _prf(overlap, cand_total, ref_total):
    p = overlap / cand_total if cand_total else 0.0
    r = overlap / ref_total if ref_total else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def rouge_n(candidate, reference, n):
    if n not in (1, 2):
        raise ValueError(f"rouge_n supports n in (1, 2), got {n}")
    c, r = ngrams(candidate, n), ngrams(reference, n)
    overlap = sum(min(k, r[g]) for g, k in c.items())
    return _prf(overlap, sum(c.values()), sum(r.values()))


def lcs_length(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference):
    return _prf(lcs_length(candidate, reference), len(candidate), len(reference))


@dataclass
class EvalReport:
    bleu: float
    rouge1: tuple
    rouge2: tuple
    rougeL: tuple
    per_instance: list = field(default_factory=list)

    def to_dict(self):
        keys = ("precision", "recall", "f1")
        return {
            "bleu": self.bleu,
            "rouge1": dict(zip(keys, self.rouge1)),
            "rouge2": dict(zip(keys, self.rouge2)),
            "rougeL": dict(zip(keys, self.rougeL)),
            "per_instance": self.per_instance,
        }


def _mean(rows):
    return tuple(sum(col) / len(rows) for col in zip(*rows))


def evaluate(candidates, references, smooth=False):
    """BLEU over the corpus; ROUGE scores averaged over instances."""
    b = bleu(candidates, references, smooth=smooth)
    r1, r2, rl, per = [], [], [], []
    for i, (c, r) in enumerate(zip(candidates, references)):
        s1, s2, sl = rouge_n(c, r, 1), rouge_n(c, r, 2), rouge_l(c, r)
        r1.append(s1)
        r2.append(s2)
        rl.append(sl)
        per.append({"index": i, "rouge1_f1": s1[2], "rouge2_f1": s2[2], "rougeL_f1": sl[2]})
    return EvalReport(b, _mean(r1), _mean(r2), _mean(rl), per)
