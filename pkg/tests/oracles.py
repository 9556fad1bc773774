"""Independent reference computations used by the tests.

Everything here is written with plain Python loops and the math module so it
shares no code path with the package.
"""

from __future__ import annotations

import math
import random


def sigmoid(v: float) -> float:
    return 1.0 / (1.0 + math.exp(-v))


def matvec(W, x):
    return [sum(W[i][k] * x[k] for k in range(len(x))) for i in range(len(W))]


def gru_step(x, h, p):
    """Scalar GRU step; ``p`` maps W_z..b_h to nested lists."""
    n = len(h)
    wz, wr, wh = matvec(p["W_z"], x), matvec(p["W_r"], x), matvec(p["W_h"], x)
    uz, ur = matvec(p["U_z"], h), matvec(p["U_r"], h)
    z = [sigmoid(wz[i] + uz[i] + p["b_z"][i]) for i in range(n)]
    r = [sigmoid(wr[i] + ur[i] + p["b_r"][i]) for i in range(n)]
    rh = [r[i] * h[i] for i in range(n)]
    uh = matvec(p["U_h"], rh)
    cand = [math.tanh(wh[i] + uh[i] + p["b_h"][i]) for i in range(n)]
    return [(1.0 - z[i]) * h[i] + z[i] * cand[i] for i in range(n)]


def bigru(embeddings, fwd, bwd):
    """Rows [fwd_t; bwd_t] and the final [fwd_last; bwd_first] for a list of input vectors."""
    n = len(fwd["b_z"])
    L = len(embeddings)
    hf, fwd_states = [0.0] * n, []
    for t in range(L):
        hf = gru_step(embeddings[t], hf, fwd)
        fwd_states.append(hf)
    hb, bwd_states = [0.0] * n, [None] * L
    for t in reversed(range(L)):
        hb = gru_step(embeddings[t], hb, bwd)
        bwd_states[t] = hb
    rows = [fwd_states[t] + bwd_states[t] for t in range(L)]
    return rows, fwd_states[-1] + bwd_states[0]


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def brute_counts(pred, gold):
    crt = tot = gt = 0
    for i in gold:
        p, g = list(set(pred[i])), list(set(gold[i]))
        tot += len(p)
        gt += len(g)
        for x in p:
            for y in g:
                if x == y:
                    crt += 1
    return crt, tot, gt


def brute_prf(crt, tot, gt):
    p = crt / tot if tot > 0 else 0.0
    r = crt / gt if gt > 0 else 0.0
    return p, r, (2 * p * r / (p + r) if p + r > 0 else 0.0)


def brute_jacc(pred, gold):
    hits = 0
    for i in gold:
        if sorted(set(pred[i])) == sorted(set(gold[i])):
            hits += 1
    return hits / len(gold)


def brute_iacc(pred, gold):
    total = 0.0
    for i in gold:
        g = set(gold[i])
        if not g:
            total += 1.0 if not set(pred[i]) else 0.0
        else:
            total += len([x for x in g if x in set(pred[i])]) / len(g)
    return total / len(gold)


def brute_jf1(pred, gold):
    total = 0.0
    for i in gold:
        g, p = set(gold[i]), set(pred[i])
        if not g:
            total += 1.0 if not p else 0.0
        else:
            total += brute_prf(len([x for x in p if x in g]), len(p), len(g))[2]
    return total / len(gold)


def brute_partition(pred, gold, unseen):
    def part(d, want_unseen):
        return {i: [x for x in d[i] if (x in unseen) == want_unseen] for i in d}

    seen = brute_prf(*brute_counts(part(pred, False), part(gold, False)))
    un = brute_prf(*brute_counts(part(pred, True), part(gold, True)))
    return seen, un


def random_pairs_case(seed: int, n_inst: int | None = None):
    """Random pred/gold maps over a small universe so overlaps are frequent."""
    rnd = random.Random(seed)
    attrs = ["a", "b", "c"]
    values = ["x", "y", "z", "w"]
    universe = [(a, v) for a in attrs for v in values]
    n = n_inst if n_inst is not None else rnd.randint(1, 8)
    gold, pred = {}, {}
    for k in range(n):
        gold[f"i{k}"] = set(rnd.sample(universe, rnd.randint(0, 4)))
        if rnd.random() < 0.3:
            pred[f"i{k}"] = set(gold[f"i{k}"])
        else:
            pred[f"i{k}"] = set(rnd.sample(universe, rnd.randint(0, 4)))
    unseen = set(rnd.sample(universe, rnd.randint(0, len(universe))))
    return pred, gold, unseen
