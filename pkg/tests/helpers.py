"""Independent reference implementations shared by the tests."""

import itertools
import math

import numpy as np


def brute_acyclic(pa):
    m = len(pa)
    state = [0] * m

    def visit(v):
        if state[v] == 1:
            return False
        if state[v] == 2:
            return True
        state[v] = 1
        for u in range(m):
            if pa[v] >> u & 1 and not visit(u):
                return False
        state[v] = 2
        return True

    return all(visit(v) for v in range(m))


def all_dags(m):
    pairs = list(itertools.combinations(range(m), 2))
    out = []
    for digits in itertools.product(range(3), repeat=len(pairs)):
        pa = [0] * m
        for (i, j), d in zip(pairs, digits):
            if d == 1:
                pa[j] |= 1 << i
            elif d == 2:
                pa[i] |= 1 << j
        if brute_acyclic(pa):
            out.append(tuple(pa))
    return out


def brute_neighbors(pa, cap):
    m = len(pa)
    out = set()
    for i, j in itertools.permutations(range(m), 2):
        g = list(pa)
        if pa[j] >> i & 1:
            g[j] &= ~(1 << i)
            out.add(tuple(g))
            g[i] |= 1 << j
            if bin(g[i]).count("1") <= cap and brute_acyclic(g):
                out.add(tuple(g))
        elif not pa[i] >> j & 1:
            g[j] |= 1 << i
            if bin(g[j]).count("1") <= cap and brute_acyclic(g):
                out.add(tuple(g))
    return out


def loop_counts(values, fixed, arities, i, parents):
    """Family counts by explicit iteration over rows."""
    q = int(np.prod([arities[p] for p in parents])) if parents else 1
    counts = np.zeros((q, arities[i]))
    for row, fx in zip(values, fixed):
        if fx[i]:
            continue
        k, stride = 0, 1
        for p in parents:
            k += stride * row[p]
            stride *= arities[p]
        counts[k, row[i]] += 1
    return counts


def loop_family_score(values, fixed, arities, i, parents, beta=0.1, alpha=1.0):
    counts = loop_counts(values, fixed, arities, i, parents)
    q, r = counts.shape
    s = len(parents) * math.log(beta)
    for k in range(q):
        n_k = counts[k].sum()
        s += math.lgamma(alpha / q) - math.lgamma(alpha / q + n_k)
        for j in range(r):
            s += math.lgamma(alpha / (q * r) + counts[k, j]) - math.lgamma(alpha / (q * r))
    return s


def loop_dag_score(data, pa, beta=0.1, alpha=1.0):
    return sum(loop_family_score(data.values, data.fixed, data.arities, i,
                                 [p for p in range(len(pa)) if pa[i] >> p & 1], beta, alpha)
               for i in range(len(pa)))
