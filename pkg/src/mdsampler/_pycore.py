"""Pure-Python kernels.

Reference implementation of every routine in the compiled ``_core``
extension.  Both backends consume identical inputs (including pre-drawn
uniforms) and perform the same floating-point operations in the same
order, so their outputs agree bit for bit.

DAGs are tuples of parent bitmasks: ``pa[j] >> i & 1`` means ``i -> j``.
"""

import math

import numpy as np

BACKEND = "python"

ADD, DELETE, REVERSE = 0, 1, 2


# ---------------------------------------------------------------------------
# Rastrigin
# ---------------------------------------------------------------------------

def rastrigin_logpdf(x, A):
    s = 0.0
    for xi in x:
        xi = float(xi)
        s += xi * xi + A * (1.0 - math.cos(math.pi * xi))
    return -s


def rastrigin_grad(x, A):
    return np.array([-2.0 * float(xi) - A * math.pi * math.sin(math.pi * float(xi))
                     for xi in x])


def rastrigin_ascend(x, A, gtol, max_iter, max_step):
    """Backtracking gradient ascent on the Rastrigin log density.

    Returns ``(mode, iterations)``; iterations is -1 when the budget runs out.
    """
    x = [float(v) for v in x]
    m = len(x)
    f = rastrigin_logpdf(x, A)
    for it in range(max_iter):
        g = [-2.0 * xi - A * math.pi * math.sin(math.pi * xi) for xi in x]
        gg = 0.0
        for gi in g:
            gg += gi * gi
        gnorm = math.sqrt(gg)
        if gnorm < gtol:
            return np.array(x), it
        step = 1.0
        if step * gnorm > max_step:
            step = max_step / gnorm
        while True:
            y = [x[i] + step * g[i] for i in range(m)]
            fy = rastrigin_logpdf(y, A)
            if fy >= f + 1e-4 * step * gg:
                break
            step *= 0.5
            if step * gnorm < 1e-13:
                # no representable progress left: accept a loose stationary point
                return np.array(x), (it if gnorm < math.sqrt(gtol) else -1)
        x = y
        f = fy
    return np.array(x), -1


def match_point(modes, n, x, tol):
    """Index of the nearest of the first ``n`` rows of ``modes`` within ``tol``."""
    best = -1
    best_d = tol * tol
    m = len(x)
    for k in range(n):
        d = 0.0
        for i in range(m):
            diff = float(modes[k, i]) - float(x[i])
            d += diff * diff
        if d <= best_d:
            if best < 0 or d < best_d:
                best = k
                best_d = d
    return best


# ---------------------------------------------------------------------------
# DAG primitives
# ---------------------------------------------------------------------------

def popcount(v):
    return bin(v).count("1")


def ancestors(pa, v):
    anc = 0
    frontier = pa[v]
    while frontier:
        low = frontier & -frontier
        u = low.bit_length() - 1
        frontier ^= low
        if not anc >> u & 1:
            anc |= low
            frontier |= pa[u] & ~anc
    return anc


def is_acyclic(pa):
    for v in range(len(pa)):
        if ancestors(pa, v) >> v & 1:
            return False
    return True


def dag_score(pa, table):
    s = 0.0
    for i in range(len(pa)):
        s += table[i, pa[i]]
    return s


def _all_ancestors(pa):
    return [ancestors(pa, v) for v in range(len(pa))]


def _reverse_ok(pa, anc, i, j, cap):
    # reverse i->j into j->i
    if popcount(pa[i]) >= cap:
        return False
    others = pa[j] & ~(1 << i)
    while others:
        low = others & -others
        p = low.bit_length() - 1
        others ^= low
        if (anc[p] | low) >> i & 1:
            return False
    return True


def iter_moves(pa, cap):
    """Yield valid single-edge moves ``(kind, i, j)`` in canonical order."""
    m = len(pa)
    anc = _all_ancestors(pa)
    for i in range(m):
        for j in range(m):
            if i == j or pa[j] >> i & 1 or pa[i] >> j & 1:
                continue
            if popcount(pa[j]) >= cap:
                continue
            if anc[i] >> j & 1:
                continue
            yield ADD, i, j
    for i in range(m):
        for j in range(m):
            if pa[j] >> i & 1:
                yield DELETE, i, j
    for i in range(m):
        for j in range(m):
            if pa[j] >> i & 1 and _reverse_ok(pa, anc, i, j, cap):
                yield REVERSE, i, j


def apply_move(pa, kind, i, j):
    pa = list(pa)
    if kind == ADD:
        pa[j] |= 1 << i
    elif kind == DELETE:
        pa[j] &= ~(1 << i)
    else:
        pa[j] &= ~(1 << i)
        pa[i] |= 1 << j
    return tuple(pa)


def list_neighbors(pa, cap):
    return [((kind, i, j), apply_move(pa, kind, i, j)) for kind, i, j in iter_moves(pa, cap)]


def count_neighbors(pa, cap):
    n = 0
    for _ in iter_moves(pa, cap):
        n += 1
    return n


def neighbor_at(pa, cap, idx):
    for n, (kind, i, j) in enumerate(iter_moves(pa, cap)):
        if n == idx:
            return apply_move(pa, kind, i, j)
    raise IndexError(idx)


def propose_neighbor(pa, cap, u):
    """Uniform neighbor drawn with uniform ``u``; returns (new, |ngb(pa)|, |ngb(new)|)."""
    n_fwd = count_neighbors(pa, cap)
    if n_fwd == 0:
        return None, 0, 0
    idx = int(u * n_fwd)
    if idx >= n_fwd:
        idx = n_fwd - 1
    new = neighbor_at(pa, cap, idx)
    return new, n_fwd, count_neighbors(new, cap)


def _move_delta(pa, table, kind, i, j):
    if kind == ADD:
        return table[j, pa[j] | (1 << i)] - table[j, pa[j]]
    if kind == DELETE:
        return table[j, pa[j] & ~(1 << i)] - table[j, pa[j]]
    return ((table[j, pa[j] & ~(1 << i)] - table[j, pa[j]])
            + (table[i, pa[i] | (1 << j)] - table[i, pa[i]]))


def sna_step(pa, table, cap):
    """Best move from ``pa`` (first maximum), or None if ``pa`` is the maximum."""
    best = None
    best_delta = 0.0
    for kind, i, j in iter_moves(pa, cap):
        d = _move_delta(pa, table, kind, i, j)
        if d > best_delta:
            best_delta = d
            best = (kind, i, j)
    if best is None:
        return None
    return apply_move(pa, *best)


def sna(pa, table, cap, max_steps):
    """Steepest neighbor ascent; returns (mode, steps) with steps -1 on budget overrun."""
    pa = tuple(pa)
    for steps in range(max_steps + 1):
        nxt = sna_step(pa, table, cap)
        if nxt is None:
            return pa, steps
        pa = nxt
    return pa, -1


# ---------------------------------------------------------------------------
# Edit counts and the sequential edge-wise mixed jump
# ---------------------------------------------------------------------------

def edge_value(pa, i, j):
    if pa[j] >> i & 1:
        return 1
    if pa[i] >> j & 1:
        return -1
    return 0


def edge_count(pa):
    return sum(popcount(p) for p in pa)


def edit_counts(g, nu):
    m = len(g)
    ca = cd = cr = 0
    for i in range(m):
        for j in range(i + 1, m):
            eg = edge_value(g, i, j)
            en = edge_value(nu, i, j)
            if eg != 0 and en == 0:
                ca += 1
            elif eg == 0 and en != 0:
                cd += 1
            elif eg * en == -1:
                cr += 1
    return ca, cd, cr


def _set_ok(work, i, j, val, e, cap):
    """Can pair (i, j) move from value ``e`` to ``val`` in the working graph?"""
    if val == e or val == 0:
        return True
    if val == 1:
        child, parent = j, i
    else:
        child, parent = i, j
    pa_child = work[child] & ~(1 << parent)
    pa_parent = work[parent] & ~(1 << child)
    if popcount(pa_child) >= cap:
        return False
    saved_c, saved_p = work[child], work[parent]
    work[child], work[parent] = pa_child, pa_parent
    # adding parent -> child is cyclic iff child is an ancestor of parent
    cyclic = ancestors(work, parent) >> child & 1
    work[child], work[parent] = saved_c, saved_p
    return not cyclic


def _install(work, i, j, val):
    work[j] &= ~(1 << i)
    work[i] &= ~(1 << j)
    if val == 1:
        work[j] |= 1 << i
    elif val == -1:
        work[i] |= 1 << j


def _pair_options(e, v, n_edges, n_pairs, b):
    va, vd, vr = v
    if e != 0:
        vals = (-e, 0, e)
        w = (vr, vd, n_edges - (vr + vd))
    else:
        vals = (0, 1, -1)
        w = (n_pairs - n_edges - va, va / 2.0, va / 2.0)
    return vals, tuple((wi if wi > 0.0 else 0.0) + b for wi in w)


def mixed_jump_sample(nu, v, b, cap, u):
    """Draw a DAG by sequentially editing the pairs of ``nu``; ``u`` holds T uniforms."""
    m = len(nu)
    work = list(nu)
    n_edges = edge_count(nu)
    n_pairs = m * (m - 1) // 2
    t = 0
    for i in range(m):
        for j in range(i + 1, m):
            e = edge_value(nu, i, j)
            vals, w = _pair_options(e, v, n_edges, n_pairs, b)
            ok = [_set_ok(work, i, j, val, e, cap) for val in vals]
            total = 0.0
            for c in range(3):
                if ok[c]:
                    total += w[c]
            target = u[t] * total
            t += 1
            chosen = -1
            acc = 0.0
            for c in range(3):
                if ok[c]:
                    acc += w[c]
                    chosen = c
                    if target < acc:
                        break
            val = vals[chosen]
            if val != e:
                _install(work, i, j, val)
    return tuple(work)


def mixed_jump_component_log_density(nu, v, b, cap, g):
    m = len(nu)
    work = list(nu)
    n_edges = edge_count(nu)
    n_pairs = m * (m - 1) // 2
    logp = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            e = edge_value(nu, i, j)
            target = edge_value(g, i, j)
            vals, w = _pair_options(e, v, n_edges, n_pairs, b)
            total = 0.0
            hit = -1.0
            for c in range(3):
                if _set_ok(work, i, j, vals[c], e, cap):
                    total += w[c]
                    if vals[c] == target:
                        hit = w[c]
            if hit < 0.0:
                return -math.inf
            logp += math.log(hit / total)
            if target != e:
                _install(work, i, j, target)
    return logp


def mixed_jump_log_density(nus, V, b, cap, g):
    """log of (1/M) sum_k r(g; nu_k, V_k)."""
    M = len(nus)
    comps = [mixed_jump_component_log_density(nus[k], (V[k, 0], V[k, 1], V[k, 2]), b, cap, g)
             for k in range(M)]
    mx = max(comps)
    if mx == -math.inf:
        return -math.inf
    s = 0.0
    for c in comps:
        s += math.exp(c - mx)
    return mx + math.log(s) - math.log(M)


# ---------------------------------------------------------------------------
# Exhaustive enumeration (small m)
# ---------------------------------------------------------------------------

def enumerate_dags(m, cap):
    """All cap-respecting DAGs on m nodes as an (N, m) array of parent masks.

    Order: base-3 counter over pairs (i<j) in lexicographic order, first pair
    least significant, digit 0/1/2 meaning no edge / i->j / j->i.
    """
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]
    out = []
    T = len(pairs)
    for code in range(3 ** T):
        pa = [0] * m
        c = code
        for i, j in pairs:
            d = c % 3
            c //= 3
            if d == 1:
                pa[j] |= 1 << i
            elif d == 2:
                pa[i] |= 1 << j
        if any(popcount(p) > cap for p in pa):
            continue
        if is_acyclic(pa):
            out.append(pa)
    return np.array(out, dtype=np.int64).reshape(-1, m)


def dag_code(pa):
    m = len(pa)
    code = 0
    mult = 1
    for i in range(m):
        for j in range(i + 1, m):
            e = edge_value(pa, i, j)
            code += mult * (1 if e == 1 else 2 if e == -1 else 0)
            mult *= 3
    return code


def sna_successors(dags, table, cap):
    """Index of each DAG's SNA successor (itself for modes)."""
    index = {dag_code(tuple(int(v) for v in row)): n for n, row in enumerate(dags)}
    nxt = np.empty(len(dags), dtype=np.int64)
    for n, row in enumerate(dags):
        pa = tuple(int(v) for v in row)
        step = sna_step(pa, table, cap)
        nxt[n] = n if step is None else index[dag_code(step)]
    return nxt


# ---------------------------------------------------------------------------
# Modified Wang-Landau flatness test
# ---------------------------------------------------------------------------

def is_flat(c, occupied, eta):
    """True when max |c - mean(c)| < eta * mean(c) over occupied cells."""
    total = 0.0
    n = 0
    cmin = None
    cmax = None
    for v, occ in zip(np.asarray(c).ravel().tolist(), np.asarray(occupied).ravel().tolist()):
        if not occ:
            continue
        total += v
        n += 1
        if cmin is None or v < cmin:
            cmin = v
        if cmax is None or v > cmax:
            cmax = v
    if n == 0:
        return False
    mean = total / n
    if mean <= 0.0:
        return False
    dev = max(cmax - mean, mean - cmin)
    return dev < eta * mean
