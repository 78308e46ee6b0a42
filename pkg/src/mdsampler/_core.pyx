# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; mirrors ``_pycore`` operation for operation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, log, exp, M_PI, INFINITY

cnp.import_array()

BACKEND = "cython"

cdef enum:
    MAXN = 16

cdef enum:
    ADD = 0
    DELETE = 1
    REVERSE = 2


# ---------------------------------------------------------------------------
# Rastrigin
# ---------------------------------------------------------------------------

cdef double _rastrigin(double* x, int m, double A) nogil:
    cdef double s = 0.0
    cdef int i
    for i in range(m):
        s += x[i] * x[i] + A * (1.0 - cos(M_PI * x[i]))
    return -s


def rastrigin_logpdf(x, double A):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    return _rastrigin(&xv[0], xv.shape[0], A)


def rastrigin_grad(x, double A):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef int i
    for i in range(xv.shape[0]):
        ov[i] = -2.0 * xv[i] - A * M_PI * sin(M_PI * xv[i])
    return out


def rastrigin_ascend(x, double A, double gtol, int max_iter, double max_step):
    cdef cnp.ndarray[double, ndim=1] xa = np.array(x, dtype=np.float64)
    cdef int m = xa.shape[0]
    cdef cnp.ndarray[double, ndim=1] ya = np.empty(m)
    cdef cnp.ndarray[double, ndim=1] ga = np.empty(m)
    cdef double* xp = &xa[0]
    cdef double* yp = &ya[0]
    cdef double* gp = &ga[0]
    cdef double f = _rastrigin(xp, m, A)
    cdef double fy, gg, gnorm, step
    cdef int it, i
    with nogil:
        for it in range(max_iter):
            gg = 0.0
            for i in range(m):
                gp[i] = -2.0 * xp[i] - A * M_PI * sin(M_PI * xp[i])
            for i in range(m):
                gg += gp[i] * gp[i]
            gnorm = sqrt(gg)
            if gnorm < gtol:
                with gil:
                    return xa, it
            step = 1.0
            if step * gnorm > max_step:
                step = max_step / gnorm
            while True:
                for i in range(m):
                    yp[i] = xp[i] + step * gp[i]
                fy = _rastrigin(yp, m, A)
                if fy >= f + 1e-4 * step * gg:
                    break
                step *= 0.5
                if step * gnorm < 1e-13:
                    # no representable progress left: accept a loose stationary point
                    with gil:
                        return xa, (it if gnorm < sqrt(gtol) else -1)
            for i in range(m):
                xp[i] = yp[i]
            f = fy
    return xa, -1


def match_point(double[:, ::1] modes, int n, x, double tol):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef int m = xv.shape[0]
    cdef int best = -1, k, i
    cdef double best_d = tol * tol, d, diff
    for k in range(n):
        d = 0.0
        for i in range(m):
            diff = modes[k, i] - xv[i]
            d += diff * diff
        if d <= best_d:
            if best < 0 or d < best_d:
                best = k
                best_d = d
    return best


# ---------------------------------------------------------------------------
# DAG primitives on parent bitmasks
# ---------------------------------------------------------------------------

cdef extern from *:
    int __builtin_popcount(unsigned int) nogil
    int __builtin_ctz(unsigned int) nogil


cdef inline int _popcount(unsigned int v) nogil:
    return __builtin_popcount(v)

cdef int _load(object pa, unsigned int* out) except -1:
    cdef int m = len(pa)
    cdef int i
    if m > MAXN:
        raise ValueError("compiled kernels support at most %d nodes" % MAXN)
    for i in range(m):
        out[i] = <unsigned int>pa[i]
    return m


cdef tuple _store(unsigned int* pa, int m):
    return tuple([<long>pa[i] for i in range(m)])


cdef unsigned int _ancestors(unsigned int* pa, int v) nogil:
    cdef unsigned int anc = 0, frontier = pa[v], low
    cdef int u
    while frontier:
        low = frontier & (~frontier + 1)
        u = __builtin_ctz(frontier)
        frontier ^= low
        if not (anc >> u) & 1:
            anc |= low
            frontier |= pa[u] & ~anc
    return anc


cdef bint _acyclic(unsigned int* pa, int m) nogil:
    cdef int v
    for v in range(m):
        if (_ancestors(pa, v) >> v) & 1:
            return False
    return True


def ancestors(pa, int v):
    cdef unsigned int p[MAXN]
    _load(pa, p)
    return <long>_ancestors(p, v)


def is_acyclic(pa):
    cdef unsigned int p[MAXN]
    cdef int m = _load(pa, p)
    return bool(_acyclic(p, m))


def dag_score(pa, double[:, ::1] table):
    cdef unsigned int p[MAXN]
    cdef int m = _load(pa, p)
    cdef double s = 0.0
    cdef int i
    for i in range(m):
        s += table[i, p[i]]
    return s


cdef bint _reverse_ok(unsigned int* pa, unsigned int* anc, int i, int j, int cap) nogil:
    cdef unsigned int others, low
    cdef int p
    if _popcount(pa[i]) >= cap:
        return False
    others = pa[j] & ~(1u << i)
    while others:
        low = others & (~others + 1)
        p = __builtin_ctz(others)
        others ^= low
        if ((anc[p] | low) >> i) & 1:
            return False
    return True


# Moves are enumerated in canonical order: additions, deletions, reversals,
# each lexicographic in (i, j) with the edge read as i -> j.  The callback
# style is avoided; each consumer repeats the loop with its own body.

cdef int _count_moves(unsigned int* pa, int m, int cap) nogil:
    cdef unsigned int anc[MAXN]
    cdef int i, j, n = 0
    for i in range(m):
        anc[i] = _ancestors(pa, i)
    for i in range(m):
        for j in range(m):
            if i == j or (pa[j] >> i) & 1 or (pa[i] >> j) & 1:
                continue
            if _popcount(pa[j]) >= cap:
                continue
            if (anc[i] >> j) & 1:
                continue
            n += 1
    for j in range(m):
        n += _popcount(pa[j])
    for i in range(m):
        for j in range(m):
            if (pa[j] >> i) & 1 and _reverse_ok(pa, anc, i, j, cap):
                n += 1
    return n


cdef void _apply(unsigned int* pa, int kind, int i, int j) nogil:
    if kind == ADD:
        pa[j] |= 1u << i
    elif kind == DELETE:
        pa[j] &= ~(1u << i)
    else:
        pa[j] &= ~(1u << i)
        pa[i] |= 1u << j


cdef int _move_at(unsigned int* pa, int m, int cap, int idx, int* kind, int* mi, int* mj) nogil:
    cdef unsigned int anc[MAXN]
    cdef int i, j, n = 0
    for i in range(m):
        anc[i] = _ancestors(pa, i)
    for i in range(m):
        for j in range(m):
            if i == j or (pa[j] >> i) & 1 or (pa[i] >> j) & 1:
                continue
            if _popcount(pa[j]) >= cap:
                continue
            if (anc[i] >> j) & 1:
                continue
            if n == idx:
                kind[0] = ADD; mi[0] = i; mj[0] = j
                return 1
            n += 1
    for i in range(m):
        for j in range(m):
            if (pa[j] >> i) & 1:
                if n == idx:
                    kind[0] = DELETE; mi[0] = i; mj[0] = j
                    return 1
                n += 1
    for i in range(m):
        for j in range(m):
            if (pa[j] >> i) & 1 and _reverse_ok(pa, anc, i, j, cap):
                if n == idx:
                    kind[0] = REVERSE; mi[0] = i; mj[0] = j
                    return 1
                n += 1
    return 0


def count_neighbors(pa, int cap):
    cdef unsigned int p[MAXN]
    cdef int m = _load(pa, p)
    return _count_moves(p, m, cap)


def neighbor_at(pa, int cap, int idx):
    cdef unsigned int p[MAXN]
    cdef int m = _load(pa, p)
    cdef int kind, i, j
    if not _move_at(p, m, cap, idx, &kind, &i, &j):
        raise IndexError(idx)
    _apply(p, kind, i, j)
    return _store(p, m)


def list_neighbors(pa, int cap):
    cdef unsigned int p[MAXN]
    cdef unsigned int q[MAXN]
    cdef int m = _load(pa, p)
    cdef int n = _count_moves(p, m, cap)
    cdef int idx, kind, i, j, r
    out = []
    for idx in range(n):
        _move_at(p, m, cap, idx, &kind, &i, &j)
        for r in range(m):
            q[r] = p[r]
        _apply(q, kind, i, j)
        out.append(((kind, i, j), _store(q, m)))
    return out


def propose_neighbor(pa, int cap, double u):
    cdef unsigned int p[MAXN]
    cdef int m = _load(pa, p)
    cdef int n_fwd = _count_moves(p, m, cap)
    cdef int idx, kind, i, j
    if n_fwd == 0:
        return None, 0, 0
    idx = <int>(u * n_fwd)
    if idx >= n_fwd:
        idx = n_fwd - 1
    _move_at(p, m, cap, idx, &kind, &i, &j)
    _apply(p, kind, i, j)
    return _store(p, m), n_fwd, _count_moves(p, m, cap)


cdef int _sna_step(unsigned int* pa, int m, const double* table, int stride, int cap) nogil:
    """Apply the best move in place; return 0 when ``pa`` is the maximum."""
    cdef unsigned int anc[MAXN]
    cdef int i, j, bk = -1, bi = 0, bj = 0
    cdef double best = 0.0, d
    for i in range(m):
        anc[i] = _ancestors(pa, i)
    for i in range(m):
        for j in range(m):
            if i == j or (pa[j] >> i) & 1 or (pa[i] >> j) & 1:
                continue
            if _popcount(pa[j]) >= cap:
                continue
            if (anc[i] >> j) & 1:
                continue
            d = table[j * stride + (pa[j] | (1u << i))] - table[j * stride + pa[j]]
            if d > best:
                best = d; bk = ADD; bi = i; bj = j
    for i in range(m):
        for j in range(m):
            if (pa[j] >> i) & 1:
                d = table[j * stride + (pa[j] & ~(1u << i))] - table[j * stride + pa[j]]
                if d > best:
                    best = d; bk = DELETE; bi = i; bj = j
    for i in range(m):
        for j in range(m):
            if (pa[j] >> i) & 1 and _reverse_ok(pa, anc, i, j, cap):
                d = ((table[j * stride + (pa[j] & ~(1u << i))] - table[j * stride + pa[j]])
                     + (table[i * stride + (pa[i] | (1u << j))] - table[i * stride + pa[i]]))
                if d > best:
                    best = d; bk = REVERSE; bi = i; bj = j
    if bk < 0:
        return 0
    _apply(pa, bk, bi, bj)
    return 1


def sna_step(pa, double[:, ::1] table, int cap):
    cdef unsigned int p[MAXN]
    cdef int m = _load(pa, p)
    if not _sna_step(p, m, &table[0, 0], table.shape[1], cap):
        return None
    return _store(p, m)


def sna(pa, double[:, ::1] table, int cap, int max_steps):
    cdef unsigned int p[MAXN]
    cdef int m = _load(pa, p)
    cdef int steps
    cdef const double* t = &table[0, 0]
    cdef int stride = table.shape[1]
    with nogil:
        for steps in range(max_steps + 1):
            if not _sna_step(p, m, t, stride, cap):
                with gil:
                    return _store(p, m), steps
    return _store(p, m), -1


# ---------------------------------------------------------------------------
# Edit counts and the sequential edge-wise mixed jump
# ---------------------------------------------------------------------------

cdef inline int _edge(unsigned int* pa, int i, int j) nogil:
    if (pa[j] >> i) & 1:
        return 1
    if (pa[i] >> j) & 1:
        return -1
    return 0


def edit_counts(g, nu):
    cdef unsigned int pg[MAXN]
    cdef unsigned int pn[MAXN]
    cdef int m = _load(g, pg)
    _load(nu, pn)
    cdef int i, j, eg, en, ca = 0, cd = 0, cr = 0
    for i in range(m):
        for j in range(i + 1, m):
            eg = _edge(pg, i, j)
            en = _edge(pn, i, j)
            if eg != 0 and en == 0:
                ca += 1
            elif eg == 0 and en != 0:
                cd += 1
            elif eg * en == -1:
                cr += 1
    return ca, cd, cr


cdef bint _set_ok(unsigned int* work, int i, int j, int val, int e, int cap) nogil:
    cdef int child, parent
    cdef unsigned int pa_child, pa_parent, saved_c, saved_p
    cdef bint cyclic
    if val == e or val == 0:
        return True
    if val == 1:
        child = j; parent = i
    else:
        child = i; parent = j
    pa_child = work[child] & ~(1u << parent)
    pa_parent = work[parent] & ~(1u << child)
    if _popcount(pa_child) >= cap:
        return False
    saved_c = work[child]; saved_p = work[parent]
    work[child] = pa_child; work[parent] = pa_parent
    cyclic = (_ancestors(work, parent) >> child) & 1
    work[child] = saved_c; work[parent] = saved_p
    return not cyclic


cdef inline void _install(unsigned int* work, int i, int j, int val) nogil:
    work[j] &= ~(1u << i)
    work[i] &= ~(1u << j)
    if val == 1:
        work[j] |= 1u << i
    elif val == -1:
        work[i] |= 1u << j


cdef inline double _clamp_b(double w, double b) nogil:
    return (w if w > 0.0 else 0.0) + b


cdef void _pair_options(int e, double va, double vd, double vr, int n_edges, int n_pairs,
                        double b, int* vals, double* w) nogil:
    if e != 0:
        vals[0] = -e; vals[1] = 0; vals[2] = e
        w[0] = _clamp_b(vr, b)
        w[1] = _clamp_b(vd, b)
        w[2] = _clamp_b(n_edges - (vr + vd), b)
    else:
        vals[0] = 0; vals[1] = 1; vals[2] = -1
        w[0] = _clamp_b(n_pairs - n_edges - va, b)
        w[1] = _clamp_b(va / 2.0, b)
        w[2] = _clamp_b(va / 2.0, b)


cdef int _edge_count(unsigned int* pa, int m) nogil:
    cdef int i, n = 0
    for i in range(m):
        n += _popcount(pa[i])
    return n


def mixed_jump_sample(nu, v, double b, int cap, double[::1] u):
    cdef unsigned int pn[MAXN]
    cdef unsigned int work[MAXN]
    cdef int m = _load(nu, pn)
    cdef double va = v[0], vd = v[1], vr = v[2]
    cdef int i, j, c, e, t = 0, chosen, val
    cdef int n_edges = _edge_count(pn, m)
    cdef int n_pairs = m * (m - 1) // 2
    cdef int vals[3]
    cdef double w[3]
    cdef bint ok[3]
    cdef double total, target, acc
    for i in range(m):
        work[i] = pn[i]
    for i in range(m):
        for j in range(i + 1, m):
            e = _edge(pn, i, j)
            _pair_options(e, va, vd, vr, n_edges, n_pairs, b, vals, w)
            for c in range(3):
                ok[c] = _set_ok(work, i, j, vals[c], e, cap)
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
    return _store(work, m)


cdef double _component_logpdf(unsigned int* pn, int m, double va, double vd, double vr,
                              double b, int cap, unsigned int* pg) nogil:
    cdef unsigned int work[MAXN]
    cdef int i, j, c, e, target
    cdef int n_edges = _edge_count(pn, m)
    cdef int n_pairs = m * (m - 1) // 2
    cdef int vals[3]
    cdef double w[3]
    cdef double total, hit, logp = 0.0
    for i in range(m):
        work[i] = pn[i]
    for i in range(m):
        for j in range(i + 1, m):
            e = _edge(pn, i, j)
            target = _edge(pg, i, j)
            _pair_options(e, va, vd, vr, n_edges, n_pairs, b, vals, w)
            total = 0.0
            hit = -1.0
            for c in range(3):
                if _set_ok(work, i, j, vals[c], e, cap):
                    total += w[c]
                    if vals[c] == target:
                        hit = w[c]
            if hit < 0.0:
                return -INFINITY
            logp += log(hit / total)
            if target != e:
                _install(work, i, j, target)
    return logp


def mixed_jump_component_log_density(nu, v, double b, int cap, g):
    cdef unsigned int pn[MAXN]
    cdef unsigned int pg[MAXN]
    cdef int m = _load(nu, pn)
    _load(g, pg)
    return _component_logpdf(pn, m, v[0], v[1], v[2], b, cap, pg)


def mixed_jump_log_density(nus, double[:, ::1] V, double b, int cap, g):
    cdef unsigned int pg[MAXN]
    cdef unsigned int pn[MAXN]
    cdef int m = _load(g, pg)
    cdef int M = len(nus), k
    cdef double mx = -INFINITY, s = 0.0
    comps = np.empty(M)
    cdef double[::1] cv = comps
    for k in range(M):
        _load(nus[k], pn)
        cv[k] = _component_logpdf(pn, m, V[k, 0], V[k, 1], V[k, 2], b, cap, pg)
        if cv[k] > mx:
            mx = cv[k]
    if mx == -INFINITY:
        return -INFINITY
    for k in range(M):
        s += exp(cv[k] - mx)
    return mx + log(s) - log(<double>M)


# ---------------------------------------------------------------------------
# Exhaustive enumeration (small m)
# ---------------------------------------------------------------------------

def enumerate_dags(int m, int cap):
    cdef int T = m * (m - 1) // 2
    cdef long total = 1
    cdef int t, i, j, d
    for t in range(T):
        total *= 3
    cdef int pi[MAXN * MAXN]
    cdef int pj[MAXN * MAXN]
    t = 0
    for i in range(m):
        for j in range(i + 1, m):
            pi[t] = i; pj[t] = j
            t += 1
    cdef unsigned int pa[MAXN]
    cdef long code, c, n = 0, cap_rows = 1024
    cdef bint bad
    out = np.empty((cap_rows, m), dtype=np.int64)
    cdef long[:, ::1] ov = out
    for code in range(total):
        for i in range(m):
            pa[i] = 0
        c = code
        for t in range(T):
            d = c % 3
            c = c // 3
            if d == 1:
                pa[pj[t]] |= 1u << pi[t]
            elif d == 2:
                pa[pi[t]] |= 1u << pj[t]
        bad = False
        for i in range(m):
            if _popcount(pa[i]) > cap:
                bad = True
                break
        if bad or not _acyclic(pa, m):
            continue
        if n == cap_rows:
            cap_rows *= 2
            out = np.resize(out, (cap_rows, m))
            ov = out
        for i in range(m):
            ov[n, i] = pa[i]
        n += 1
    return out[:n].copy()


cdef long _code(unsigned int* pa, int m) nogil:
    cdef long code = 0, mult = 1
    cdef int i, j, e
    for i in range(m):
        for j in range(i + 1, m):
            e = _edge(pa, i, j)
            if e == 1:
                code += mult
            elif e == -1:
                code += 2 * mult
            mult *= 3
    return code


def dag_code(pa):
    cdef unsigned int p[MAXN]
    cdef int m = _load(pa, p)
    return _code(p, m)


def sna_successors(long[:, ::1] dags, double[:, ::1] table, int cap):
    cdef long N = dags.shape[0], n, total = 1
    cdef int m = dags.shape[1], i, t
    cdef int T = m * (m - 1) // 2
    for t in range(T):
        total *= 3
    index = np.full(total, -1, dtype=np.int64)
    cdef long[::1] iv = index
    cdef unsigned int pa[MAXN]
    for n in range(N):
        for i in range(m):
            pa[i] = <unsigned int>dags[n, i]
        iv[_code(pa, m)] = n
    nxt = np.empty(N, dtype=np.int64)
    cdef long[::1] nv = nxt
    cdef const double* tp = &table[0, 0]
    cdef int stride = table.shape[1]
    with nogil:
        for n in range(N):
            for i in range(m):
                pa[i] = <unsigned int>dags[n, i]
            if _sna_step(pa, m, tp, stride, cap):
                nv[n] = iv[_code(pa, m)]
            else:
                nv[n] = n
    return nxt


# ---------------------------------------------------------------------------
# Modified Wang-Landau flatness test
# ---------------------------------------------------------------------------

def is_flat(c, occupied, double eta):
    cdef long[::1] cv = np.ascontiguousarray(c, dtype=np.int64).ravel()
    cdef cnp.uint8_t[::1] ov = np.ascontiguousarray(occupied, dtype=np.uint8).ravel()
    cdef long n = 0, idx
    cdef double total = 0.0, mean, cmin = 0.0, cmax = 0.0, v, dev
    for idx in range(cv.shape[0]):
        if not ov[idx]:
            continue
        v = <double>cv[idx]
        total += v
        if n == 0 or v < cmin:
            cmin = v
        if n == 0 or v > cmax:
            cmax = v
        n += 1
    if n == 0:
        return False
    mean = total / n
    if mean <= 0.0:
        return False
    dev = cmax - mean if cmax - mean > mean - cmin else mean - cmin
    return dev < eta * mean
