# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: per-cluster lazy exploration and box sampling.

Mirrors the numpy reference implementations in explorer.py / boxsim.py for
the closed-form catalog (gilbert / weighted indicator / unmarked indicator
with degenerate, uniform01 or discrete marks).  Anything else falls back to
the Python path via _backend.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport INFINITY, M_PI, cos, exp, log, pow, sin, sqrt
from libc.stdlib cimport free, malloc, realloc
from numpy.random cimport bitgen_t

cnp.import_array()

# model kinds
DEF K_GILBERT = 0
DEF K_WEIGHTED = 1
DEF K_UNMARKED = 2
# weighted kernels
DEF G_MAX = 0
DEF G_SUM = 1
DEF G_PREF = 2
# mark kinds
DEF M_DEGENERATE = 0
DEF M_UNIFORM = 1
DEF M_DISCRETE = 2


cdef struct Model:
    int kind
    int dim
    double eps
    double delta
    int kernel_code
    double level
    double range_
    int mark_kind
    double mark_value
    double kappa
    int n_atoms
    double *atoms
    double *weights


cdef inline double u01(bitgen_t *bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef inline double _gauss(bitgen_t *bg) noexcept nogil:
    # Marsaglia polar method, one value per call (the spare is discarded)
    cdef double u, v, s
    while True:
        u = 2.0 * u01(bg) - 1.0
        v = 2.0 * u01(bg) - 1.0
        s = u * u + v * v
        if 0.0 < s < 1.0:
            return u * sqrt(-2.0 * log(s) / s)


cdef long _poisson(bitgen_t *bg, double lam) noexcept nogil:
    # exact: product method on chunks of mean <= 30 (Poisson additivity)
    cdef long total = 0
    cdef double chunk, limit, prod
    while lam > 0.0:
        chunk = lam if lam <= 30.0 else 30.0
        lam -= chunk
        limit = exp(-chunk)
        prod = u01(bg)
        while prod > limit:
            total += 1
            prod *= u01(bg)
    return total


cdef inline double _pint(double a, double b, double e) noexcept nogil:
    # integral of q^e over (a, b)
    if e == -1.0:
        return log(b / a)
    return (pow(b, e + 1.0) - pow(a, e + 1.0)) / (e + 1.0)


cdef double _pair_radius(Model *m, double p, double q) noexcept nogil:
    cdef double g, hi, lo
    if m.kind == K_GILBERT:
        return p + q
    if m.kind == K_UNMARKED:
        return m.range_
    hi = p if p > q else q
    lo = q if p > q else p
    if m.kernel_code == G_MAX:
        g = pow(hi, m.eps)
    elif m.kernel_code == G_SUM:
        g = pow(p + q, m.eps)
    else:
        g = pow(lo, -m.delta) * pow(hi, m.eps)
    return pow(g, -1.0 / m.dim)


cdef inline double _pair_height(Model *m) noexcept nogil:
    return m.level if m.kind == K_UNMARKED else 1.0


cdef double _degree(Model *m, double p) noexcept nogil:
    cdef double acc
    cdef int i
    if m.kind == K_UNMARKED:
        return m.level * m.kappa * pow(m.range_, m.dim)
    if m.kind == K_GILBERT:
        if m.mark_kind == M_DEGENERATE:
            return m.kappa * pow(p + m.mark_value, m.dim)
        if m.mark_kind == M_UNIFORM:
            return m.kappa * (pow(p + 1.0, m.dim + 1.0) - pow(p, m.dim + 1.0)) / (m.dim + 1.0)
        acc = 0.0
        for i in range(m.n_atoms):
            acc += m.weights[i] * pow(p + m.atoms[i], m.dim)
        return m.kappa * acc
    # weighted, uniform marks
    if m.kernel_code == G_MAX:
        return m.kappa * (pow(p, 1.0 - m.eps) + _pint(p, 1.0, -m.eps))
    if m.kernel_code == G_SUM:
        return m.kappa * _pint(p, p + 1.0, -m.eps)
    return m.kappa * (pow(p, 1.0 + m.delta - m.eps) / (1.0 + m.delta)
                      + pow(p, m.delta) * _pint(p, 1.0, -m.eps))


cdef double _child_mark(Model *m, bitgen_t *bg, double p) noexcept nogil:
    # mark density prop. to d_phi(p, .) dQ
    cdef double u, lo, hi, m1, m2, acc, target
    cdef int i
    if m.kind == K_UNMARKED:
        return 0.0
    if m.mark_kind == M_DEGENERATE:
        return m.mark_value
    if m.kind == K_GILBERT:
        if m.mark_kind == M_UNIFORM:
            u = u01(bg)
            lo = pow(p, m.dim + 1.0)
            hi = pow(p + 1.0, m.dim + 1.0)
            return pow(lo + u * (hi - lo), 1.0 / (m.dim + 1.0)) - p
        # discrete, weights w_i (p + a_i)^d
        acc = 0.0
        for i in range(m.n_atoms):
            acc += m.weights[i] * pow(p + m.atoms[i], m.dim)
        target = u01(bg) * acc
        acc = 0.0
        for i in range(m.n_atoms):
            acc += m.weights[i] * pow(p + m.atoms[i], m.dim)
            if target <= acc:
                return m.atoms[i]
        return m.atoms[m.n_atoms - 1]
    # weighted, uniform marks
    u = u01(bg)
    if m.kernel_code == G_SUM:
        if m.eps == 1.0:
            return p * pow((p + 1.0) / p, u01(bg)) - p
        lo = pow(p, 1.0 - m.eps)
        hi = pow(p + 1.0, 1.0 - m.eps)
        return pow(lo + u * (hi - lo), 1.0 / (1.0 - m.eps)) - p
    if m.kernel_code == G_MAX:
        m1 = pow(p, 1.0 - m.eps)
        m2 = _pint(p, 1.0, -m.eps)
    else:
        m1 = pow(p, 1.0 + m.delta - m.eps) / (1.0 + m.delta)
        m2 = pow(p, m.delta) * _pint(p, 1.0, -m.eps)
    if u * (m1 + m2) < m1:
        if m.kernel_code == G_MAX:
            return u01(bg) * p
        return p * pow(u01(bg), 1.0 / (1.0 + m.delta))
    if m.eps == 1.0:
        return pow(p, 1.0 - u01(bg))
    lo = pow(p, 1.0 - m.eps)
    return pow(lo + u01(bg) * (1.0 - lo), 1.0 / (1.0 - m.eps))


cdef double _q_sample(Model *m, bitgen_t *bg) noexcept nogil:
    # plain mark distribution Q (box points)
    cdef double target, acc
    cdef int i
    if m.mark_kind == M_DEGENERATE:
        return m.mark_value
    if m.mark_kind == M_UNIFORM:
        return u01(bg)
    target = u01(bg)
    acc = 0.0
    for i in range(m.n_atoms):
        acc += m.weights[i]
        if target <= acc:
            return m.atoms[i]
    return m.atoms[m.n_atoms - 1]


cdef void _ball_step(Model *m, bitgen_t *bg, double rad, double *out) noexcept nogil:
    # uniform in the ball of radius rad, written into out[0..dim)
    cdef double r = rad * pow(u01(bg), 1.0 / m.dim)
    cdef double ang, nrm
    cdef int k
    if m.dim == 1:
        out[0] = r if u01(bg) < 0.5 else -r
        return
    if m.dim == 2:
        ang = 2.0 * M_PI * u01(bg)
        out[0] = r * cos(ang)
        out[1] = r * sin(ang)
        return
    nrm = 0.0
    for k in range(m.dim):
        out[k] = _gauss(bg)
        nrm += out[k] * out[k]
    nrm = sqrt(nrm)
    if nrm == 0.0:
        nrm = 1.0
    for k in range(m.dim):
        out[k] = out[k] * r / nrm


cdef int _fill_model(Model *m, int kind, int dim, double eps, double delta,
                     int kernel_code, double level, double range_, int mark_kind,
                     double mark_value, double[::1] atoms, double[::1] weights) except -1:
    cdef double s = 1.0
    cdef int k
    m.kind = kind
    m.dim = dim
    m.eps = eps
    m.delta = delta
    m.kernel_code = kernel_code
    m.level = level
    m.range_ = range_
    m.mark_kind = mark_kind
    m.mark_value = mark_value
    m.n_atoms = atoms.shape[0]
    m.atoms = &atoms[0] if m.n_atoms else NULL
    m.weights = &weights[0] if m.n_atoms else NULL
    # kappa_d without gamma-function dependencies: kappa_d = kappa_{d-2} 2 pi / d
    if dim % 2 == 0:
        s = 1.0
        for k in range(2, dim + 1, 2):
            s *= 2.0 * M_PI / k
    else:
        s = 2.0
        for k in range(3, dim + 1, 2):
            s *= 2.0 * M_PI / k
    m.kappa = s
    return 0


cdef bitgen_t *_bitgen(object bitgen_obj) except NULL:
    return <bitgen_t *> PyCapsule_GetPointer(bitgen_obj.capsule, "BitGenerator")


# ---------------------------------------------------------------------------
# cluster exploration
# ---------------------------------------------------------------------------

def explore_batch(double[::1] root_marks, double t, int dim, int kind, double eps,
                  double delta, int kernel_code, double level, double range_,
                  int mark_kind, double mark_value, double[::1] atoms,
                  double[::1] weights, long max_points, long max_generations,
                  double max_radius, int record_k, bint collect_final, long diam_cap,
                  object bitgen_obj):
    """One cluster per root mark; see explorer.explore for the algorithm."""
    cdef Model model
    _fill_model(&model, kind, dim, eps, delta, kernel_code, level, range_,
                mark_kind, mark_value, atoms, weights)
    cdef bitgen_t *bg = _bitgen(bitgen_obj)
    cdef Py_ssize_t reps = root_marks.shape[0]

    sizes_np = np.zeros(reps, dtype=np.int64)
    depth_np = np.full(reps, -1, dtype=np.int64)
    reason_np = np.zeros(reps, dtype=np.int8)
    gen_sizes_np = np.zeros((reps, record_k), dtype=np.int64)
    edge_max_np = np.zeros((reps, record_k), dtype=np.float64)
    diam_np = np.full(reps, np.nan)
    root_dist_np = np.zeros(reps)
    final_offsets_np = np.zeros(reps + 1, dtype=np.int64)
    cdef long[::1] sizes = sizes_np
    cdef long[::1] depth = depth_np
    cdef signed char[::1] reason = reason_np
    cdef long[:, ::1] gen_sizes = gen_sizes_np
    cdef double[:, ::1] edge_max = edge_max_np
    cdef double[::1] diam = diam_np
    cdef double[::1] root_dist = root_dist_np
    cdef long[::1] final_offsets = final_offsets_np
    final_chunks = []

    cdef long cap = 4096
    if cap > max_points + 8:
        cap = max_points + 8
    cdef double *xs = <double *> malloc(cap * dim * sizeof(double))
    cdef double *mk = <double *> malloc(cap * sizeof(double))
    cdef long scratch_cap = 1024
    cdef double *sc_phi = <double *> malloc(scratch_cap * sizeof(double))
    cdef double *sc_d2 = <double *> malloc(scratch_cap * sizeof(double))
    cdef double *sc_suf = <double *> malloc((scratch_cap + 1) * sizeof(double))
    if xs == NULL or mk == NULL or sc_phi == NULL or sc_d2 == NULL or sc_suf == NULL:
        free(xs); free(mk); free(sc_phi); free(sc_d2); free(sc_suf)
        raise MemoryError

    cdef Py_ssize_t rep
    cdef long n, gen_lo, gen_hi, gen_no, y, z, i, j, k, m_cur, ny, c
    cdef long new_lo, stop_reason
    cdef double lam, q, rad, acc, sum_phi, prod_cur, pbar, ph, r2, h, dd
    cdef double emax_gen, rdist, best, p_eff, elen, hh
    cdef double x[16]
    cdef double dxv[16]
    cdef bint no_succ, accepted_any
    cdef long total_final = 0

    if dim > 16:
        free(xs); free(mk); free(sc_phi); free(sc_d2); free(sc_suf)
        raise ValueError("compiled kernel supports dimension <= 16")

    try:
        for rep in range(reps):
            n = 1
            for k in range(dim):
                xs[k] = 0.0
            mk[0] = root_marks[rep]
            gen_lo, gen_hi = 0, 1
            gen_no = 0
            gen_sizes[rep, 0] = 1
            stop_reason = 0
            rdist = 0.0
            while True:
                if gen_no + 1 > max_generations:
                    stop_reason = 2
                    break
                new_lo = gen_hi
                m_cur = gen_hi - gen_lo
                if m_cur > scratch_cap:
                    while scratch_cap < m_cur:
                        scratch_cap *= 2
                    sc_phi = <double *> realloc(sc_phi, scratch_cap * sizeof(double))
                    sc_d2 = <double *> realloc(sc_d2, scratch_cap * sizeof(double))
                    sc_suf = <double *> realloc(sc_suf, (scratch_cap + 1) * sizeof(double))
                    if sc_phi == NULL or sc_d2 == NULL or sc_suf == NULL:
                        raise MemoryError
                emax_gen = 0.0
                hh = _pair_height(&model)
                for y in range(gen_lo, gen_hi):
                    lam = t * _degree(&model, mk[y])
                    ny = _poisson(bg, lam)
                    for c in range(ny):
                        q = _child_mark(&model, bg, mk[y])
                        rad = _pair_radius(&model, mk[y], q)
                        _ball_step(&model, bg, rad, dxv)
                        for k in range(dim):
                            x[k] = xs[y * dim + k] + dxv[k]
                        # acceptance over the current generation
                        sum_phi = 0.0
                        prod_cur = 1.0
                        for z in range(gen_lo, gen_hi):
                            r2 = 0.0
                            for k in range(dim):
                                dd = x[k] - xs[z * dim + k]
                                r2 += dd * dd
                            rad = _pair_radius(&model, mk[z], q)
                            ph = hh if r2 <= rad * rad else 0.0
                            sc_phi[z - gen_lo] = ph
                            sc_d2[z - gen_lo] = r2
                            sum_phi += ph
                            prod_cur *= 1.0 - ph
                        if sum_phi <= 0.0:
                            continue
                        pbar = 1.0
                        for z in range(0, gen_lo):
                            r2 = 0.0
                            for k in range(dim):
                                dd = x[k] - xs[z * dim + k]
                                r2 += dd * dd
                            rad = _pair_radius(&model, mk[z], q)
                            if r2 <= rad * rad:
                                pbar *= 1.0 - hh
                                if pbar == 0.0:
                                    break
                        acc = (1.0 - prod_cur) * pbar / sum_phi
                        if u01(bg) >= acc:
                            continue
                        # conditional edges back to the current generation
                        sc_suf[m_cur] = 1.0
                        for i in range(m_cur - 1, -1, -1):
                            sc_suf[i] = sc_suf[i + 1] * (1.0 - sc_phi[i])
                        no_succ = True
                        for i in range(m_cur):
                            if no_succ:
                                p_eff = sc_phi[i] / (1.0 - sc_suf[i]) \
                                    if sc_suf[i] < 1.0 else 1.0
                            else:
                                p_eff = sc_phi[i]
                            if u01(bg) < p_eff:
                                no_succ = False
                                elen = sqrt(sc_d2[i])
                                if elen > emax_gen:
                                    emax_gen = elen
                        if n >= cap:
                            while cap <= n:
                                cap *= 2
                            if cap > max_points + 8:
                                cap = max_points + 8
                            xs = <double *> realloc(xs, cap * dim * sizeof(double))
                            mk = <double *> realloc(mk, cap * sizeof(double))
                            if xs == NULL or mk == NULL:
                                raise MemoryError
                        for k in range(dim):
                            xs[n * dim + k] = x[k]
                        mk[n] = q
                        n += 1
                        r2 = 0.0
                        for k in range(dim):
                            r2 += x[k] * x[k]
                        if sqrt(r2) > rdist:
                            rdist = sqrt(r2)
                        if n > max_points:
                            stop_reason = 1
                            break
                    if stop_reason:
                        break
                gen_no += 1
                if gen_no < record_k:
                    gen_sizes[rep, gen_no] = n - new_lo
                    edge_max[rep, gen_no] = emax_gen
                if stop_reason:
                    break
                if n == new_lo:
                    depth[rep] = gen_no
                    break
                if max_radius == max_radius and max_radius != INFINITY and rdist > max_radius:
                    stop_reason = 3
                    break
                gen_lo, gen_hi = new_lo, n

            sizes[rep] = n
            reason[rep] = <signed char> stop_reason
            root_dist[rep] = rdist
            if n <= diam_cap:
                best = 0.0
                for i in range(n):
                    for j in range(i + 1, n):
                        r2 = 0.0
                        for k in range(dim):
                            dd = xs[i * dim + k] - xs[j * dim + k]
                            r2 += dd * dd
                        if r2 > best:
                            best = r2
                diam[rep] = sqrt(best)
            if collect_final:
                if stop_reason == 2 and gen_no == max_generations:
                    chunk = np.empty(gen_hi - gen_lo)
                    for i in range(gen_lo, gen_hi):
                        chunk[i - gen_lo] = mk[i]
                else:
                    chunk = np.empty(0)
                final_chunks.append(chunk)
                total_final += len(chunk)
                final_offsets[rep + 1] = total_final
    finally:
        free(xs)
        free(mk)
        free(sc_phi)
        free(sc_d2)
        free(sc_suf)

    final_marks = np.concatenate(final_chunks) if final_chunks else np.empty(0)
    return (sizes_np, depth_np, reason_np, gen_sizes_np, edge_max_np, diam_np,
            root_dist_np, final_offsets_np, final_marks)


# ---------------------------------------------------------------------------
# box sampling with union-find
# ---------------------------------------------------------------------------

cdef inline long _uf_find(long *parent, long i) noexcept nogil:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


cdef inline void _uf_union(long *parent, long *usize, long a, long b) noexcept nogil:
    cdef long ra = _uf_find(parent, a)
    cdef long rb = _uf_find(parent, b)
    cdef long tmp
    if ra == rb:
        return
    if usize[ra] < usize[rb]:
        tmp = ra; ra = rb; rb = tmp
    parent[rb] = ra
    usize[ra] += usize[rb]


cdef inline double _tdelta(double d, double L, bint torus) noexcept nogil:
    if torus:
        if d > 0.5 * L:
            d -= L
        elif d < -0.5 * L:
            d += L
    return d


def box_typical_batch(long reps, double t, double L, int dim, bint torus, int kind,
                      double eps, double delta, int kernel_code, double level,
                      double range_, int mark_kind, double mark_value,
                      double[::1] atoms, double[::1] weights, double r_cut,
                      double touch_width, bint with_labels, long diam_cap,
                      double memory_ceiling, object bitgen_obj):
    """reps independent boxes with a typical root at the center; see boxsim."""
    cdef Model model
    _fill_model(&model, kind, dim, eps, delta, kernel_code, level, range_,
                mark_kind, mark_value, atoms, weights)
    cdef bitgen_t *bg = _bitgen(bitgen_obj)
    if dim > 16:
        raise ValueError("compiled kernel supports dimension <= 16")

    n_points_np = np.zeros(reps, dtype=np.int64)
    size_np = np.zeros(reps, dtype=np.int64)
    diam_np = np.full(reps, np.nan)
    amb_np = np.zeros(reps, dtype=np.uint8)
    touch_np = np.zeros(reps, dtype=np.uint8)
    span_np = np.zeros(reps, dtype=np.uint8)
    frac_np = np.zeros(reps)
    minlab_np = np.full(reps, np.nan)
    rootmark_np = np.zeros(reps)
    cdef long[::1] n_points = n_points_np
    cdef long[::1] size_v = size_np
    cdef double[::1] diam_v = diam_np
    cdef unsigned char[::1] amb_v = amb_np
    cdef unsigned char[::1] touch_v = touch_np
    cdef unsigned char[::1] span_v = span_np
    cdef double[::1] frac_v = frac_np
    cdef double[::1] minlab_v = minlab_np
    cdef double[::1] rootmark_v = rootmark_np

    cdef long rep, n, i, j, k, ncell, ncells_total, ci, cj, best_sz
    cdef double lam_box, rad, r2, dd, hh, root_mark, root_label, best
    cdef double half = L / 2.0
    cdef bint brute
    cdef long expected_pairs

    cdef double *locs = NULL
    cdef double *marks = NULL
    cdef double *labels = NULL
    cdef long *parent = NULL
    cdef long *usize = NULL
    cdef long *cell_of = NULL
    cdef long *cell_start = NULL
    cdef long *order = NULL
    cdef double *cmin = NULL
    cdef double *cmax = NULL
    cdef long cap = 0, cell_cap = 0

    hh = _pair_height(&model)
    lam_box = t
    for k in range(dim):
        lam_box *= L

    ncell = <long> (L / r_cut) if r_cut > 0 else 0
    brute = ncell < 3
    ncells_total = 1
    if not brute:
        for k in range(dim):
            ncells_total *= ncell
            if ncells_total > 4_194_304:
                brute = True
                ncells_total = 1
                break

    cdef long off_count = 1
    for k in range(dim):
        off_count *= 3
    cdef long *offs = <long *> malloc(off_count * dim * sizeof(long))
    cdef long n_offs = 0
    cdef long code, v, first_nz
    if offs == NULL:
        raise MemoryError
    # half-space neighbor offsets (first nonzero coordinate positive), plus self
    for code in range(off_count):
        v = code
        first_nz = 0
        for k in range(dim):
            offs[n_offs * dim + k] = (v % 3) - 1
            v //= 3
        for k in range(dim):
            if offs[n_offs * dim + k] != 0:
                first_nz = offs[n_offs * dim + k]
                break
        if first_nz >= 0:
            n_offs += 1

    cdef long cell_idx, nb_idx, oi, zi, mstart, mend, nstart, nend
    cdef long coord[16]
    cdef long nb[16]

    try:
        if not brute:
            cell_start = <long *> malloc((ncells_total + 1) * sizeof(long))
            if cell_start == NULL:
                raise MemoryError
        for rep in range(reps):
            n = _poisson(bg, lam_box)
            n_points[rep] = n
            if brute and <double> n * (n - 1) / 2.0 > memory_ceiling:
                raise MemoryError("candidate pair count exceeds the memory ceiling; "
                                  "reduce intensity or box length")
            if n + 1 > cap:
                cap = n + 1024
                locs = <double *> realloc(locs, cap * dim * sizeof(double))
                marks = <double *> realloc(marks, cap * sizeof(double))
                labels = <double *> realloc(labels, cap * sizeof(double))
                parent = <long *> realloc(parent, cap * sizeof(long))
                usize = <long *> realloc(usize, cap * sizeof(long))
                cell_of = <long *> realloc(cell_of, cap * sizeof(long))
                order = <long *> realloc(order, cap * sizeof(long))
                cmin = <double *> realloc(cmin, cap * dim * sizeof(double))
                cmax = <double *> realloc(cmax, cap * dim * sizeof(double))
                if (locs == NULL or marks == NULL or labels == NULL or parent == NULL
                        or usize == NULL or cell_of == NULL or order == NULL
                        or cmin == NULL or cmax == NULL):
                    raise MemoryError
            for i in range(n):
                for k in range(dim):
                    locs[i * dim + k] = u01(bg) * L
                marks[i] = _q_sample(&model, bg)
                labels[i] = u01(bg) if with_labels else 0.0
                parent[i] = i
                usize[i] = 1

            # edges
            if brute:
                for i in range(n):
                    for j in range(i + 1, n):
                        r2 = 0.0
                        for k in range(dim):
                            dd = _tdelta(locs[i * dim + k] - locs[j * dim + k], L, torus)
                            r2 += dd * dd
                        rad = _pair_radius(&model, marks[i], marks[j])
                        if rad > r_cut:
                            rad = r_cut
                        if r2 <= rad * rad and (hh >= 1.0 or u01(bg) < hh):
                            _uf_union(parent, usize, i, j)
            else:
                for i in range(ncells_total + 1):
                    cell_start[i] = 0
                for i in range(n):
                    cell_idx = 0
                    for k in range(dim):
                        ci = <long> (locs[i * dim + k] / (L / ncell))
                        if ci >= ncell:
                            ci = ncell - 1
                        cell_idx = cell_idx * ncell + ci
                    cell_of[i] = cell_idx
                    cell_start[cell_idx + 1] += 1
                for i in range(ncells_total):
                    cell_start[i + 1] += cell_start[i]
                for i in range(n):
                    order[cell_start[cell_of[i]]] = i
                    cell_start[cell_of[i]] += 1
                for i in range(ncells_total, 0, -1):
                    cell_start[i] = cell_start[i - 1]
                cell_start[0] = 0
                for cell_idx in range(ncells_total):
                    mstart = cell_start[cell_idx]
                    mend = cell_start[cell_idx + 1]
                    if mstart == mend:
                        continue
                    v = cell_idx
                    for k in range(dim - 1, -1, -1):
                        coord[k] = v % ncell
                        v //= ncell
                    for oi in range(n_offs):
                        first_nz = 0
                        for k in range(dim):
                            if offs[oi * dim + k] != 0:
                                first_nz = 1
                                break
                        if not first_nz:
                            # within-cell pairs
                            for zi in range(mstart, mend):
                                for j in range(zi + 1, mend):
                                    i = order[zi]
                                    ci = order[j]
                                    r2 = 0.0
                                    for k in range(dim):
                                        dd = _tdelta(locs[i * dim + k] - locs[ci * dim + k],
                                                     L, torus)
                                        r2 += dd * dd
                                    rad = _pair_radius(&model, marks[i], marks[ci])
                                    if rad > r_cut:
                                        rad = r_cut
                                    if r2 <= rad * rad and (hh >= 1.0 or u01(bg) < hh):
                                        _uf_union(parent, usize, i, ci)
                            continue
                        nb_idx = 0
                        first_nz = 1
                        for k in range(dim):
                            cj = coord[k] + offs[oi * dim + k]
                            if torus:
                                if cj < 0:
                                    cj += ncell
                                elif cj >= ncell:
                                    cj -= ncell
                            elif cj < 0 or cj >= ncell:
                                first_nz = 0
                                break
                            nb[k] = cj
                        if not first_nz:
                            continue
                        for k in range(dim):
                            nb_idx = nb_idx * ncell + nb[k]
                        nstart = cell_start[nb_idx]
                        nend = cell_start[nb_idx + 1]
                        for zi in range(mstart, mend):
                            i = order[zi]
                            for j in range(nstart, nend):
                                ci = order[j]
                                r2 = 0.0
                                for k in range(dim):
                                    dd = _tdelta(locs[i * dim + k] - locs[ci * dim + k],
                                                 L, torus)
                                    r2 += dd * dd
                                rad = _pair_radius(&model, marks[i], marks[ci])
                                if rad > r_cut:
                                    rad = r_cut
                                if r2 <= rad * rad and (hh >= 1.0 or u01(bg) < hh):
                                    _uf_union(parent, usize, i, ci)

            # largest component fraction and spanning before root insertion
            best_sz = 0
            for i in range(n):
                j = _uf_find(parent, i)
                if usize[j] > best_sz:
                    best_sz = usize[j]
            frac_v[rep] = (<double> best_sz) / n if n > 0 else 0.0

            for i in range(n):
                for k in range(dim):
                    cmin[i * dim + k] = INFINITY
                    cmax[i * dim + k] = -INFINITY
            for i in range(n):
                j = _uf_find(parent, i)
                for k in range(dim):
                    if locs[i * dim + k] < cmin[j * dim + k]:
                        cmin[j * dim + k] = locs[i * dim + k]
                    if locs[i * dim + k] > cmax[j * dim + k]:
                        cmax[j * dim + k] = locs[i * dim + k]
            span_v[rep] = 0
            for i in range(n):
                if parent[i] != i:
                    continue
                for k in range(dim):
                    if cmin[i * dim + k] <= touch_width and \
                            cmax[i * dim + k] >= L - touch_width:
                        span_v[rep] = 1
                        break
                if span_v[rep]:
                    break

            # root at the center
            root_mark = _q_sample(&model, bg)
            rootmark_v[rep] = root_mark
            root_label = u01(bg) if with_labels else 1.0
            parent[n] = n
            usize[n] = 1
            for i in range(n):
                r2 = 0.0
                for k in range(dim):
                    dd = _tdelta(half - locs[i * dim + k], L, torus)
                    r2 += dd * dd
                rad = _pair_radius(&model, root_mark, marks[i])
                if r2 <= rad * rad and (hh >= 1.0 or u01(bg) < hh):
                    _uf_union(parent, usize, n, i)

            ci = _uf_find(parent, n)
            size_v[rep] = usize[ci]
            # root component stats
            best = root_label
            touch_v[rep] = 1 if (half <= touch_width or half >= L - touch_width) else 0
            for i in range(n):
                if _uf_find(parent, i) != ci:
                    continue
                if with_labels and labels[i] < best:
                    best = labels[i]
                for k in range(dim):
                    if locs[i * dim + k] <= touch_width or \
                            locs[i * dim + k] >= L - touch_width:
                        touch_v[rep] = 1
            minlab_v[rep] = best if with_labels else np.nan
            if usize[ci] <= diam_cap:
                best = 0.0
                # gather members: root plus box points in the component
                for i in range(n):
                    if _uf_find(parent, i) != ci:
                        continue
                    r2 = 0.0
                    for k in range(dim):
                        dd = _tdelta(half - locs[i * dim + k], L, torus)
                        r2 += dd * dd
                    if r2 > best:
                        best = r2
                    for j in range(i + 1, n):
                        if _uf_find(parent, j) != ci:
                            continue
                        r2 = 0.0
                        for k in range(dim):
                            dd = _tdelta(locs[i * dim + k] - locs[j * dim + k], L, torus)
                            r2 += dd * dd
                        if r2 > best:
                            best = r2
                diam_v[rep] = sqrt(best)
                amb_v[rep] = 1 if (torus and diam_v[rep] > half) else 0
    finally:
        free(offs)
        free(locs)
        free(marks)
        free(labels)
        free(parent)
        free(usize)
        free(cell_of)
        free(order)
        free(cmin)
        free(cmax)
        if cell_start != NULL:
            free(cell_start)

    return (n_points_np, size_np, diam_np, amb_np, touch_np, span_np, frac_np,
            minlab_np, rootmark_np)
