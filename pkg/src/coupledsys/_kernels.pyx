# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the small dense kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow

cnp.import_array()


cdef int _lu_solve_ptr(double* a, Py_ssize_t n, double* b, Py_ssize_t m) noexcept nogil:
    # Gaussian elimination with partial pivoting on a (n x n) and b (n x m), in place;
    # b ends up holding the solution. Returns 1 on an exactly zero pivot.
    cdef Py_ssize_t i, j, k, p
    cdef double amax, t
    for k in range(n):
        p = k
        amax = fabs(a[k * n + k])
        for i in range(k + 1, n):
            if fabs(a[i * n + k]) > amax:
                amax = fabs(a[i * n + k])
                p = i
        if amax == 0.0:
            return 1
        if p != k:
            for j in range(n):
                t = a[k * n + j]
                a[k * n + j] = a[p * n + j]
                a[p * n + j] = t
            for j in range(m):
                t = b[k * m + j]
                b[k * m + j] = b[p * m + j]
                b[p * m + j] = t
        for i in range(k + 1, n):
            t = a[i * n + k] / a[k * n + k]
            if t != 0.0:
                for j in range(k + 1, n):
                    a[i * n + j] -= t * a[k * n + j]
                for j in range(m):
                    b[i * m + j] -= t * b[k * m + j]
    for i in range(n - 1, -1, -1):
        for j in range(m):
            t = b[i * m + j]
            for k in range(i + 1, n):
                t -= a[i * n + k] * b[k * m + j]
            b[i * m + j] = t / a[i * n + i]
    return 0


cdef inline double* _data(cnp.ndarray a):
    return <double*>cnp.PyArray_DATA(a)


cdef tuple _solve_ptr(double* a, Py_ssize_t n, const double* b, Py_ssize_t nr):
    # solves a X = b with the exact 1-norm rcond; a (n x n) is overwritten.
    # Returns (X of shape (n, nr) or None, rcond).
    cdef Py_ssize_t ms = nr + n, i, j
    cdef double norm_a = 0.0, norm_inv = 0.0, colsum
    cdef cnp.ndarray work = np.zeros(n * ms)
    cdef double* s = _data(work)
    for i in range(n):
        for j in range(nr):
            s[i * ms + j] = b[i * nr + j]
        s[i * ms + nr + i] = 1.0
    for j in range(n):
        colsum = 0.0
        for i in range(n):
            colsum += fabs(a[i * n + j])
        if colsum > norm_a:
            norm_a = colsum
    if _lu_solve_ptr(a, n, s, ms):
        return None, 0.0
    for j in range(n):
        colsum = 0.0
        for i in range(n):
            colsum += fabs(s[i * ms + nr + j])
        if colsum > norm_inv:
            norm_inv = colsum
    if norm_a == 0.0 or norm_inv != norm_inv or norm_inv > 1.79e308:
        return None, 0.0
    cdef cnp.ndarray X = np.empty((n, nr))
    cdef double* xv = _data(X)
    for i in range(n):
        for j in range(nr):
            xv[i * nr + j] = s[i * ms + j]
    return X, 1.0 / (norm_a * norm_inv)


def solve_rcond(A, B):
    """Solve ``A X = B``; return ``(X, rcond)`` with the exact 1-norm rcond."""
    cdef cnp.ndarray a = np.array(A, dtype=np.float64, order="C", ndmin=2)
    cdef Py_ssize_t n = a.shape[0]
    if a.shape[1] != n:
        raise ValueError(f"solve_rcond needs a square matrix, got {(a.shape[0], a.shape[1])}")
    Barr = np.asarray(B, dtype=np.float64)
    vector = Barr.ndim == 1
    if n == 0:
        return Barr.copy(), 1.0
    cdef cnp.ndarray b = np.ascontiguousarray(Barr.reshape(n, -1))
    X, rc = _solve_ptr(_data(a), n, _data(b), b.shape[1])
    if X is None:
        return None, 0.0
    if vector:
        return X[:, 0].copy(), rc
    return X, rc



cdef double _binom(int n, int k) noexcept nogil:
    cdef double r = 1.0
    cdef int i
    for i in range(1, k + 1):
        r = r * (n - k + i) / i
    return r


def bernstein(alpha, double tau):
    """Value, first and second tau-derivative of rows of Bezier coefficients."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] al = np.array(alpha, dtype=np.float64, order="C", ndmin=2)
    cdef Py_ssize_t m = al.shape[0]
    cdef int d = <int>al.shape[1] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y = np.zeros(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dy = np.zeros(m)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ddy = np.zeros(m)
    cdef double s = 1.0 - tau
    cdef double b
    cdef Py_ssize_t r
    cdef int k
    for k in range(d + 1):
        b = _binom(d, k) * pow(tau, k) * pow(s, d - k)
        for r in range(m):
            y[r] += b * al[r, k]
    if d >= 1:
        for k in range(d):
            b = d * _binom(d - 1, k) * pow(tau, k) * pow(s, d - 1 - k)
            for r in range(m):
                dy[r] += b * (al[r, k + 1] - al[r, k])
    if d >= 2:
        for k in range(d - 1):
            b = d * (d - 1) * _binom(d - 2, k) * pow(tau, k) * pow(s, d - 2 - k)
            for r in range(m):
                ddy[r] += b * (al[r, k + 2] - 2.0 * al[r, k + 1] + al[r, k])
    return y, dy, ddy


def hermite_midpoint(x0, xd0, x1, xd1, double h):
    """Cubic Hermite interpolant value and slope at the interval midpoint."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a0 = np.ascontiguousarray(x0, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d0 = np.ascontiguousarray(xd0, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a1 = np.ascontiguousarray(x1, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d1 = np.ascontiguousarray(xd1, dtype=np.float64).ravel()
    cdef Py_ssize_t n = a0.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xc = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xdc = np.empty(n)
    cdef Py_ssize_t k
    for k in range(n):
        xc[k] = 0.5 * (a0[k] + a1[k]) + (h / 8.0) * (d0[k] - d1[k])
        xdc[k] = -1.5 / h * (a0[k] - a1[k]) - 0.25 * (d0[k] + d1[k])
    shape = np.shape(x0)
    return xc.reshape(shape), xdc.reshape(shape)


cdef tuple _solve_reduced(cnp.ndarray A, cnp.ndarray B, double rtol):
    # A (m x n) and B (m x nr) are C-contiguous float64; rows of A that are
    # identically zero relative to max(|A|, 1) are dropped along with those of B
    cdef Py_ssize_t m = A.shape[0], n = A.shape[1], nr = B.shape[1]
    cdef const double* av = _data(A)
    cdef const double* bv = _data(B)
    cdef double scale = 1.0, rowmax
    cdef Py_ssize_t i, j, kept = 0
    for i in range(m * n):
        if fabs(av[i]) > scale:
            scale = fabs(av[i])
    cdef cnp.ndarray red = np.empty(m * n + m * nr)
    cdef double* ar = _data(red)
    cdef double* br = ar + m * n
    for i in range(m):
        rowmax = 0.0
        for j in range(n):
            if fabs(av[i * n + j]) > rowmax:
                rowmax = fabs(av[i * n + j])
        if rowmax > rtol * scale:
            if kept < n:
                for j in range(n):
                    ar[kept * n + j] = av[i * n + j]
                for j in range(nr):
                    br[kept * nr + j] = bv[i * nr + j]
            kept += 1
    if kept != n:
        return None, 0.0, kept
    if n == 0:
        return np.zeros((0, nr)), 1.0, kept
    X, rc = _solve_ptr(ar, n, br, nr)
    return X, rc, kept



def solve_reduced_rcond(A, B, double rtol):
    """Drop identically-zero rows of ``A`` (and ``B``), then :func:`solve_rcond`.

    Returns ``(X, rcond, kept)``; ``X`` is ``None`` when the kept rows do not
    form a square system or the system is singular.
    """
    a = np.ascontiguousarray(A, dtype=np.float64)
    Barr = np.asarray(B, dtype=np.float64)
    vector = Barr.ndim == 1
    b = np.ascontiguousarray(Barr.reshape(a.shape[0], -1))
    X, rc, kept = _solve_reduced(a, b, rtol)
    if X is not None and vector:
        X = X[:, 0].copy()
    return X, rc, kept


def coupling_point(fj, gj, gbj, pj, qj, qbj, pi, qi, qbi, double rtol):
    """Affine coupling-relation coefficients at one point.

    Assembles ``Q = [[g_j, gb_j], [q_j, qb_i + qb_j]]`` and the right-hand
    sides ``[-f_j; p_i - p_j]`` (bias) and ``[0; q_i]`` (input columns), drops
    identically-zero rows of ``Q`` and solves. Returns
    ``(A_e, b_e, uZ_A, uZ_b, rcond, kept)``; the first four are ``None`` on
    failure. The coupling-input part of the solution is negated, so ``A_e``
    and ``b_e`` belong to the isolated vertex's edge.
    """
    cdef cnp.ndarray fa = np.ascontiguousarray(fj, dtype=np.float64)
    cdef cnp.ndarray ga = np.ascontiguousarray(gj, dtype=np.float64)
    cdef cnp.ndarray gba = np.ascontiguousarray(gbj, dtype=np.float64)
    cdef cnp.ndarray pja = np.ascontiguousarray(pj, dtype=np.float64)
    cdef cnp.ndarray qja = np.ascontiguousarray(qj, dtype=np.float64)
    cdef cnp.ndarray qbja = np.ascontiguousarray(qbj, dtype=np.float64)
    cdef cnp.ndarray pia = np.ascontiguousarray(pi, dtype=np.float64)
    cdef cnp.ndarray qia = np.ascontiguousarray(qi, dtype=np.float64)
    cdef cnp.ndarray qbia = np.ascontiguousarray(qbi, dtype=np.float64)
    cdef double* f = _data(fa)
    cdef double* g = _data(ga)
    cdef double* gb = _data(gba)
    cdef double* p_j = _data(pja)
    cdef double* q_j = _data(qja)
    cdef double* qb_j = _data(qbja)
    cdef double* p_i = _data(pia)
    cdef double* q_i = _data(qia)
    cdef double* qb_i = _data(qbia)
    cdef Py_ssize_t nx = ga.shape[0], nuj = ga.shape[1], nl = gba.shape[1]
    cdef Py_ssize_t nz = qja.shape[0], nui = qia.shape[1]
    cdef Py_ssize_t nq = nuj + nl, nr = 1 + nui
    # raw pointers below; reject inconsistent shapes up front
    if (fa.ndim != 1 or fa.shape[0] != nx or ga.ndim != 2 or gba.ndim != 2 or gba.shape[0] != nx
            or qja.ndim != 2 or qja.shape[1] != nuj or qia.ndim != 2 or qia.shape[0] != nz
            or pja.ndim != 1 or pja.shape[0] != nz or pia.ndim != 1 or pia.shape[0] != nz
            or qbja.ndim != 2 or (qbja.shape[0], qbja.shape[1]) != (nz, nl)
            or qbia.ndim != 2 or (qbia.shape[0], qbia.shape[1]) != (nz, nl)):
        raise ValueError("coupling_point: inconsistent block shapes")
    cdef cnp.ndarray Q = np.empty((nx + nz, nq))
    cdef cnp.ndarray R = np.zeros((nx + nz, nr))
    cdef double* Qv = _data(Q)
    cdef double* Rv = _data(R)
    cdef Py_ssize_t r, c
    for r in range(nx):
        for c in range(nuj):
            Qv[r * nq + c] = g[r * nuj + c]
        for c in range(nl):
            Qv[r * nq + nuj + c] = gb[r * nl + c]
        Rv[r * nr] = -f[r]
    for r in range(nz):
        for c in range(nuj):
            Qv[(nx + r) * nq + c] = q_j[r * nuj + c]
        for c in range(nl):
            Qv[(nx + r) * nq + nuj + c] = qb_i[r * nl + c] + qb_j[r * nl + c]
        Rv[(nx + r) * nr] = p_i[r] - p_j[r]
        for c in range(nui):
            Rv[(nx + r) * nr + 1 + c] = q_i[r * nui + c]
    X, rc, kept = _solve_reduced(Q, R, rtol)
    if X is None:
        return None, None, None, None, rc, kept
    return (-X[nuj:, 1:], -X[nuj:, 0], X[:nuj, 1:], X[:nuj, 0], rc, kept)


def normal_form_terms(x, z, sol, grad, curv, act, Py_ssize_t nb, Py_ssize_t nu):
    """Fill ``(f, g, gb, p, q, qb)`` of a normal-form vertex.

    ``sol = [a0, P_u, P_lam]`` are the eliminated accelerations, ``grad`` and
    ``curv`` the desired-output gradient and curvature term, ``act`` the
    actuated coordinate indices.
    """
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[:, ::1] s = np.ascontiguousarray(sol, dtype=np.float64)
    cdef const double[:, ::1] gr = np.ascontiguousarray(grad, dtype=np.float64)
    cdef const double[::1] cu = np.ascontiguousarray(curv, dtype=np.float64)
    cdef const Py_ssize_t[::1] ac = np.ascontiguousarray(act, dtype=np.intp)
    cdef Py_ssize_t ny = ac.shape[0]
    cdef Py_ssize_t ncol = s.shape[1]
    cdef Py_ssize_t nl = ncol - 1 - nu
    cdef Py_ssize_t nx = 2 * ny, nz = 2 * nb
    f = np.empty(nx)
    g = np.zeros((nx, nu))
    gb = np.zeros((nx, nl))
    p = np.empty(nz)
    q = np.zeros((nz, nu))
    qb = np.zeros((nz, nl))
    cdef double[::1] fv = f, pv = p
    cdef double[:, ::1] gv = g, gbv = gb, qv = q, qbv = qb
    cdef Py_ssize_t r, c, k
    cdef double t
    for r in range(ny):
        fv[r] = xv[ny + r]
        for c in range(ncol):
            # row of J_y = e_act - grad on the base columns
            t = s[ac[r], c]
            for k in range(nb):
                t -= gr[r, k] * s[k, c]
            if c == 0:
                fv[ny + r] = t - cu[r]
            elif c <= nu:
                gv[ny + r, c - 1] = t
            else:
                gbv[ny + r, c - 1 - nu] = t
    for k in range(nb):
        pv[k] = zv[nb + k]
        pv[nb + k] = s[k, 0]
        for c in range(nu):
            qv[nb + k, c] = s[k, 1 + c]
        for c in range(nl):
            qbv[nb + k, c] = s[k, 1 + nu + c]
    return f, g, gb, p, q, qb


cdef void _bernstein_rows(const double* al, Py_ssize_t m, int d, double tau,
                          double* out) noexcept nogil:
    # out is 3 x m: value, first and second derivative; al is m x (d + 1)
    cdef Py_ssize_t r
    cdef int k
    cdef double s = 1.0 - tau, b
    for r in range(3 * m):
        out[r] = 0.0
    for k in range(d + 1):
        b = _binom(d, k) * pow(tau, k) * pow(s, d - k)
        for r in range(m):
            out[r] += b * al[r * (d + 1) + k]
    if d >= 1:
        for k in range(d):
            b = d * _binom(d - 1, k) * pow(tau, k) * pow(s, d - 1 - k)
            for r in range(m):
                out[m + r] += b * (al[r * (d + 1) + k + 1] - al[r * (d + 1) + k])
    if d >= 2:
        for k in range(d - 1):
            b = d * (d - 1) * _binom(d - 2, k) * pow(tau, k) * pow(s, d - 2 - k)
            for r in range(m):
                out[2 * m + r] += b * (al[r * (d + 1) + k + 2] - 2.0 * al[r * (d + 1) + k + 1]
                                       + al[r * (d + 1) + k])



def normal_form_vertex(x, z, D_fn, H_fn, forcing, Py_ssize_t nu, alpha, act,
                       Py_ssize_t phase_index, double lo, double hi):
    """All six maps of a contact-free normal-form vertex at ``(x, z)``.

    Evaluates the phase, the Bezier desired outputs, the configuration, the
    mass matrix and drift, the eliminated accelerations and the normal-form
    blocks in one pass. Returns ``(terms, rcond)``; ``terms`` is ``None`` when
    the mass matrix is singular.
    """
    cdef cnp.ndarray xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray za = np.ascontiguousarray(z, dtype=np.float64)
    cdef cnp.ndarray ala = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef cnp.ndarray foa = np.ascontiguousarray(forcing, dtype=np.float64)
    cdef cnp.ndarray aca = np.ascontiguousarray(act, dtype=np.intp)
    cdef double* xv = _data(xa)
    cdef double* zv = _data(za)
    cdef double* fo = _data(foa)
    cdef Py_ssize_t* ac = <Py_ssize_t*>cnp.PyArray_DATA(aca)
    cdef Py_ssize_t ny = cnp.PyArray_DIM(aca, 0)
    cdef Py_ssize_t nb = cnp.PyArray_DIM(za, 0) // 2
    cdef Py_ssize_t n = nb + ny
    cdef Py_ssize_t nf = cnp.PyArray_DIM(foa, 1)
    cdef Py_ssize_t nl = nf - nu
    cdef Py_ssize_t ms = 1 + nf + n
    cdef Py_ssize_t r, k, c
    # raw pointers below; reject inconsistent shapes up front
    if (xa.ndim != 1 or xa.shape[0] != 2 * ny or za.ndim != 1 or za.shape[0] != 2 * nb
            or foa.ndim != 2 or foa.shape[0] != n or not 0 <= nu <= nf
            or ala.ndim != 2 or ala.shape[0] != ny or ala.shape[1] < 1
            or not 0 <= phase_index < nb):
        raise ValueError("normal_form_vertex: inconsistent shapes")
    for r in range(ny):
        if not 0 <= ac[r] < n:
            raise ValueError("normal_form_vertex: actuated index out of range")
    cdef double raw = (zv[phase_index] - lo) / (hi - lo)
    cdef double tau = raw, dtau = 1.0 / (hi - lo)
    if raw < 0.0 or raw > 1.0:
        dtau = 0.0
        tau = 0.0 if raw < 0.0 else 1.0
    # one scratch block: bezier rows | D | [-H, forcing, I]
    cdef cnp.ndarray scratch = np.zeros(3 * ny + n * n + n * ms)
    cdef double* bv = _data(scratch)
    cdef double* a = bv + 3 * ny
    cdef double* s = a + n * n
    _bernstein_rows(_data(ala), ny, <int>cnp.PyArray_DIM(ala, 1) - 1, tau, bv)
    cdef double rate = dtau * zv[nb + phase_index]
    cdef cnp.ndarray q = np.empty(n)
    cdef cnp.ndarray qd = np.empty(n)
    cdef double* qv = _data(q)
    cdef double* qdv = _data(qd)
    for k in range(nb):
        qv[k] = zv[k]
        qdv[k] = zv[nb + k]
    for r in range(ny):
        qv[ac[r]] = xv[r] + bv[r]
        qdv[ac[r]] = xv[ny + r] + bv[ny + r] * rate
    cdef cnp.ndarray ha = np.ascontiguousarray(H_fn(q, qd), dtype=np.float64)
    cdef cnp.ndarray da = np.ascontiguousarray(D_fn(q), dtype=np.float64)
    if ha.size != n or da.ndim != 2 or da.shape[0] != n or da.shape[1] != n:
        raise ValueError("normal_form_vertex: D or H has the wrong shape")
    cdef double* hv = _data(ha)
    cdef double* dv = _data(da)
    cdef double norm_a = 0.0, norm_inv = 0.0, colsum
    for k in range(n):
        for c in range(n):
            a[k * n + c] = dv[k * n + c]
        s[k * ms] = -hv[k]
        for c in range(nf):
            s[k * ms + 1 + c] = fo[k * nf + c]
        s[k * ms + 1 + nf + k] = 1.0
    for c in range(n):
        colsum = 0.0
        for k in range(n):
            colsum += fabs(dv[k * n + c])
        if colsum > norm_a:
            norm_a = colsum
    if _lu_solve_ptr(a, n, s, ms):
        return None, 0.0
    for c in range(n):
        colsum = 0.0
        for k in range(n):
            colsum += fabs(s[k * ms + 1 + nf + c])
        if colsum > norm_inv:
            norm_inv = colsum
    if norm_a == 0.0 or norm_inv != norm_inv or norm_inv > 1.79e308:
        return None, 0.0
    # normal-form blocks; J_y row r is e_act[r] - grad on the phase column
    cdef cnp.ndarray f = np.empty(2 * ny)
    cdef cnp.ndarray g = np.zeros((2 * ny, nu))
    cdef cnp.ndarray gb = np.zeros((2 * ny, nl))
    cdef cnp.ndarray p = np.empty(2 * nb)
    cdef cnp.ndarray qm = np.zeros((2 * nb, nu))
    cdef cnp.ndarray qb = np.zeros((2 * nb, nl))
    cdef double* fv = _data(f)
    cdef double* gv = _data(g)
    cdef double* gbv = _data(gb)
    cdef double* pv = _data(p)
    cdef double* qmv = _data(qm)
    cdef double* qbv = _data(qb)
    cdef double t, gr
    for r in range(ny):
        gr = bv[ny + r] * dtau
        fv[r] = xv[ny + r]
        for c in range(1 + nf):
            t = s[ac[r] * ms + c] - gr * s[phase_index * ms + c]
            if c == 0:
                fv[ny + r] = t - bv[2 * ny + r] * rate * rate
            elif c <= nu:
                gv[(ny + r) * nu + c - 1] = t
            else:
                gbv[(ny + r) * nl + c - 1 - nu] = t
    for k in range(nb):
        pv[k] = zv[nb + k]
        pv[nb + k] = s[k * ms]
        for c in range(nu):
            qmv[(nb + k) * nu + c] = s[k * ms + 1 + c]
        for c in range(nl):
            qbv[(nb + k) * nl + c] = s[k * ms + 1 + nu + c]
    return (f, g, gb, p, qm, qb), 1.0 / (norm_a * norm_inv)
