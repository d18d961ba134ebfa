# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; same contracts as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt
from libc.stdlib cimport free, malloc

cnp.import_array()

NAME = "cython"

ctypedef cnp.intp_t idx_t


cdef void _block_average(const double[:, ::1] f, const double[::1] w,
                         const idx_t[::1] lab, double[:, ::1] sums,
                         double[::1] mass, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = f.shape[0], m = f.shape[1], nb = sums.shape[0]
    cdef Py_ssize_t i, j, b
    for b in range(nb):
        mass[b] = 0.0
        for j in range(m):
            sums[b, j] = 0.0
    cdef double share
    for i in range(n):
        mass[lab[i]] += w[i]
    for i in range(n):
        b = lab[i]
        if mass[b] > 0:
            share = w[i] / mass[b]
            for j in range(m):
                sums[b, j] += share * f[i, j]
    for i in range(n):
        b = lab[i]
        for j in range(m):
            out[i, j] = sums[b, j]


cdef void _apply_T(const double[::1] u, const idx_t[::1] img,
                   const double[:, ::1] f, const double[::1] w,
                   const idx_t[::1] lab, double[:, ::1] tmp,
                   double[:, ::1] sums, double[::1] mass,
                   double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = f.shape[0], m = f.shape[1], i, j
    for i in range(n):
        for j in range(m):
            tmp[i, j] = u[i] * f[img[i], j]
    _block_average(tmp, w, lab, sums, mass, out)


cdef void _norms(const double[:, ::1] g, const double[::1] w, double p,
                 double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = g.shape[0], m = g.shape[1], i, j
    cdef double x
    for j in range(m):
        out[j] = 0.0
    # row-major sweep: first the per-column scale, then the sums
    cdef double* scale = <double*> malloc(m * sizeof(double))
    cdef double* acc = <double*> malloc(m * sizeof(double))
    for j in range(m):
        scale[j] = 0.0
        acc[j] = 0.0
    for i in range(n):
        if w[i] == 0.0:
            continue
        for j in range(m):
            x = fabs(g[i, j])
            if x > scale[j]:
                scale[j] = x
    for i in range(n):
        if w[i] == 0.0:
            continue
        for j in range(m):
            if scale[j] == 0.0:
                continue
            x = fabs(g[i, j]) / scale[j]
            if p == 2.0:
                acc[j] += w[i] * x * x
            elif p == 1.0:
                acc[j] += w[i] * x
            else:
                acc[j] += w[i] * pow(x, p)
    for j in range(m):
        if scale[j] > 0.0:
            if p == 2.0:
                out[j] = scale[j] * sqrt(acc[j])
            elif p == 1.0:
                out[j] = scale[j] * acc[j]
            else:
                out[j] = scale[j] * pow(acc[j], 1.0 / p)
    free(scale)
    free(acc)


def block_average(f, weights, labels, Py_ssize_t n_blocks):
    cdef const double[:, ::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    out = np.empty((fv.shape[0], fv.shape[1]))
    sums = np.empty((n_blocks, fv.shape[1]))
    mass = np.empty(n_blocks)
    _block_average(fv, np.ascontiguousarray(weights, dtype=np.float64),
                   np.ascontiguousarray(labels, dtype=np.intp), sums, mass, out)
    return out


def iterate_T(u, image, weights, labels, Py_ssize_t n_blocks, f, Py_ssize_t steps):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef const idx_t[::1] img = np.ascontiguousarray(image, dtype=np.intp)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const idx_t[::1] lab = np.ascontiguousarray(labels, dtype=np.intp)
    a = np.array(f, dtype=np.float64, order="C", copy=True)
    b = np.empty_like(a)
    tmp = np.empty_like(a)
    sums = np.empty((n_blocks, a.shape[1]))
    mass = np.empty(n_blocks)
    cdef double[:, ::1] av = a, bv = b, tv = tmp, sv = sums
    cdef double[::1] mv = mass
    cdef Py_ssize_t s
    with nogil:
        for s in range(steps):
            _apply_T(uv, img, av, w, lab, tv, sv, mv, bv)
            av, bv = bv, av
    return np.asarray(av).copy()


def apply_T(u, image, weights, labels, Py_ssize_t n_blocks, f):
    return iterate_T(u, image, weights, labels, n_blocks, f, 1)


def orbit_norms(u, image, weights, labels, Py_ssize_t n_blocks, f,
                Py_ssize_t steps, double p):
    cdef const double[::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef const idx_t[::1] img = np.ascontiguousarray(image, dtype=np.intp)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const idx_t[::1] lab = np.ascontiguousarray(labels, dtype=np.intp)
    a = np.array(f, dtype=np.float64, order="C", copy=True)
    b = np.empty_like(a)
    tmp = np.empty_like(a)
    sums = np.empty((n_blocks, a.shape[1]))
    mass = np.empty(n_blocks)
    norms = np.empty((steps + 1, a.shape[1]))
    cdef double[:, ::1] av = a, bv = b, tv = tmp, sv = sums, nv = norms
    cdef double[::1] mv = mass
    cdef Py_ssize_t s
    with nogil:
        _norms(av, w, p, nv[0])
        for s in range(1, steps + 1):
            _apply_T(uv, img, av, w, lab, tv, sv, mv, bv)
            av, bv = bv, av
            _norms(av, w, p, nv[s])
    return norms, np.asarray(av).copy()


def cocycle(e, image, Py_ssize_t steps):
    cdef const double[::1] ev = np.ascontiguousarray(e, dtype=np.float64)
    cdef const idx_t[::1] img = np.ascontiguousarray(image, dtype=np.intp)
    cdef Py_ssize_t n = ev.shape[0], i, s
    cdef idx_t cur
    out = np.ones(n)
    cdef double[::1] wv = out
    with nogil:
        for i in range(n):
            cur = i
            for s in range(steps):
                wv[i] = wv[i] * ev[cur]
                cur = img[cur]
    return out


def preimage_mass(image, weights):
    cdef const idx_t[::1] img = np.ascontiguousarray(image, dtype=np.intp)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    out = np.zeros(w.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(w.shape[0]):
        ov[img[i]] += w[i]
    return out
