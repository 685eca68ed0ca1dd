# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled geometry kernels: ellipse polygonization, convex clipping, areas.

Mirrors netradar.geometry._purepy exactly (same angular grid, same inclusive
inside predicate) so the two backends agree to floating-point noise.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()

BACKEND_NAME = "compiled"


cdef double _PI2 = 6.283185307179586476925286766559


cdef void _fill_ellipse(double cx, double cy,
                        double t00, double t01, double t10, double t11,
                        int n, double* out) nogil:
    cdef int i
    cdef double a, u, v
    for i in range(n):
        a = _PI2 * i / n
        u = cos(a)
        v = sin(a)
        out[2 * i] = cx + t00 * u + t01 * v
        out[2 * i + 1] = cy + t10 * u + t11 * v


cdef double _shoelace(double* p, int n) nogil:
    cdef int i, j
    cdef double s = 0.0
    if n < 3:
        return 0.0
    for i in range(n):
        j = i + 1
        if j == n:
            j = 0
        s += p[2 * i] * p[2 * j + 1] - p[2 * j] * p[2 * i + 1]
    return 0.5 * s


cdef int _clip_one_edge(double* src, int n, double ax, double ay,
                        double bx, double by, double* dst, double* d) nogil:
    """Clip polygon src (n vertices) by the half plane left of edge a->b."""
    cdef int i, j, k = 0
    cdef double ex = bx - ax
    cdef double ey = by - ay
    cdef double t
    cdef bint all_in = True, any_in = False
    for i in range(n):
        d[i] = ex * (src[2 * i + 1] - ay) - ey * (src[2 * i] - ax)
        if d[i] >= 0.0:
            any_in = True
        else:
            all_in = False
    if not any_in:
        return 0
    if all_in:
        return -1  # caller keeps src untouched
    for i in range(n):
        j = i + 1
        if j == n:
            j = 0
        if d[i] >= 0.0:
            dst[2 * k] = src[2 * i]
            dst[2 * k + 1] = src[2 * i + 1]
            k += 1
            if d[j] < 0.0:
                t = d[i] / (d[i] - d[j])
                dst[2 * k] = src[2 * i] + t * (src[2 * j] - src[2 * i])
                dst[2 * k + 1] = src[2 * i + 1] + t * (src[2 * j + 1] - src[2 * i + 1])
                k += 1
        elif d[j] >= 0.0:
            t = d[i] / (d[i] - d[j])
            dst[2 * k] = src[2 * i] + t * (src[2 * j] - src[2 * i])
            dst[2 * k + 1] = src[2 * i + 1] + t * (src[2 * j + 1] - src[2 * i + 1])
            k += 1
    return k


cdef int _clip_convex_raw(double* subject, int ns, double* clip, int nc,
                          double* buf_a, double* buf_b, double* d) nogil:
    """Full Sutherland-Hodgman pass; result left in buf_a, count returned."""
    cdef int i, e, n = ns, r
    cdef double ax, ay, bx, by
    cdef double* cur = buf_a
    cdef double* nxt = buf_b
    cdef double* tmp
    for i in range(2 * ns):
        cur[i] = subject[i]
    for e in range(nc):
        if n == 0:
            break
        ax = clip[2 * e]
        ay = clip[2 * e + 1]
        if e + 1 == nc:
            bx = clip[0]
            by = clip[1]
        else:
            bx = clip[2 * e + 2]
            by = clip[2 * e + 3]
        r = _clip_one_edge(cur, n, ax, ay, bx, by, nxt, d)
        if r < 0:
            continue  # fully inside this half plane
        n = r
        tmp = cur
        cur = nxt
        nxt = tmp
    if cur != buf_a:
        for i in range(2 * n):
            buf_a[i] = cur[i]
    return n


def ellipse_polygon(center, transform, int n_vertices):
    """Inscribed CCW polygon of an ellipse; transform maps the unit circle."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c = np.ascontiguousarray(center, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] t = np.ascontiguousarray(transform, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n_vertices, 2), dtype=np.float64)
    _fill_ellipse(c[0], c[1], t[0, 0], t[0, 1], t[1, 0], t[1, 1],
                  n_vertices, <double*> out.data)
    return out


def polygon_area(poly):
    """Shoelace area, positive for counterclockwise vertex order."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = np.ascontiguousarray(poly, dtype=np.float64)
    return _shoelace(<double*> p.data, p.shape[0])


def clip_convex(subject, clip):
    """Sutherland-Hodgman clip of one convex CCW polygon by another."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] s = np.ascontiguousarray(subject, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] c = np.ascontiguousarray(clip, dtype=np.float64)
    cdef int ns = s.shape[0]
    cdef int nc = c.shape[0]
    if ns == 0 or nc == 0:
        return np.empty((0, 2), dtype=np.float64)
    cdef int cap = ns + nc + 8
    cdef cnp.ndarray[cnp.float64_t, ndim=2] buf_a = np.empty((cap, 2), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] buf_b = np.empty((cap, 2), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d = np.empty(cap, dtype=np.float64)
    cdef int n = _clip_convex_raw(<double*> s.data, ns, <double*> c.data, nc,
                                  <double*> buf_a.data, <double*> buf_b.data,
                                  <double*> d.data)
    return buf_a[:n].copy()


cdef double _intersection_area_raw(double* cs, double* ts, int n_ell,
                                   int n_vertices, double* pa, double* pb,
                                   double* pc, double* pd) nogil:
    cdef int i, n
    cdef double area
    _fill_ellipse(cs[0], cs[1], ts[0], ts[1], ts[2], ts[3], n_vertices, pa)
    n = n_vertices
    for i in range(1, n_ell):
        _fill_ellipse(cs[2 * i], cs[2 * i + 1], ts[4 * i], ts[4 * i + 1],
                      ts[4 * i + 2], ts[4 * i + 3], n_vertices, pc)
        n = _clip_convex_raw(pa, n, pc, n_vertices, pa, pb, pd)
        if n < 3:
            return 0.0
    area = _shoelace(pa, n)
    if area < 0.0:
        area = 0.0
    return area


def intersection_area_kernel(centers, transforms, int n_vertices):
    """Area of the common intersection of ellipses given as (center, transform)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cs = np.ascontiguousarray(centers, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] ts = np.ascontiguousarray(transforms, dtype=np.float64)
    cdef int n_ell = cs.shape[0]
    cdef int cap = n_vertices * (n_ell + 1) + 8
    cdef cnp.ndarray[cnp.float64_t, ndim=2] buf_a = np.empty((cap, 2), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] buf_b = np.empty((cap, 2), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cpoly = np.empty((n_vertices, 2), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d = np.empty(cap, dtype=np.float64)
    cdef double area
    with nogil:
        area = _intersection_area_raw(<double*> cs.data, <double*> ts.data, n_ell,
                                      n_vertices, <double*> buf_a.data,
                                      <double*> buf_b.data, <double*> cpoly.data,
                                      <double*> d.data)
    return area


def intersection_areas_batch(centers, transforms, int n_vertices):
    """Intersection areas for a batch of ellipse groups, shapes (B,E,2)/(B,E,2,2)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=3] cs = np.ascontiguousarray(centers, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=4] ts = np.ascontiguousarray(transforms, dtype=np.float64)
    cdef int n_batch = cs.shape[0]
    cdef int n_ell = cs.shape[1]
    cdef int cap = n_vertices * (n_ell + 1) + 8
    cdef cnp.ndarray[cnp.float64_t, ndim=2] buf_a = np.empty((cap, 2), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] buf_b = np.empty((cap, 2), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cpoly = np.empty((n_vertices, 2), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d = np.empty(cap, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n_batch, dtype=np.float64)
    cdef double* p_cs = <double*> cs.data
    cdef double* p_ts = <double*> ts.data
    cdef double* p_out = <double*> out.data
    cdef double* pa = <double*> buf_a.data
    cdef double* pb = <double*> buf_b.data
    cdef double* pc = <double*> cpoly.data
    cdef double* pd = <double*> d.data
    cdef int b
    with nogil:
        for b in range(n_batch):
            p_out[b] = _intersection_area_raw(p_cs + 2 * n_ell * b,
                                              p_ts + 4 * n_ell * b, n_ell,
                                              n_vertices, pa, pb, pc, pd)
    return out
