# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled raster kernels. Mirrors ``geodensity._pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, floor, ceil, sqrt, fabs, M_PI

cnp.import_array()

BACKEND = "cython"


cdef inline double _det3(const double[:, ::1] m) nogil:
    return (m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
            - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
            + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]))


def det3(m):
    cdef const double[:, ::1] mv = np.ascontiguousarray(m, dtype=np.float64)
    return _det3(mv)


def gaussian_raster(points, double sigma, double x0, double y0, double cell,
                    Py_ssize_t rows, Py_ssize_t cols, double truncate=4.0):
    cdef const double[:, ::1] pts = np.ascontiguousarray(
        np.asarray(points, dtype=np.float64).reshape(-1, 2))
    out_arr = np.zeros((rows, cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double radius = truncate * sigma
    cdef double r2max = radius * radius
    cdef double inv2s2 = 1.0 / (2.0 * sigma * sigma)
    cdef double norm = 1.0 / (2.0 * M_PI * sigma * sigma)
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t p, i, j, i_lo, i_hi, j_lo, j_hi
    cdef double px, py, dx, dy, d2
    with nogil:
        for p in range(n):
            px = pts[p, 0]
            py = pts[p, 1]
            j_lo = <Py_ssize_t>ceil((px - radius - x0) / cell - 0.5)
            j_hi = <Py_ssize_t>floor((px + radius - x0) / cell - 0.5)
            i_lo = <Py_ssize_t>ceil((py - radius - y0) / cell - 0.5)
            i_hi = <Py_ssize_t>floor((py + radius - y0) / cell - 0.5)
            if j_lo < 0:
                j_lo = 0
            if i_lo < 0:
                i_lo = 0
            if j_hi > cols - 1:
                j_hi = cols - 1
            if i_hi > rows - 1:
                i_hi = rows - 1
            for i in range(i_lo, i_hi + 1):
                dy = y0 + (i + 0.5) * cell - py
                for j in range(j_lo, j_hi + 1):
                    dx = x0 + (j + 0.5) * cell - px
                    d2 = dy * dy + dx * dx
                    if d2 <= r2max:
                        out[i, j] += norm * exp(-d2 * inv2s2)
    return out_arr


def scale_map(h, Py_ssize_t width, Py_ssize_t height, double eps=1e-12):
    cdef const double[:, ::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    values_arr = np.zeros((height, width), dtype=np.float64)
    valid_arr = np.zeros((height, width), dtype=np.bool_)
    cdef double[:, ::1] values = values_arr
    cdef cnp.npy_bool[:, ::1] valid = valid_arr
    cdef double dh = fabs(_det3(hv))
    cdef Py_ssize_t i, j
    cdef double x, y, a, b, w
    with nogil:
        for i in range(height):
            y = i + 0.5
            for j in range(width):
                x = j + 0.5
                a = hv[0, 0] * x + hv[0, 1] * y + hv[0, 2]
                b = hv[1, 0] * x + hv[1, 1] * y + hv[1, 2]
                w = hv[2, 0] * x + hv[2, 1] * y + hv[2, 2]
                if w > eps * sqrt(a * a + b * b + w * w):
                    valid[i, j] = 1
                    values[i, j] = dh / (w * w * w)
    return values_arr, valid_arr


cdef inline double _sample(const double[:, ::1] g, double gx, double gy) nogil:
    cdef Py_ssize_t rows = g.shape[0]
    cdef Py_ssize_t cols = g.shape[1]
    if not (gx > -1.0 and gx < cols and gy > -1.0 and gy < rows):
        return 0.0
    cdef double fj = floor(gx)
    cdef double fi = floor(gy)
    cdef Py_ssize_t j0 = <Py_ssize_t>fj
    cdef Py_ssize_t i0 = <Py_ssize_t>fi
    cdef double fx = gx - fj
    cdef double fy = gy - fi
    cdef double acc = 0.0
    if i0 >= 0 and i0 < rows:
        if j0 >= 0 and j0 < cols:
            acc += (1.0 - fy) * (1.0 - fx) * g[i0, j0]
        if j0 + 1 >= 0 and j0 + 1 < cols:
            acc += (1.0 - fy) * fx * g[i0, j0 + 1]
    if i0 + 1 >= 0 and i0 + 1 < rows:
        if j0 >= 0 and j0 < cols:
            acc += fy * (1.0 - fx) * g[i0 + 1, j0]
        if j0 + 1 >= 0 and j0 + 1 < cols:
            acc += fy * fx * g[i0 + 1, j0 + 1]
    return acc


def warp_head_to_image(g, double x0, double y0, double cell, h, m, valid):
    cdef const double[:, ::1] gv = np.ascontiguousarray(g, dtype=np.float64)
    cdef const double[:, ::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef const double[:, ::1] mv = np.ascontiguousarray(m, dtype=np.float64)
    cdef const cnp.npy_bool[:, ::1] ok = np.ascontiguousarray(valid, dtype=np.bool_)
    cdef Py_ssize_t height = mv.shape[0]
    cdef Py_ssize_t width = mv.shape[1]
    out_arr = np.zeros((height, width), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double x, y, a, b, w
    with nogil:
        for i in range(height):
            y = i + 0.5
            for j in range(width):
                if not ok[i, j]:
                    continue
                x = j + 0.5
                a = hv[0, 0] * x + hv[0, 1] * y + hv[0, 2]
                b = hv[1, 0] * x + hv[1, 1] * y + hv[1, 2]
                w = hv[2, 0] * x + hv[2, 1] * y + hv[2, 2]
                out[i, j] = mv[i, j] * _sample(
                    gv, (a / w - x0) / cell - 0.5, (b / w - y0) / cell - 0.5)
    return out_arr


def splat_image_to_head(f, valid, h, double x0, double y0, double cell,
                        Py_ssize_t rows, Py_ssize_t cols, double pixel_area=1.0):
    cdef const double[:, ::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef const double[:, ::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef const cnp.npy_bool[:, ::1] ok = np.ascontiguousarray(valid, dtype=np.bool_)
    cdef Py_ssize_t height = fv.shape[0]
    cdef Py_ssize_t width = fv.shape[1]
    out_arr = np.zeros((rows, cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, i0, j0, ii, jj, di, dj
    cdef double x, y, a, b, w, gx, gy, fx, fy, mass, wy, wx
    with nogil:
        for i in range(height):
            y = i + 0.5
            for j in range(width):
                if not ok[i, j] or fv[i, j] == 0.0:
                    continue
                x = j + 0.5
                a = hv[0, 0] * x + hv[0, 1] * y + hv[0, 2]
                b = hv[1, 0] * x + hv[1, 1] * y + hv[1, 2]
                w = hv[2, 0] * x + hv[2, 1] * y + hv[2, 2]
                gx = (a / w - x0) / cell - 0.5
                gy = (b / w - y0) / cell - 0.5
                if not (gx > -1.0 and gx < cols and gy > -1.0 and gy < rows):
                    continue
                j0 = <Py_ssize_t>floor(gx)
                i0 = <Py_ssize_t>floor(gy)
                fx = gx - floor(gx)
                fy = gy - floor(gy)
                mass = fv[i, j] * pixel_area
                for di in range(2):
                    wy = fy if di else 1.0 - fy
                    ii = i0 + di
                    for dj in range(2):
                        wx = fx if dj else 1.0 - fx
                        jj = j0 + dj
                        if ii >= 0 and ii < rows and jj >= 0 and jj < cols:
                            out[ii, jj] += mass * (wy * wx)
    return out_arr
