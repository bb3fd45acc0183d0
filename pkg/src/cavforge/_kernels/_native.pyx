# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled frame kernels: Hermite-Gaussian spot rendering and frame moments.

Contracts match ``_pyfallback``; see that module for parameter docs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()


def hg_profile(u, int order):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = uu.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double xi, h, h_prev, h_next, norm
    cdef Py_ssize_t i
    cdef int k
    norm = 1.0
    for k in range(1, order + 1):
        norm *= 2.0 * k
    for i in range(n):
        xi = sqrt(2.0) * uu[i]
        h_prev = 1.0
        if order == 0:
            h = 1.0
        else:
            h = 2.0 * xi
            for k in range(1, order):
                h_next = 2.0 * xi * h - 2.0 * k * h_prev
                h_prev = h
                h = h_next
        out[i] = h * h * exp(-2.0 * uu[i] * uu[i]) / norm
    return out


def render_spot(cnp.ndarray[cnp.float64_t, ndim=2] img, double cx, double cy,
                double waist_px, double amp, int order):
    if waist_px <= 0.0:
        raise ValueError("waist_px must be positive")
    cdef Py_ssize_t height = img.shape[0]
    cdef Py_ssize_t width = img.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ux = (np.arange(width, dtype=np.float64) - cx) / waist_px
    cdef cnp.ndarray[cnp.float64_t, ndim=1] col = hg_profile(ux, order)
    cdef double uy, row
    cdef Py_ssize_t i, j
    for i in range(height):
        uy = (i - cy) / waist_px
        row = amp * exp(-2.0 * uy * uy)
        if row == 0.0:
            continue
        for j in range(width):
            img[i, j] += row * col[j]
    return img


def frame_moments(cnp.ndarray[cnp.float64_t, ndim=2] img, double floor):
    cdef Py_ssize_t height = img.shape[0]
    cdef Py_ssize_t width = img.shape[1]
    cdef double total = 0.0, sx = 0.0, sy = 0.0, vmax = 0.0
    cdef double v, cx, cy, dx, dy, mxx = 0.0, myy = 0.0
    cdef Py_ssize_t i, j, count = 0
    cdef int first = 1
    for i in range(height):
        for j in range(width):
            v = img[i, j]
            if first:
                vmax = v
                first = 0
            elif v > vmax:
                vmax = v
            if v > floor:
                total += v
                sx += v * j
                sy += v * i
                count += 1
    if count == 0:
        return (0.0, 0.0, 0.0, 0.0, 0.0, vmax, 0)
    cx = sx / total
    cy = sy / total
    for i in range(height):
        for j in range(width):
            v = img[i, j]
            if v > floor:
                dx = j - cx
                dy = i - cy
                mxx += v * dx * dx
                myy += v * dy * dy
    return (total, cx, cy, mxx / total, myy / total, vmax, count)
