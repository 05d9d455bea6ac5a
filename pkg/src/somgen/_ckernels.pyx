# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Signatures mirror ``somgen._pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, pow, sqrt, cos, sin, NAN
from libc.stdlib cimport abs as iabs

cnp.import_array()


def splat_lumps(double[:, ::1] acc, const double[::1] cx, const double[::1] cy,
                const double[::1] theta, double amplitude, double alpha_exp,
                double beta_exp, double length, double width, int radius):
    """Add anisotropic lumps centred at (cx, cy) into ``acc`` in place."""
    cdef Py_ssize_t h = acc.shape[0], w = acc.shape[1]
    cdef Py_ssize_t n = cx.shape[0], k
    cdef Py_ssize_t i, j, i0, i1, j0, j1
    cdef double c, s, dx, dy, u, v, r2, q, e
    cdef double lw = length * width, l2 = length * length, w2 = width * width
    cdef double half = 0.5 * (beta_exp - 1.0)
    cdef bint quarter = beta_exp == 0.5
    for k in range(n):
        c = cos(theta[k])
        s = sin(theta[k])
        i0 = <Py_ssize_t>(cy[k] - 0.5) - radius
        i1 = <Py_ssize_t>(cy[k] - 0.5) + radius + 1
        j0 = <Py_ssize_t>(cx[k] - 0.5) - radius
        j1 = <Py_ssize_t>(cx[k] - 0.5) + radius + 1
        if i0 < 0:
            i0 = 0
        if j0 < 0:
            j0 = 0
        if i1 > h:
            i1 = h
        if j1 > w:
            j1 = w
        for i in range(i0, i1):
            dy = i + 0.5 - cy[k]
            for j in range(j0, j1):
                dx = j + 0.5 - cx[k]
                u = c * dx + s * dy
                v = -s * dx + c * dy
                r2 = u * u + v * v
                if r2 == 0.0:
                    acc[i, j] += amplitude
                    continue
                # r**beta / ell == r2**((beta - 1) / 2) * sqrt(w2 u^2 + l2 v^2) / (l w)
                q = sqrt(w2 * u * u + l2 * v * v) / lw
                if quarter:
                    e = q / sqrt(sqrt(r2))
                else:
                    e = q * pow(r2, half)
                acc[i, j] += amplitude * exp(-alpha_exp * e)


def nearest_site(int height, int width, const double[::1] sx, const double[::1] sy):
    """Label each pixel centre with the index of its nearest site (ties -> lowest)."""
    cdef Py_ssize_t n = sx.shape[0], k, i, j, best
    cdef double px, py, dx, dy, d, dbest
    out = np.empty((height, width), dtype=np.int32)
    cdef int[:, ::1] lab = out
    for i in range(height):
        py = i + 0.5
        for j in range(width):
            px = j + 0.5
            best = 0
            dx = px - sx[0]
            dy = py - sy[0]
            dbest = dx * dx + dy * dy
            for k in range(1, n):
                dx = px - sx[k]
                dy = py - sy[k]
                d = dx * dx + dy * dy
                if d < dbest:
                    dbest = d
                    best = k
            lab[i, j] = <int>best
    return out


def tile_moran(const cnp.uint8_t[:, ::1] img, int tile):
    """Rook-weight Moran's I and sample kurtosis b2 for every tile.

    Returns two (rows, cols) float arrays; degenerate tiles get NaN.
    """
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t nr = h // tile, nc = w // tile
    cdef Py_ssize_t ti, tj, i, j, r0, c0
    cdef double n = tile * tile, mean, z, m2, m4, cross
    cdef double wsum = 4.0 * tile * (tile - 1)
    cdef double zbuf[4096]
    out_i = np.empty((nr, nc), dtype=np.float64)
    out_b = np.empty((nr, nc), dtype=np.float64)
    cdef double[:, ::1] oi = out_i
    cdef double[:, ::1] ob = out_b
    if tile * tile > 4096:
        raise ValueError("tile too large for compiled kernel")
    for ti in range(nr):
        for tj in range(nc):
            r0 = ti * tile
            c0 = tj * tile
            mean = 0.0
            for i in range(tile):
                for j in range(tile):
                    mean += img[r0 + i, c0 + j]
            mean /= n
            m2 = 0.0
            m4 = 0.0
            for i in range(tile):
                for j in range(tile):
                    z = img[r0 + i, c0 + j] - mean
                    zbuf[i * tile + j] = z
                    m2 += z * z
                    m4 += z * z * z * z
            if m2 == 0.0:
                oi[ti, tj] = NAN
                ob[ti, tj] = NAN
                continue
            cross = 0.0
            for i in range(tile):
                for j in range(tile):
                    z = zbuf[i * tile + j]
                    if j + 1 < tile:
                        cross += z * zbuf[i * tile + j + 1]
                    if i + 1 < tile:
                        cross += z * zbuf[(i + 1) * tile + j]
            # each undirected rook pair appears twice in the weight matrix
            oi[ti, tj] = (n / wsum) * (2.0 * cross) / m2
            ob[ti, tj] = n * m4 / (m2 * m2)
    return out_i, out_b


def block_mae(const cnp.uint8_t[:, ::1] img, const cnp.uint8_t[:, :, ::1] templates):
    """Mean absolute error of every block against every template.

    ``templates`` has shape (k, b, b); returns (n_blocks, k) in row-major block order.
    """
    cdef Py_ssize_t k = templates.shape[0], b = templates.shape[1]
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t nr = h // b, nc = w // b
    cdef Py_ssize_t bi, bj, t, i, j
    cdef int acc
    cdef const cnp.uint8_t* row
    cdef const cnp.uint8_t* trow
    out = np.empty((nr * nc, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double norm = b * b
    for bi in range(nr):
        for bj in range(nc):
            for t in range(k):
                acc = 0
                for i in range(b):
                    row = &img[bi * b + i, bj * b]
                    trow = &templates[t, i, 0]
                    for j in range(b):
                        acc += iabs(<int>row[j] - <int>trow[j])  # branch-free, vectorizes
                o[bi * nc + bj, t] = acc / norm
    return out
