# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled bilinear gather and fused plane-sweep kernels.

Semantics match ``mvsfuse._pykernels`` exactly: NaN marks invalid pixels, a
sample is invalid when any pixel it touches is invalid or out of bounds, and a
zero fractional offset touches only one column/row.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport NAN, floor, isfinite

cnp.import_array()


cdef inline double _sample(const double[:, ::1] img, Py_ssize_t h, Py_ssize_t w,
                           double u, double v) noexcept nogil:
    cdef double fu, fv, x0f, y0f, v00, v01, v10, v11
    cdef Py_ssize_t x0, y0, x1, y1
    if not (isfinite(u) and isfinite(v)):
        return NAN
    x0f = floor(u)
    y0f = floor(v)
    if x0f < 0 or y0f < 0 or x0f > w - 1 or y0f > h - 1:
        return NAN
    x0 = <Py_ssize_t>x0f
    y0 = <Py_ssize_t>y0f
    fu = u - x0f
    fv = v - y0f
    x1 = x0 + 1 if fu > 0 else x0
    y1 = y0 + 1 if fv > 0 else y0
    if x1 > w - 1 or y1 > h - 1:
        return NAN
    v00 = img[y0, x0]
    v01 = img[y0, x1]
    v10 = img[y1, x0]
    v11 = img[y1, x1]
    # NaN propagates through the arithmetic
    return (1.0 - fv) * ((1.0 - fu) * v00 + fu * v01) + fv * ((1.0 - fu) * v10 + fu * v11)


def gather_bilinear(img, us, vs):
    cdef const double[:, ::1] im = np.ascontiguousarray(img, dtype=np.float64)
    u_arr = np.ascontiguousarray(us, dtype=np.float64)
    v_arr = np.ascontiguousarray(vs, dtype=np.float64)
    shape = u_arr.shape
    cdef const double[::1] uf = u_arr.reshape(-1)
    cdef const double[::1] vf = v_arr.reshape(-1)
    out = np.empty(uf.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, n = uf.shape[0]
    cdef Py_ssize_t h = im.shape[0], w = im.shape[1]
    with nogil:
        for i in range(n):
            o[i] = _sample(im, h, w, uf[i], vf[i])
    return out.reshape(shape)


def sweep_sq_diff(ref, src, ray, offset, depths):
    """Squared difference between ``ref`` and ``src`` warped at each constant depth.

    ``ray`` is (3, H, W) with the source-pixel homogeneous direction of every
    reference pixel at unit depth; ``offset`` is the projected translation.
    """
    cdef const double[:, ::1] r = np.ascontiguousarray(ref, dtype=np.float64)
    cdef const double[:, ::1] s = np.ascontiguousarray(src, dtype=np.float64)
    cdef const double[:, :, ::1] a = np.ascontiguousarray(ray, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(offset, dtype=np.float64)
    cdef const double[::1] ds = np.ascontiguousarray(depths, dtype=np.float64)
    cdef Py_ssize_t nd = ds.shape[0], h = r.shape[0], w = r.shape[1]
    cdef Py_ssize_t hs = s.shape[0], ws = s.shape[1]
    out = np.empty((nd, h, w), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t k, y, x
    cdef double d, sx, sy, sz, val, diff
    with nogil:
        for k in range(nd):
            d = ds[k]
            for y in range(h):
                for x in range(w):
                    sz = d * a[2, y, x] + b[2]
                    if not sz > 0:
                        o[k, y, x] = NAN
                        continue
                    sx = d * a[0, y, x] + b[0]
                    sy = d * a[1, y, x] + b[1]
                    val = _sample(s, hs, ws, sx / sz, sy / sz)
                    diff = r[y, x] - val
                    o[k, y, x] = diff * diff
    return out
