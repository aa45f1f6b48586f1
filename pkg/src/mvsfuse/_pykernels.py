"""Pure-numpy reference versions of the compiled kernels in ``_ckernels.pyx``."""

import numpy as np


def gather_bilinear(img, us, vs):
    img = np.asarray(img, dtype=np.float64)
    us = np.asarray(us, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    h, w = img.shape
    out = np.full(us.shape, np.nan)

    with np.errstate(invalid="ignore"):
        x0f = np.floor(us)
        y0f = np.floor(vs)
        ok = np.isfinite(us) & np.isfinite(vs)
        ok &= (x0f >= 0) & (y0f >= 0) & (x0f <= w - 1) & (y0f <= h - 1)
    fu = np.where(ok, us - x0f, 0.0)
    fv = np.where(ok, vs - y0f, 0.0)
    x0 = np.where(ok, x0f, 0).astype(np.intp)
    y0 = np.where(ok, y0f, 0).astype(np.intp)
    x1 = np.where(fu > 0, x0 + 1, x0)
    y1 = np.where(fv > 0, y0 + 1, y0)
    ok &= (x1 <= w - 1) & (y1 <= h - 1)

    x0, x1, y0, y1 = x0[ok], x1[ok], y0[ok], y1[ok]
    fu, fv = fu[ok], fv[ok]
    v00 = img[y0, x0]
    v01 = img[y0, x1]
    v10 = img[y1, x0]
    v11 = img[y1, x1]
    out[ok] = (1.0 - fv) * ((1.0 - fu) * v00 + fu * v01) + fv * ((1.0 - fu) * v10 + fu * v11)
    return out


def sweep_sq_diff(ref, src, ray, offset, depths):
    ref = np.asarray(ref, dtype=np.float64)
    ray = np.asarray(ray, dtype=np.float64)
    offset = np.asarray(offset, dtype=np.float64)
    depths = np.asarray(depths, dtype=np.float64)
    out = np.empty((depths.shape[0],) + ref.shape)
    for k, d in enumerate(depths):
        sx = d * ray[0] + offset[0]
        sy = d * ray[1] + offset[1]
        sz = d * ray[2] + offset[2]
        front = sz > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            us = np.where(front, sx / sz, np.nan)
            vs = np.where(front, sy / sz, np.nan)
        diff = ref - gather_bilinear(src, us, vs)
        out[k] = diff * diff
    return out
