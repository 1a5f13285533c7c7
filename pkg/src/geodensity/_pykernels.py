"""Pure numpy implementations of the raster kernels.

Same signatures and semantics as the compiled ``_ckernels`` module; used when
the extension is unavailable or ``GEODENSITY_PURE_PYTHON=1`` is set.
"""

import math

import numpy as np

BACKEND = "python"


def det3(m):
    m = np.asarray(m, dtype=np.float64)
    return float(
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def gaussian_raster(points, sigma, x0, y0, cell, rows, cols, truncate=4.0):
    """Sum of isotropic 2D Gaussian pdfs evaluated at cell centres.

    Kernels are truncated at ``truncate * sigma``; cells whose centre lies on
    or inside that radius receive the kernel value.
    """
    out = np.zeros((rows, cols), dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    radius = truncate * sigma
    r2max = radius * radius
    inv2s2 = 1.0 / (2.0 * sigma * sigma)
    norm = 1.0 / (2.0 * math.pi * sigma * sigma)
    for px, py in pts:
        j_lo = max(0, int(math.ceil((px - radius - x0) / cell - 0.5)))
        j_hi = min(cols - 1, int(math.floor((px + radius - x0) / cell - 0.5)))
        i_lo = max(0, int(math.ceil((py - radius - y0) / cell - 0.5)))
        i_hi = min(rows - 1, int(math.floor((py + radius - y0) / cell - 0.5)))
        if j_lo > j_hi or i_lo > i_hi:
            continue
        dx = x0 + (np.arange(j_lo, j_hi + 1) + 0.5) * cell - px
        dy = y0 + (np.arange(i_lo, i_hi + 1) + 0.5) * cell - py
        d2 = dy[:, None] ** 2 + dx[None, :] ** 2
        k = np.where(d2 <= r2max, norm * np.exp(-d2 * inv2s2), 0.0)
        out[i_lo : i_hi + 1, j_lo : j_hi + 1] += k
    return out


def _pixel_rays(h, width, height):
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    xs += 0.5
    ys += 0.5
    a = h[0, 0] * xs + h[0, 1] * ys + h[0, 2]
    b = h[1, 0] * xs + h[1, 1] * ys + h[1, 2]
    w = h[2, 0] * xs + h[2, 1] * ys + h[2, 2]
    return a, b, w


def _valid_mask(a, b, w, eps):
    return w > eps * np.sqrt(a * a + b * b + w * w)


def scale_map(h, width, height, eps=1e-12):
    """Per-pixel ``|det J|`` of the dehomogenised map, at pixel centres.

    Returns ``(values, valid)``; invalid pixels (at or beyond the horizon)
    hold 0.
    """
    h = np.asarray(h, dtype=np.float64)
    a, b, w = _pixel_rays(h, width, height)
    valid = _valid_mask(a, b, w, eps)
    dh = abs(det3(h))
    values = np.zeros((height, width), dtype=np.float64)
    wv = w[valid]
    values[valid] = dh / (wv * wv * wv)
    return values, valid


def _bilinear(values, gx, gy):
    rows, cols = values.shape
    near = (gx > -1.0) & (gx < cols) & (gy > -1.0) & (gy < rows)
    gx = np.where(near, gx, -2.0)
    gy = np.where(near, gy, -2.0)
    j0 = np.floor(gx).astype(np.int64)
    i0 = np.floor(gy).astype(np.int64)
    fx = gx - j0
    fy = gy - i0
    out = np.zeros(gx.shape, dtype=np.float64)
    for di, wy in ((0, 1.0 - fy), (1, fy)):
        for dj, wx in ((0, 1.0 - fx), (1, fx)):
            ii = i0 + di
            jj = j0 + dj
            ok = (ii >= 0) & (ii < rows) & (jj >= 0) & (jj < cols)
            out[ok] += wy[ok] * wx[ok] * values[ii[ok], jj[ok]]
    return out


def warp_head_to_image(g, x0, y0, cell, h, m, valid):
    """``F(p) = M(p) * G'(H p)`` with bilinear sampling of ``G'``.

    ``g`` is sampled at cell centres; samples outside the grid are zero.
    """
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    height, width = m.shape
    a, b, w = _pixel_rays(h, width, height)
    out = np.zeros((height, width), dtype=np.float64)
    sel = np.asarray(valid, dtype=bool)
    qx = a[sel] / w[sel]
    qy = b[sel] / w[sel]
    gx = (qx - x0) / cell - 0.5
    gy = (qy - y0) / cell - 0.5
    out[sel] = m[sel] * _bilinear(g, gx, gy)
    return out


def splat_image_to_head(f, valid, h, x0, y0, cell, rows, cols, pixel_area=1.0):
    """Deposit each valid pixel's mass at ``H p`` with bilinear weights.

    Returns per-cell mass (people per cell). Weight falling outside the grid
    is dropped. Accumulation runs in row-major pixel order.
    """
    f = np.asarray(f, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    height, width = f.shape
    a, b, w = _pixel_rays(h, width, height)
    sel = np.asarray(valid, dtype=bool) & (f != 0.0)
    mass = f[sel] * pixel_area
    qx = a[sel] / w[sel]
    qy = b[sel] / w[sel]
    gx = (qx - x0) / cell - 0.5
    gy = (qy - y0) / cell - 0.5
    near = (gx > -1.0) & (gx < cols) & (gy > -1.0) & (gy < rows)
    gx, gy, mass = gx[near], gy[near], mass[near]
    j0 = np.floor(gx).astype(np.int64)
    i0 = np.floor(gy).astype(np.int64)
    fx = gx - j0
    fy = gy - i0
    out = np.zeros(rows * cols, dtype=np.float64)
    # interleave the four corners per pixel to keep the same deposit order as
    # the compiled loop
    idx = []
    wts = []
    oks = []
    for di, wy in ((0, 1.0 - fy), (1, fy)):
        for dj, wx in ((0, 1.0 - fx), (1, fx)):
            ii = i0 + di
            jj = j0 + dj
            oks.append((ii >= 0) & (ii < rows) & (jj >= 0) & (jj < cols))
            idx.append(ii * cols + jj)
            wts.append(mass * (wy * wx))
    idx = np.stack(idx, axis=1).ravel()
    wts = np.stack(wts, axis=1).ravel()
    oks = np.stack(oks, axis=1).ravel()
    # np.add.at applies updates sequentially in index order
    np.add.at(out, idx[oks], wts[oks])
    return out.reshape(rows, cols)
