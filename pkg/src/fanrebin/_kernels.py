"""Compiled inner loops for the projectors.

Images are ``[H, W, B]`` and ray data ``[M, B]``: the trailing batch axis lets
one set of interpolation weights serve every phantom in a stack. All loops
run serially in a fixed order, so results do not depend on thread count.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def ray_integrate(img, fx, fy, dx, dy, kmin, kmax, step, h, out):
    H, W, B = img.shape
    cx = 0.5 * (W - 1)
    cy = 0.5 * (H - 1)
    for m in range(fx.shape[0]):
        for k in range(kmin[m], kmax[m] + 1):
            t = k * step
            px = (fx[m] + t * dx[m]) / h + cx
            py = (fy[m] + t * dy[m]) / h + cy
            i0 = int(math.floor(px))
            j0 = int(math.floor(py))
            ax = px - i0
            ay = py - j0
            for dj in range(2):
                j = j0 + dj
                if j < 0 or j >= H:
                    continue
                wy = ay if dj == 1 else 1.0 - ay
                for di in range(2):
                    i = i0 + di
                    if i < 0 or i >= W:
                        continue
                    w = (ax if di == 1 else 1.0 - ax) * wy * step
                    if w == 0.0:
                        continue
                    for b in range(B):
                        out[m, b] += w * img[j, i, b]


@njit(cache=True)
def ray_scatter(vals, fx, fy, dx, dy, kmin, kmax, step, h, out):
    """Exact transpose of :func:`ray_integrate`."""
    H, W, B = out.shape
    cx = 0.5 * (W - 1)
    cy = 0.5 * (H - 1)
    for m in range(fx.shape[0]):
        for k in range(kmin[m], kmax[m] + 1):
            t = k * step
            px = (fx[m] + t * dx[m]) / h + cx
            py = (fy[m] + t * dy[m]) / h + cy
            i0 = int(math.floor(px))
            j0 = int(math.floor(py))
            ax = px - i0
            ay = py - j0
            for dj in range(2):
                j = j0 + dj
                if j < 0 or j >= H:
                    continue
                wy = ay if dj == 1 else 1.0 - ay
                for di in range(2):
                    i = i0 + di
                    if i < 0 or i >= W:
                        continue
                    w = (ax if di == 1 else 1.0 - ax) * wy * step
                    if w == 0.0:
                        continue
                    for b in range(B):
                        out[j, i, b] += w * vals[m, b]


@njit(cache=True)
def backproject_parallel(sino, cos_t, sin_t, ds, h, weight, out):
    R, N, B = sino.shape
    H, W, _ = out.shape
    cx = 0.5 * (W - 1)
    cy = 0.5 * (H - 1)
    cn = 0.5 * (N - 1)
    for j in range(H):
        y = (j - cy) * h
        for i in range(W):
            x = (i - cx) * h
            for r in range(R):
                f = (x * cos_t[r] + y * sin_t[r]) / ds + cn
                n0 = int(math.floor(f))
                a = f - n0
                if 0 <= n0 < N:
                    w = (1.0 - a) * weight
                    for b in range(B):
                        out[j, i, b] += w * sino[r, n0, b]
                if 0 <= n0 + 1 < N and a != 0.0:
                    w = a * weight
                    for b in range(B):
                        out[j, i, b] += w * sino[r, n0 + 1, b]


@njit(cache=True)
def backproject_fan(proj, beta, sid, sdd, ds, h, weight, out):
    """Pixel-driven fan back-projection with the ray-density weight.

    ``weight * sdd / (U cos(gamma))`` approximates the column sums of the
    ray-driven fan projector, ``U`` being the pixel depth along the central ray.
    """
    N, B = proj.shape
    H, W, _ = out.shape
    cx = 0.5 * (W - 1)
    cy = 0.5 * (H - 1)
    cn = 0.5 * (N - 1)
    ex = math.cos(beta)
    ey = math.sin(beta)
    # central ray direction d(beta) = (-sin, cos)
    qx = -ey
    qy = ex
    for j in range(H):
        y = (j - cy) * h
        for i in range(W):
            x = (i - cx) * h
            depth = sid - (x * qx + y * qy)
            u = sdd * (x * ex + y * ey) / depth
            cos_g = sdd / math.sqrt(sdd * sdd + u * u)
            scale = weight * sdd / (depth * cos_g)
            f = u / ds + cn
            n0 = int(math.floor(f))
            a = f - n0
            if 0 <= n0 < N:
                w = (1.0 - a) * scale
                for b in range(B):
                    out[j, i, b] += w * proj[n0, b]
            if 0 <= n0 + 1 < N and a != 0.0:
                w = a * scale
                for b in range(B):
                    out[j, i, b] += w * proj[n0 + 1, b]


def empty_image(H, W, B):
    return np.zeros((H, W, B), dtype=np.float64)
