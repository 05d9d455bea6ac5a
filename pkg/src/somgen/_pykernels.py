"""Pure numpy versions of the hot loops in ``_ckernels.pyx``.

Both modules expose identical functions; ``somgen.kernels`` picks one at import.
"""
import numpy as np


def splat_lumps(acc, cx, cy, theta, amplitude, alpha_exp, beta_exp, length, width, radius):
    h, w = acc.shape
    lw = length * width
    for x0, y0, th in zip(cx, cy, theta):
        c, s = np.cos(th), np.sin(th)
        i0 = max(int(y0 - 0.5) - radius, 0)
        i1 = min(int(y0 - 0.5) + radius + 1, h)
        j0 = max(int(x0 - 0.5) - radius, 0)
        j1 = min(int(x0 - 0.5) + radius + 1, w)
        if i0 >= i1 or j0 >= j1:
            continue
        dy = (np.arange(i0, i1) + 0.5 - y0)[:, None]
        dx = (np.arange(j0, j1) + 0.5 - x0)[None, :]
        u = c * dx + s * dy
        v = -s * dx + c * dy
        r2 = u * u + v * v
        # r**beta / ell == r2**((beta - 1) / 2) * sqrt(w2 u^2 + l2 v^2) / (l w)
        q = np.sqrt(width * width * u * u + length * length * v * v) / lw
        with np.errstate(divide="ignore", invalid="ignore"):
            if beta_exp == 0.5:
                e = q / np.sqrt(np.sqrt(r2))
            else:
                e = q * r2 ** (0.5 * (beta_exp - 1.0))
            val = amplitude * np.exp(-alpha_exp * e)
        val[r2 == 0.0] = amplitude
        acc[i0:i1, j0:j1] += val


def nearest_site(height, width, sx, sy):
    py = np.arange(height, dtype=np.float64) + 0.5
    px = np.arange(width, dtype=np.float64) + 0.5
    out = np.empty((height, width), dtype=np.int32)
    # row by row keeps the (width, n_sites) scratch small
    for i in range(height):
        dx = px[:, None] - sx[None, :]
        dy = py[i] - sy[None, :]
        d = dx * dx + dy * dy
        out[i] = np.argmin(d, axis=1)
    return out


def tile_moran(img, tile):
    h, w = img.shape
    nr, nc = h // tile, w // tile
    x = img.astype(np.float64).reshape(nr, tile, nc, tile).transpose(0, 2, 1, 3)
    n = float(tile * tile)
    z = x - x.mean(axis=(2, 3), keepdims=True)
    m2 = (z * z).sum(axis=(2, 3))
    m4 = (z**4).sum(axis=(2, 3))
    cross = (z[..., :, 1:] * z[..., :, :-1]).sum(axis=(2, 3)) + (z[..., 1:, :] * z[..., :-1, :]).sum(axis=(2, 3))
    wsum = 4.0 * tile * (tile - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        moran = (n / wsum) * (2.0 * cross) / m2
        b2 = n * m4 / (m2 * m2)
    degenerate = m2 == 0.0
    moran[degenerate] = np.nan
    b2[degenerate] = np.nan
    return moran, b2


def block_mae(img, templates):
    k, b, _ = templates.shape
    h, w = img.shape
    blocks = img.reshape(h // b, b, w // b, b).transpose(0, 2, 1, 3).reshape(-1, b * b).astype(np.int16)
    tmpl = templates.reshape(k, b * b).astype(np.int16)
    out = np.empty((blocks.shape[0], k), dtype=np.float64)
    for t in range(k):
        out[:, t] = np.abs(blocks - tmpl[t]).sum(axis=1) / float(b * b)
    return out
