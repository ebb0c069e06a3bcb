"""Hot numeric kernels with numba-compiled and pure-numpy twins.

Every kernel exists twice: a ``*_np`` reference written in vectorized numpy
and, when numba is importable, an ``@njit`` version compiled from plain
loops.  The public names (``bicubic_warp``, ``lbp_codes``, ``cpd_estep``)
point at the numba build unless the environment variable
``PANDAFACE_NO_NUMBA=1`` forces the numpy path (or numba is missing).
``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

import os

import numpy as np

_flag = os.environ.get("PANDAFACE_NO_NUMBA", "0").strip().lower()
_want_numba = _flag not in ("1", "true", "yes")

if _want_numba:
    try:
        from numba import njit
    except ImportError:
        _want_numba = False


def _cubic_weight(t):
    # Catmull-Rom kernel (a = -0.5); exact 0/1 weights at integer offsets.
    t = abs(t)
    if t <= 1.0:
        return 1.5 * t * t * t - 2.5 * t * t + 1.0
    if t < 2.0:
        return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0
    return 0.0


def _bicubic_warp_np(src, m00, m01, m10, m11, t0, t1, out_h, out_w):
    """Backward-map one channel through an inverse affine, bicubic taps.

    (m00, m01, m10, m11, t0, t1) map output (x, y) to source coordinates.
    Out-of-range taps replicate the nearest border pixel.
    """
    h, w = src.shape
    xs = np.arange(out_w, dtype=np.float64)
    ys = np.arange(out_h, dtype=np.float64)
    gx = m00 * xs[None, :] + m01 * ys[:, None] + t0
    gy = m10 * xs[None, :] + m11 * ys[:, None] + t1
    x0 = np.floor(gx)
    y0 = np.floor(gy)
    fx = gx - x0
    fy = gy - y0
    out = np.zeros((out_h, out_w), dtype=np.float64)
    wxs = [_cubic_weight_np(fx + 1.0), _cubic_weight_np(fx),
           _cubic_weight_np(1.0 - fx), _cubic_weight_np(2.0 - fx)]
    wys = [_cubic_weight_np(fy + 1.0), _cubic_weight_np(fy),
           _cubic_weight_np(1.0 - fy), _cubic_weight_np(2.0 - fy)]
    for j in range(4):
        yi = np.clip(y0.astype(np.int64) + (j - 1), 0, h - 1)
        row_acc = np.zeros((out_h, out_w), dtype=np.float64)
        for i in range(4):
            xi = np.clip(x0.astype(np.int64) + (i - 1), 0, w - 1)
            row_acc += wxs[i] * src[yi, xi]
        out += wys[j] * row_acc
    return out


def _cubic_weight_np(t):
    t = np.abs(t)
    w = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    tn = t[near]
    tf = t[far]
    w[near] = 1.5 * tn ** 3 - 2.5 * tn ** 2 + 1.0
    w[far] = -0.5 * tf ** 3 + 2.5 * tf ** 2 - 4.0 * tf + 2.0
    return w


def _lbp_codes_np(channel, offsets, margin):
    """8-bit LBP codes at every interior pixel; border stays 0.

    ``offsets`` is an (8, 2) array of (dx, dy) neighbour displacements.
    Bilinear sampling is written in difference form so a constant image
    reproduces the centre value exactly.
    """
    h, w = channel.shape
    codes = np.zeros((h, w), dtype=np.uint8)
    if h <= 2 * margin or w <= 2 * margin:
        return codes
    centre = channel[margin:h - margin, margin:w - margin]
    ys, xs = np.mgrid[margin:h - margin, margin:w - margin]
    acc = np.zeros(centre.shape, dtype=np.uint8)
    for p in range(offsets.shape[0]):
        dx, dy = offsets[p]
        sx = xs + dx
        sy = ys + dy
        x0 = np.floor(sx).astype(np.int64)
        y0 = np.floor(sy).astype(np.int64)
        fx = sx - x0
        fy = sy - y0
        i00 = channel[y0, x0]
        i01 = channel[y0, np.minimum(x0 + 1, w - 1)]
        i10 = channel[np.minimum(y0 + 1, h - 1), x0]
        i11 = channel[np.minimum(y0 + 1, h - 1), np.minimum(x0 + 1, w - 1)]
        v0 = i00 + fx * (i01 - i00)
        v1 = i10 + fx * (i11 - i10)
        val = v0 + fy * (v1 - v0)
        acc |= (val >= centre).astype(np.uint8) << p
    codes[margin:h - margin, margin:w - margin] = acc
    return codes


# Gaussian kernel arguments below this underflow past any useful precision
# (e^-40 ~ 4e-18); both E-step twins treat them as exact zeros.
EXP_ARG_CUTOFF = -40.0


def _cpd_estep_np(X, TY, sigma2, c, Pbuf):
    """One CPD E-step: posterior moments of the GMM correspondence.

    Returns (Pt1, P1, PX, logsum) where logsum = sum_n log(S_n + c) with
    S_n the n-th column's kernel sum, the piece the likelihood needs.
    """
    d2 = (TY[:, None, 0] - X[None, :, 0]) ** 2
    d2 += (TY[:, None, 1] - X[None, :, 1]) ** 2
    arg = d2
    arg *= -0.5 / sigma2
    Pbuf.fill(0.0)
    np.exp(arg, out=Pbuf, where=arg > EXP_ARG_CUTOFF)
    s = Pbuf.sum(axis=0)
    denom = s + c
    safe = denom > 0.0
    logsum = float(np.log(denom[safe]).sum()) if safe.all() else -np.inf
    inv = np.where(safe, 1.0 / np.where(safe, denom, 1.0), 0.0)
    Pbuf *= inv[None, :]
    Pt1 = s * inv
    P1 = Pbuf.sum(axis=1)
    PX = Pbuf @ X
    return Pt1, P1, PX, logsum


if _want_numba:

    @njit(cache=True, nogil=True)
    def _cubic_weight_nb(t):
        t = abs(t)
        if t <= 1.0:
            return 1.5 * t * t * t - 2.5 * t * t + 1.0
        if t < 2.0:
            return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0
        return 0.0

    @njit(cache=True, nogil=True)
    def _bicubic_warp_nb(src, m00, m01, m10, m11, t0, t1, out_h, out_w):
        h, w = src.shape
        out = np.empty((out_h, out_w), dtype=np.float64)
        for oy in range(out_h):
            for ox in range(out_w):
                sx = m00 * ox + m01 * oy + t0
                sy = m10 * ox + m11 * oy + t1
                x0 = int(np.floor(sx))
                y0 = int(np.floor(sy))
                fx = sx - x0
                fy = sy - y0
                val = 0.0
                for j in range(4):
                    yi = y0 + j - 1
                    if yi < 0:
                        yi = 0
                    elif yi > h - 1:
                        yi = h - 1
                    wy = _cubic_weight_nb(fy - (j - 1))
                    if wy == 0.0:
                        continue
                    row = 0.0
                    for i in range(4):
                        xi = x0 + i - 1
                        if xi < 0:
                            xi = 0
                        elif xi > w - 1:
                            xi = w - 1
                        row += _cubic_weight_nb(fx - (i - 1)) * src[yi, xi]
                    val += wy * row
                out[oy, ox] = val
        return out

    @njit(cache=True, nogil=True)
    def _lbp_codes_nb(channel, offsets, margin):
        h, w = channel.shape
        codes = np.zeros((h, w), dtype=np.uint8)
        if h <= 2 * margin or w <= 2 * margin:
            return codes
        for y in range(margin, h - margin):
            for x in range(margin, w - margin):
                centre = channel[y, x]
                code = 0
                for p in range(offsets.shape[0]):
                    sx = x + offsets[p, 0]
                    sy = y + offsets[p, 1]
                    x0 = int(np.floor(sx))
                    y0 = int(np.floor(sy))
                    fx = sx - x0
                    fy = sy - y0
                    if fx == 0.0 and fy == 0.0:
                        val = channel[y0, x0]
                    else:
                        x1 = min(x0 + 1, w - 1)
                        y1 = min(y0 + 1, h - 1)
                        i00 = channel[y0, x0]
                        v0 = i00 + fx * (channel[y0, x1] - i00)
                        i10 = channel[y1, x0]
                        v1 = i10 + fx * (channel[y1, x1] - i10)
                        val = v0 + fy * (v1 - v0)
                    if val >= centre:
                        code |= 1 << p
                codes[y, x] = np.uint8(code)
        return codes

    @njit(cache=True, nogil=True)
    def _cpd_estep_nb(X, TY, sigma2, c, Pbuf):
        n = X.shape[0]
        m = TY.shape[0]
        Pt1 = np.empty(n, dtype=np.float64)
        P1 = np.empty(m, dtype=np.float64)
        PX = np.empty((m, 2), dtype=np.float64)
        inv2s = -0.5 / sigma2
        logsum = 0.0
        for j in range(n):
            xj0 = X[j, 0]
            xj1 = X[j, 1]
            s = 0.0
            for i in range(m):
                d0 = xj0 - TY[i, 0]
                d1 = xj1 - TY[i, 1]
                arg = inv2s * (d0 * d0 + d1 * d1)
                v = np.exp(arg) if arg > EXP_ARG_CUTOFF else 0.0
                Pbuf[i, j] = v
                s += v
            denom = s + c
            if denom > 0.0:
                logsum += np.log(denom)
                winv = 1.0 / denom
            else:
                logsum = -np.inf
                winv = 0.0
            Pt1[j] = s * winv
            for i in range(m):
                Pbuf[i, j] *= winv
        for i in range(m):
            a = 0.0
            b0 = 0.0
            b1 = 0.0
            for j in range(n):
                p = Pbuf[i, j]
                a += p
                b0 += p * X[j, 0]
                b1 += p * X[j, 1]
            P1[i] = a
            PX[i, 0] = b0
            PX[i, 1] = b1
        return Pt1, P1, PX, logsum


USING_NUMBA = _want_numba

if USING_NUMBA:
    bicubic_warp = _bicubic_warp_nb
    lbp_codes = _lbp_codes_nb
    cpd_estep = _cpd_estep_nb
else:
    bicubic_warp = _bicubic_warp_np
    lbp_codes = _lbp_codes_np
    cpd_estep = _cpd_estep_np
