"""Compiled loops for convolution and pooling.

All batch kernels take NCHW arrays and are parallel over the batch. Reductions
across the batch are returned per sample and summed by the caller in a fixed
order, which keeps results independent of the thread count.
"""

import numba as nb
import numpy as np

_JIT = dict(fastmath=True, cache=True)


# Convolutions run as blocked im2col + GEMM: a few output rows at a time are
# unrolled into a (C*k*k, rows*Wo) column buffer that stays in cache.


@nb.njit(**_JIT)
def _block_rows(Ho, Wo):
    return max(1, min(Ho, 400 // Wo))

@nb.njit(**_JIT)
def _fill_cols(x, n, i0, nr, k, Wo, colT):
    C = x.shape[1]
    q = 0
    for c in range(C):
        for dy in range(k):
            for dx in range(k):
                for r in range(nr):
                    src = x[n, c, i0 + r + dy]
                    base = r * Wo
                    for j in range(Wo):
                        colT[q, base + j] = src[j + dx]
                q += 1

@nb.njit(parallel=True, **_JIT)
def conv_forward(x, w, b):
    B, C, H, W = x.shape
    O, _, k, _ = w.shape
    Ho = H - k + 1
    Wo = W - k + 1
    K = C * k * k
    wmat = np.ascontiguousarray(w.reshape((O, K)))
    rows = _block_rows(Ho, Wo)
    out = np.empty((B, O, Ho, Wo), dtype=x.dtype)
    for n in nb.prange(B):
        for i0 in range(0, Ho, rows):
            nr = min(rows, Ho - i0)
            colT = np.empty((K, nr * Wo), dtype=x.dtype)
            _fill_cols(x, n, i0, nr, k, Wo, colT)
            res = np.dot(wmat, colT)
            for o in range(O):
                bo = b[o]
                for r in range(nr):
                    dst = out[n, o, i0 + r]
                    base = r * Wo
                    for j in range(Wo):
                        dst[j] = res[o, base + j] + bo
    return out

@nb.njit(parallel=True, **_JIT)
def conv_weight_grad(x, g, k):
    """Per-sample kernel gradients, shape (B, O, C, k, k)."""
    B, C, H, W = x.shape
    O = g.shape[1]
    Ho = g.shape[2]
    Wo = g.shape[3]
    K = C * k * k
    rows = _block_rows(Ho, Wo)
    dw = np.zeros((B, O, K), dtype=x.dtype)
    for n in nb.prange(B):
        for i0 in range(0, Ho, rows):
            nr = min(rows, Ho - i0)
            m = nr * Wo
            colT = np.empty((K, m), dtype=x.dtype)
            _fill_cols(x, n, i0, nr, k, Wo, colT)
            gb = np.empty((O, m), dtype=x.dtype)
            for o in range(O):
                for r in range(nr):
                    src = g[n, o, i0 + r]
                    for j in range(Wo):
                        gb[o, r * Wo + j] = src[j]
            dw[n] += np.dot(gb, colT.T)
    return dw.reshape((B, O, C, k, k))

@nb.njit(parallel=True, **_JIT)
def conv_input_grad(g, w, H, W):
    B, O, Ho, Wo = g.shape
    _, C, k, _ = w.shape
    K = C * k * k
    wT = np.ascontiguousarray(w.reshape((O, K)).T)
    rows = _block_rows(Ho, Wo)
    dx_out = np.zeros((B, C, H, W), dtype=g.dtype)
    for n in nb.prange(B):
        for i0 in range(0, Ho, rows):
            nr = min(rows, Ho - i0)
            m = nr * Wo
            gb = np.empty((O, m), dtype=g.dtype)
            for o in range(O):
                for r in range(nr):
                    src = g[n, o, i0 + r]
                    for j in range(Wo):
                        gb[o, r * Wo + j] = src[j]
            dcol = np.dot(wT, gb)
            q = 0
            for c in range(C):
                for dy in range(k):
                    for dx in range(k):
                        for r in range(nr):
                            dst = dx_out[n, c, i0 + r + dy]
                            base = r * Wo
                            for j in range(Wo):
                                dst[j + dx] += dcol[q, base + j]
                        q += 1
    return dx_out


def pool_out_size(size, window, stride, ceil_mode):
    span = size - window
    if span < 0:
        return 0
    if ceil_mode:
        return -(-span // stride) + 1
    return span // stride + 1


@nb.njit(**_JIT)
def _window_inv(n_out, size, window, stride):
    inv = np.empty(n_out, dtype=np.float64)
    for i in range(n_out):
        s = i * stride
        inv[i] = 1.0 / (min(s + window, size) - s)
    return inv

@nb.njit(parallel=True, **_JIT)
def avg_pool_forward(x, window, stride, Ho, Wo):
    """Average over windows clipped to the input; divisor counts valid cells."""
    B, C, H, W = x.shape
    out = np.empty((B, C, Ho, Wo), dtype=x.dtype)
    invy = _window_inv(Ho, H, window, stride).astype(x.dtype)
    invx = _window_inv(Wo, W, window, stride).astype(x.dtype)
    for n in nb.prange(B):
        rs = np.empty((H, Wo), dtype=x.dtype)
        for c in range(C):
            for y in range(H):
                row = x[n, c, y]
                for j in range(Wo):
                    x0 = j * stride
                    x1 = min(x0 + window, W)
                    s = row[x0]
                    for xx in range(x0 + 1, x1):
                        s += row[xx]
                    rs[y, j] = s * invx[j]
            for i in range(Ho):
                y0 = i * stride
                y1 = min(y0 + window, H)
                dst = out[n, c, i]
                for j in range(Wo):
                    dst[j] = rs[y0, j]
                for yy in range(y0 + 1, y1):
                    src = rs[yy]
                    for j in range(Wo):
                        dst[j] += src[j]
                for j in range(Wo):
                    dst[j] *= invy[i]
    return out

@nb.njit(parallel=True, **_JIT)
def avg_pool_backward(g, window, stride, H, W):
    B, C, Ho, Wo = g.shape
    dx = np.zeros((B, C, H, W), dtype=g.dtype)
    invy = _window_inv(Ho, H, window, stride).astype(g.dtype)
    invx = _window_inv(Wo, W, window, stride).astype(g.dtype)
    for n in nb.prange(B):
        cs = np.empty((H, Wo), dtype=g.dtype)
        for c in range(C):
            cs[:] = 0
            for i in range(Ho):
                y0 = i * stride
                y1 = min(y0 + window, H)
                src = g[n, c, i]
                f = invy[i]
                for yy in range(y0, y1):
                    dst = cs[yy]
                    for j in range(Wo):
                        dst[j] += src[j] * f
            for y in range(H):
                dst = dx[n, c, y]
                src = cs[y]
                for j in range(Wo):
                    v = src[j] * invx[j]
                    x0 = j * stride
                    x1 = min(x0 + window, W)
                    for xx in range(x0, x1):
                        dst[xx] += v
    return dx

@nb.njit(parallel=True, **_JIT)
def max_pool_forward(x, window, stride, Ho, Wo):
    """Returns pooled values and the flat in-plane index of each maximum.

    Ties resolve to the first maximum in row-major window order.
    """
    B, C, H, W = x.shape
    out = np.empty((B, C, Ho, Wo), dtype=x.dtype)
    arg = np.empty((B, C, Ho, Wo), dtype=np.int32)
    for n in nb.prange(B):
        for c in range(C):
            for i in range(Ho):
                y0 = i * stride
                y1 = min(y0 + window, H)
                for j in range(Wo):
                    x0 = j * stride
                    x1 = min(x0 + window, W)
                    best = x[n, c, y0, x0]
                    bi = y0 * W + x0
                    for yy in range(y0, y1):
                        for xx in range(x0, x1):
                            v = x[n, c, yy, xx]
                            if v > best:
                                best = v
                                bi = yy * W + xx
                    out[n, c, i, j] = best
                    arg[n, c, i, j] = bi
    return out, arg


@nb.njit(parallel=True, **_JIT)
def max_pool_backward(g, arg, H, W):
    B, C, Ho, Wo = g.shape
    dx = np.zeros((B, C, H * W), dtype=g.dtype)
    for n in nb.prange(B):
        for c in range(C):
            for i in range(Ho):
                for j in range(Wo):
                    dx[n, c, arg[n, c, i, j]] += g[n, c, i, j]
    return dx.reshape((B, C, H, W))


@nb.njit(parallel=True, **_JIT)
def relu_forward(x):
    flat = x.reshape(-1)
    out = np.empty_like(flat)
    for i in nb.prange(flat.size):
        v = flat[i]
        out[i] = v if v > 0 else 0
    return out.reshape(x.shape)

@nb.njit(parallel=True, **_JIT)
def relu_backward(g, y):
    gf = g.reshape(-1)
    yf = y.reshape(-1)
    out = np.empty_like(gf)
    for i in nb.prange(gf.size):
        out[i] = gf[i] if yf[i] > 0 else 0
    return out.reshape(g.shape)


# -- dense (dilated, stride 1) variants used for sliding-window inference --


@nb.njit(parallel=True, **_JIT)
def conv_dilated(x, w, b, dilation):
    C, H, W = x.shape
    O, _, k, _ = w.shape
    reach = (k - 1) * dilation
    Ho = H - reach
    Wo = W - reach
    out = np.empty((O, Ho, Wo), dtype=x.dtype)
    for o in nb.prange(O):
        acc = np.full((Ho, Wo), b[o], dtype=x.dtype)
        for c in range(C):
            for dy in range(k):
                for dx in range(k):
                    wv = w[o, c, dy, dx]
                    oy = dy * dilation
                    ox = dx * dilation
                    for i in range(Ho):
                        row = x[c, i + oy]
                        for j in range(Wo):
                            acc[i, j] += wv * row[j + ox]
        out[o] = acc
    return out


@nb.njit(parallel=True, **_JIT)
def pool_dilated(x, window, dilation, use_max):
    C, H, W = x.shape
    reach = (window - 1) * dilation
    Ho = H - reach
    Wo = W - reach
    out = np.empty((C, Ho, Wo), dtype=x.dtype)
    inv = 1.0 / (window * window)
    for c in nb.prange(C):
        for i in range(Ho):
            for j in range(Wo):
                if use_max:
                    best = x[c, i, j]
                    for ty in range(window):
                        for tx in range(window):
                            v = x[c, i + ty * dilation, j + tx * dilation]
                            if v > best:
                                best = v
                    out[c, i, j] = best
                else:
                    s = 0.0
                    for ty in range(window):
                        for tx in range(window):
                            s += x[c, i + ty * dilation, j + tx * dilation]
                    out[c, i, j] = s * inv
    return out


@nb.njit(parallel=True, **_JIT)
def gather_windows(feat, ys, xs, side, dilation):
    """Rows of flattened (C, side, side) windows sampled with ``dilation``."""
    C = feat.shape[0]
    n = ys.shape[0]
    out = np.empty((n, C * side * side), dtype=feat.dtype)
    for m in nb.prange(n):
        y = ys[m]
        x = xs[m]
        col = 0
        for c in range(C):
            for i in range(side):
                for j in range(side):
                    out[m, col] = feat[c, y + i * dilation, x + j * dilation]
                    col += 1
    return out
