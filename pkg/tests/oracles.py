"""Slow reference implementations used as test oracles.

Everything here is written with Python loops and the ``math`` module so it
shares no code path with the vectorized kernels under test.
"""
from __future__ import annotations

import math

import numpy as np


def matmul(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    r, k = a.shape
    k2, c = b.shape
    assert k == k2
    out = np.zeros((r, c))
    for i in range(r):
        for j in range(c):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def softmax(row):
    m = max(row)
    e = [math.exp(v - m) for v in row]
    s = sum(e)
    return [v / s for v in e]


def layer_norm_row(row, gamma, beta, eps=1e-6):
    n = len(row)
    mu = sum(row) / n
    var = sum((v - mu) ** 2 for v in row) / n
    inv = 1.0 / math.sqrt(var + eps)
    return [g * (v - mu) * inv + b for v, g, b in zip(row, gamma, beta)]


def layer_norm(x, gamma, beta, eps=1e-6):
    x = np.asarray(x, dtype=np.float64)
    return np.array([layer_norm_row(list(r), list(gamma), list(beta), eps) for r in x])


def gelu(v):
    return 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0)))


def _source(i, n_in, n_out):
    """Two source indices and the weight of the second, half-pixel centers."""
    x = (i + 0.5) * n_in / n_out - 0.5
    x = min(max(x, 0.0), n_in - 1)
    lo = int(math.floor(x))
    hi = min(lo + 1, n_in - 1)
    return lo, hi, x - lo


def bilinear(img, out_h, out_w):
    """Resize ``[H, W, C]`` pixel by pixel."""
    img = np.asarray(img, dtype=np.float64)
    h, w, c = img.shape
    out = np.zeros((out_h, out_w, c))
    for i in range(out_h):
        y0, y1, fy = _source(i, h, out_h)
        for j in range(out_w):
            x0, x1, fx = _source(j, w, out_w)
            for ch in range(c):
                top = img[y0, x0, ch] * (1 - fx) + img[y0, x1, ch] * fx
                bot = img[y1, x0, ch] * (1 - fx) + img[y1, x1, ch] * fx
                out[i, j, ch] = top * (1 - fy) + bot * fy
    return out


def trilinear(vol, out_t, out_h, out_w):
    """Resize ``[T, H, W, C]`` voxel by voxel."""
    vol = np.asarray(vol, dtype=np.float64)
    t, h, w, c = vol.shape
    out = np.zeros((out_t, out_h, out_w, c))
    for a in range(out_t):
        t0, t1, ft = _source(a, t, out_t)
        for i in range(out_h):
            y0, y1, fy = _source(i, h, out_h)
            for j in range(out_w):
                x0, x1, fx = _source(j, w, out_w)
                for ch in range(c):
                    acc = 0.0
                    for tt, wt in ((t0, 1 - ft), (t1, ft)):
                        for yy, wy in ((y0, 1 - fy), (y1, fy)):
                            for xx, wx in ((x0, 1 - fx), (x1, fx)):
                                acc += wt * wy * wx * vol[tt, yy, xx, ch]
                    out[a, i, j, ch] = acc
    return out


def attention(q, k, v, heads, scale):
    """Multi-head attention with explicit loops.

    Returns ``(out [M, D], weights [heads][M][N])``.
    """
    q, k, v = (np.asarray(a, dtype=np.float64) for a in (q, k, v))
    m, d = q.shape
    n = k.shape[0]
    dh = d // heads
    out = np.zeros((m, d))
    weights = []
    for h in range(heads):
        cols = range(h * dh, (h + 1) * dh)
        wh = []
        for i in range(m):
            logits = []
            for j in range(n):
                s = 0.0
                for c in cols:
                    s += q[i, c] * k[j, c]
                logits.append(s * scale if scale is not None else s)
            row = softmax(logits)
            wh.append(row)
            for c in cols:
                acc = 0.0
                for j in range(n):
                    acc += row[j] * v[j, c]
                out[i, c] = acc
        weights.append(wh)
    return out, weights


def transposed_values(weights, v, heads):
    """``A^T V`` per head with loops: ``[heads][M][N]`` and ``[M, D]`` to ``[N, D]``."""
    v = np.asarray(v, dtype=np.float64)
    m, d = v.shape
    n = len(weights[0][0])
    dh = d // heads
    out = np.zeros((n, d))
    for h in range(heads):
        for j in range(n):
            for c in range(h * dh, (h + 1) * dh):
                acc = 0.0
                for i in range(m):
                    acc += weights[h][i][j] * v[i, c]
                out[j, c] = acc
    return out


def _ln(x, p):
    return layer_norm(x, p.gamma.data, p.beta.data)


def mlp(x, p):
    h = matmul(x, p.w1.data) + p.b1.data
    h = np.vectorize(gelu)(h)
    return matmul(h, p.w2.data) + p.b2.data


def gather(z_p, z_l, g, heads, scale):
    q = _ln(matmul(_ln(z_p, g.ln_pre_p), g.w_q.data), g.ln_q)
    xl = _ln(z_l, g.ln_pre_l)
    k = _ln(matmul(xl, g.w_k.data), g.ln_k)
    v = matmul(xl, g.w_v.data)
    out, weights = attention(q, k, v, heads, scale)
    if g.w_o is not None:
        out = matmul(out, g.w_o.data)
    return z_p + out, weights


def vit_block(z_p, vp, heads, scale):
    x = _ln(z_p, vp.ln_attn)
    a = vp.attn
    out, _ = attention(matmul(x, a.w_q.data), matmul(x, a.w_k.data), matmul(x, a.w_v.data), heads, scale)
    z_p = z_p + matmul(out, a.w_o.data)
    return z_p + mlp(_ln(z_p, vp.ln_mlp), vp.mlp)


def infuse(z_p, weights, ip, heads):
    v = _ln(matmul(_ln(z_p, ip.ln_pre_p), ip.w_v.data), ip.ln_v)
    out = transposed_values(weights, v, heads)
    if ip.w_o is not None:
        out = matmul(out, ip.w_o.data)
    return out


def lookup_block(z_p, z_l, bp, scale, no_infuse=False):
    """One block on unbatched ``[M, D]`` / ``[N, D]`` token arrays."""
    z_p, weights = gather(z_p, z_l, bp.gather, bp.heads, scale)
    z_p = vit_block(z_p, bp.vit, bp.heads, scale)
    if not no_infuse:
        z_l = z_l + infuse(z_p, weights, bp.infuse, bp.heads)
    z_l = z_l + mlp(_ln(z_l, bp.ln_lookup_mlp), bp.lookup_mlp)
    return z_p, z_l, weights


def vit_block_macs(n, d, p=4):
    """Count MACs of one transformer layer by enumerating its matmuls."""
    total = 0
    total += 4 * n * d * d  # q, k, v, out projections
    total += n * n * d  # logits
    total += n * n * d  # weights @ values
    total += n * d * (p * d) * 2  # two mlp layers
    return total


def lookup_block_macs(n, m, d, p=4, q=2):
    """Enumerate every matmul of one block with output projections on."""
    total = 0
    total += m * d * d + 2 * n * d * d  # gather q (compressed), k and v (lookup)
    total += m * n * d * 2  # gather logits and weights @ values
    total += m * d * d  # gather output projection
    total += vit_block_macs(m, d, p)
    total += m * d * d  # infuse values from compressed tokens
    total += m * n * d  # A^T V
    total += n * d * d  # infuse output projection
    total += n * d * (d // q) * 2  # lookup mlp
    return total
