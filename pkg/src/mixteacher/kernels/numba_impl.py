"""Numba-compiled twins of the hot kernels.

Loop-level implementations of the same contracts as `numpy_impl`; compiled
lazily per dtype with `cache=True` so repeat runs skip compilation.
`fastmath` stays off to keep results bitwise-reproducible between runs.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def im2col(x, ksize, stride, pad):
    b, c, h, w = x.shape
    ho = (h + 2 * pad - ksize) // stride + 1
    wo = (w + 2 * pad - ksize) // stride + 1
    cols = np.zeros((b * ho * wo, c * ksize * ksize), dtype=x.dtype)
    for bi in range(b):
        for oy in range(ho):
            iy0 = oy * stride - pad
            for ox in range(wo):
                ix0 = ox * stride - pad
                row = (bi * ho + oy) * wo + ox
                for ci in range(c):
                    base = ci * ksize * ksize
                    for ki in range(ksize):
                        iy = iy0 + ki
                        if iy < 0 or iy >= h:
                            continue
                        for kj in range(ksize):
                            ix = ix0 + kj
                            if ix < 0 or ix >= w:
                                continue
                            cols[row, base + ki * ksize + kj] = x[bi, ci, iy, ix]
    return cols


@njit(cache=True, nogil=True)
def col2im(cols, x_shape, ksize, stride, pad):
    b, c, h, w = x_shape
    ho = (h + 2 * pad - ksize) // stride + 1
    wo = (w + 2 * pad - ksize) // stride + 1
    dx = np.zeros((b, c, h, w), dtype=cols.dtype)
    for bi in range(b):
        for oy in range(ho):
            iy0 = oy * stride - pad
            for ox in range(wo):
                ix0 = ox * stride - pad
                row = (bi * ho + oy) * wo + ox
                for ci in range(c):
                    base = ci * ksize * ksize
                    for ki in range(ksize):
                        iy = iy0 + ki
                        if iy < 0 or iy >= h:
                            continue
                        for kj in range(ksize):
                            ix = ix0 + kj
                            if ix < 0 or ix >= w:
                                continue
                            dx[bi, ci, iy, ix] += cols[row, base + ki * ksize + kj]
    return dx


@njit(cache=True, nogil=True)
def bilinear_resize(x, out_h, out_w):
    b, c, h, w = x.shape
    out = np.empty((b, c, out_h, out_w), dtype=x.dtype)
    sy = h / out_h
    sx = w / out_w
    for oy in range(out_h):
        yc = (oy + 0.5) * sy - 0.5
        y0 = int(np.floor(yc))
        wy = yc - y0
        y0i = min(max(y0, 0), h - 1)
        y1i = min(y0i + 1, h - 1)
        for ox in range(out_w):
            xc = (ox + 0.5) * sx - 0.5
            x0 = int(np.floor(xc))
            wx = xc - x0
            x0i = min(max(x0, 0), w - 1)
            x1i = min(x0i + 1, w - 1)
            for bi in range(b):
                for ci in range(c):
                    top = x[bi, ci, y0i, x0i] * (1 - wx) + x[bi, ci, y0i, x1i] * wx
                    bot = x[bi, ci, y1i, x0i] * (1 - wx) + x[bi, ci, y1i, x1i] * wx
                    out[bi, ci, oy, ox] = top * (1 - wy) + bot * wy
    return out


@njit(cache=True, nogil=True)
def roi_align(feat, rois, out_size):
    b, c, h, w = feat.shape
    n = rois.shape[0]
    out = np.zeros((n, c, out_size, out_size), dtype=feat.dtype)
    for ri in range(n):
        bi = int(rois[ri, 0])
        x1 = rois[ri, 1]
        y1 = rois[ri, 2]
        bw = (rois[ri, 3] - x1) / out_size
        bh = (rois[ri, 4] - y1) / out_size
        for oy in range(out_size):
            yc = y1 + bh * (oy + 0.5)
            y0 = int(np.floor(yc))
            wy = yc - y0
            y0i = min(max(y0, 0), h - 1)
            y1i = min(y0i + 1, h - 1)
            for ox in range(out_size):
                xc = x1 + bw * (ox + 0.5)
                x0 = int(np.floor(xc))
                wx = xc - x0
                x0i = min(max(x0, 0), w - 1)
                x1i = min(x0i + 1, w - 1)
                for ci in range(c):
                    top = feat[bi, ci, y0i, x0i] * (1 - wx) + feat[bi, ci, y0i, x1i] * wx
                    bot = feat[bi, ci, y1i, x0i] * (1 - wx) + feat[bi, ci, y1i, x1i] * wx
                    out[ri, ci, oy, ox] = top * (1 - wy) + bot * wy
    return out


@njit(cache=True, nogil=True)
def roi_align_grad(grad_out, feat_shape, rois):
    b, c, h, w = feat_shape
    n = rois.shape[0]
    out_size = grad_out.shape[2]
    dfeat = np.zeros((b, c, h, w), dtype=grad_out.dtype)
    for ri in range(n):
        bi = int(rois[ri, 0])
        x1 = rois[ri, 1]
        y1 = rois[ri, 2]
        bw = (rois[ri, 3] - x1) / out_size
        bh = (rois[ri, 4] - y1) / out_size
        for oy in range(out_size):
            yc = y1 + bh * (oy + 0.5)
            y0 = int(np.floor(yc))
            wy = yc - y0
            y0i = min(max(y0, 0), h - 1)
            y1i = min(y0i + 1, h - 1)
            for ox in range(out_size):
                xc = x1 + bw * (ox + 0.5)
                x0 = int(np.floor(xc))
                wx = xc - x0
                x0i = min(max(x0, 0), w - 1)
                x1i = min(x0i + 1, w - 1)
                for ci in range(c):
                    g = grad_out[ri, ci, oy, ox]
                    dfeat[bi, ci, y0i, x0i] += g * (1 - wx) * (1 - wy)
                    dfeat[bi, ci, y0i, x1i] += g * wx * (1 - wy)
                    dfeat[bi, ci, y1i, x0i] += g * (1 - wx) * wy
                    dfeat[bi, ci, y1i, x1i] += g * wx * wy
    return dfeat


@njit(cache=True, nogil=True)
def pairwise_iou(a, b):
    n = a.shape[0]
    m = b.shape[0]
    out = np.empty((n, m), dtype=a.dtype)
    for i in range(n):
        ax1, ay1, ax2, ay2 = a[i, 0], a[i, 1], a[i, 2], a[i, 3]
        area_a = (ax2 - ax1) * (ay2 - ay1)
        for j in range(m):
            bx1, by1, bx2, by2 = b[j, 0], b[j, 1], b[j, 2], b[j, 3]
            iw = min(ax2, bx2) - max(ax1, bx1)
            ih = min(ay2, by2) - max(ay1, by1)
            if iw <= 0 or ih <= 0:
                out[i, j] = 0.0
            else:
                inter = iw * ih
                union = area_a + (bx2 - bx1) * (by2 - by1) - inter
                out[i, j] = inter / union
    return out


@njit(cache=True, nogil=True)
def nms_keep(boxes, scores, iou_thr):
    n = boxes.shape[0]
    keep = np.empty(n, dtype=np.int64)
    if n == 0:
        return keep[:0]
    order = np.argsort(-scores, kind="mergesort")
    suppressed = np.zeros(n, dtype=np.bool_)
    nkeep = 0
    for oi in range(n):
        i = order[oi]
        if suppressed[i]:
            continue
        keep[nkeep] = i
        nkeep += 1
        ax1, ay1, ax2, ay2 = boxes[i, 0], boxes[i, 1], boxes[i, 2], boxes[i, 3]
        area_i = (ax2 - ax1) * (ay2 - ay1)
        for oj in range(oi + 1, n):
            j = order[oj]
            if suppressed[j]:
                continue
            iw = min(ax2, boxes[j, 2]) - max(ax1, boxes[j, 0])
            ih = min(ay2, boxes[j, 3]) - max(ay1, boxes[j, 1])
            if iw <= 0 or ih <= 0:
                continue
            inter = iw * ih
            area_j = (boxes[j, 2] - boxes[j, 0]) * (boxes[j, 3] - boxes[j, 1])
            if inter / (area_i + area_j - inter) > iou_thr:
                suppressed[j] = True
    return keep[:nkeep]
