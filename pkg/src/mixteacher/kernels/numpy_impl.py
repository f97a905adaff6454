"""Pure-numpy implementations of the hot kernels.

These are the reference/fallback versions; `mixteacher.kernels` picks
between this module and the numba-compiled twin at import time.
All functions accept and return plain ndarrays and are deterministic.
"""

import numpy as np


def im2col(x: np.ndarray, ksize: int, stride: int, pad: int) -> np.ndarray:
    """Extract conv patches from (B,C,H,W) into (B*Ho*Wo, C*k*k) columns."""
    b, c, h, w = x.shape
    ho = (h + 2 * pad - ksize) // stride + 1
    wo = (w + 2 * pad - ksize) // stride + 1
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((b, c, ksize, ksize, ho, wo), dtype=x.dtype)
    for ki in range(ksize):
        for kj in range(ksize):
            cols[:, :, ki, kj] = x[:, :, ki:ki + stride * ho:stride,
                                   kj:kj + stride * wo:stride]
    return np.ascontiguousarray(cols.transpose(0, 4, 5, 1, 2, 3)).reshape(
        b * ho * wo, c * ksize * ksize)


def col2im(cols: np.ndarray, x_shape: tuple, ksize: int, stride: int,
           pad: int) -> np.ndarray:
    """Scatter-add (B*Ho*Wo, C*k*k) columns back to the (B,C,H,W) input grad."""
    b, c, h, w = x_shape
    ho = (h + 2 * pad - ksize) // stride + 1
    wo = (w + 2 * pad - ksize) // stride + 1
    cols = cols.reshape(b, ho, wo, c, ksize, ksize).transpose(0, 3, 4, 5, 1, 2)
    xp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for ki in range(ksize):
        for kj in range(ksize):
            xp[:, :, ki:ki + stride * ho:stride,
               kj:kj + stride * wo:stride] += cols[:, :, ki, kj]
    if pad > 0:
        return xp[:, :, pad:pad + h, pad:pad + w]
    return xp


def bilinear_resize(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (B,C,H,W) with bilinear sampling at half-pixel-aligned centers."""
    b, c, h, w = x.shape
    sy = h / out_h
    sx = w / out_w
    yc = (np.arange(out_h, dtype=x.dtype) + x.dtype.type(0.5)) * x.dtype.type(sy) - x.dtype.type(0.5)
    xc = (np.arange(out_w, dtype=x.dtype) + x.dtype.type(0.5)) * x.dtype.type(sx) - x.dtype.type(0.5)
    y0 = np.floor(yc)
    x0 = np.floor(xc)
    wy = (yc - y0)[:, None]
    wx = (xc - x0)[None, :]
    y0i = np.clip(y0.astype(np.int64), 0, h - 1)
    y1i = np.clip(y0i + 1, 0, h - 1)
    x0i = np.clip(x0.astype(np.int64), 0, w - 1)
    x1i = np.clip(x0i + 1, 0, w - 1)
    p00 = x[:, :, y0i[:, None], x0i[None, :]]
    p01 = x[:, :, y0i[:, None], x1i[None, :]]
    p10 = x[:, :, y1i[:, None], x0i[None, :]]
    p11 = x[:, :, y1i[:, None], x1i[None, :]]
    top = p00 * (1 - wx) + p01 * wx
    bot = p10 * (1 - wx) + p11 * wx
    return (top * (1 - wy) + bot * wy).astype(x.dtype, copy=False)


def _roi_sample_grid(rois: np.ndarray, out_size: int):
    """Per-bin sample-point centers for each roi; coords in feature units."""
    n = rois.shape[0]
    x1 = rois[:, 1]
    y1 = rois[:, 2]
    bw = (rois[:, 3] - x1) / out_size
    bh = (rois[:, 4] - y1) / out_size
    steps = np.arange(out_size, dtype=rois.dtype) + rois.dtype.type(0.5)
    xs = x1[:, None] + bw[:, None] * steps[None, :]
    ys = y1[:, None] + bh[:, None] * steps[None, :]
    return xs.reshape(n, 1, out_size), ys.reshape(n, out_size, 1)


def roi_align(feat: np.ndarray, rois: np.ndarray, out_size: int) -> np.ndarray:
    """Pool (N,C,out,out) region features with one bilinear sample per bin.

    rois: (N,5) rows of (batch_index, x1, y1, x2, y2) in feature-map coords.
    """
    b, c, h, w = feat.shape
    n = rois.shape[0]
    out = np.zeros((n, c, out_size, out_size), dtype=feat.dtype)
    if n == 0:
        return out
    xs, ys = _roi_sample_grid(rois.astype(feat.dtype, copy=False), out_size)
    xs = np.broadcast_to(xs, (n, out_size, out_size))
    ys = np.broadcast_to(ys, (n, out_size, out_size))
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    wx = xs - x0
    wy = ys - y0
    x0i = np.clip(x0.astype(np.int64), 0, w - 1)
    x1i = np.clip(x0i + 1, 0, w - 1)
    y0i = np.clip(y0.astype(np.int64), 0, h - 1)
    y1i = np.clip(y0i + 1, 0, h - 1)
    bi = rois[:, 0].astype(np.int64)[:, None, None]
    p00 = feat[bi, :, y0i, x0i]
    p01 = feat[bi, :, y0i, x1i]
    p10 = feat[bi, :, y1i, x0i]
    p11 = feat[bi, :, y1i, x1i]
    wx = wx[..., None]
    wy = wy[..., None]
    val = (p00 * (1 - wx) * (1 - wy) + p01 * wx * (1 - wy)
           + p10 * (1 - wx) * wy + p11 * wx * wy)
    return np.ascontiguousarray(val.transpose(0, 3, 1, 2))


def roi_align_grad(grad_out: np.ndarray, feat_shape: tuple,
                   rois: np.ndarray) -> np.ndarray:
    """Backward of roi_align w.r.t. the feature map."""
    b, c, h, w = feat_shape
    n, _, out_size, _ = grad_out.shape
    dfeat = np.zeros(feat_shape, dtype=grad_out.dtype)
    if n == 0:
        return dfeat
    xs, ys = _roi_sample_grid(rois.astype(grad_out.dtype, copy=False), out_size)
    xs = np.broadcast_to(xs, (n, out_size, out_size))
    ys = np.broadcast_to(ys, (n, out_size, out_size))
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    wx = (xs - x0)[..., None]
    wy = (ys - y0)[..., None]
    x0i = np.clip(x0.astype(np.int64), 0, w - 1)
    x1i = np.clip(x0i + 1, 0, w - 1)
    y0i = np.clip(y0.astype(np.int64), 0, h - 1)
    y1i = np.clip(y0i + 1, 0, h - 1)
    bi = np.broadcast_to(rois[:, 0].astype(np.int64)[:, None, None],
                         (n, out_size, out_size))
    g = grad_out.transpose(0, 2, 3, 1)
    np.add.at(dfeat, (bi, slice(None), y0i, x0i), g * (1 - wx) * (1 - wy))
    np.add.at(dfeat, (bi, slice(None), y0i, x1i), g * wx * (1 - wy))
    np.add.at(dfeat, (bi, slice(None), y1i, x0i), g * (1 - wx) * wy)
    np.add.at(dfeat, (bi, slice(None), y1i, x1i), g * wx * wy)
    return dfeat


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU matrix between (N,4) and (M,4) corner-form boxes."""
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0, None)
    inter = wh[:, :, 0] * wh[:, :, 1]
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union


def nms_keep(boxes: np.ndarray, scores: np.ndarray,
             iou_thr: float) -> np.ndarray:
    """Greedy NMS; returns kept indices sorted by descending score.

    Ties are broken by lower input index (stable argsort on -score).
    """
    n = boxes.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(-scores, kind="stable")
    x1, y1, x2, y2 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    areas = (x2 - x1) * (y2 - y1)
    keep = []
    while order.size > 0:
        i = order[0]
        keep.append(i)
        if order.size == 1:
            break
        rest = order[1:]
        xx1 = np.maximum(x1[i], x1[rest])
        yy1 = np.maximum(y1[i], y1[rest])
        xx2 = np.minimum(x2[i], x2[rest])
        yy2 = np.minimum(y2[i], y2[rest])
        w = np.clip(xx2 - xx1, 0, None)
        h = np.clip(yy2 - yy1, 0, None)
        inter = w * h
        iou = inter / (areas[i] + areas[rest] - inter)
        order = rest[iou <= iou_thr]
    return np.asarray(keep, dtype=np.int64)
