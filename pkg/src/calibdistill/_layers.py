"""Forward/backward primitives for the fixed model recipes.

Activations are kept channel-major, (C, N, H, W), internally: im2col copies
then move whole image rows, and a 3x3 convolution is one matrix product
(Cout, 9*Cin) @ (9*Cin, N*H*W).
"""

import numpy as np


_OFFSETS = [(i, j) for i in range(3) for j in range(3)]


def _wmat(w):
    # (Cout, Cin, 3, 3) -> (Cout, 9 * Cin), columns ordered (kh, kw, cin) like the im2col rows
    return w.transpose(0, 2, 3, 1).reshape(w.shape[0], -1)


def conv3x3_forward(x, w, b):
    """Same-padded 3x3 convolution, stride 1.

    x: (Cin, N, H, W); w: (Cout, Cin, 3, 3); b: (Cout,).
    Returns the output (Cout, N, H, W) and the im2col buffer for backward.
    """
    c, n, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((9, c, n, h, wd), dtype=x.dtype)
    for k, (i, j) in enumerate(_OFFSETS):
        cols[k] = xp[:, :, i:i + h, j:j + wd]
    cols = cols.reshape(9 * c, n * h * wd)
    out = _wmat(w) @ cols
    out += b[:, None]
    return out.reshape(w.shape[0], n, h, wd), cols


def conv3x3_backward(dout, cols, w, x_shape, need_dx=True):
    c, n, h, wd = x_shape
    cout = w.shape[0]
    d2 = dout.reshape(cout, -1)
    dw = (d2 @ cols.T).reshape(cout, 3, 3, c).transpose(0, 3, 1, 2)
    db = d2.sum(axis=1)
    if not need_dx:
        return None, dw, db
    dcols = (_wmat(w).T @ d2).reshape(9, c, n, h, wd)
    dxp = np.zeros((c, n, h + 2, wd + 2), dtype=dout.dtype)
    for k, (i, j) in enumerate(_OFFSETS):
        dxp[:, :, i:i + h, j:j + wd] += dcols[k]
    return dxp[:, :, 1:-1, 1:-1], dw, db


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(dout, out):
    return np.where(out > 0, dout, 0)


def maxpool2_forward(x):
    """2x2 max pooling with stride 2 over (C, N, H, W); odd trailing
    rows/columns are dropped.

    Returns the output and two masks recording the winner of the column and
    row comparisons; on ties the first (top/left) input wins, so the gradient
    is routed to exactly one input.
    """
    h2, w2 = x.shape[2] // 2, x.shape[3] // 2
    x = x[:, :, :2 * h2, :2 * w2]
    right = x[..., 1::2] > x[..., ::2]
    cols = np.where(right, x[..., 1::2], x[..., ::2])
    bottom = cols[:, :, 1::2] > cols[:, :, ::2]
    out = np.where(bottom, cols[:, :, 1::2], cols[:, :, ::2])
    return out, (right, bottom)


def maxpool2_backward(dout, masks, x_shape):
    right, bottom = masks
    c, n, h, w = x_shape
    dcols = np.empty(right.shape, dtype=dout.dtype)
    dcols[:, :, ::2] = np.where(bottom, 0, dout)
    dcols[:, :, 1::2] = np.where(bottom, dout, 0)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, :, :right.shape[2], 0:2 * right.shape[3]:2] = np.where(right, 0, dcols)
    dx[:, :, :right.shape[2], 1:2 * right.shape[3]:2] = np.where(right, dcols, 0)
    return dx


def gap_forward(x):
    """(C, N, H, W) -> (N, C)."""
    return x.mean(axis=(2, 3)).T


def gap_backward(dout, x_shape):
    c, n, h, wd = x_shape
    return np.broadcast_to(dout.T[:, :, None, None] / (h * wd), x_shape).copy()


def linear_forward(x, w, b):
    """x: (N, Din); w: (Dout, Din)."""
    return x @ w.T + b


def linear_backward(dout, x, w, need_dx=True):
    dw = dout.T @ x
    db = dout.sum(axis=0)
    dx = dout @ w if need_dx else None
    return dx, dw, db
