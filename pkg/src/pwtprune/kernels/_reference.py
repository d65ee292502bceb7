"""Pure numpy convolution kernels, the fallback for the compiled extension.

Same contract as ``_conv``: inactive filters and input channels are sliced
away before the matrix products, so no work is spent on them.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x, k, stride):
    # [B, C, N, N] -> rows [(b, y, x), (c, ki, kj)]
    B, C = x.shape[:2]
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    M = win.shape[2]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(B * M * M, C * k * k), M


def conv_forward(x, w, bias, stride, out_idx, in_idx):
    B, _, N, _ = x.shape
    O, _, k, _ = w.shape
    M = (N - k) // stride + 1
    out = np.zeros((B, O, M, M), dtype=x.dtype)
    if len(out_idx) == 0:
        return out
    if len(in_idx) == 0:
        out[:, out_idx] = bias[out_idx][:, None, None]
        return out
    cols, _ = _windows(x[:, in_idx], k, stride)
    wsel = w[np.ix_(out_idx, in_idx)].reshape(len(out_idx), -1)
    res = cols @ wsel.T
    out[:, out_idx] = res.reshape(B, M, M, -1).transpose(0, 3, 1, 2) + bias[out_idx][:, None, None]
    return out


def conv_backward_weight(x, grad_out, stride, k, out_idx, in_idx):
    B, I = x.shape[:2]
    O, M = grad_out.shape[1], grad_out.shape[2]
    gw = np.zeros((O, I, k, k), dtype=x.dtype)
    gb = np.zeros(O, dtype=x.dtype)
    if len(out_idx) == 0:
        return gw, gb
    g = grad_out[:, out_idx].transpose(0, 2, 3, 1).reshape(B * M * M, len(out_idx))
    gb[out_idx] = g.sum(axis=0)
    if len(in_idx) == 0:
        return gw, gb
    cols, _ = _windows(x[:, in_idx], k, stride)
    dw = g.T @ cols
    gw[np.ix_(out_idx, in_idx)] = dw.reshape(len(out_idx), len(in_idx), k, k)
    return gw, gb


def conv_backward_input(grad_out, w, stride, N, out_idx, in_idx):
    B, _, M, _ = grad_out.shape
    I, k = w.shape[1], w.shape[2]
    gi = np.zeros((B, I, N, N), dtype=grad_out.dtype)
    if len(out_idx) == 0 or len(in_idx) == 0:
        return gi
    D = (M - 1) * stride + 1
    padded = np.zeros((B, len(out_idx), N + k - 1, N + k - 1), dtype=grad_out.dtype)
    padded[:, :, k - 1:k - 1 + D:stride, k - 1:k - 1 + D:stride] = grad_out[:, out_idx]
    cols, _ = _windows(padded, k, 1)
    wflip = w[np.ix_(out_idx, in_idx)][:, :, ::-1, ::-1].transpose(0, 2, 3, 1)
    res = cols @ wflip.reshape(-1, len(in_idx))
    gi[:, in_idx] = res.reshape(B, N, N, -1).transpose(0, 3, 1, 2)
    return gi
