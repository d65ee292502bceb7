"""Forward/backward kernels for the layers of a small VGG-style CNN.

Convolutions are valid (unpadded) and skip masked filters entirely; the
executed multiply-accumulates are tallied on the layer's ``MacCounter``.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .tensor import ShapeError, check_finite

BN_MOMENTUM = 0.1
BN_EPS = 1e-5

CONV_PARAMS = ("weights", "bias", "bn_gamma", "bn_beta")


@dataclass
class MacCounter:
    forward: int = 0
    error: int = 0
    dw: int = 0

    @property
    def total(self):
        return self.forward + self.error + self.dw

    def reset(self):
        self.forward = self.error = self.dw = 0


@dataclass
class LayerState:
    """Parameters, batch-norm statistics, Adam moments and filter mask of one conv layer.

    ``filter_mask[o]`` is True once filter ``o`` has been pruned; from then on
    its weights, bias, gamma and beta are zero and are never updated again.
    """

    weights: np.ndarray
    bias: np.ndarray
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_running_mean: np.ndarray
    bn_running_var: np.ndarray
    filter_mask: np.ndarray
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    counter: MacCounter = field(default_factory=MacCounter)

    @classmethod
    def create(cls, in_channels, out_channels, k, rng, dtype=np.float64):
        fan_in = in_channels * k * k
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_channels, in_channels, k, k))
        state = cls(
            weights=w.astype(dtype),
            bias=np.zeros(out_channels, dtype=dtype),
            bn_gamma=np.ones(out_channels, dtype=dtype),
            bn_beta=np.zeros(out_channels, dtype=dtype),
            bn_running_mean=np.zeros(out_channels, dtype=dtype),
            bn_running_var=np.ones(out_channels, dtype=dtype),
            filter_mask=np.zeros(out_channels, dtype=bool),
        )
        for name in CONV_PARAMS:
            p = getattr(state, name)
            state.adam_m[name] = np.zeros_like(p)
            state.adam_v[name] = np.zeros_like(p)
        return state

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def kernel_size(self):
        return self.weights.shape[2]

    def params(self):
        return {name: getattr(self, name) for name in CONV_PARAMS}

    def active_filters(self):
        return np.flatnonzero(~self.filter_mask).astype(np.intp)


def _active_inputs(in_active, channels):
    if in_active is None:
        return np.arange(channels, dtype=np.intp)
    in_active = np.asarray(in_active, dtype=bool)
    if in_active.shape != (channels,):
        raise ShapeError(f"input-activity vector has shape {in_active.shape}, expected ({channels},)")
    return np.flatnonzero(in_active).astype(np.intp)


def conv_output_side(n, k, stride):
    if n < k:
        raise ShapeError(f"input side {n} smaller than kernel {k}")
    if (n - k) % stride:
        raise ShapeError(f"(N - k) / stride is not integral for N={n}, k={k}, stride={stride}")
    return (n - k) // stride + 1


def _check_conv_input(x, layer, stride):
    if stride < 1:
        raise ShapeError(f"stride must be positive, got {stride}")
    if x.ndim != 4 or x.shape[2] != x.shape[3]:
        raise ShapeError(f"conv input must be [B, I, N, N], got {x.shape}")
    if x.shape[1] != layer.in_channels:
        raise ShapeError(f"conv input has {x.shape[1]} channels, layer expects {layer.in_channels}")
    return conv_output_side(x.shape[2], layer.kernel_size, stride)


def conv2d_forward(x, layer, stride=1, in_active=None):
    """Valid convolution; masked output channels are identically zero.

    ``in_active`` marks input channels that can be nonzero (None means all).
    Inactive channels are skipped, which is exact when they hold zeros.
    """
    M = _check_conv_input(x, layer, stride)
    out_idx = layer.active_filters()
    in_idx = _active_inputs(in_active, layer.in_channels)
    x = np.ascontiguousarray(x, dtype=layer.weights.dtype)
    out = kernels.conv_forward(x, layer.weights, layer.bias, stride, out_idx, in_idx)
    k = layer.kernel_size
    layer.counter.forward += x.shape[0] * M * M * len(out_idx) * len(in_idx) * k * k
    return check_finite(out, "conv2d_forward")


def conv2d_backward(x, layer, grad_out, stride=1, in_active=None, need_input_grad=True):
    """Gradients of a valid convolution, skipping masked filters.

    Returns ``(grad_input, grad_weights, grad_bias)``; ``grad_input`` is None
    when ``need_input_grad`` is False. Rows of masked filters are never
    computed and stay zero.
    """
    M = _check_conv_input(x, layer, stride)
    B, N = x.shape[0], x.shape[2]
    if grad_out.shape != (B, layer.out_channels, M, M):
        raise ShapeError(f"grad_out shape {grad_out.shape} != {(B, layer.out_channels, M, M)}")
    out_idx = layer.active_filters()
    in_idx = _active_inputs(in_active, layer.in_channels)
    dtype = layer.weights.dtype
    x = np.ascontiguousarray(x, dtype=dtype)
    grad_out = np.ascontiguousarray(grad_out, dtype=dtype)
    k = layer.kernel_size
    Oa, Ia = len(out_idx), len(in_idx)

    grad_w, grad_b = kernels.conv_backward_weight(x, grad_out, stride, k, out_idx, in_idx)
    layer.counter.dw += B * M * M * Oa * Ia * k * k
    check_finite(grad_w, "conv2d_backward grad_weights")

    grad_in = None
    if need_input_grad:
        grad_in = kernels.conv_backward_input(grad_out, layer.weights, stride, N, out_idx, in_idx)
        layer.counter.error += B * N * N * Oa * Ia * k * k
        check_finite(grad_in, "conv2d_backward grad_input")
    return grad_in, grad_w, grad_b


def _bn_axes(x):
    if x.ndim == 4:
        return (0, 2, 3), (1, -1, 1, 1)
    if x.ndim == 2:
        return (0,), (1, -1)
    raise ShapeError(f"batchnorm expects [B, C] or [B, C, H, W], got {x.shape}")


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train=True,
                      momentum=BN_MOMENTUM, eps=BN_EPS):
    """Per-channel batch normalization.

    In training mode batch statistics are used and the running statistics are
    updated in place (unbiased variance, PyTorch convention). Returns
    ``(y, cache)``; the cache is None in eval mode.
    """
    if x.shape[0] == 0:
        raise ShapeError("empty batch")
    axes, bshape = _bn_axes(x)
    if train:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        count = x.size // x.shape[1]
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        unbiased = var * count / max(count - 1, 1)
        running_var *= 1 - momentum
        running_var += momentum * unbiased
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
    y = xhat * gamma.reshape(bshape) + beta.reshape(bshape)
    check_finite(y, "batchnorm_forward")
    cache = (xhat, inv_std, gamma) if train else None
    return y.astype(x.dtype, copy=False), cache


def batchnorm_backward(grad_y, cache, frozen=None):
    """Backward of training-mode batchnorm: ``(grad_x, grad_gamma, grad_beta)``.

    Channels flagged in ``frozen`` (pruned filters) get zero parameter gradients.
    """
    xhat, inv_std, gamma = cache
    axes, bshape = _bn_axes(grad_y)
    count = grad_y.size // grad_y.shape[1]
    grad_gamma = (grad_y * xhat).sum(axis=axes)
    grad_beta = grad_y.sum(axis=axes)
    dxhat = grad_y * gamma.reshape(bshape)
    grad_x = (inv_std.reshape(bshape) / count) * (
        count * dxhat
        - dxhat.sum(axis=axes).reshape(bshape)
        - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape)
    )
    if frozen is not None:
        grad_gamma[frozen] = 0
        grad_beta[frozen] = 0
    check_finite(grad_x, "batchnorm_backward")
    return grad_x.astype(grad_y.dtype, copy=False), grad_gamma, grad_beta


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(grad_y, x):
    return np.where(x > 0, grad_y, 0).astype(grad_y.dtype, copy=False)


def maxpool2x2_forward(x):
    """2x2/stride-2 max pooling; an odd trailing row/column is dropped.

    Returns ``(y, argmax)`` where ``argmax`` picks the first maximum of each window.
    """
    B, C, H, W = x.shape
    Ho, Wo = H // 2, W // 2
    if Ho == 0 or Wo == 0:
        raise ShapeError(f"maxpool input {x.shape} too small")
    win = x[:, :, :2 * Ho, :2 * Wo].reshape(B, C, Ho, 2, Wo, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(B, C, Ho, Wo, 4)
    arg = win.argmax(axis=-1)
    y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return y, arg


def maxpool2x2_backward(grad_y, arg, input_shape):
    B, C, H, W = input_shape
    Ho, Wo = grad_y.shape[2], grad_y.shape[3]
    win = np.zeros((B, C, Ho, Wo, 4), dtype=grad_y.dtype)
    np.put_along_axis(win, arg[..., None], grad_y[..., None], axis=-1)
    grad_x = np.zeros(input_shape, dtype=grad_y.dtype)
    grad_x[:, :, :2 * Ho, :2 * Wo] = (
        win.reshape(B, C, Ho, Wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, 2 * Ho, 2 * Wo)
    )
    return grad_x


def linear_forward(x, weights, bias):
    if x.ndim != 2 or x.shape[1] != weights.shape[1]:
        raise ShapeError(f"linear input {x.shape} incompatible with weights {weights.shape}")
    return check_finite(x @ weights.T + bias, "linear_forward")


def linear_backward(grad_y, x, weights):
    """Returns ``(grad_x, grad_weights, grad_bias)``."""
    return grad_y @ weights, grad_y.T @ x, grad_y.sum(axis=0)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    if logits.shape[0] == 0:
        raise ShapeError("empty batch")
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"label out of range [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    loss = -log_p[np.arange(n), labels].mean()
    grad = np.exp(log_p)
    grad[np.arange(n), labels] -= 1
    grad /= n
    return float(loss), grad.astype(logits.dtype, copy=False)
