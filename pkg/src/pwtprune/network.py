"""Sequential CNN assembled from layer specs: conv (+BN+ReLU), 2x2 max-pool, linear."""
import numpy as np

from .layers import (
    LayerState,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    conv_output_side,
    linear_backward,
    linear_forward,
    maxpool2x2_backward,
    maxpool2x2_forward,
    relu_backward,
    relu_forward,
    softmax_cross_entropy,
)
from .optim import adam_step
from .tensor import ShapeError

VGG_MICRO = (
    {"type": "conv", "out": 8, "k": 3, "stride": 1},
    {"type": "conv", "out": 16, "k": 3, "stride": 1},
    {"type": "pool"},
    {"type": "conv", "out": 16, "k": 3, "stride": 1},
    {"type": "conv", "out": 32, "k": 3, "stride": 1},
    {"type": "pool"},
    {"type": "linear"},
)


class ConvBlock:
    kind = "conv"

    def __init__(self, state, stride, in_side):
        self.state = state
        self.stride = stride
        self.in_side = in_side
        self.out_side = conv_output_side(in_side, state.kernel_size, stride)
        self._cache = None

    def forward(self, x, train, in_active):
        s = self.state
        z = conv2d_forward(x, s, self.stride, in_active)
        y, bn_cache = batchnorm_forward(z, s.bn_gamma, s.bn_beta, s.bn_running_mean,
                                        s.bn_running_var, train=train)
        a = relu_forward(y)
        if train:
            self._cache = (x, y, bn_cache, in_active)
        return a

    def backward(self, grad, need_input_grad):
        x, y, bn_cache, in_active = self._cache
        s = self.state
        grad = relu_backward(grad, y)
        grad, g_gamma, g_beta = batchnorm_backward(grad, bn_cache, frozen=s.filter_mask)
        grad_in, g_w, g_b = conv2d_backward(x, s, grad, self.stride, in_active, need_input_grad)
        self._cache = None
        return grad_in, {"weights": g_w, "bias": g_b, "bn_gamma": g_gamma, "bn_beta": g_beta}

    def params(self):
        return self.state.params()

    def moments(self):
        return self.state.adam_m, self.state.adam_v


class PoolBlock:
    kind = "pool"

    def __init__(self, in_side):
        self.in_side = in_side
        self.out_side = in_side // 2
        if self.out_side == 0:
            raise ShapeError(f"cannot pool a {in_side}x{in_side} map")
        self._cache = None

    def forward(self, x, train, in_active):
        y, arg = maxpool2x2_forward(x)
        if train:
            self._cache = (arg, x.shape)
        return y

    def backward(self, grad, need_input_grad):
        arg, shape = self._cache
        self._cache = None
        return maxpool2x2_backward(grad, arg, shape), {}

    def params(self):
        return {}

    def moments(self):
        return {}, {}


class LinearBlock:
    kind = "linear"

    def __init__(self, in_features, out_features, relu, rng, dtype):
        std = np.sqrt(2.0 / in_features)
        self.weights = rng.normal(0.0, std, size=(out_features, in_features)).astype(dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self.relu = relu
        self.adam_m = {"weights": np.zeros_like(self.weights), "bias": np.zeros_like(self.bias)}
        self.adam_v = {"weights": np.zeros_like(self.weights), "bias": np.zeros_like(self.bias)}
        self._cache = None

    def forward(self, x, train, in_active):
        x2 = x.reshape(x.shape[0], -1)
        z = linear_forward(x2, self.weights, self.bias)
        out = relu_forward(z) if self.relu else z
        if train:
            self._cache = (x.shape, x2, z)
        return out

    def backward(self, grad, need_input_grad):
        shape, x2, z = self._cache
        self._cache = None
        if self.relu:
            grad = relu_backward(grad, z)
        gx, gw, gb = linear_backward(grad, x2, self.weights)
        return gx.reshape(shape), {"weights": gw, "bias": gb}

    def params(self):
        return {"weights": self.weights, "bias": self.bias}

    def moments(self):
        return self.adam_m, self.adam_v


class Network:
    """A trainable sequential CNN whose conv layers carry persistent filter masks."""

    def __init__(self, blocks, input_shape, num_classes, dtype):
        self.blocks = blocks
        self.input_shape = tuple(input_shape)
        self.num_classes = num_classes
        self.dtype = np.dtype(dtype)
        self.step_count = 0
        self.conv_activations = []

    @classmethod
    def build(cls, specs, input_shape, num_classes, rng, dtype=np.float32):
        channels, side, side2 = input_shape
        if side != side2:
            raise ShapeError(f"only square inputs are supported, got {input_shape}")
        blocks = []
        flat = None
        specs = list(specs)
        for idx, spec in enumerate(specs):
            kind = spec["type"]
            if kind == "conv":
                if flat is not None:
                    raise ShapeError("conv layer after a linear layer")
                state = LayerState.create(channels, spec["out"], spec.get("k", 3), rng, dtype)
                block = ConvBlock(state, spec.get("stride", 1), side)
                channels, side = spec["out"], block.out_side
            elif kind == "pool":
                if flat is not None:
                    raise ShapeError("pool layer after a linear layer")
                block = PoolBlock(side)
                side = block.out_side
            elif kind == "linear":
                is_last = idx == len(specs) - 1
                out = spec.get("out")
                if out is None:
                    if not is_last:
                        raise ShapeError(f"layer {idx}: hidden linear layer needs 'out'")
                    out = num_classes
                if is_last and out != num_classes:
                    raise ShapeError(f"final linear layer has {out} outputs, dataset has {num_classes} classes")
                in_features = flat if flat is not None else channels * side * side
                block = LinearBlock(in_features, out, relu=not is_last, rng=rng, dtype=dtype)
                flat = out
            else:
                raise ShapeError(f"layer {idx}: unknown layer type {kind!r}")
            blocks.append(block)
        if not blocks or blocks[-1].kind != "linear":
            raise ShapeError("architecture must end with a linear classifier")
        return cls(blocks, input_shape, num_classes, dtype)

    @property
    def conv_blocks(self):
        return [b for b in self.blocks if b.kind == "conv"]

    @property
    def conv_layers(self):
        return [b.state for b in self.conv_blocks]

    def total_filters(self):
        return sum(s.out_channels for s in self.conv_layers)

    def forward(self, x, train=False):
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"input shape {x.shape[1:]} != network input {self.input_shape}")
        x = np.ascontiguousarray(x, dtype=self.dtype)
        in_active = None
        acts = []
        for block in self.blocks:
            x = block.forward(x, train, in_active)
            if block.kind == "conv":
                in_active = ~block.state.filter_mask
                acts.append(x)
        if train:
            self.conv_activations = acts
        return x

    def backward(self, grad_logits):
        grads = [None] * len(self.blocks)
        grad = grad_logits
        for i in range(len(self.blocks) - 1, -1, -1):
            grad, grads[i] = self.blocks[i].backward(grad, need_input_grad=i > 0)
        return grads

    def apply_gradients(self, grads, hyper):
        self.step_count += 1
        for block, g in zip(self.blocks, grads):
            m, v = block.moments()
            for name, p in block.params().items():
                adam_step(p, g[name], m[name], v[name], hyper, self.step_count)

    def train_batch(self, x, labels, hyper):
        """Forward, backward and Adam update on one mini-batch: returns (loss, n_correct)."""
        logits = self.forward(x, train=True)
        loss, grad = softmax_cross_entropy(logits, labels)
        grads = self.backward(grad)
        self.apply_gradients(grads, hyper)
        return loss, int((logits.argmax(axis=1) == labels).sum())

    def predict(self, x):
        return self.forward(x, train=False)

    def reset_counters(self):
        for s in self.conv_layers:
            s.counter.reset()

    def executed_macs(self):
        return sum(s.counter.total for s in self.conv_layers)

    def parameter_count(self):
        return sum(p.size for b in self.blocks for p in b.params().values())

    def unmasked_parameter_count(self):
        """Parameters excluding those owned by pruned filters (weights, bias, gamma, beta)."""
        total = self.parameter_count()
        for s in self.conv_layers:
            per_filter = s.in_channels * s.kernel_size ** 2 + 3
            total -= int(s.filter_mask.sum()) * per_filter
        return total

    def conv_geometry(self):
        """(N, M, k, I, O, S) for every conv layer, in order."""
        return [
            (b.in_side, b.out_side, b.state.kernel_size, b.state.in_channels,
             b.state.out_channels, b.stride)
            for b in self.conv_blocks
        ]

    def named_arrays(self):
        """Ordered (name, array) pairs covering every parameter, statistic, moment and mask."""
        out = []
        for i, block in enumerate(self.blocks):
            prefix = f"{i}.{block.kind}"
            if block.kind == "conv":
                s = block.state
                for name in ("weights", "bias", "bn_gamma", "bn_beta", "bn_running_mean", "bn_running_var"):
                    out.append((f"{prefix}.{name}", getattr(s, name)))
                for name in ("weights", "bias", "bn_gamma", "bn_beta"):
                    out.append((f"{prefix}.adam_m.{name}", s.adam_m[name]))
                    out.append((f"{prefix}.adam_v.{name}", s.adam_v[name]))
                out.append((f"{prefix}.filter_mask", s.filter_mask))
            elif block.kind == "linear":
                out.append((f"{prefix}.weights", block.weights))
                out.append((f"{prefix}.bias", block.bias))
                for name in ("weights", "bias"):
                    out.append((f"{prefix}.adam_m.{name}", block.adam_m[name]))
                    out.append((f"{prefix}.adam_v.{name}", block.adam_v[name]))
        return out
