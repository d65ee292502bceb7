"""Filter significance scores and mask application.

Three criteria pick the filters to prune: L1 magnitude of the filter
weights, mean post-ReLU activation of the filter's feature map over the
epoch, and a seeded uniform draw.
"""
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .layers import CONV_PARAMS
from .tensor import ShapeError


class Criterion(str, Enum):
    L1 = "L1"
    MEAN_ACT = "MeanAct"
    RANDOM = "Random"


class FilterRef(NamedTuple):
    layer_index: int
    filter_index: int


class PruningError(RuntimeError):
    pass


class MaskError(ValueError):
    pass


def l1_norm_per_filter(layer):
    """Sum of absolute weights of every filter; pruned filters score 0."""
    w = layer.weights
    return np.abs(w).reshape(w.shape[0], -1).sum(axis=1, dtype=np.float64)


@dataclass
class ActivationAccumulator:
    """Per-channel sums of post-ReLU activations over one epoch of training images."""

    sums: list
    images_seen: int = 0

    @classmethod
    def for_network(cls, network):
        return cls([np.zeros(s.out_channels, dtype=np.float64) for s in network.conv_layers])

    def reset(self):
        for s in self.sums:
            s[:] = 0
        self.images_seen = 0


def accumulate_mean_activation(acc, layer_outputs):
    if len(layer_outputs) != len(acc.sums):
        raise ShapeError(f"got outputs for {len(layer_outputs)} layers, accumulator has {len(acc.sums)}")
    batch = None
    for i, (out, total) in enumerate(zip(layer_outputs, acc.sums)):
        if out.ndim != 4 or out.shape[1] != total.shape[0]:
            raise ShapeError(f"layer {i}: activation shape {out.shape} does not match {total.shape[0]} channels")
        if batch is None:
            batch = out.shape[0]
        elif out.shape[0] != batch:
            raise ShapeError("layer outputs disagree on batch size")
        total += out.sum(axis=(0, 2, 3), dtype=np.float64)
    acc.images_seen += batch or 0
    return acc


def mean_activation_scores(acc, network=None):
    """Channel sums divided by the number of images; masked channels score 0."""
    if acc.images_seen == 0:
        raise ValueError("no images accumulated; mean activation is undefined")
    scores = [s / acc.images_seen for s in acc.sums]
    if network is not None:
        for sc, layer in zip(scores, network.conv_layers):
            sc[layer.filter_mask] = 0.0
    return scores


def _eligible(masks, min_filters_per_layer):
    # Per layer: how many more filters can go before hitting the floor.
    return [int((~m).sum()) - min_filters_per_layer for m in masks]


def _lowest_global(scores, masks, count, min_filters_per_layer):
    room = _eligible(masks, min_filters_per_layer)
    cand = [
        (float(scores[li][fi]), li, fi)
        for li, m in enumerate(masks)
        for fi in np.flatnonzero(~m)
    ]
    cand.sort()
    victims = []
    for _, li, fi in cand:
        if len(victims) == count:
            break
        if room[li] > 0:
            room[li] -= 1
            victims.append(FilterRef(li, int(fi)))
    return victims


def _lowest_balanced(scores, masks, count, min_filters_per_layer):
    # Per-layer scope: take from the layer with the lowest pruned fraction,
    # its lowest-scoring filter first.
    masks = [m.copy() for m in masks]
    victims = []
    for _ in range(count):
        room = _eligible(masks, min_filters_per_layer)
        layers = [li for li in range(len(masks)) if room[li] > 0]
        if not layers:
            break
        li = min(layers, key=lambda i: (masks[i].mean(), i))
        free = np.flatnonzero(~masks[li])
        fi = int(free[np.lexsort((free, scores[li][free]))[0]])
        masks[li][fi] = True
        victims.append(FilterRef(li, fi))
    return victims


def _one_per_layer(scores, masks, min_filters_per_layer):
    room = _eligible(masks, min_filters_per_layer)
    victims = []
    for li, m in enumerate(masks):
        if room[li] <= 0:
            continue
        free = np.flatnonzero(~m)
        fi = free[np.lexsort((free, scores[li][free]))[0]]
        victims.append(FilterRef(li, int(fi)))
    return victims


def _random(rng, masks, count, min_filters_per_layer):
    masks = [m.copy() for m in masks]
    victims = []
    for _ in range(count):
        room = _eligible(masks, min_filters_per_layer)
        if not any(r > 0 for r in room):
            break
        while True:
            li = int(rng.integers(len(masks)))
            fi = int(rng.integers(masks[li].shape[0]))
            if room[li] > 0 and not masks[li][fi]:
                break
        masks[li][fi] = True
        victims.append(FilterRef(li, fi))
    return victims


def select_victims(criterion, masks, count, scores=None, rng=None,
                   min_filters_per_layer=1, scope="global"):
    """Pick filters to prune.

    ``masks`` is the list of per-layer filter masks. L1 returns the ``count``
    lowest-scoring unmasked filters (ties: lower layer, then lower filter);
    ``scope="layer"`` instead keeps per-layer pruned fractions balanced.
    MeanAct returns one lowest-scoring filter per layer and ignores ``count``.
    Random draws a layer, then a filter, rejecting masked ones.

    Raises PruningError when the request cannot be met without taking a layer
    below ``min_filters_per_layer``.
    """
    criterion = Criterion(criterion)
    if count < 0:
        raise ValueError("count must be non-negative")
    if min_filters_per_layer < 0:
        raise ValueError("min_filters_per_layer must be non-negative")
    if not any((~m).any() for m in masks):
        raise PruningError("no unmasked filters remain")
    if criterion is Criterion.MEAN_ACT:
        if scores is None:
            raise ValueError("MeanAct selection needs scores")
        victims = _one_per_layer(scores, masks, min_filters_per_layer)
        if not victims:
            raise PruningError(f"every layer is at min_filters_per_layer={min_filters_per_layer}")
        return victims
    if criterion is Criterion.L1:
        if scores is None:
            raise ValueError("L1 selection needs scores")
        if scope == "global":
            victims = _lowest_global(scores, masks, count, min_filters_per_layer)
        elif scope == "layer":
            victims = _lowest_balanced(scores, masks, count, min_filters_per_layer)
        else:
            raise ValueError(f"unknown L1 scope {scope!r}")
    else:
        if rng is None:
            raise ValueError("Random selection needs a generator")
        victims = _random(rng, masks, count, min_filters_per_layer)
    if len(victims) < count:
        raise PruningError(
            f"requested {count} victims but only {len(victims)} can be pruned "
            f"without violating min_filters_per_layer={min_filters_per_layer}"
        )
    return victims


def apply_mask(network, victims):
    """Mask the given filters: zero their parameters and Adam moments, set the mask bit."""
    layers = network.conv_layers
    for ref in victims:
        if not 0 <= ref.layer_index < len(layers):
            raise IndexError(f"layer index {ref.layer_index} out of range")
        layer = layers[ref.layer_index]
        if not 0 <= ref.filter_index < layer.out_channels:
            raise IndexError(f"filter index {ref.filter_index} out of range for layer {ref.layer_index}")
        if layer.filter_mask[ref.filter_index]:
            raise MaskError(f"filter {tuple(ref)} is already masked")
    for ref in victims:
        layer = layers[ref.layer_index]
        o = ref.filter_index
        layer.filter_mask[o] = True
        for name in CONV_PARAMS:
            getattr(layer, name)[o] = 0
            layer.adam_m[name][o] = 0
            layer.adam_v[name][o] = 0
    return network


def zero_filters_percentage(network):
    """Percentage of conv filters whose weights are entirely zero (masked or not)."""
    layers = network.conv_layers
    total = sum(s.out_channels for s in layers)
    if total == 0:
        return 0.0
    zero = sum(int((~s.weights.reshape(s.out_channels, -1).any(axis=1)).sum()) for s in layers)
    return 100.0 * zero / total
