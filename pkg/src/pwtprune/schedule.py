"""Epoch-level pruning schedules.

PWT prunes a little every pruning epoch: after the epoch's updates, filters
are masked while the zero-filter percentage is <= the running threshold,
which then grows by ``rate_per_epoch``. The check is ``<=`` and is re-done
after each mask, so each pruning epoch ends at most one filter past the
threshold. PRT trains dense and prunes once, at ``prt_prune_epoch``.
"""
import time
from dataclasses import dataclass, field
from enum import Enum

from .criteria import (
    Criterion,
    apply_mask,
    l1_norm_per_filter,
    mean_activation_scores,
    select_victims,
    zero_filters_percentage,
)

# Percentages are built by repeated float addition; compare with slack.
PERC_TOL = 1e-9


class Mode(str, Enum):
    PWT = "PWT"
    PRT = "PRT"
    NONE = "None"


@dataclass(frozen=True)
class ScheduleConfig:
    mode: Mode = Mode.NONE
    criterion: Criterion = Criterion.L1
    initial_prune_perc: float = 0.0
    rate_per_epoch: float = 1.0
    target_prune_perc: float = 0.0
    mod_k: int = 1
    prt_prune_epoch: int | None = None
    total_epochs: int = 1
    advance_target_on_skip: bool = False
    min_filters_per_layer: int = 1
    l1_scope: str = "global"

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "criterion", Criterion(self.criterion))
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be >= 1")
        if not 0 <= self.target_prune_perc < 100:
            raise ValueError("target_prune_perc must be in [0, 100)")
        if self.initial_prune_perc < 0:
            raise ValueError("initial_prune_perc must be >= 0")
        if self.rate_per_epoch <= 0:
            raise ValueError("rate_per_epoch must be > 0")
        if self.mod_k < 1:
            raise ValueError("mod_k must be >= 1")
        if self.l1_scope not in ("global", "layer"):
            raise ValueError("l1_scope must be 'global' or 'layer'")
        if self.mode is Mode.PWT:
            reach = self.initial_prune_perc + self.rate_per_epoch * pruning_epochs_elapsed(self, self.total_epochs)
            if reach + PERC_TOL < self.target_prune_perc:
                raise ValueError(
                    f"schedule reaches only {reach:.4g}% by epoch {self.total_epochs}, "
                    f"below target {self.target_prune_perc}%"
                )
        if self.mode is Mode.PRT:
            if self.prt_prune_epoch is None or not 0 < self.prt_prune_epoch < self.total_epochs:
                raise ValueError("PRT needs 0 < prt_prune_epoch < total_epochs")
            if self.criterion is not Criterion.L1:
                raise ValueError("PRT prunes with the L1 criterion only")


@dataclass
class ScheduleState:
    current_target_perc: float
    current_prune_perc: float = 0.0
    epoch: int = 0

    @classmethod
    def start(cls, cfg):
        return cls(current_target_perc=cfg.initial_prune_perc)


@dataclass
class HookResult:
    victims: list = field(default_factory=list)
    scoring_seconds: float = 0.0


def pruning_epochs_elapsed(cfg, epoch):
    if cfg.advance_target_on_skip:
        return epoch
    return epoch // cfg.mod_k


def target_for_epoch(cfg, epoch):
    """Scheduled pruned percentage after ``epoch`` (1-based), clamped at the target."""
    raw = cfg.initial_prune_perc + cfg.rate_per_epoch * pruning_epochs_elapsed(cfg, epoch)
    return min(raw, cfg.target_prune_perc)


def _masks(network):
    return [s.filter_mask for s in network.conv_layers]


def _prune_one(network, cfg, criterion, rng, result):
    if criterion is Criterion.L1:
        t0 = time.perf_counter()
        scores = [l1_norm_per_filter(s) for s in network.conv_layers]
        result.scoring_seconds += time.perf_counter() - t0
        victims = select_victims(Criterion.L1, _masks(network), 1, scores=scores,
                                 min_filters_per_layer=cfg.min_filters_per_layer, scope=cfg.l1_scope)
    else:
        victims = select_victims(Criterion.RANDOM, _masks(network), 1, rng=rng,
                                 min_filters_per_layer=cfg.min_filters_per_layer)
    apply_mask(network, victims)
    result.victims.extend(victims)


def _pwt(network, cfg, state, acc, rng, result):
    if state.epoch % cfg.mod_k != 0:
        if cfg.advance_target_on_skip:
            state.current_target_perc += cfg.rate_per_epoch
        return
    threshold = min(state.current_target_perc, cfg.target_prune_perc)
    if cfg.criterion is Criterion.MEAN_ACT:
        # One filter per layer per pruning epoch; the target only caps it.
        if zero_filters_percentage(network) + PERC_TOL < cfg.target_prune_perc:
            if acc is None:
                raise ValueError("MeanAct pruning needs an activation accumulator")
            scores = mean_activation_scores(acc, network)
            victims = select_victims(Criterion.MEAN_ACT, _masks(network), 0, scores=scores,
                                     min_filters_per_layer=cfg.min_filters_per_layer)
            apply_mask(network, victims)
            result.victims.extend(victims)
    elif cfg.target_prune_perc > 0:
        current = zero_filters_percentage(network)
        while current <= threshold + PERC_TOL:
            _prune_one(network, cfg, cfg.criterion, rng, result)
            current = zero_filters_percentage(network)
    state.current_target_perc += cfg.rate_per_epoch


def prt_prune_event(network, cfg, result=None):
    """One-shot L1 pruning up to ``target_prune_perc`` (at most one filter past it)."""
    result = result if result is not None else HookResult()
    current = zero_filters_percentage(network)
    if cfg.target_prune_perc + PERC_TOL < current:
        raise ValueError(f"target {cfg.target_prune_perc}% is below the current pruned {current:.4g}%")
    while current + PERC_TOL < cfg.target_prune_perc:
        _prune_one(network, cfg, Criterion.L1, None, result)
        current = zero_filters_percentage(network)
    return result


def epoch_end_hook(network, cfg, state, acc=None, rng=None):
    """Advance ``state`` by one epoch and prune according to ``cfg``."""
    state.epoch += 1
    result = HookResult()
    if cfg.mode is Mode.PWT:
        _pwt(network, cfg, state, acc, rng, result)
    elif cfg.mode is Mode.PRT and state.epoch == cfg.prt_prune_epoch:
        prt_prune_event(network, cfg, result)
        state.current_target_perc = cfg.target_prune_perc
    state.current_prune_perc = zero_filters_percentage(network)
    return result
