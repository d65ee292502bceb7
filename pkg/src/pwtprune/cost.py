"""Analytic operation counts, training savings and latency for pruned conv layers.

Per-layer counts follow the usual conv cost table (per image):

    forward MACs        (1-Pc)(1-Pp) M^2 k^2 I O
    error MACs          (1-Pc)(1-Pp) N^2 k^2 I O
    weight-grad MACs    (1-Pp) M^2 R^2 I O,     R = (N-M)/S + 1
    input reads         N^2 I
    weight reads        (1-Pc)(1-Pp) k^2 I O
    activation writes   (1-Pp) M^2 O
    weight writes       (1-Pc)(1-Pp) k^2 I O

with Pc/Pp the pruned percentages of the current/previous conv layer.
Counts are exact rationals; integral results come back as ``int``.
"""
import statistics
import time
from dataclasses import asdict, dataclass, fields
from fractions import Fraction

import numpy as np

from .criteria import l1_norm_per_filter

COST_FIELDS = (
    "forward_macs",
    "error_macs",
    "dw_macs",
    "input_reads",
    "weight_reads",
    "activation_writes",
    "weight_writes",
)


def _exact(x):
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    return Fraction(x).limit_denominator(10**9)


def _plain(q):
    q = Fraction(q)
    return q.numerator if q.denominator == 1 else float(q)


@dataclass(frozen=True)
class LayerGeom:
    N: int
    M: int
    k: int
    I: int
    O: int
    S: int = 1

    def __post_init__(self):
        if min(self.N, self.M, self.k, self.I, self.O, self.S) < 1:
            raise ValueError(f"geometry entries must be positive: {self}")
        if (self.N - self.k) % self.S or self.M != (self.N - self.k) // self.S + 1:
            raise ValueError(f"M must equal (N - k)/S + 1 exactly: {self}")

    @classmethod
    def from_input(cls, N, k, I, O, S=1):
        if N < k or (N - k) % S:
            raise ValueError(f"(N - k)/S not integral for N={N}, k={k}, S={S}")
        return cls(N, (N - k) // S + 1, k, I, O, S)

    @property
    def R(self):
        return Fraction(self.N - self.M, self.S) + 1


@dataclass(frozen=True)
class PruneProfile:
    P_p: float = 0.0
    P_c: float = 0.0

    def __post_init__(self):
        for name in ("P_p", "P_c"):
            v = getattr(self, name)
            if not 0 <= v <= 100:
                raise ValueError(f"{name}={v} outside [0, 100]")


@dataclass
class LayerCost:
    forward_macs: object = 0
    error_macs: object = 0
    dw_macs: object = 0
    input_reads: object = 0
    weight_reads: object = 0
    activation_writes: object = 0
    weight_writes: object = 0

    def __add__(self, other):
        return LayerCost(*(_plain(_exact(getattr(self, f)) + _exact(getattr(other, f))) for f in COST_FIELDS))

    def as_dict(self):
        return asdict(self)


@dataclass
class CostReport:
    geoms: list
    profiles: list
    layers: list

    @property
    def totals(self):
        total = LayerCost()
        for c in self.layers:
            total = total + c
        return total

    def training_macs(self, skip_first_error=True):
        """Forward + error + weight-grad MACs; the first layer's error pass is
        skipped by default because no gradient w.r.t. the data is needed."""
        t = self.totals
        macs = _exact(t.forward_macs) + _exact(t.error_macs) + _exact(t.dw_macs)
        if skip_first_error and self.layers:
            macs -= _exact(self.layers[0].error_macs)
        return _plain(macs)


def layer_costs(g, p=PruneProfile(), batch=1):
    """Operation counts of one conv layer; per-image terms are scaled by ``batch``.

    Weight reads and writes happen once per mini-batch and are not scaled.
    """
    if batch < 0:
        raise ValueError("batch must be non-negative")
    keep_c = 1 - _exact(p.P_c) / 100
    keep_p = 1 - _exact(p.P_p) / 100
    both = keep_c * keep_p
    IO = g.I * g.O
    return LayerCost(
        forward_macs=_plain(batch * both * g.M**2 * g.k**2 * IO),
        error_macs=_plain(batch * both * g.N**2 * g.k**2 * IO),
        dw_macs=_plain(batch * keep_p * g.M**2 * g.R**2 * IO),
        input_reads=_plain(batch * g.N**2 * g.I),
        weight_reads=_plain(both * g.k**2 * IO),
        activation_writes=_plain(batch * keep_p * g.M**2 * g.O),
        weight_writes=_plain(both * g.k**2 * IO),
    )


def profile_from_masks(masks):
    """Per-layer (P_p, P_c) from conv filter masks, in order."""
    profiles = []
    prev = Fraction(0)
    for m in masks:
        m = np.asarray(m, dtype=bool)
        cur = Fraction(100 * int(m.sum()), m.size) if m.size else Fraction(0)
        profiles.append(PruneProfile(P_p=prev, P_c=cur))
        prev = cur
    return profiles


def cost_report(geoms, profiles=None, batch=1):
    geoms = list(geoms)
    if profiles is None:
        profiles = [PruneProfile() for _ in geoms]
    profiles = list(profiles)
    if len(profiles) != len(geoms):
        raise ValueError(f"{len(geoms)} layers but {len(profiles)} pruning entries")
    return CostReport(geoms, profiles, [layer_costs(g, p, batch) for g, p in zip(geoms, profiles)])


def network_cost_report(network, batch=1):
    geoms = [LayerGeom(*g) for g in network.conv_geometry()]
    return cost_report(geoms, profile_from_masks([s.filter_mask for s in network.conv_layers]), batch)


@dataclass(frozen=True)
class SavingsInput:
    n: int
    m: int
    target_rate: float
    X: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1 (zero denominator otherwise)")
        if self.m < 0:
            raise ValueError("m must be >= 0")
        if not 0 <= self.target_rate < 1:
            raise ValueError("target_rate must be in [0, 1)")
        if self.X <= 0:
            raise ValueError("X must be positive")


def savings(inp):
    """Fractional MAC/memory savings of PWT (1 % of filters per epoch) over PRT.

    1 - sum_{k=1..n} ((100-k+1)/100) X / (X n + m (1 - target) X)
    """
    X = inp.X
    pwt = sum((100 - k + 1) / 100 * X for k in range(1, inp.n + 1))
    prt = X * inp.n + inp.m * (1 - inp.target_rate) * X
    return 1 - pwt / prt


def savings_general(pruned_fractions, m, target_rate, X=1.0):
    """Savings for an arbitrary schedule: ``pruned_fractions[e]`` is the pruned
    fraction in force during nominal epoch ``e``."""
    if len(pruned_fractions) == 0:
        raise ValueError("need at least one nominal epoch")
    SavingsInput(len(pruned_fractions), m, target_rate, X)
    pwt = sum((1 - f) * X for f in pruned_fractions)
    prt = X * len(pruned_fractions) + m * (1 - target_rate) * X
    return 1 - pwt / prt


def schedule_pruned_fractions(cfg):
    """Pruned fraction in force during each epoch of a PWT schedule."""
    from .schedule import target_for_epoch

    return [target_for_epoch(cfg, e - 1) / 100 for e in range(1, cfg.total_epochs + 1)]


@dataclass(frozen=True)
class LatencyInput:
    n: int
    m: int
    b: float
    T_b: float
    T_l1norm: float

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be non-negative")


def latency_pwt(inp):
    return inp.n * (inp.b * inp.T_b + inp.T_l1norm)


def latency_prt(inp):
    return inp.n * inp.b * inp.T_b + inp.T_l1norm + inp.m * inp.b * inp.T_b


def _median_time(fn, repeats):
    fn()
    times = []
    for _ in range(max(repeats, 5)):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def measure_t_l1norm(network, repeats=5):
    """Median wall time of one L1 scan over every conv filter."""
    layers = network.conv_layers
    return _median_time(lambda: [l1_norm_per_filter(s) for s in layers], repeats)


def measure_t_batch(network, batch=64, repeats=5, seed=0):
    """Median wall time of one inference forward pass on a batch.

    ``batch`` is a size (random inputs are drawn) or an input array.
    """
    if isinstance(batch, (int, np.integer)):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(int(batch), *network.input_shape)).astype(network.dtype)
    else:
        x = np.asarray(batch, dtype=network.dtype)
    return _median_time(lambda: network.predict(x), repeats)


def timing_report(network, batch=64, repeats=5):
    """T_L1Norm vs one forward pass; ``l1_below_forward`` is None for conv-free nets."""
    t_l1 = measure_t_l1norm(network, repeats)
    t_fwd = measure_t_batch(network, batch, repeats)
    verdict = None if not network.conv_layers else t_l1 < t_fwd
    return {"t_l1norm": t_l1, "t_forward": t_fwd, "batch": batch, "l1_below_forward": verdict}
