from fractions import Fraction

import numpy as np
import pytest

from pwtprune.cost import (
    COST_FIELDS,
    LatencyInput,
    LayerGeom,
    PruneProfile,
    SavingsInput,
    cost_report,
    latency_prt,
    latency_pwt,
    layer_costs,
    measure_t_batch,
    measure_t_l1norm,
    network_cost_report,
    profile_from_masks,
    savings,
    savings_general,
    schedule_pruned_fractions,
    timing_report,
)
from pwtprune.criteria import FilterRef, apply_mask
from pwtprune.network import Network
from pwtprune.optim import AdamConfig
from pwtprune.schedule import ScheduleConfig

from conftest import tiny_net


def savings_oracle(n, m, target):
    num = sum(Fraction(100 - k + 1, 100) for k in range(1, n + 1))
    return 1 - num / (n + m * (1 - Fraction(target).limit_denominator(10**6)))


def test_basic_geometry_counts():
    g = LayerGeom.from_input(N=4, k=3, I=1, O=1)
    assert g.M == 2 and g.R == 3
    c = layer_costs(g)
    assert c.forward_macs == 36
    assert c.error_macs == 16 * 9
    assert c.dw_macs == 36
    assert (c.input_reads, c.weight_reads, c.activation_writes, c.weight_writes) == (16, 9, 4, 9)


def test_current_layer_pruning_halves_forward_not_dw():
    g = LayerGeom.from_input(N=4, k=3, I=1, O=1)
    c = layer_costs(g, PruneProfile(P_p=0, P_c=50))
    assert c.forward_macs == 18 and c.dw_macs == 36


def test_batch_scaling_skips_weight_traffic():
    g = LayerGeom.from_input(N=6, k=3, I=2, O=4)
    one, many = layer_costs(g), layer_costs(g, batch=5)
    for f in ("forward_macs", "error_macs", "dw_macs", "input_reads", "activation_writes"):
        assert getattr(many, f) == 5 * getattr(one, f)
    assert many.weight_reads == one.weight_reads and many.weight_writes == one.weight_writes


def test_fractional_counts_stay_exact():
    g = LayerGeom.from_input(N=7, k=3, I=3, O=3, S=2)
    assert g.R == 3
    c = layer_costs(g, PruneProfile(P_p=100 / 3, P_c=0))
    assert c.forward_macs == 2 * 9 * 9 * 3  # (2/3) M^2 k^2 I O, M=3
    g = LayerGeom(N=9, M=4, k=3, I=1, O=1, S=2)
    assert g.R == Fraction(7, 2)


def test_totals_are_sums_and_empty_report_is_zero():
    geoms = [LayerGeom.from_input(8, 3, 1, 4), LayerGeom.from_input(6, 3, 4, 8)]
    rep = cost_report(geoms, [PruneProfile(0, 25), PruneProfile(25, 50)], batch=3)
    for f in COST_FIELDS:
        assert getattr(rep.totals, f) == sum(getattr(c, f) for c in rep.layers)
    empty = cost_report([])
    assert all(getattr(empty.totals, f) == 0 for f in COST_FIELDS)


def test_geometry_and_profile_validation():
    with pytest.raises(ValueError):
        LayerGeom(N=5, M=2, k=3, I=1, O=1)
    with pytest.raises(ValueError):
        LayerGeom.from_input(N=6, k=3, I=1, O=1, S=2)
    with pytest.raises(ValueError):
        PruneProfile(P_p=-1)
    with pytest.raises(ValueError):
        cost_report([LayerGeom.from_input(4, 3, 1, 1)], [])


def test_unpruned_net_analytic_equals_instrumented(rng):
    specs = [{"type": "conv", "out": 3, "k": 3}, {"type": "conv", "out": 4, "k": 3, "stride": 2},
             {"type": "conv", "out": 5, "k": 1}, {"type": "linear"}]
    net = Network.build(specs, (2, 9, 9), 4, rng, np.float64)
    net.train_batch(rng.normal(size=(3, 2, 9, 9)), rng.integers(4, size=3), AdamConfig())
    rep = network_cost_report(net, batch=3)
    for s, c in zip(net.conv_layers, rep.layers):
        assert s.counter.forward == c.forward_macs
    # the first layer's input gradient is never needed
    assert net.conv_layers[0].counter.error == 0
    for s, c in zip(net.conv_layers[1:], rep.layers[1:]):
        assert s.counter.error == c.error_macs
    for s, c in zip(net.conv_layers, rep.layers):
        assert s.counter.dw == c.dw_macs  # stride-2 layer has M == k, so R == k
    assert net.executed_macs() == rep.training_macs()


def test_pruned_net_forward_and_error_exact(rng):
    net = tiny_net(specs=({"type": "conv", "out": 4, "k": 3}, {"type": "conv", "out": 8, "k": 3},
                          {"type": "linear"}), shape=(2, 8, 8))
    apply_mask(net, [FilterRef(0, 1), FilterRef(1, 0), FilterRef(1, 5)])
    net.train_batch(rng.normal(size=(2, 2, 8, 8)), rng.integers(3, size=2), AdamConfig())
    rep = network_cost_report(net, batch=2)
    assert [p.P_c for p in rep.profiles] == [25, 25]
    assert [p.P_p for p in rep.profiles] == [0, 25]
    for s, c in zip(net.conv_layers, rep.layers):
        assert s.counter.forward == c.forward_macs
        assert s.counter.dw <= c.dw_macs
    assert net.conv_layers[1].counter.error == rep.layers[1].error_macs


def test_profile_from_masks():
    masks = [np.array([1, 0, 0, 0], bool), np.array([1, 1, 0, 0, 0, 0, 0, 0], bool)]
    p = profile_from_masks(masks)
    assert (p[0].P_p, p[0].P_c, p[1].P_p, p[1].P_c) == (0, 25, 25, 25)


def test_savings_reference_value():
    s = savings(SavingsInput(80, 10, 0.8))
    assert 0.4097 <= s <= 0.4099
    assert s == pytest.approx(float(savings_oracle(80, 10, 0.8)), abs=1e-12)
    assert s == pytest.approx(1 - 48.4 / 82, abs=1e-12)


def test_savings_trivial_and_invalid():
    assert savings(SavingsInput(1, 0, 0.0)) == 0.0
    with pytest.raises(ValueError):
        SavingsInput(0, 10, 0.5)
    with pytest.raises(ValueError):
        SavingsInput(10, 1, 1.0)


@pytest.mark.parametrize("X", [1e-3, 1.0, 7.5, 1e9])
def test_savings_independent_of_x(X):
    assert savings(SavingsInput(80, 10, 0.8, X)) == pytest.approx(savings(SavingsInput(80, 10, 0.8)), rel=1e-12)


def test_savings_general_reduces_to_closed_form():
    fr = [(k - 1) / 100 for k in range(1, 81)]
    assert savings_general(fr, 10, 0.8) == pytest.approx(savings(SavingsInput(80, 10, 0.8)), abs=1e-12)
    cfg = ScheduleConfig(mode="PWT", rate_per_epoch=1.0, target_prune_perc=80.0, total_epochs=80)
    assert schedule_pruned_fractions(cfg) == pytest.approx(fr)
    with pytest.raises(ValueError):
        savings_general([], 1, 0.5)


def test_latency_paper_figures():
    cifar = LatencyInput(n=100, m=10, b=1, T_b=37.5, T_l1norm=3.3)
    assert latency_pwt(cifar) == pytest.approx(4080.0)
    assert latency_prt(cifar) == pytest.approx(4128.3)
    for t in (0.0, 3.3, 50.0):
        imagenet = LatencyInput(n=100, m=10, b=1, T_b=7680.0, T_l1norm=t)
        assert latency_prt(imagenet) - latency_pwt(imagenet) == pytest.approx(76800 - 99 * t)


def test_latency_identities():
    base = dict(n=20, b=3.0, T_b=2.0, T_l1norm=0.5)
    assert latency_pwt(LatencyInput(m=0, **base)) == latency_pwt(LatencyInput(m=7, **base))
    prt = [latency_prt(LatencyInput(m=m, **base)) for m in range(4)]
    assert np.allclose(np.diff(prt), 3.0 * 2.0)
    z = LatencyInput(n=5, m=0, b=2, T_b=1.5, T_l1norm=0)
    assert latency_pwt(z) == latency_prt(z)
    with pytest.raises(ValueError):
        LatencyInput(n=1, m=-1, b=1, T_b=1, T_l1norm=0)


def test_timing_measurements():
    net = tiny_net()
    assert measure_t_l1norm(net) > 0 and measure_t_batch(net, 8) > 0
    empty = Network.build([{"type": "linear"}], (1, 2, 2), 2, np.random.default_rng(0))
    rep = timing_report(empty, batch=4)
    assert rep["l1_below_forward"] is None and rep["t_l1norm"] < 1e-3
