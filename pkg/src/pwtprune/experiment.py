"""Training runs, run comparison and cost tables behind the CLI."""
import csv
import json
import logging
import time
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import Field

from . import cost as costmod
from .checkpoint import save_checkpoint
from .config import ConfigError, LayerSpec, RunConfig, _Strict, parse_config
from .criteria import ActivationAccumulator, accumulate_mean_activation
from .data import batches, load_cifar_binary, load_idx, read_idx, split, synthetic_blobs
from .layers import conv_output_side
from .network import VGG_MICRO, Network
from .schedule import ScheduleState, epoch_end_hook
from .plots import line_plot_svg
from .tensor import NonFiniteError, resolve_dtype

log = logging.getLogger(__name__)

EVAL_BATCH = 256


class TrainingDivergedError(RuntimeError):
    pass


class CompareError(RuntimeError):
    pass


@dataclass
class MetricsRow:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_accuracy: float
    pruned_filter_pct: float
    unmasked_params: int
    executed_macs: int
    wall_seconds: Optional[float]
    t_l1norm_seconds: Optional[float]


METRICS_COLUMNS = tuple(f.name for f in fields(MetricsRow))


def _cell(v):
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def load_datasets(spec):
    """(train, test) datasets for a config's dataset section."""
    if spec.kind == "synthetic":
        full = synthetic_blobs(spec.num_classes, spec.n_train + spec.n_test, spec.image_side, spec.seed,
                               channels=spec.channels, noise=spec.noise, jitter=spec.jitter,
                               standardize=False)
        return split(full, spec.n_train)
    if spec.kind == "idx":
        train = load_idx(spec.train_images, spec.train_labels, spec.num_classes)
        test = load_idx(spec.test_images, spec.test_labels, train.num_classes, stats=train.stats)
        return train, test
    train = load_cifar_binary(spec.train, spec.variant)
    variant = "cifar10" if train.num_classes == 10 else "cifar100"
    return train, load_cifar_binary(spec.test, variant, stats=train.stats)


def evaluate(network, dataset):
    correct = 0
    for start in range(0, len(dataset), EVAL_BATCH):
        logits = network.predict(dataset.images[start:start + EVAL_BATCH])
        correct += int((logits.argmax(axis=1) == dataset.labels[start:start + EVAL_BATCH]).sum())
    return 100.0 * correct / len(dataset)


@dataclass
class RunResult:
    out_dir: Path
    rows: list
    network: Network


def run(config, out_dir=None, datasets=None):
    """Train one configuration, writing metrics.csv, timing.csv and checkpoints.

    Rows are flushed as each epoch ends. Raises TrainingDivergedError on a
    non-finite loss or activation; the rows written so far are kept.
    """
    out = Path(out_dir or config.out_dir or "run")
    out.mkdir(parents=True, exist_ok=True)
    dtype = resolve_dtype(config.precision)
    train, test = datasets or load_datasets(config.dataset)
    net = Network.build(config.layer_specs(), train.image_shape, train.num_classes,
                        np.random.default_rng(config.seed), dtype)
    sched = config.schedule_config()
    state = ScheduleState.start(sched)
    prune_rng = np.random.default_rng([config.seed, 1])
    acc = ActivationAccumulator.for_network(net)
    hyper = config.adam_config()
    (out / "config.json").write_text(json.dumps(config.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")

    rows = []
    with open(out / "metrics.csv", "w", newline="") as mf, open(out / "timing.csv", "w", newline="") as tf:
        metrics = csv.writer(mf, lineterminator="\n")
        timing = csv.writer(tf, lineterminator="\n")
        metrics.writerow(METRICS_COLUMNS)
        timing.writerow(("epoch", "wall_seconds", "t_l1norm_seconds"))
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            net.reset_counters()
            acc.reset()
            loss_sum, correct, seen, bi = 0.0, 0, 0, 0
            try:
                for bi, (x, y) in enumerate(batches(train, config.batch_size, config.seed, epoch)):
                    loss, hit = net.train_batch(x, y, hyper)
                    if not np.isfinite(loss):
                        raise NonFiniteError(f"loss = {loss}")
                    accumulate_mean_activation(acc, net.conv_activations)
                    loss_sum += loss * len(y)
                    correct += hit
                    seen += len(y)
            except NonFiniteError as exc:
                raise TrainingDivergedError(f"epoch {epoch}, batch {bi}: {exc}") from exc
            macs = net.executed_macs()
            hook = epoch_end_hook(net, sched, state, acc, prune_rng)
            test_acc = evaluate(net, test)
            wall = time.perf_counter() - t0
            row = MetricsRow(
                epoch=epoch,
                train_loss=loss_sum / seen,
                train_accuracy=100.0 * correct / seen,
                test_accuracy=test_acc,
                pruned_filter_pct=state.current_prune_perc,
                unmasked_params=net.unmasked_parameter_count(),
                executed_macs=macs,
                wall_seconds=wall if config.record_wall_time else None,
                t_l1norm_seconds=hook.scoring_seconds if config.record_wall_time else None,
            )
            rows.append(row)
            metrics.writerow([_cell(v) for v in astuple(row)])
            mf.flush()
            timing.writerow((epoch, repr(wall), repr(hook.scoring_seconds)))
            tf.flush()
            log.info("epoch %d loss %.4f train %.2f%% test %.2f%% pruned %.2f%%",
                     epoch, row.train_loss, row.train_accuracy, test_acc, row.pruned_filter_pct)
            if epoch % config.checkpoint_every == 0:
                save_checkpoint(out / f"checkpoint_epoch{epoch:04d}.bin", net, {"epoch": epoch})
    save_checkpoint(out / "checkpoint.bin", net, {"epoch": config.epochs})
    return RunResult(out, rows, net)


def read_metrics(run_dir):
    path = Path(run_dir) / "metrics.csv"
    if not path.is_file():
        raise CompareError(f"missing metrics file: {path}")
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != METRICS_COLUMNS:
            raise CompareError(f"{path}: unexpected header {header}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(METRICS_COLUMNS):
                raise CompareError(f"{path}:{lineno}: expected {len(METRICS_COLUMNS)} fields, got {len(rec)}")
            try:
                rows.append(MetricsRow(
                    int(rec[0]), float(rec[1]), float(rec[2]), float(rec[3]), float(rec[4]),
                    int(rec[5]), int(rec[6]),
                    float(rec[7]) if rec[7] else None,
                    float(rec[8]) if rec[8] else None,
                ))
            except ValueError as exc:
                raise CompareError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise CompareError(f"{path}: no epochs recorded")
    return rows


def _total_wall(run_dir, rows):
    timing = Path(run_dir) / "timing.csv"
    if timing.is_file():
        with open(timing, newline="") as f:
            return sum(float(r["wall_seconds"]) for r in csv.DictReader(f))
    walls = [r.wall_seconds for r in rows if r.wall_seconds is not None]
    return sum(walls) if walls else None


def compare(run_dirs, out_dir):
    """Overlay several runs: plot-source CSVs, SVG plots and a summary table."""
    if not run_dirs:
        raise CompareError("no run directories given")
    runs = {}
    for d in run_dirs:
        label = Path(d).resolve().name
        base, i = label, 2
        while label in runs:
            label, i = f"{base}-{i}", i + 1
        runs[label] = (Path(d), read_metrics(d))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "comparison.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("run", *METRICS_COLUMNS))
        for label, (_, rows) in runs.items():
            for r in rows:
                w.writerow((label, *(_cell(v) for v in astuple(r))))

    acc_series = {lab: [(r.epoch, r.test_accuracy) for r in rows] for lab, (_, rows) in runs.items()}
    par_series = {lab: [(r.epoch, r.unmasked_params) for r in rows] for lab, (_, rows) in runs.items()}
    for name, series, ylabel in (("accuracy_vs_epoch", acc_series, "test accuracy (%)"),
                                 ("params_vs_epoch", par_series, "unmasked parameters")):
        _write_wide(out / f"{name}.csv", series)
        (out / f"{name}.svg").write_text(line_plot_svg(series, ylabel + " vs epoch", "epoch", ylabel))

    summary = []
    for label, (d, rows) in runs.items():
        last = rows[-1]
        summary.append({
            "run": label,
            "epochs": last.epoch,
            "final_test_accuracy": last.test_accuracy,
            "final_pruned_filter_pct": last.pruned_filter_pct,
            "final_unmasked_params": last.unmasked_params,
            "total_executed_macs": sum(r.executed_macs for r in rows),
            "total_wall_seconds": _total_wall(d, rows),
        })
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(summary[0]), lineterminator="\n")
        w.writeheader()
        for s in summary:
            w.writerow({k: _cell(v) for k, v in s.items()})
    return summary


def _write_wide(path, series):
    epochs = sorted({x for s in series.values() for x, _ in s})
    lookup = {lab: dict(s) for lab, s in series.items()}
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("epoch", *series))
        for e in epochs:
            w.writerow((e, *(_cell(lookup[lab].get(e)) for lab in series)))


class InputGeom(_Strict):
    channels: int = Field(gt=0)
    side: int = Field(gt=0)


class SavingsSpec(_Strict):
    n: int = Field(gt=0)
    m: int = Field(ge=0)
    target_rate: float = Field(ge=0, lt=1)


class LatencySpec(_Strict):
    n: int = Field(ge=0)
    m: int = Field(ge=0)
    b: float = Field(1.0, ge=0)
    T_b: float = Field(ge=0)
    T_l1norm: float = Field(ge=0)


class CostSpec(_Strict):
    input: InputGeom
    architecture: Union[str, list[LayerSpec]] = "vgg-micro"
    pruned_perc: Optional[list[float]] = None
    batch: int = Field(1, ge=0)
    savings: Optional[SavingsSpec] = None
    latency: Optional[LatencySpec] = None


def conv_geoms(specs, channels, side):
    """LayerGeom for each conv layer of an architecture on a channels x side x side input."""
    geoms = []
    for idx, spec in enumerate(specs):
        if spec["type"] == "conv":
            k, s = spec.get("k", 3), spec.get("stride", 1)
            try:
                m = conv_output_side(side, k, s)
            except ValueError as exc:
                raise ConfigError(f"architecture.{idx}: {exc}") from None
            geoms.append(costmod.LayerGeom(side, m, k, channels, spec["out"], s))
            channels, side = spec["out"], m
        elif spec["type"] == "pool":
            side //= 2
            if side == 0:
                raise ConfigError(f"architecture.{idx}: pooling reduces the map to nothing")
    return geoms


def _specs(arch):
    if arch == "vgg-micro":
        return [dict(s) for s in VGG_MICRO]
    if isinstance(arch, str):
        raise ConfigError(f"architecture: unknown preset {arch!r}")
    return [s.model_dump(exclude_none=True) for s in arch]


def cost_spec_from_doc(doc):
    """Accept either a cost description or a full run config."""
    if "dataset" in doc:
        cfg = parse_config(doc, RunConfig)
        ds = cfg.dataset
        if ds.kind == "synthetic":
            channels, side = ds.channels, ds.image_side
        elif ds.kind == "idx":
            channels, side = 1, read_idx(ds.train_images).shape[-1]
        else:
            channels, side = 3, 32
        return CostSpec(input=InputGeom(channels=channels, side=side), architecture=cfg.architecture)
    return parse_config(doc, CostSpec)


def cost_tables(spec, n=None, m=None, target_rate=None, b=None, t_batch=None, t_l1norm=None, batch=None):
    """Per-layer cost rows (with a totals row) and savings/latency projections."""
    geoms = conv_geoms(_specs(spec.architecture), spec.input.channels, spec.input.side)
    profiles = None
    if spec.pruned_perc is not None:
        if len(spec.pruned_perc) != len(geoms):
            raise ConfigError(f"pruned_perc: {len(spec.pruned_perc)} entries for {len(geoms)} conv layers")
        prev, profiles = 0.0, []
        for p in spec.pruned_perc:
            profiles.append(costmod.PruneProfile(P_p=prev, P_c=p))
            prev = p
    report = costmod.cost_report(geoms, profiles, spec.batch if batch is None else batch)

    head = ["layer", "N", "M", "k", "I", "O", "S", "R", "P_p", "P_c", *costmod.COST_FIELDS]
    rows = [head]
    for i, (g, p, c) in enumerate(zip(report.geoms, report.profiles, report.layers)):
        rows.append([i, g.N, g.M, g.k, g.I, g.O, g.S, _num(g.R), _num(p.P_p), _num(p.P_c),
                     *(_num(getattr(c, f)) for f in costmod.COST_FIELDS)])
    t = report.totals
    rows.append(["total", "", "", "", "", "", "", "", "", "", *(_num(getattr(t, f)) for f in costmod.COST_FIELDS)])

    proj = [["metric", "value"]]
    sv = spec.savings
    n_s = n if n is not None else (sv.n if sv else None)
    m_s = m if m is not None else (sv.m if sv else None)
    tr = target_rate if target_rate is not None else (sv.target_rate if sv else None)
    if n_s is not None and m_s is not None and tr is not None:
        proj.append(["savings", repr(costmod.savings(costmod.SavingsInput(n_s, m_s, tr)))])
    lt = spec.latency
    lat = dict(lt.model_dump()) if lt else {}
    for key, val in (("n", n), ("m", m), ("b", b), ("T_b", t_batch), ("T_l1norm", t_l1norm)):
        if val is not None:
            lat[key] = val
    if {"n", "m", "T_b", "T_l1norm"} <= lat.keys():
        lat.setdefault("b", 1.0)
        li = costmod.LatencyInput(**{k: lat[k] for k in ("n", "m", "b", "T_b", "T_l1norm")})
        pwt, prt = costmod.latency_pwt(li), costmod.latency_prt(li)
        proj += [["latency_pwt_seconds", repr(pwt)], ["latency_prt_seconds", repr(prt)],
                 ["latency_prt_minus_pwt_seconds", repr(prt - pwt)]]
    return rows, proj, report


def _num(v):
    v = costmod._plain(costmod._exact(v))
    return repr(v) if isinstance(v, float) else str(v)
