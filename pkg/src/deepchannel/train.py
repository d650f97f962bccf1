"""Minibatch SGD binding a forward net to a learning channel.

One update step: forward the minibatch, form the boundary error T - O,
transport it through the channel, average the per-example updates, and
apply them with the inverse-time learning rate lr0/(1 + decay * t) where
t counts updates since the start of the run. Channels that resample do so
at the top of each minibatch; adaptive channels adapt after the forward
weights moved.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .linalg import RNG_ALGORITHM_ID, SeededRng
from . import channel as ch
from .net import Architecture, ForwardNet, forward, init_weights

LOSSES = ("softmax_xent", "mse")


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 0.1
    decay: float = 1e-6
    momentum: float = 0.0
    batch_size: int = 100
    epochs: int = 100
    loss: str = "softmax_xent"
    seed: int = 0
    repeats: int = 1
    freeze_layers: tuple = ()  # 1-based layer indices excluded from updates

    def __post_init__(self):
        if self.lr0 < 0:
            raise ValueError(f"lr0 must be >= 0, got {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.epochs < 0 or self.repeats < 1:
            raise ValueError("batch_size/epochs/repeats out of range")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        object.__setattr__(self, "freeze_layers", tuple(int(h) for h in self.freeze_layers))


@dataclass
class MetricsRow:
    epoch: int
    train_accuracy: float
    test_accuracy: float
    train_loss: float
    wall_seconds: float
    effective_lr: float
    seed: int = 0


def loss_and_boundary(loss, output, target):
    """Mean loss over the batch plus the per-example boundary error T - O."""
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    o = np.asarray(output, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    squeeze = o.ndim == 1
    if squeeze:
        o, t = o[None, :], t[None, :]
    if o.shape != t.shape:
        raise ValueError(f"output shape {o.shape} does not match target shape {t.shape}")
    if loss == "softmax_xent":
        if not np.allclose(t.sum(axis=1), 1.0) or t.min() < 0:
            raise ValueError("softmax cross-entropy expects one-hot targets")
        if np.any(o <= 0) or not np.allclose(o.sum(axis=1), 1.0, atol=1e-6):
            raise ValueError("softmax cross-entropy expects softmax outputs")
        value = float(-(t * np.log(np.clip(o, 1e-300, None))).sum(axis=1).mean())
    else:
        value = float(0.5 * ((t - o) ** 2).sum(axis=1).mean())
    boundary = t - o
    return value, boundary[0] if squeeze else boundary


def check_loss_pairing(arch: Architecture, loss):
    out_act = arch.activations[-1].name
    ok = (loss == "softmax_xent" and out_act == "softmax") or (
        loss == "mse" and out_act != "softmax"
    )
    if not ok:
        raise ValueError(f"loss {loss!r} cannot pair with output activation {out_act!r}")


def effective_lr(config: TrainConfig, t):
    return config.lr0 / (1.0 + config.decay * t)


def apply_batch(net, state, inputs, targets, lr, velocity=None, momentum=0.0, freeze=(), rng=None):
    """One minibatch update in place; returns the mean loss-free trace for reuse."""
    trace = forward(net, inputs)
    signals = ch.backward_signals(state, net, trace, targets, rng=rng)
    d_w, d_b = ch.weight_updates(state, signals, trace, lr)
    for h in frozenset(freeze):
        d_w[h - 1][:] = 0.0
        d_b[h - 1][:] = 0.0
    if velocity is not None and momentum > 0.0:
        vw, vb = velocity
        for i in range(len(d_w)):
            vw[i] = momentum * vw[i] + d_w[i]
            vb[i] = momentum * vb[i] + d_b[i]
        d_w, d_b = vw, vb
    for i, dw in enumerate(d_w):
        net.weights[i] += dw
    if net.biases is not None:
        for i, db in enumerate(d_b):
            net.biases[i] += db
    return trace, signals


def sgd_epoch(
    net: ForwardNet,
    channel_state: ch.ChannelState,
    config: TrainConfig,
    dataset,
    rng: SeededRng,
    *,
    epoch=1,
    global_t=0,
    test_dataset=None,
    velocity=None,
):
    """One pass over the dataset; returns (net, channel_state, MetricsRow, global_t)."""
    n = dataset.inputs.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    check_loss_pairing(net.arch, config.loss)
    started = time.perf_counter()
    order = rng.permutation(n)
    loss_sum = 0.0
    batches = 0
    lr_t = effective_lr(config, global_t)
    mods = channel_state.modifiers
    for lo in range(0, n, config.batch_size):
        idx = order[lo : lo + config.batch_size]
        x, t = dataset.inputs[idx], dataset.targets[idx]
        if mods.resample_each_batch:
            ch.resample_channel(channel_state, net)
        lr_t = effective_lr(config, global_t)
        trace, signals = apply_batch(
            net,
            channel_state,
            x,
            t,
            lr_t,
            velocity=velocity,
            momentum=config.momentum,
            freeze=config.freeze_layers,
            rng=channel_state.rng,
        )
        if channel_state.algorithm in (ch.ARBP, ch.ASRBP):
            ch.adapt_channel(channel_state, signals, trace, lr_t)
        loss_sum += loss_and_boundary(config.loss, trace.output(), t)[0]
        batches += 1
        global_t += 1
    row = MetricsRow(
        epoch=epoch,
        train_accuracy=evaluate(net, dataset),
        test_accuracy=evaluate(net, test_dataset) if test_dataset is not None else float("nan"),
        train_loss=loss_sum / batches,
        wall_seconds=time.perf_counter() - started,
        effective_lr=lr_t,
        seed=config.seed,
    )
    return net, channel_state, row, global_t


def evaluate(net: ForwardNet, dataset, chunk=2000):
    """Fraction of examples whose argmax output matches the argmax target."""
    n = dataset.inputs.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    hits = 0
    for lo in range(0, n, chunk):
        x = dataset.inputs[lo : lo + chunk]
        t = dataset.targets[lo : lo + chunk]
        out = forward(net, x, want_deriv=False).output()
        hits += int((out.argmax(axis=1) == t.argmax(axis=1)).sum())
    return hits / n


@dataclass
class RunResult:
    """Curves and final state for one seed."""

    seed: int
    rows: list
    net: ForwardNet
    channel_state: ch.ChannelState

    @property
    def final(self):
        return self.rows[-1]


@dataclass
class ExperimentResult:
    runs: list
    summary: dict


def run_single(arch, channel_spec, config, train_data, test_data, repeat=0, epoch_hook=None):
    """Train one seed end to end; repeat selects the derived rng streams."""
    root = SeededRng(config.seed, spawn_key=(repeat,))
    net = init_weights(arch, root.spawn(0))
    net_for_signs = net if channel_spec.modifiers.sign_concordant else None
    state = ch.init_channel(arch, channel_spec, root.spawn(1), net=net_for_signs)
    shuffle_rng = root.spawn(2)
    velocity = None
    if config.momentum > 0.0:
        velocity = (
            [np.zeros_like(w) for w in net.weights],
            [np.zeros_like(b) for b in (net.biases or [])],
        )
    rows = []
    global_t = 0
    for epoch in range(1, config.epochs + 1):
        net, state, row, global_t = sgd_epoch(
            net,
            state,
            config,
            train_data,
            shuffle_rng,
            epoch=epoch,
            global_t=global_t,
            test_dataset=test_data,
            velocity=velocity,
        )
        row.seed = repeat
        rows.append(row)
        if epoch_hook is not None:
            epoch_hook(repeat, row)
    return RunResult(seed=repeat, rows=rows, net=net, channel_state=state)


def run_experiment(arch, channel_spec, config, train_data, test_data, epoch_hook=None):
    """Train `repeats` seeds and aggregate final test accuracy (mean, sample std)."""
    runs = [
        run_single(arch, channel_spec, config, train_data, test_data, repeat=r, epoch_hook=epoch_hook)
        for r in range(config.repeats)
    ]
    summary = summarize_runs(runs, config)
    return ExperimentResult(runs=runs, summary=summary)


def summarize_runs(runs, config: TrainConfig):
    finals_test = np.array([r.final.test_accuracy for r in runs], dtype=np.float64)
    finals_train = np.array([r.final.train_accuracy for r in runs], dtype=np.float64)
    best_train = np.array([max(row.train_accuracy for row in r.rows) for r in runs])
    have_test = not np.all(np.isnan(finals_test))
    return {
        "rng_algorithm": RNG_ALGORITHM_ID,
        "repeats": len(runs),
        "epochs": config.epochs,
        "final_test_acc_mean": float(np.nanmean(finals_test)) if have_test else None,
        "final_test_acc_std": (
            float(np.nanstd(finals_test, ddof=1)) if have_test and len(runs) > 1 else 0.0
        ),
        "final_train_acc_mean": float(np.mean(finals_train)),
        "best_train_acc_mean": float(np.mean(best_train)),
        "per_seed_final_test_acc": [float(v) for v in finals_test],
        "wall_seconds_total": float(sum(row.wall_seconds for r in runs for row in r.rows)),
    }


def write_metrics_csv(path, runs):
    """Tidy per-epoch curves: one train row and one test row per epoch per seed."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "split", "accuracy", "loss", "seed", "wall_seconds", "effective_lr"])
        for run in runs:
            for row in run.rows:
                w.writerow(
                    [row.epoch, "train", f"{row.train_accuracy:.6f}", f"{row.train_loss:.8f}",
                     run.seed, f"{row.wall_seconds:.3f}", f"{row.effective_lr:.10g}"]
                )
                if not np.isnan(row.test_accuracy):
                    w.writerow(
                        [row.epoch, "test", f"{row.test_accuracy:.6f}", "",
                         run.seed, f"{row.wall_seconds:.3f}", f"{row.effective_lr:.10g}"]
                    )


def write_summary_json(path, summary, config_echo):
    payload = dict(summary)
    payload["config"] = config_echo
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
