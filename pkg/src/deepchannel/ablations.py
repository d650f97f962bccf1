"""Desk-scale MNIST ablation rows and a disk cache for their results.

Each row pins one training configuration of the benchmark table:
baselines for the four transport algorithms, the no-f' variants, sparse
and adaptive channels, error/update quantization, channel dropout, and
the falsification ablations. Five-seed rows mirror the table cells that
carry a standard deviation; the remaining cells are single runs.

Results are cached as JSON keyed by a hash of the fully resolved
configuration, so the multi-hour experiment set is computed once and
reused by the acceptance suite.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import channel as ch
from .data import load_idx
from .net import Architecture, SOFTMAX, TANH
from .train import TrainConfig, run_single

MNIST_ARCH = Architecture((784, 100, 100, 100, 100, 10), (TANH,) * 4 + (SOFTMAX,))
BASE_SEED = 2024
DEFAULT_CACHE_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(__file__))), ".acceptance_cache")
DEFAULT_MNIST_DIR = "/root/data/mnist"

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def mnist_dir():
    return os.environ.get("DEEPCHANNEL_MNIST_DIR", DEFAULT_MNIST_DIR)


def cache_dir():
    return os.environ.get("DEEPCHANNEL_CACHE", DEFAULT_CACHE_DIR)


def mnist_available(directory=None):
    d = directory or mnist_dir()
    return all(os.path.exists(os.path.join(d, f)) for f in MNIST_FILES.values())


def load_mnist(directory=None):
    d = directory or mnist_dir()
    train = load_idx(os.path.join(d, MNIST_FILES["train_images"]),
                     os.path.join(d, MNIST_FILES["train_labels"]))
    test = load_idx(os.path.join(d, MNIST_FILES["test_images"]),
                    os.path.join(d, MNIST_FILES["test_labels"]))
    return train, test


@dataclass(frozen=True)
class RowSpec:
    name: str
    channel: ch.ChannelSpec
    config: TrainConfig


def _cfg(repeats, epochs=100, decay=1e-6):
    return TrainConfig(
        lr0=0.1, decay=decay, momentum=0.0, batch_size=100,
        epochs=epochs, loss="softmax_xent", seed=BASE_SEED, repeats=repeats,
    )


def mnist_rows(epochs=100):
    """The full ablation matrix, name -> RowSpec."""
    rows = {}

    def add(name, algorithm, repeats, decay=1e-6, **mods):
        spec = ch.ChannelSpec(algorithm, ch.ChannelModifiers(**mods))
        rows[name] = RowSpec(name, spec, _cfg(repeats, epochs=epochs, decay=decay))

    add("bp", ch.BP, 5)
    add("rbp", ch.RBP, 5)
    add("srbp", ch.SRBP, 5)
    add("top_layer_only", ch.TOP_LAYER_ONLY, 5)

    add("rbp_nofprime", ch.RBP, 5, use_fprime=False)
    add("srbp_nofprime", ch.SRBP, 5, use_fprime=False)

    add("arbp", ch.ARBP, 5)
    add("asrbp", ch.ASRBP, 5)

    for n in (1, 2, 8):
        add(f"srbp_sparse{n}", ch.SRBP, 5, sparse=ch.SparseSpec(n=n))
        add(f"rbp_sparse{n}", ch.RBP, 5, sparse=ch.SparseSpec(n=n, rescale=True))

    for bits in (5, 3, 1):
        for name, algo in (("bp", ch.BP), ("rbp", ch.RBP), ("srbp", ch.SRBP)):
            add(f"errquant{bits}_{name}", algo, 1,
                error_quant=ch.QuantSpec(bits=bits, alpha=ch.DEFAULT_ERROR_QUANT_ALPHA))

    # update quantization rows follow the non-decaying learning-rate protocol
    add("updquant1_rbp", ch.RBP, 1, decay=0.0,
        update_quant=ch.QuantSpec(bits=1, alpha=ch.DEFAULT_UPDATE_QUANT_ALPHA))

    for p in (10, 20, 50):
        for name, algo in (("bp", ch.BP), ("rbp", ch.RBP), ("srbp", ch.SRBP)):
            add(f"lcdrop{p}_{name}", algo, 1, lc_dropout=p / 100.0)

    add("rbp_resampled", ch.RBP, 1, resample_each_batch=True)
    add("rbp_sign_concordant", ch.RBP, 1, resample_each_batch=True, sign_concordant=True)
    add("srbp_abs_only", ch.SRBP, 1, abs_only_update=True)
    add("srbp_per_weight", ch.SRBP, 1, per_weight_random=True)
    return rows


def _jsonable_row(row: RowSpec):
    spec = row.channel
    m = spec.modifiers
    return {
        "arch": {
            "layer_sizes": list(MNIST_ARCH.layer_sizes),
            "activations": [str(a) for a in MNIST_ARCH.activations],
            "use_bias": MNIST_ARCH.use_bias,
        },
        "channel": {
            "algorithm": spec.algorithm,
            "use_fprime": m.use_fprime,
            "sparse": None if m.sparse is None else [m.sparse.n, m.sparse.rescale],
            "resample_each_batch": m.resample_each_batch,
            "sign_concordant": m.sign_concordant,
            "sign_only_update": m.sign_only_update,
            "abs_only_update": m.abs_only_update,
            "per_weight_random": m.per_weight_random,
            "error_quant": None if m.error_quant is None else [m.error_quant.bits, m.error_quant.alpha],
            "update_quant": None if m.update_quant is None else [m.update_quant.bits, m.update_quant.alpha],
            "lc_dropout": m.lc_dropout,
            "nonzero_mean": m.nonzero_mean,
        },
        "train": {
            "lr0": row.config.lr0,
            "decay": row.config.decay,
            "momentum": row.config.momentum,
            "batch_size": row.config.batch_size,
            "epochs": row.config.epochs,
            "loss": row.config.loss,
            "seed": row.config.seed,
            "repeats": row.config.repeats,
        },
    }


def row_key(row: RowSpec):
    blob = json.dumps(_jsonable_row(row), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def row_cache_path(row: RowSpec, directory=None):
    return os.path.join(directory or cache_dir(), f"{row.name}.json")


def load_row_record(row: RowSpec, directory=None):
    path = row_cache_path(row, directory)
    if not os.path.exists(path):
        return None
    with open(path) as f:
        record = json.load(f)
    if record.get("key") != row_key(row):
        return None  # configuration changed; stale record
    return record


def _run_one_repeat(args):
    name, repeat, epochs = args
    row = mnist_rows(epochs=epochs)[name]
    train, test = load_mnist()
    result = run_single(MNIST_ARCH, row.channel, row.config, train, test, repeat=repeat)
    return name, repeat, {
        "train": [r.train_accuracy for r in result.rows],
        "test": [r.test_accuracy for r in result.rows],
        "loss": [r.train_loss for r in result.rows],
        "wall_seconds": sum(r.wall_seconds for r in result.rows),
    }


def summarize_record_curves(curves):
    finals = np.array([c["test"][-1] for c in curves])
    best_train = np.array([max(c["train"]) for c in curves])
    return {
        "final_test_acc_mean": float(finals.mean()),
        "final_test_acc_std": float(finals.std(ddof=1)) if len(finals) > 1 else 0.0,
        "final_train_acc_mean": float(np.mean([c["train"][-1] for c in curves])),
        "best_train_acc_mean": float(best_train.mean()),
        "per_seed_final_test_acc": [float(v) for v in finals],
    }


def save_row_record(row: RowSpec, curves, directory=None):
    directory = directory or cache_dir()
    os.makedirs(directory, exist_ok=True)
    record = {
        "name": row.name,
        "key": row_key(row),
        "config": _jsonable_row(row),
        "summary": summarize_record_curves(curves),
        "curves": curves,
    }
    path = row_cache_path(row, directory)
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(record, f)
    os.replace(tmp, path)
    return record


def ensure_rows(names, jobs=1, epochs=100, directory=None, verbose=False):
    """Return cached records for the named rows, computing any that are missing."""
    rows = mnist_rows(epochs=epochs)
    records = {}
    pending = []
    for name in names:
        row = rows[name]
        record = load_row_record(row, directory)
        if record is not None:
            records[name] = record
        else:
            pending.extend((name, r, epochs) for r in range(row.config.repeats))
    if not pending:
        return records

    partial = {}

    def collect(name, repeat, curve):
        partial.setdefault(name, {})[repeat] = curve
        row = rows[name]
        if len(partial[name]) == row.config.repeats:
            curves = [partial[name][r] for r in range(row.config.repeats)]
            records[name] = save_row_record(row, curves, directory)
            if verbose:
                s = records[name]["summary"]
                print(f"[ablations] {name}: final test "
                      f"{100 * s['final_test_acc_mean']:.2f}%", flush=True)

    if jobs <= 1:
        for args in pending:
            collect(*_run_one_repeat(args))
    else:
        import multiprocessing as mp

        ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            for name, repeat, curve in pool.map(_run_one_repeat, pending):
                collect(name, repeat, curve)
    return records
