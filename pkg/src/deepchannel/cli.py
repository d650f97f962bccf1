"""Command-line surface: train, sweep, dynamics, field, complexity.

Configs are single JSON documents with a "schema": 1 marker; unknown keys
are rejected everywhere before any compute starts. Every output file
embeds the resolved config (JSON summaries directly, CSVs in a leading
comment line), so any artifact can be reproduced from itself.

Exit codes: 0 success, 1 config error, 2 data error, 3 numeric divergence
where convergence was asserted.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import channel as ch
from . import data as dat
from . import train as tr
from .dynamics import (
    A111,
    A1111,
    Chain,
    CompressiveAN1N,
    ExpansiveA1N1,
    GeneralDeepLinear,
    GeneralThreeLayer,
    PowerA111,
    integrate,
    monitor_general3,
    predict_a111,
    predict_a1111,
    predict_a1N1,
    predict_autoencoder_N1N,
    predict_chain,
    predict_power_a111,
    vector_field,
)
from .linalg import RNG_ALGORITHM_ID, SeededRng
from .net import Architecture, count_bp_ops, count_srbp_ops, parse_activation

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


def _take(mapping, where, required=(), optional=()):
    """Pop known keys; reject unknown ones."""
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where} must be an object")
    out = {}
    remaining = dict(mapping)
    for key in required:
        if key not in remaining:
            raise ConfigError(f"{where}: missing required key {key!r}")
        out[key] = remaining.pop(key)
    for key in optional:
        if key in remaining:
            out[key] = remaining.pop(key)
    if remaining:
        raise ConfigError(f"{where}: unknown key(s) {sorted(remaining)}")
    return out


def load_config(path):
    try:
        with open(path) as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path} is not valid JSON: {err}")
    if not isinstance(raw, dict) or raw.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f'{path}: expected "schema": {SCHEMA_VERSION}')
    return raw


def parse_architecture(section):
    fields = _take(section, "architecture", required=("layer_sizes", "activations"),
                   optional=("use_bias",))
    try:
        activations = tuple(parse_activation(a) for a in fields["activations"])
        return Architecture(
            tuple(fields["layer_sizes"]), activations, bool(fields.get("use_bias", True))
        )
    except (ValueError, TypeError) as err:
        raise ConfigError(f"architecture: {err}")


def parse_channel(section):
    fields = _take(section, "channel", required=("algorithm",), optional=("modifiers",))
    mods_raw = _take(
        fields.get("modifiers", {}), "channel.modifiers",
        optional=(
            "use_fprime", "sparse", "resample_each_batch", "sign_concordant",
            "sign_only_update", "abs_only_update", "per_weight_random",
            "error_quant", "update_quant", "lc_dropout", "nonzero_mean",
        ),
    )
    try:
        if "sparse" in mods_raw and mods_raw["sparse"] is not None:
            sp = _take(mods_raw["sparse"], "sparse", required=("n",), optional=("rescale",))
            mods_raw["sparse"] = ch.SparseSpec(float(sp["n"]), bool(sp.get("rescale", False)))
        for quant_key, default_alpha in (
            ("error_quant", ch.DEFAULT_ERROR_QUANT_ALPHA),
            ("update_quant", ch.DEFAULT_UPDATE_QUANT_ALPHA),
        ):
            if quant_key in mods_raw and mods_raw[quant_key] is not None:
                q = _take(mods_raw[quant_key], quant_key, required=("bits",), optional=("alpha",))
                mods_raw[quant_key] = ch.QuantSpec(
                    int(q["bits"]), float(q.get("alpha", default_alpha))
                )
        return ch.ChannelSpec(str(fields["algorithm"]), ch.ChannelModifiers(**mods_raw))
    except (ValueError, TypeError) as err:
        raise ConfigError(f"channel: {err}")


def parse_train(section, seed_override=None):
    fields = _take(
        section, "train",
        optional=("lr0", "decay", "momentum", "batch_size", "epochs", "loss",
                  "seed", "repeats", "freeze_layers"),
    )
    if seed_override is not None:
        fields["seed"] = seed_override
    try:
        return tr.TrainConfig(**fields)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"train: {err}")


def load_data(section, rng_seed=0):
    kind = section.get("kind")
    if kind == "idx":
        fields = _take(
            section, "data", required=("kind", "train_images", "train_labels"),
            optional=("test_images", "test_labels"),
        )
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if key in fields and not os.path.exists(fields[key]):
                raise dat.DataError(f"data file not found: {fields[key]}")
        train = dat.load_idx(fields["train_images"], fields["train_labels"])
        test = None
        if "test_images" in fields:
            if "test_labels" not in fields:
                raise ConfigError("data: test_images without test_labels")
            test = dat.load_idx(fields["test_images"], fields["test_labels"])
        return train, test
    if kind == "blobs":
        fields = _take(
            section, "data", required=("kind", "classes", "dim", "train_count"),
            optional=("test_count", "separation", "seed"),
        )
        rng = SeededRng(int(fields.get("seed", rng_seed)))
        sep = float(fields.get("separation", 3.0))

        def make(count, stream):
            x = stream.standard_normal((count, int(fields["dim"])))
            labels = np.arange(count) % int(fields["classes"])
            x[np.arange(count), labels % int(fields["dim"])] += sep
            t = np.zeros((count, int(fields["classes"])))
            t[np.arange(count), labels] = 1.0
            return dat.Dataset(x, t)

        train = make(int(fields["train_count"]), rng.spawn(0))
        test = make(int(fields.get("test_count", fields["train_count"])), rng.spawn(1))
        return train, test
    if kind == "synthetic_scalar":
        fields = _take(
            section, "data", required=("kind", "alpha", "beta", "count"), optional=("seed",)
        )
        rng = SeededRng(int(fields.get("seed", rng_seed)))
        spec = dat.MomentSpec(float(fields["alpha"]), float(fields["beta"]))
        return dat.synthetic_scalar(spec, int(fields["count"]), rng), None
    raise ConfigError(f"data: unknown kind {kind!r}")


def _atomic_write(path, write_fn):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as f:
        write_fn(f)
    os.replace(tmp, path)


def _write_csv_with_config(path, header, rows, config_echo):
    def write(f):
        f.write(f"# config: {json.dumps(config_echo, sort_keys=True)}\n")
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)

    _atomic_write(path, write)


def _metrics_rows(runs):
    out = []
    for run in runs:
        for row in run.rows:
            out.append([row.epoch, "train", f"{row.train_accuracy:.6f}",
                        f"{row.train_loss:.8f}", run.seed,
                        f"{row.wall_seconds:.3f}", f"{row.effective_lr:.10g}"])
            if not np.isnan(row.test_accuracy):
                out.append([row.epoch, "test", f"{row.test_accuracy:.6f}", "",
                            run.seed, f"{row.wall_seconds:.3f}", f"{row.effective_lr:.10g}"])
    return out


METRICS_HEADER = ["epoch", "split", "accuracy", "loss", "seed", "wall_seconds", "effective_lr"]


def cmd_train(args):
    raw = load_config(args.config)
    cfg = _take(raw, "config", required=("schema", "architecture", "channel", "train", "data"),
                optional=("name", "output_dir"))
    arch = parse_architecture(cfg["architecture"])
    spec = parse_channel(cfg["channel"])
    config = parse_train(cfg["train"], seed_override=args.seed)
    tr.check_loss_pairing(arch, config.loss)
    train_data, test_data = load_data(cfg["data"])
    out_dir = args.out or cfg.get("output_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    name = cfg.get("name", "experiment")

    echo = dict(raw)
    if args.seed is not None:
        echo.setdefault("train", {})
        echo["train"] = dict(echo["train"], seed=args.seed)
    result = _run_experiment_parallel(arch, spec, config, train_data, test_data, args.threads)

    metrics_path = os.path.join(out_dir, f"{name}_metrics.csv")
    _write_csv_with_config(metrics_path, METRICS_HEADER, _metrics_rows(result.runs), echo)
    summary = dict(result.summary)
    summary["config"] = echo
    summary["rng_algorithm"] = RNG_ALGORITHM_ID
    _atomic_write(os.path.join(out_dir, f"{name}_summary.json"),
                  lambda f: json.dump(summary, f, indent=2, sort_keys=True))
    if not args.no_plots:
        from .report import save_metrics_figure

        save_metrics_figure(os.path.join(out_dir, f"{name}_curves.png"), result.runs, name)
    mean = result.summary["final_test_acc_mean"]
    if mean is not None:
        print(f"{name}: final test accuracy {100 * mean:.2f}% "
              f"(sd {100 * result.summary['final_test_acc_std']:.2f}) over "
              f"{config.repeats} seed(s)")
    else:
        print(f"{name}: final train accuracy "
              f"{100 * result.summary['final_train_acc_mean']:.2f}%")
    return 0


def _run_experiment_parallel(arch, spec, config, train_data, test_data, threads):
    if threads <= 1 or config.repeats == 1:
        return tr.run_experiment(arch, spec, config, train_data, test_data)
    from concurrent.futures import ProcessPoolExecutor
    import multiprocessing as mp

    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
        futures = [
            pool.submit(tr.run_single, arch, spec, config, train_data, test_data, r)
            for r in range(config.repeats)
        ]
        runs = [f.result() for f in futures]
    return tr.ExperimentResult(runs=runs, summary=tr.summarize_runs(runs, config))


def _set_path(mapping, dotted, value):
    keys = dotted.split(".")
    node = mapping
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"sweep axis {dotted!r} crosses a non-object at {key!r}")
    node[keys[-1]] = value


def cmd_sweep(args):
    raw = load_config(args.config)
    axis = args.axis
    values = [json.loads(v) for v in args.values.split(",")] if args.values else []
    sweep_section = raw.pop("sweep", None)
    if sweep_section is not None:
        fields = _take(sweep_section, "sweep", required=("axis", "values"))
        axis = axis or fields["axis"]
        values = values or fields["values"]
    if not axis or not values:
        raise ConfigError("sweep needs an axis name and a non-empty list of values")
    out_dir = args.out or raw.get("output_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    name = raw.get("name", "sweep")
    table = []
    for value in values:
        point = json.loads(json.dumps(raw))  # deep copy
        _set_path(point, axis, value)
        point["name"] = f"{name}_{str(value).replace(' ', '')}"
        cfg = _take(dict(point), "config",
                    required=("schema", "architecture", "channel", "train", "data"),
                    optional=("name", "output_dir"))
        arch = parse_architecture(cfg["architecture"])
        spec = parse_channel(cfg["channel"])
        config = parse_train(cfg["train"], seed_override=args.seed)
        train_data, test_data = load_data(cfg["data"])
        result = _run_experiment_parallel(arch, spec, config, train_data, test_data, args.threads)
        _write_csv_with_config(
            os.path.join(out_dir, f"{point['name']}_metrics.csv"),
            METRICS_HEADER, _metrics_rows(result.runs), point,
        )
        summary = result.summary
        table.append([value, summary["final_test_acc_mean"], summary["final_test_acc_std"]])
        print(f"{name}: {axis}={value} -> "
              f"{100 * (summary['final_test_acc_mean'] or np.nan):.2f}% "
              f"(sd {100 * summary['final_test_acc_std']:.2f})")
    _write_csv_with_config(
        os.path.join(out_dir, f"{name}_table.csv"),
        [axis, "final_test_acc_mean", "final_test_acc_std"], table,
        dict(raw, sweep={"axis": axis, "values": values}),
    )
    if not args.no_plots:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        xs = np.arange(len(values))
        means = [100 * (row[1] or np.nan) for row in table]
        stds = [100 * row[2] for row in table]
        ax.errorbar(xs, means, yerr=stds, marker="o")
        ax.set_xticks(xs, [str(v) for v in values])
        ax.set_xlabel(axis)
        ax.set_ylabel("final test accuracy (%)")
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, f"{name}_table.png"), dpi=130)
        plt.close(fig)
    return 0


SCALAR_VARIANTS = ("a111", "a1111", "chain", "a1n1", "power")


def parse_system(section):
    fields = dict(section)
    variant = fields.pop("variant", None)
    mode = fields.pop("channel_mode", "random")
    try:
        if variant == "a111":
            f = _take(fields, "system", required=("c1", "alpha", "beta"))
            return A111(float(f["c1"]), float(f["alpha"]), float(f["beta"]), mode)
        if variant == "a1111":
            f = _take(fields, "system", required=("c1", "c2", "alpha", "beta"))
            return A1111(float(f["c1"]), float(f["c2"]), float(f["alpha"]), float(f["beta"]), mode)
        if variant == "chain":
            f = _take(fields, "system", required=("length", "c", "alpha", "beta"))
            return Chain(int(f["length"]), tuple(f["c"]), float(f["alpha"]), float(f["beta"]), mode)
        if variant == "a1n1":
            f = _take(fields, "system", required=("c", "alpha", "beta"))
            return ExpansiveA1N1(tuple(f["c"]), float(f["alpha"]), float(f["beta"]), mode)
        if variant == "an1n":
            f = _take(fields, "system", required=("c", "sigma_ii", "sigma_ti"))
            return CompressiveAN1N(
                tuple(f["c"]), np.asarray(f["sigma_ii"]), np.asarray(f["sigma_ti"]), mode
            )
        if variant == "general3":
            f = _take(fields, "system", required=("sizes", "c1", "sigma_ii", "sigma_ti"))
            return GeneralThreeLayer(
                tuple(f["sizes"]), np.asarray(f["c1"]),
                np.asarray(f["sigma_ii"]), np.asarray(f["sigma_ti"]), mode,
            )
        if variant == "deep_linear":
            f = _take(fields, "system",
                      required=("sizes", "cs", "sigma_ii", "sigma_ti"), optional=("transport",))
            return GeneralDeepLinear(
                tuple(f["sizes"]), [np.asarray(c) for c in f["cs"]],
                np.asarray(f["sigma_ii"]), np.asarray(f["sigma_ti"]),
                f.get("transport", "srbp"), mode,
            )
        if variant == "power":
            f = _take(fields, "system", required=("mu", "c1", "alpha", "beta"),
                      optional=("gamma", "delta", "with_fprime"))
            return PowerA111(
                float(f["mu"]), float(f["c1"]), float(f["alpha"]), float(f["beta"]),
                float(f.get("gamma", 0.0)), float(f.get("delta", 0.0)),
                bool(f.get("with_fprime", True)), mode,
            )
    except (ValueError, TypeError, KeyError) as err:
        raise ConfigError(f"system: {err}")
    raise ConfigError(f"system: unknown variant {variant!r}")


def predict_for(system, state0):
    """Closed-form prediction when the variant has one, else None."""
    from .dynamics.systems import RANDOM

    if getattr(system, "channel_mode", RANDOM) != RANDOM:
        return None
    state0 = np.asarray(state0, dtype=np.float64)
    try:
        if isinstance(system, A111):
            return predict_a111(state0[0], state0[1], system.c1, system.alpha, system.beta)
        if isinstance(system, A1111):
            return predict_a1111(state0, system.c1, system.c2, system.alpha, system.beta)
        if isinstance(system, Chain):
            return predict_chain(system.length, system.c, system.alpha, system.beta, state0)
        if isinstance(system, ExpansiveA1N1):
            n = system.width
            return predict_a1N1(
                state0[:n], state0[n:], np.asarray(system.c), system.alpha, system.beta
            )
        if isinstance(system, CompressiveAN1N):
            n = system.width
            identity = np.eye(n)
            if np.allclose(system.sigma_ii, identity) and np.allclose(system.sigma_ti, identity):
                return predict_autoencoder_N1N(state0[:n], state0[n:], np.asarray(system.c_arr))
            return None
        if isinstance(system, PowerA111) and system.with_fprime:
            return predict_power_a111(state0, system.mu, system.c1, system.alpha, system.beta)
    except ValueError:
        # parameters outside the closed-form theory (e.g. beta <= 0): the
        # integration still runs, there is just nothing to predict
        return None
    return None


def cmd_dynamics(args):
    raw = load_config(args.config)
    cfg = _take(raw, "config", required=("schema", "system", "state0", "integrate"),
                optional=("name", "output_dir"))
    system = parse_system(cfg["system"])
    state0 = np.asarray(cfg["state0"], dtype=np.float64)
    if state0.shape != (system.dim,):
        raise ConfigError(f"state0 must have length {system.dim}, got {state0.shape}")
    integ = _take(cfg["integrate"], "integrate", required=("dt", "t_max"),
                  optional=("record_every",))
    out_dir = args.out or cfg.get("output_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    name = cfg.get("name", "dynamics")

    monitors = {"residual": lambda t, s, sys: float(np.atleast_1d(sys.residual(s))[0])}
    if isinstance(system, GeneralThreeLayer):
        monitors.update(monitor_general3(system))
    trajectory = integrate(
        system, state0, float(integ["dt"]), float(integ["t_max"]),
        monitors=monitors, record_every=int(integ.get("record_every", 1)),
    )
    report = predict_for(system, state0)

    labels = system.labels()
    scalar_product = isinstance(system, (A111, A1111, Chain, ExpansiveA1N1, PowerA111))
    rows = []
    for i, t in enumerate(trajectory.times):
        row = [f"{t:.10g}"] + [f"{v:.12g}" for v in trajectory.states[i]]
        row.append(f"{system.product(trajectory.states[i]):.12g}" if scalar_product else "")
        row.extend(f"{trajectory.monitors[m][i]:.6g}" for m in sorted(monitors))
        rows.append(row)
    header = ["t"] + labels + ["P"] + sorted(monitors)
    _write_csv_with_config(os.path.join(out_dir, f"{name}_trajectory.csv"), header, rows, raw)

    agreement = None
    if report is not None and report.converged and not trajectory.diverged:
        agreement = float(np.max(np.abs(trajectory.endpoint - report.limit)))
    payload = {
        "config": raw,
        "rng_algorithm": RNG_ALGORITHM_ID,
        "converged": trajectory.converged,
        "diverged": trajectory.diverged,
        "final_time": trajectory.final_time,
        "endpoint": [float(v) for v in trajectory.endpoint],
        "final_residual": float(np.atleast_1d(system.residual(trajectory.endpoint))[0]),
        "prediction": None if report is None else report.to_jsonable(),
        "agreement_max_abs_gap": agreement,
    }
    _atomic_write(os.path.join(out_dir, f"{name}_report.json"),
                  lambda f: json.dump(payload, f, indent=2, sort_keys=True))
    if not args.no_plots:
        from .report import save_trajectory_figure

        product = (
            [system.product(s) for s in trajectory.states] if scalar_product else None
        )
        save_trajectory_figure(
            os.path.join(out_dir, f"{name}_trajectory.png"), trajectory, labels, name, product
        )
    if trajectory.diverged and (report is None or report.converged):
        raise DivergenceError(
            "integration diverged although convergence was asserted"
        )
    verdict = "diverged (as classified)" if trajectory.diverged else (
        f"agreement gap {agreement:.3e}" if agreement is not None else "no closed-form prediction"
    )
    print(f"{name}: endpoint at t={trajectory.final_time:g}; {verdict}")
    return 0


def cmd_field(args):
    raw = load_config(args.config)
    cfg = _take(raw, "config", required=("schema", "field"), optional=("name", "output_dir"))
    f = _take(cfg["field"], "field", required=("c1", "alpha", "beta", "a1", "a2"))
    for axis in ("a1", "a2"):
        if len(f[axis]) != 3:
            raise ConfigError(f"field.{axis} must be [lo, hi, count]")
    out_dir = args.out or cfg.get("output_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    name = cfg.get("name", "field")
    field = vector_field(
        float(f["c1"]), float(f["alpha"]), float(f["beta"]),
        (float(f["a1"][0]), float(f["a1"][1]), int(f["a1"][2])),
        (float(f["a2"][0]), float(f["a2"][1]), int(f["a2"][2])),
    )
    _write_csv_with_config(
        os.path.join(out_dir, f"{name}.csv"),
        ["kind", "a1", "a2", "da1", "da2", "sign_dP"], field.rows(), raw,
    )
    if not args.no_plots:
        from .report import save_field_figure

        save_field_figure(os.path.join(out_dir, f"{name}.png"), field, name)
    print(f"{name}: {field.a1.size} grid nodes written")
    return 0


def cmd_complexity(args):
    try:
        sizes = tuple(int(s) for s in args.arch.split(","))
        arch = Architecture(sizes, tuple(parse_activation("identity") for _ in sizes[1:]),
                            use_bias=False)
    except ValueError as err:
        raise ConfigError(f"architecture string: {err}")
    print(f"W={count_bp_ops(arch)} W'={count_srbp_ops(arch)}")
    return 0


def _global_flags(parser, suppress=False):
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--seed", type=int, help="override the config seed",
                        **(kw or {"default": None}))
    parser.add_argument("--out", help="override the output directory",
                        **(kw or {"default": None}))
    parser.add_argument("--threads", type=int, help="worker processes",
                        **(kw or {"default": 1}))
    parser.add_argument("--no-plots", action="store_true", help="skip PNG rendering",
                        **({"default": argparse.SUPPRESS} if suppress else {}))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="deepchannel",
        description="Learning-channel training experiments and their ODE dynamics",
    )
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        _global_flags(p, suppress=True)  # accepted before or after the subcommand
        p.set_defaults(fn=fn)
        return p

    p = add("train", cmd_train, "run one training experiment from a config")
    p.add_argument("config")

    p = add("sweep", cmd_sweep, "run one experiment per value along an axis")
    p.add_argument("config")
    p.add_argument("--axis", default=None,
                   help="dotted config path, e.g. channel.modifiers.lc_dropout")
    p.add_argument("--values", default=None, help="comma-separated JSON values")

    p = add("dynamics", cmd_dynamics, "integrate a learning-dynamics system and predict its limit")
    p.add_argument("config")

    p = add("field", cmd_field, "export the two-weight phase portrait")
    p.add_argument("config")

    p = add("complexity", cmd_complexity, "backward-channel operation counts for an architecture")
    p.add_argument("arch", help="comma-separated layer sizes, e.g. 784,100,10")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"error: config: {err}", file=sys.stderr)
        return 1
    except dat.DataError as err:
        print(f"error: data: {err}", file=sys.stderr)
        return 2
    except DivergenceError as err:
        print(f"error: divergence: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
