"""Command line entry point: ``depnet run | compare | kernel``.

Configuration comes from an optional flat ``key = value`` file (``--config``)
overridden by command line flags.  ``run`` writes ``samples.csv``,
``stats.csv``, one ``ecdf_r<row>_i<input>.csv`` per output marginal and a
``manifest.txt`` holding the fully resolved configuration; feeding that
manifest back through ``--config`` reproduces every output byte for byte.
Sample ``k`` always uses random stream ``k``, so the thread count never
changes the results.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .linalg import rank
from .metrics import ecdf, ks_distance, summary, write_ecdf_csv
from .network import Architecture, DataSet, forward, sample_prior_params
from .posterior import RejectionConfig, RejectionStats, sample_posterior_deep, sample_posterior_shallow
from .presets import PRESETS, preset_architecture, preset_data
from .rand import VARIANCE_MODELS, rng_stream
from .wide_limit import kernel_chain, limit_spec_for, sample_limit_posterior, sample_limit_prior

SAMPLERS = ("prior", "posterior", "limit-prior", "limit-posterior")
POSTERIOR_METHODS = ("auto", "exact", "rejection")
# stream index of the shared kernel chain when the limit chain is deterministic
KERNEL_STREAM = 2**32
# the heavy-tailed presets occasionally need far more than 1e6 output-layer proposals
PRESET_MAX_PROPOSALS = 10**8

# key -> (type, default); None means "taken from the preset"
FIELDS = {
    "preset": (str, "model1"),
    "width": (int, None),
    "depth": (int, None),
    "n_in": (int, None),
    "n_out": (int, None),
    "c_b": (float, None),
    "c_w": (float, None),
    "activation": (str, None),
    "variance_model": (str, None),
    "data": (str, ""),
    "sampler": (str, "posterior"),
    "posterior_method": (str, "auto"),
    "samples": (int, 100),
    "seed": (int, 0),
    "mc_n": (int, 100),
    "delta": (float, 0.99),
    "max_proposals": (int, None),
    "replica_reuse": (str, "per-sample"),
    "reweight_first_layer": (bool, True),
    "limit_mc": (int, 100_000),
    "poisson_eps": (float, 1e-6),
}


class ConfigError(ValueError):
    pass


def _parse_value(key, text):
    typ = FIELDS[key][0]
    text = text.strip()
    try:
        if typ is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if typ is int:
            return int(float(text)) if "e" in text.lower() else int(text)
        return typ(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {typ.__name__}") from None


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "version":
            continue
        if key not in FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _parse_value(key, value)
    return out


def resolve_config(overrides: dict) -> dict:
    """Fill defaults and preset values, then validate every field."""
    cfg = {k: d for k, (_, d) in FIELDS.items()}
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    preset = cfg["preset"]
    if preset != "custom" and preset not in PRESETS:
        raise ConfigError(f"preset: expected one of {sorted(PRESETS)} or 'custom', got {preset!r}")
    if preset != "custom":
        p = PRESETS[preset]
        for key, pkey in (("width", "width"), ("depth", "depth"), ("n_in", "n_in"), ("n_out", "n_out"),
                          ("c_b", "c_b"), ("c_w", "c_w"), ("activation", "activation"),
                          ("variance_model", "variance_model")):
            if cfg[key] is None:
                cfg[key] = p[pkey]
        if cfg["max_proposals"] is None:
            cfg["max_proposals"] = PRESET_MAX_PROPOSALS
    else:
        if not cfg["data"]:
            raise ConfigError("data: a custom model needs a data file")
        ds = DataSet.from_csv(cfg["data"])
        for key, val in (("n_in", ds.x.shape[0]), ("n_out", ds.y.shape[0])):
            if cfg[key] is None:
                cfg[key] = val
            elif cfg[key] != val:
                raise ConfigError(f"{key}: {cfg[key]} does not match the data ({val})")
        for key, val in (("width", None), ("depth", None)):
            if cfg[key] is None:
                raise ConfigError(f"{key}: required for a custom model")
        for key, val in (("c_b", 1.0), ("c_w", 1.0), ("activation", "relu"), ("variance_model", "fixed")):
            if cfg[key] is None:
                cfg[key] = val
        if cfg["max_proposals"] is None:
            cfg["max_proposals"] = 1_000_000

    checks = [
        ("width", cfg["width"] >= 1, "must be >= 1"),
        ("depth", cfg["depth"] >= 1, "must be >= 1"),
        ("n_in", cfg["n_in"] >= 1, "must be >= 1"),
        ("n_out", cfg["n_out"] >= 1, "must be >= 1"),
        ("c_b", cfg["c_b"] >= 0, "must be >= 0"),
        ("c_w", cfg["c_w"] > 0, "must be > 0"),
        ("activation", cfg["activation"] in ("relu", "identity"), "must be relu or identity"),
        ("variance_model", cfg["variance_model"] in VARIANCE_MODELS, f"must be one of {VARIANCE_MODELS}"),
        ("sampler", cfg["sampler"] in SAMPLERS, f"must be one of {SAMPLERS}"),
        ("posterior_method", cfg["posterior_method"] in POSTERIOR_METHODS, f"must be one of {POSTERIOR_METHODS}"),
        ("samples", cfg["samples"] >= 1, "must be >= 1"),
        ("seed", cfg["seed"] >= 0, "must be >= 0"),
        ("mc_n", cfg["mc_n"] >= 1, "must be >= 1"),
        ("delta", 0.5 < cfg["delta"] < 1.0, "must lie in (1/2, 1)"),
        ("max_proposals", cfg["max_proposals"] >= 1, "must be >= 1"),
        ("replica_reuse", cfg["replica_reuse"] in ("per-sample", "per-proposal"), "must be per-sample or per-proposal"),
        ("limit_mc", cfg["limit_mc"] >= 1, "must be >= 1"),
        ("poisson_eps", cfg["poisson_eps"] > 0, "must be > 0"),
    ]
    for key, ok, msg in checks:
        if not ok:
            raise ConfigError(f"{key}: {msg} (got {cfg[key]!r})")
    if cfg["posterior_method"] == "exact" and cfg["depth"] != 1:
        raise ConfigError("posterior_method: the exact sampler needs depth = 1")
    return cfg


def build_problem(cfg: dict):
    """Architecture and data set described by a resolved configuration."""
    widths = (cfg["n_in"],) + (cfg["width"],) * cfg["depth"] + (cfg["n_out"],)
    arch = Architecture(widths, cfg["c_b"], cfg["c_w"], cfg["activation"], cfg["variance_model"])
    ds = preset_data() if cfg["preset"] != "custom" else DataSet.from_csv(cfg["data"])
    if cfg["sampler"].startswith("limit") and rank(ds.x) < ds.d:
        raise ConfigError(f"data: the limit samplers need linearly independent inputs (rank {rank(ds.x)} < d = {ds.d})")
    return arch, ds


def write_manifest(path, cfg: dict) -> None:
    lines = [f"version = {__version__}"]
    lines += [f"{k} = {_format(cfg[k])}" for k in FIELDS]
    Path(path).write_text("\n".join(lines) + "\n")


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


_CTX = {}


def _init_worker(ctx):
    _CTX.clear()
    _CTX.update(ctx)


def _draw(index: int):
    """Sample ``index`` of the batch, on stream ``index``; returns (output, stats rows)."""
    cfg, arch, ds, kernel = _CTX["cfg"], _CTX["arch"], _CTX["ds"], _CTX["kernel"]
    rng = rng_stream(cfg["seed"], index)
    sampler = cfg["sampler"]
    stats = []
    if sampler == "prior":
        out = forward(sample_prior_params(rng, arch), ds.x, arch.activation)[-1]
    elif sampler == "posterior":
        method = cfg["posterior_method"]
        if method == "exact" or (method == "auto" and arch.depth == 1):
            info = sample_posterior_shallow(rng, arch, ds.x, ds.y, cfg["max_proposals"], return_info=True)
            out = info.sample
            stats.append(("joint", info.proposals, 1))
        else:
            rc = RejectionConfig(cfg["mc_n"], cfg["delta"], cfg["max_proposals"], cfg["replica_reuse"],
                                 cfg["reweight_first_layer"])
            out, st = sample_posterior_deep(rng, arch, ds.x, ds.y, rc)
            stats.extend((str(l), s.proposals, s.acceptances) for l, s in sorted(st.layers.items()))
    else:
        spec = limit_spec_for(arch, cfg["limit_mc"], cfg["poisson_eps"])
        if sampler == "limit-prior":
            out = sample_limit_prior(rng, ds.x, spec, arch.n_out, arch.c_b, arch.c_w, arch.activation, kernel=kernel)
        else:
            info = sample_limit_posterior(rng, ds.x, ds.y, spec, arch.c_b, arch.c_w, arch.activation,
                                          cfg["max_proposals"], return_info=True, kernel=kernel)
            out = info.sample
            stats.append(("kernel", info.proposals, 1))
    return np.asarray(out, dtype=float), stats


def run_batch(cfg: dict, threads: int = 1):
    """Draw the whole batch; returns ``(outputs (S, n_out, d), stats rows)``."""
    arch, ds = build_problem(cfg)
    kernel = None
    if cfg["sampler"].startswith("limit"):
        spec = limit_spec_for(arch, cfg["limit_mc"], cfg["poisson_eps"])
        if not spec.random:
            kernel = kernel_chain(rng_stream(cfg["seed"], KERNEL_STREAM), ds.x, spec, arch.c_b, arch.c_w,
                                  arch.activation).last
    ctx = {"cfg": cfg, "arch": arch, "ds": ds, "kernel": kernel}
    indices = range(cfg["samples"])
    if threads <= 1:
        _init_worker(ctx)
        results = [_draw(i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker, initargs=(ctx,)) as pool:
            results = list(pool.map(_draw, indices, chunksize=max(1, cfg["samples"] // (8 * threads))))
    outputs = np.stack([r[0] for r in results])
    totals = {}
    for _, rows in results:
        for layer, p, a in rows:
            tp, ta = totals.get(layer, (0, 0))
            totals[layer] = (tp + p, ta + a)
    return outputs, sorted(totals.items(), key=lambda kv: (not kv[0].isdigit(), kv[0].zfill(6)))


def write_samples(path, outputs: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_index", "output_row", "input_index", "value"])
        for s, z in enumerate(outputs):
            for r in range(z.shape[0]):
                for i in range(z.shape[1]):
                    w.writerow([s, r, i, repr(float(z[r, i]))])


def read_samples(path) -> np.ndarray:
    """Inverse of :func:`write_samples`: array of shape ``(S, n_out, d)``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        raise ValueError(f"{path}: no samples")
    idx = data[:, :3].astype(int)
    shape = tuple(idx.max(axis=0) + 1)
    out = np.full(shape, np.nan)
    out[idx[:, 0], idx[:, 1], idx[:, 2]] = data[:, 3]
    if np.isnan(out).any():
        raise ValueError(f"{path}: incomplete sample grid")
    return out


def cmd_run(cfg: dict, out: Path, threads: int) -> int:
    outputs, stats = run_batch(cfg, threads)
    out.mkdir(parents=True, exist_ok=True)
    write_samples(out / "samples.csv", outputs)
    with open(out / "stats.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer", "proposals", "acceptances"])
        w.writerows([layer, p, a] for layer, (p, a) in stats)
    for r in range(outputs.shape[1]):
        for i in range(outputs.shape[2]):
            write_ecdf_csv(out / f"ecdf_r{r}_i{i}.csv", ecdf(outputs[:, r, i]))
    write_manifest(out / "manifest.txt", cfg)
    print(f"wrote {outputs.shape[0]} samples to {out}")
    return 0


def compare_batches(a: np.ndarray, b: np.ndarray) -> list:
    if a.shape[1:] != b.shape[1:]:
        raise ValueError(f"batches have different output shapes {a.shape[1:]} and {b.shape[1:]}")
    rows = []
    for r in range(a.shape[1]):
        for i in range(a.shape[2]):
            sa, sb = summary(a[:, r, i]), summary(b[:, r, i])
            ks = ks_distance(a[:, r, i], b[:, r, i])
            rows.append([r, i, ks, sa.mean, sa.variance, sb.mean, sb.variance, a.shape[0], b.shape[0]])
    return rows


def cmd_compare(path_a, path_b, report: Path) -> int:
    rows = compare_batches(read_samples(path_a), read_samples(path_b))
    report.parent.mkdir(parents=True, exist_ok=True)
    with open(report, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["output_row", "input_index", "ks", "mean_a", "var_a", "mean_b", "var_b", "n_a", "n_b"])
        for row in rows:
            w.writerow([row[0], row[1]] + [repr(float(v)) for v in row[2:7]] + row[7:])
    for row in rows:
        print(f"row {row[0]} input {row[1]}: ks = {row[2]:.4f}")
    return 0


def cmd_kernel(cfg: dict, out: Path) -> int:
    arch, ds = build_problem({**cfg, "sampler": "limit-prior"})
    spec = limit_spec_for(arch, cfg["limit_mc"], cfg["poisson_eps"])
    chain = kernel_chain(rng_stream(cfg["seed"], KERNEL_STREAM), ds.x, spec, arch.c_b, arch.c_w, arch.activation)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "kernel.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer", "i", "j", "value", "mc_stderr"])
        for layer, (k, se) in enumerate(zip(chain.matrices, chain.stderr), 1):
            for i in range(k.shape[0]):
                for j in range(k.shape[1]):
                    w.writerow([layer, i, j, repr(float(k[i, j])), repr(float(se[i, j]))])
    write_manifest(out / "manifest.txt", cfg)
    print(f"wrote {len(chain.matrices)} kernels to {out / 'kernel.csv'}")
    return 0


def _default_threads() -> int:
    env = os.environ.get("DEPNET_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value file (a manifest works)")
    p.add_argument("--preset", help="model1, model2 or custom")
    p.add_argument("--width", type=int, help="hidden layer width n")
    p.add_argument("--depth", type=int, help="number of hidden layers L")
    p.add_argument("--n-in", dest="n_in", type=int)
    p.add_argument("--n-out", dest="n_out", type=int)
    p.add_argument("--c-b", dest="c_b", type=float)
    p.add_argument("--c-w", dest="c_w", type=float)
    p.add_argument("--activation", choices=("relu", "identity"))
    p.add_argument("--variance-model", dest="variance_model", choices=VARIANCE_MODELS)
    p.add_argument("--data", help="csv with columns x_1..x_n0, y_1..y_m (custom preset)")
    p.add_argument("--sampler", choices=SAMPLERS)
    p.add_argument("--posterior-method", dest="posterior_method", choices=POSTERIOR_METHODS)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--mc-n", dest="mc_n", type=int, help="replicas N of the acceptance estimator")
    p.add_argument("--max-proposals", dest="max_proposals", type=int)
    p.add_argument("--replica-reuse", dest="replica_reuse", choices=("per-sample", "per-proposal"))
    p.add_argument("--limit-mc", dest="limit_mc", type=int, help="Monte Carlo size M of the kernel step")
    p.add_argument("--poisson-eps", dest="poisson_eps", type=float)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, help="worker processes (default: $DEPNET_THREADS or all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"depnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_config_flags(sub.add_parser("run", help="sample a batch of network outputs"))
    _add_config_flags(sub.add_parser("kernel", help="write the kernel chain of the wide limit"))
    cmp_ = sub.add_parser("compare", help="per-marginal KS distances between two sample batches")
    cmp_.add_argument("batch_a")
    cmp_.add_argument("batch_b")
    cmp_.add_argument("--out", default="report.csv", help="report file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            return cmd_compare(args.batch_a, args.batch_b, Path(args.out))
        overrides = read_config_file(args.config) if args.config else {}
        overrides.update({k: getattr(args, k) for k in FIELDS if getattr(args, k, None) is not None})
        cfg = resolve_config(overrides)
        threads = args.threads if args.threads is not None else _default_threads()
        if threads < 1:
            raise ConfigError("threads: must be >= 1")
        if args.command == "kernel":
            return cmd_kernel(cfg, Path(args.out))
        return cmd_run(cfg, Path(args.out), threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, np.linalg.LinAlgError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
