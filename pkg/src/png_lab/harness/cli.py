"""Command line entry points.

``png-lab <experiment> --config f.cfg --seed N --out dir/`` runs one experiment;
``png-lab run f.cfg`` takes the experiment name (and optionally the seed) from the
file; ``png-lab accept N`` evaluates one acceptance criterion. The ``lpp``,
``simulate``, ``multilayer`` and ``kernel`` tools are available both as subcommands
and as standalone scripts.

Exit codes: 0 success, 1 acceptance check failed, 2 configuration error, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .. import kernels
from ..geometry import hyperbola_point
from ..lpp import longest_chain, longest_chain_line_to_point, maximizer_path
from ..png_sim import droplet_cloud, multilayer_heights, simulate_droplet, simulate_flat, simulate_stationary
from ..sampling import read_cloud_csv, substream
from . import config as cfgmod
from .experiments import EXPERIMENTS
from .runner import ExperimentManifest, now, write_outputs

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class _ConfigFailure(Exception):
    pass


def _error(kind: str, exc: BaseException) -> None:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)


def _guard(fn, *args) -> int:
    try:
        return fn(*args)
    except (_ConfigFailure, cfgmod.ConfigError) as exc:
        _error("config", exc)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit code 3
        _error("runtime", exc)
        return EXIT_RUNTIME


# --- experiments -----------------------------------------------------------------


def run_experiment(name: str, raw: dict, seed: int, out, threads: int = 1, svg: bool = False) -> int:
    if name not in EXPERIMENTS:
        raise _ConfigFailure(f"unknown experiment {name!r}; known: {', '.join(sorted(EXPERIMENTS))}")
    exp = EXPERIMENTS[name]
    if "experiment" in raw and raw["experiment"] != name:
        raise _ConfigFailure(f"config is for experiment {raw['experiment']!r}, not {name!r}")
    cfg = cfgmod.build(exp.schema, raw, ignore=("experiment", "seed"))
    manifest = ExperimentManifest(name, cfgmod.as_dict(cfg), int(seed), started=now(), threads=threads)
    result = exp.run(cfg, int(seed), threads)
    manifest.finished = now()
    write_outputs(result, manifest, out, svg)
    print(f"{name}: wrote {Path(out) / 'results.csv'} ({result.main.rows} rows)")
    return EXIT_OK


def _load_raw(path) -> dict:
    return cfgmod.read_file(path) if path else {}


def _seed(raw: dict, seed) -> int:
    if seed is not None:
        return int(seed)
    if "seed" in raw:
        try:
            return int(raw["seed"])
        except ValueError as exc:
            raise _ConfigFailure(f"seed must be an integer, got {raw['seed']!r}") from exc
    raise _ConfigFailure("a seed is required (--seed or 'seed =' in the config)")


def _accept(n: int, threads: int) -> int:
    from .acceptance import run_criterion

    outcome = run_criterion(n, threads)
    for line in outcome.lines():
        print(line)
    return EXIT_OK if outcome.passed else EXIT_FAILED


# --- lpp ----------------------------------------------------------------------------


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(s) for s in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got {text!r}") from exc
    return a, b


def _add_lpp(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cloud", required=True, help="CSV with header u,v")
    p.add_argument("--source", type=_pair, default=(0.0, 0.0))
    p.add_argument("--target", type=_pair, required=True)
    p.add_argument("--line-to-point", action="store_true", help="start anywhere on u + v = 0")
    p.add_argument("--path", help="write the leftmost maximizer to this CSV (u,v)")


def _lpp(a) -> int:
    cloud = read_cloud_csv(a.cloud)
    source = None if a.line_to_point else a.source
    if a.path:
        res = maximizer_path(cloud, source, a.target)
        with open(a.path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "v"])
            for u, v in res.maximizer:
                w.writerow([f"{u:.17g}", f"{v:.17g}"])
    elif a.line_to_point:
        res = longest_chain_line_to_point(cloud, a.target)
    else:
        res = longest_chain(cloud, a.source, a.target)
    print(res.length)
    return EXIT_OK


# --- simulate -----------------------------------------------------------------------


def _read_columns(path, names) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return np.array([[float(r[n]) for n in names] for r in rows]).reshape(-1, len(names))
    except KeyError as exc:
        raise _ConfigFailure(f"{path}: missing column {exc}") from exc


def _add_simulate(p: argparse.ArgumentParser) -> None:
    p.add_argument("--geometry", choices=["droplet", "flat", "stationary"], required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--queries", required=True, help="CSV with header x,t")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--out", required=True)


def _simulate(a) -> int:
    q = _read_columns(a.queries, ["x", "t"])
    fn = {"droplet": simulate_droplet, "flat": simulate_flat, "stationary": simulate_stationary}[a.geometry]
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "x", "t", "h"])
        for i in range(a.trials):
            h = fn(a.T, q, substream(a.seed, i))
            for (x, t), hv in zip(q, h):
                w.writerow([i, f"{x:.17g}", f"{t:.17g}", int(hv)])
    return EXIT_OK


# --- multilayer -----------------------------------------------------------------------


def _add_multilayer(p: argparse.ArgumentParser) -> None:
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--angles", required=True, help="CSV with header theta")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--curve", choices=["level", "stated"], default="level")


def _multilayer(a) -> int:
    theta = _read_columns(a.angles, ["theta"])[:, 0]
    pts = [hyperbola_point(a.T, float(th), curve=a.curve).point for th in theta]
    x = np.array([p.x for p in pts])
    t = np.array([p.t for p in pts])
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "theta", "level_list"])
        for i in range(a.trials):
            cloud = droplet_cloud(float(t.max()), substream(a.seed, i), x, t)
            hs = multilayer_heights(cloud, x, t, a.depth)
            for k, th in enumerate(theta):
                w.writerow([i, f"{th:.17g}", ";".join(str(int(v)) for v in hs[:, k])])
    return EXIT_OK


# --- kernel ---------------------------------------------------------------------------


def _range(text: str, integer: bool):
    parts = text.split(":")
    try:
        vals = [float(s) for s in parts]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad range {text!r}") from exc
    if integer:
        if len(parts) != 2:
            raise argparse.ArgumentTypeError("integer range is 'lo:hi'")
        return np.arange(int(vals[0]), int(vals[1]) + 1)
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("real range is 'lo:hi:step'")
    lo, hi, step = vals
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)


def _add_kernel(p: argparse.ArgumentParser) -> None:
    sub = p.add_subparsers(dest="kernel_cmd", required=True)
    g = sub.add_parser("gap", help="CDF of h(0,T) from det(1 - B_T)")
    g.add_argument("--T", type=float, required=True)
    g.add_argument("--n-range", type=lambda s: _range(s, True), required=True)
    g.add_argument("--out")
    t = sub.add_parser("trace", help="Tr(B_T F_T) and its closed forms")
    t.add_argument("--T", type=float, required=True)
    t.add_argument("--M", type=float, default=2.0)
    e = sub.add_parser("edge", help="T^(1/3) J_[2T + s T^(1/3)](2T) on an s grid")
    e.add_argument("--T", type=float, required=True)
    e.add_argument("--s-range", type=lambda s: _range(s, False), required=True)
    e.add_argument("--out")


def _write_or_print(path, header, rows) -> None:
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path:
            fh.close()


def _kernel(a) -> int:
    if a.kernel_cmd == "gap":
        cdf = kernels.gap_cdf(a.T, a.n_range)
        _write_or_print(a.out, ["n", "cdf"], [[int(n), f"{c:.17g}"] for n, c in zip(a.n_range, cdf)])
    elif a.kernel_cmd == "trace":
        rep = kernels.trace_scan([a.T], a.M)[0]
        print(json.dumps({"T": a.T, "M": a.M, "trace_matrix": rep.trace_matrix, "trace_closed": rep.trace_closed,
                          "stated_closed": rep.stated_closed}))
    else:
        s, vals = kernels.edge_profile(a.T, a.s_range)
        _write_or_print(a.out, ["s", "value"], [[f"{x:.17g}", f"{v:.17g}"] for x, v in zip(s, vals)])
    return EXIT_OK


# --- parsers ----------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _error("config", _ConfigFailure(message))
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="png-lab", description="PNG growth experiments and tools")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    for name in sorted(EXPERIMENTS):
        e = sub.add_parser(name, help=f"run the {name} experiment")
        e.add_argument("--config", help="key = value file; defaults fill missing keys")
        e.add_argument("--seed", type=int)
        e.add_argument("--out", required=True)
        e.add_argument("--threads", type=int, default=1)
        e.add_argument("--svg", action="store_true")
    r = sub.add_parser("run", help="run the experiment named in a config file")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", required=True)
    r.add_argument("--threads", type=int, default=1)
    r.add_argument("--svg", action="store_true")
    a = sub.add_parser("accept", help="evaluate one acceptance criterion (1-15)")
    a.add_argument("criterion", type=int, choices=range(1, 16))
    a.add_argument("--threads", type=int, default=1)
    sub.add_parser("list", help="list experiments")
    _add_lpp(sub.add_parser("lpp", help="longest chain on a cloud file"))
    _add_simulate(sub.add_parser("simulate", help="seeded heights at query points"))
    _add_multilayer(sub.add_parser("multilayer", help="multilayer heights on the hyperbola"))
    _add_kernel(sub.add_parser("kernel", help="Bessel kernel tools"))
    return p


def _dispatch(a) -> int:
    if a.cmd == "list":
        print("\n".join(sorted(EXPERIMENTS)))
        return EXIT_OK
    if a.cmd == "accept":
        return _accept(a.criterion, a.threads)
    if a.cmd == "lpp":
        return _lpp(a)
    if a.cmd == "simulate":
        return _simulate(a)
    if a.cmd == "multilayer":
        return _multilayer(a)
    if a.cmd == "kernel":
        return _kernel(a)
    if a.cmd == "run":
        raw = _load_raw(a.config)
        if "experiment" not in raw:
            raise _ConfigFailure(f"{a.config}: missing 'experiment = <name>'")
        return run_experiment(raw["experiment"], raw, _seed(raw, a.seed), a.out, a.threads, a.svg)
    raw = _load_raw(a.config)
    return run_experiment(a.cmd, raw, _seed(raw, a.seed), a.out, a.threads, a.svg)


def _join_ranges(argv):
    # "--s-range -10:10:0.1" would otherwise be read as an option
    argv = list(sys.argv[1:] if argv is None else argv)
    out, i = [], 0
    while i < len(argv):
        if argv[i] in ("--s-range", "--n-range") and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    a = build_parser().parse_args(_join_ranges(argv))
    return _guard(_dispatch, a)


def _tool(name: str, add):
    def entry(argv=None) -> int:
        p = _Parser(prog=name)
        add(p)
        a = p.parse_args(_join_ranges(argv))
        a.cmd = name
        return _guard(_dispatch, a)

    return entry


lpp_main = _tool("lpp", _add_lpp)
simulate_main = _tool("simulate", _add_simulate)
multilayer_main = _tool("multilayer", _add_multilayer)
kernel_main = _tool("kernel", _add_kernel)


if __name__ == "__main__":
    sys.exit(main())
