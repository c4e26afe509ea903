"""Command-line orchestration: one subcommand per experiment.

Every experiment the package implements is reachable from here with no
hidden parameters.  Artifacts are CSV (default) or JSON; each one starts
with a metadata record holding the artifact version and the complete run
configuration, so any output file documents how to reproduce itself.
Floats are written at 17 significant digits and a rerun with the same
configuration and seed is byte-identical.

Exit codes: 0 success, 1 configuration error, 2 domain error (a parameter
outside its validated range, or too little data), 3 numerical failure.
"""

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import simulate
from .errors import BallPistonError, ParameterError
from .estimators import (_reference_masses, estimate_cond_mft, estimate_mft,
                         paper_energy_grid, relaxation_experiment)
from .geometry import GeometryParams, GeometrySummary, conditional_rate, \
    derive_geometry
from .kernel import (STABILITY_FACTOR, EnergyGridDensity, EnergyPair,
                     _rate_matrix, canonical_check, gillespie,
                     gillespie_ensemble, kernel_density, master_evolve,
                     moments)
from .sampling import hn_density, sample_flow, seeded_rng

OUTDIR_ENV = "BALLPISTON_OUTDIR"

# subcommands whose results depend on random draws; --seed is mandatory there
STOCHASTIC = frozenset({"mft", "cond-mft", "phi-scan", "relax", "gillespie"})

# delta values of the published scans: the cross-delta comparison triple
# plus the collapse-figure values below 0.2
PAPER_DELTAS = (0.325, 0.2, 0.175, 0.1, 0.05, 0.0125)

_MFT_ROW_ORDER = ("bp", "bw0", "bw1", "bw2", "bw3", "pw-", "pw+",
                  "bw", "pw", "total")


class ConfigError(Exception):
    """The command line or config file could not be turned into a run."""


@dataclass(frozen=True)
class RunConfig:
    """Validated description of one CLI run.

    `extras` carries the subcommand-specific settings as sorted (key, value)
    pairs so the whole configuration serializes deterministically into the
    artifact header.
    """

    subcommand: str
    rho: float
    deltas: tuple
    eps: tuple = ()
    n: int | None = None
    samples: int | None = None
    bins: int | None = None
    seed: int | None = None
    out: str | None = None
    fmt: str = "csv"
    threads: int = 1
    extras: tuple = field(default=())

    def __post_init__(self):
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.fmt!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.subcommand in STOCHASTIC and self.seed is None:
            raise ConfigError(f"--seed is mandatory for {self.subcommand}")

    def extra(self, key, default=None):
        for k, v in self.extras:
            if k == key:
                return v
        return default


# -- formatting ---------------------------------------------------------------


def _g17(x) -> str:
    return format(float(x), ".17g")


def _fmt_cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return _g17(v)


def _json_default(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _config_items(config: RunConfig) -> list:
    items = [("subcommand", config.subcommand), ("rho", _g17(config.rho)),
             ("delta", ",".join(_g17(d) for d in config.deltas))]
    if config.eps:
        items.append(("ep", ",".join(_g17(e) for e in config.eps)))
    for key in ("n", "samples", "bins", "seed"):
        val = getattr(config, key)
        if val is not None:
            items.append((key, str(val)))
    items.append(("threads", str(config.threads)))
    items.append(("format", config.fmt))
    if config.out is not None:
        items.append(("output", config.out))
    items.extend((k, _fmt_cell(v)) for k, v in config.extras)
    return items


def _header_lines(config: RunConfig) -> list:
    joined = " ".join(f"{k}={v}" for k, v in _config_items(config))
    return [f"# ballpiston {__version__}", f"# config: {joined}"]


def _resolve_out(out: str) -> Path:
    path = Path(out)
    if not path.is_absolute():
        base = os.environ.get(OUTDIR_ENV)
        if base:
            path = Path(base) / path
    return path


def _open_out(config: RunConfig, path=None):
    target = config.out if path is None else path
    if target is None:
        return nullcontext(sys.stdout)
    resolved = _resolve_out(str(target))
    if resolved.parent != Path("."):
        resolved.parent.mkdir(parents=True, exist_ok=True)
    return open(resolved, "w", encoding="utf-8", newline="")


def _emit_table(config, columns, rows, path=None, point=None):
    """Write one tabular artifact in the configured format.

    `point` adds a per-file key=value line for artifacts that belong to a
    single grid point of a larger scan (per-point histograms).
    """
    with _open_out(config, path) as fh:
        if config.fmt == "csv":
            for line in _header_lines(config):
                fh.write(line + "\n")
            if point:
                joined = " ".join(f"{k}={_fmt_cell(v)}" for k, v in point)
                fh.write(f"# point: {joined}\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt_cell(v) for v in row) + "\n")
        else:
            payload = {"artifact_version": __version__,
                       "config": dict(_config_items(config))}
            if point:
                payload["point"] = {k: v for k, v in point}
            payload["rows"] = [dict(zip(columns, row)) for row in rows]
            json.dump(payload, fh, indent=2, default=_json_default)
            fh.write("\n")


def _fan(work, npoints: int, threads: int) -> list:
    """Evaluate work(0..npoints-1), fanning across a thread pool.

    Each point owns its RNG stream (keyed by the point index), so the
    result is independent of the thread count and merges in input order.
    """
    if threads <= 1 or npoints <= 1:
        return [work(i) for i in range(npoints)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, range(npoints)))


# -- grids --------------------------------------------------------------------


def _parse_grid(text: str, paper: tuple, what: str) -> tuple:
    if text == "paper" and len(paper):
        return tuple(float(x) for x in paper)
    try:
        values = tuple(float(tok) for tok in text.split(",") if tok)
    except ValueError:
        raise ConfigError(f"{what} must be 'paper' or comma-separated "
                          f"numbers, got {text!r}") from None
    if not values:
        raise ConfigError(f"{what} is empty")
    return values


def _delta_list(ns) -> tuple:
    if ns.delta is not None and ns.delta_grid is not None:
        raise ConfigError("give either --delta or --delta-grid, not both")
    if ns.delta is not None:
        return _parse_grid(ns.delta, (), "--delta")
    if ns.delta_grid is not None:
        return _parse_grid(ns.delta_grid, PAPER_DELTAS, "--delta-grid")
    raise ConfigError("one of --delta or --delta-grid is required")


# -- subcommand runners -------------------------------------------------------


def _run_geometry(config: RunConfig) -> None:
    geom = derive_geometry(GeometryParams(config.rho, config.deltas[0]))
    fields = [f.name for f in GeometrySummary.__dataclass_fields__.values()]
    if config.fmt == "json":
        with _open_out(config) as fh:
            payload = {"artifact_version": __version__,
                       "config": dict(_config_items(config))}
            payload.update({name: getattr(geom, name) for name in fields})
            json.dump(payload, fh, indent=2, default=_json_default)
            fh.write("\n")
        return
    _emit_table(config, fields, [[getattr(geom, name) for name in fields]])


def _run_mft(config: RunConfig) -> None:
    params = GeometryParams(config.rho, config.deltas[0])
    rng = seeded_rng(config.seed)
    log = simulate(params, sample_flow(params, rng),
                   max_events=int(config.extra("events")))
    kinds = config.extra("kinds")
    wanted = tuple(kinds.split(",")) if kinds else None
    table = estimate_mft(log, kinds=wanted)
    rows = [[key, est.value, est.standard_error, est.sample_count]
            for key in _MFT_ROW_ORDER if (est := table.get(key)) is not None]
    _emit_table(config, ["kind", "mft", "mft_stderr", "count"], rows)


def _run_cond_mft(config: RunConfig) -> None:
    params = GeometryParams(config.rho, config.deltas[0])
    ep = config.eps[0]
    window = float(config.extra("window"))
    est = estimate_cond_mft(params, ep, window, config.samples,
                            seeded_rng(config.seed),
                            max_events=int(config.extra("max_events")))
    _emit_table(config, ["ep", "window", "mft", "mft_stderr", "samples"],
                [[ep, window, est.value, est.standard_error,
                  est.sample_count]])


def _run_phi_scan(config: RunConfig) -> None:
    window = float(config.extra("window"))
    max_events = int(config.extra("max_events"))
    points = [(d, e) for d in config.deltas for e in config.eps]

    def one(i):
        delta, ep = points[i]
        params = GeometryParams(config.rho, delta)
        geom = derive_geometry(params)
        est = estimate_cond_mft(params, ep, window, config.samples,
                                seeded_rng(config.seed, stream=i),
                                max_events=max_events)
        nu_emp = 1.0 / est.value
        nu_se = est.standard_error / est.value ** 2
        _, phi = conditional_rate(geom, ep)
        return [delta, ep, geom.tau_bp, nu_emp, nu_se, phi,
                geom.tau_bp * nu_emp]

    rows = _fan(one, len(points), config.threads)
    _emit_table(config, ["delta", "ep", "tau_bp_analytic", "nu_emp",
                         "nu_stderr", "phi_analytic", "phi_emp"], rows)


def _histogram_rows(hist) -> list:
    masses = _reference_masses(hist, hn_density(hist.ep, 1))
    total_mass = sum(float(m.sum()) for m in masses)
    rows = []
    densities = hist.densities()
    for b, sgn in enumerate(hist.sigmas):
        edges = hist.edges[b]
        widths = np.diff(edges)
        ref = masses[b] / (total_mass * widths)
        for j in range(widths.size):
            rows.append([int(sgn), edges[j], edges[j + 1],
                         int(hist.counts[b][j]), densities[b][j], ref[j]])
    return rows


def _run_relax(config: RunConfig) -> None:
    max_events = int(config.extra("max_events"))
    hist_dir = config.extra("histogram_dir")
    points = [(d, e) for d in config.deltas for e in config.eps]

    def one(i):
        delta, ep = points[i]
        params = GeometryParams(config.rho, delta)
        hist, kl = relaxation_experiment(
            params, ep, config.n, config.samples, config.bins,
            seeded_rng(config.seed, stream=2 * i), max_events=max_events)
        # the floor is what a stationary start scores at identical counts
        _, kl_floor = relaxation_experiment(
            params, ep, 1, config.samples, config.bins,
            seeded_rng(config.seed, stream=2 * i + 1), max_events=max_events)
        return hist, [delta, ep, config.n, kl, kl_floor, config.samples]

    results = _fan(one, len(points), config.threads)
    if hist_dir is not None:
        base = _resolve_out(hist_dir)
        base.mkdir(parents=True, exist_ok=True)
        for (delta, ep), (hist, _) in zip(points, results):
            name = f"hist_delta{delta:g}_ep{ep:g}_n{config.n}.csv"
            _emit_table(config,
                        ["branch", "bin_left", "bin_right", "count",
                         "density", "reference_density"],
                        _histogram_rows(hist), path=base / name,
                        point=[("delta", delta), ("ep", ep),
                               ("n", config.n)])
    _emit_table(config, ["delta", "ep", "n", "kl", "kl_floor", "samples"],
                [row for _, row in results])


def _run_kernel(config: RunConfig) -> None:
    geom = derive_geometry(GeometryParams(config.rho, config.deltas[0]))
    report = config.extra("report")
    if report == "canonical":
        beta = float(config.extra("beta"))
        vals = canonical_check(beta, geom)
        spread = (max(vals) - min(vals)) / vals[3]
        _emit_table(config, ["beta", "avg_f", "avg_j", "avg_h",
                             "closed_form", "max_rel_spread"],
                    [[beta, *vals, spread]])
        return
    pair = EnergyPair(float(config.extra("eb")), float(config.extra("ep")))
    if report == "moments":
        f, j, h = moments(pair, geom)
        _emit_table(config, ["eb", "ep", "f", "j", "h"],
                    [[pair.eb, pair.ep, f, j, h]])
        return
    # density: cell midpoints of (0, eb), where W is finite
    points = int(config.extra("points"))
    if points < 1:
        raise ParameterError("points must be >= 1")
    ep_out = pair.eb * (np.arange(points) + 0.5) / points
    w = kernel_density(pair, ep_out, geom)
    _emit_table(config, ["ep_out", "w"],
                [[x, wi] for x, wi in zip(ep_out, w)])


def _run_gillespie(config: RunConfig) -> None:
    geom = derive_geometry(GeometryParams(config.rho, config.deltas[0]))
    pair = EnergyPair(float(config.extra("eb")), float(config.extra("ep")))
    tmax = float(config.extra("tmax"))
    paths = int(config.extra("paths"))
    rng = seeded_rng(config.seed)
    if paths == 1:
        log = gillespie(pair, tmax, geom, rng)
        eps = log.ep_series()
        rows = zip(log.times, log.zetas, pair.etotal - eps, eps)
        _emit_table(config, ["t", "zeta", "eb", "ep"], list(rows))
        return
    finals = gillespie_ensemble(pair, tmax, geom, rng, paths)
    _emit_table(config, ["path", "ep_final"], list(enumerate(finals)))


def _run_master(config: RunConfig) -> None:
    geom = derive_geometry(GeometryParams(config.rho, config.deltas[0]))
    etotal = float(config.extra("etotal"))
    cells = int(config.extra("cells"))
    tfin = float(config.extra("tfin"))
    if tfin <= 0.0:
        raise ParameterError(f"tfin must be positive, got {tfin}")
    if config.extra("init") == "point":
        p0 = EnergyGridDensity.point_mass(etotal, cells, config.eps[0])
    else:
        p0 = EnergyGridDensity.stationary(etotal, cells)
    dt = config.extra("dt")
    if dt is None:
        # stay a factor 5 inside the stability bound of the explicit stepper
        pref = geom.area_bp / geom.gamma_volume
        outflow = _rate_matrix(p0.edges, pref).sum(axis=1).max()
        dt = 0.2 * STABILITY_FACTOR / outflow
    steps = max(1, math.ceil(tfin / float(dt)))
    out = master_evolve(p0, tfin / steps, steps, geom)
    rows = [[out.edges[i], out.edges[i + 1], out.probs[i]]
            for i in range(out.cells)]
    _emit_table(config, ["cell_left", "cell_right", "probability"], rows)


_RUNNERS = {
    "geometry": _run_geometry,
    "mft": _run_mft,
    "cond-mft": _run_cond_mft,
    "phi-scan": _run_phi_scan,
    "relax": _run_relax,
    "kernel": _run_kernel,
    "gillespie": _run_gillespie,
    "master": _run_master,
}


# -- argument parsing ---------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the artifact contract
    # reserves 2 for domain errors, so parse failures raise instead
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise ConfigError(message)


def _add_common(p, *, delta_grid=False, seed=True, threads=False):
    p.add_argument("--rho", type=float, required=True,
                   help="arc radius of the cell")
    if delta_grid:
        p.add_argument("--delta", help="comma-separated slot half-gaps")
        p.add_argument("--delta-grid",
                       help="'paper' or comma-separated slot half-gaps")
    else:
        p.add_argument("--delta", type=float, required=True,
                       help="slot half-gap")
    if seed:
        p.add_argument("--seed", type=int, help="RNG seed")
    if threads:
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads; output independent of the count")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-o", "--output", help="output path (default stdout); "
                   f"relative paths resolve under ${OUTDIR_ENV} if set")
    p.add_argument("--config", help="key=value file with the same keys as "
                   "the flags; explicit flags take precedence")


def _build_parser() -> _Parser:
    parser = _Parser(prog="ballpiston",
                     description="Ball-piston billiard experiments")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("geometry", help="dump the derived cell measures")
    _add_common(p, seed=False)

    p = sub.add_parser("mft", help="equilibrium mean free times per face")
    _add_common(p)
    p.add_argument("--events", type=int, default=1_000_000,
                   help="collision events to simulate")
    p.add_argument("--kinds", help="comma-separated event kinds to require")

    p = sub.add_parser("cond-mft",
                       help="mean return time at fixed piston energy")
    _add_common(p)
    p.add_argument("--ep", type=float, required=True)
    p.add_argument("--window", type=float, default=0.0)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--max-events", type=int, default=50_000_000)

    p = sub.add_parser("phi-scan",
                       help="rate-collapse scan over (delta, ep) grids")
    _add_common(p, delta_grid=True, threads=True)
    p.add_argument("--ep-grid", default="paper",
                   help="'paper' or comma-separated energies")
    p.add_argument("--window", type=float, default=0.0)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--max-events", type=int, default=50_000_000)

    p = sub.add_parser("relax",
                       help="KL divergence of first-hit angles from "
                            "the stationary law")
    _add_common(p, delta_grid=True, threads=True)
    p.add_argument("--ep-grid", required=True,
                   help="comma-separated energies")
    p.add_argument("--n", type=int, default=0,
                   help="launch-density exponent")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--bins", type=int, default=1_000)
    p.add_argument("--max-events", type=int, default=50_000_000)
    p.add_argument("--histogram-dir",
                   help="also write one per-point histogram CSV here")

    p = sub.add_parser("kernel",
                       help="energy-exchange kernel values and checks")
    _add_common(p, seed=False)
    p.add_argument("--report", choices=("canonical", "moments", "density"),
                   required=True)
    p.add_argument("--beta", type=float, help="inverse temperature "
                   "(canonical report)")
    p.add_argument("--eb", type=float, help="ball energy")
    p.add_argument("--ep", type=float, help="piston energy")
    p.add_argument("--points", type=int, default=512,
                   help="density report grid size")

    p = sub.add_parser("gillespie", help="jump-process simulation")
    _add_common(p)
    p.add_argument("--eb", type=float, required=True)
    p.add_argument("--ep", type=float, required=True)
    p.add_argument("--tmax", type=float, required=True)
    p.add_argument("--paths", type=int, default=1,
                   help="1 writes the jump log; more writes final energies")

    p = sub.add_parser("master", help="grid master-equation evolution")
    _add_common(p, seed=False)
    p.add_argument("--cells", type=int, default=200)
    p.add_argument("--etotal", type=float, default=0.5)
    p.add_argument("--tfin", type=float, required=True)
    p.add_argument("--dt", type=float,
                   help="Euler step (default: a fifth of the stability bound)")
    p.add_argument("--init", choices=("stationary", "point"),
                   default="stationary")
    p.add_argument("--ep", type=float,
                   help="piston energy of the point initial condition")
    return parser


def _apply_config_file(argv: list) -> list:
    """Splice config-file entries in as flags, before the explicit ones."""
    path = None
    rest = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok == "--config":
            if i + 1 >= len(argv):
                raise ConfigError("--config requires a path")
            path = argv[i + 1]
            i += 2
            continue
        if tok.startswith("--config="):
            path = tok.split("=", 1)[1]
            i += 1
            continue
        rest.append(tok)
        i += 1
    if path is None:
        return argv
    if not rest or rest[0].startswith("-"):
        raise ConfigError("--config requires a subcommand on the command line")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    injected = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        injected += [f"--{key.strip()}", value.strip()]
    return [rest[0], *injected, *rest[1:]]


def _build_config(argv) -> RunConfig:
    ns = _build_parser().parse_args(_apply_config_file(list(argv)))
    sc = ns.subcommand
    deltas = _delta_list(ns) if hasattr(ns, "delta_grid") else (ns.delta,)
    eps = ()
    extras = []
    if sc in ("phi-scan", "relax"):
        eps = _parse_grid(ns.ep_grid, paper_energy_grid(), "--ep-grid")
        extras.append(("max_events", ns.max_events))
        if sc == "phi-scan":
            extras.append(("window", ns.window))
        elif ns.histogram_dir is not None:
            extras.append(("histogram_dir", ns.histogram_dir))
    elif sc == "cond-mft":
        eps = (ns.ep,)
        extras += [("window", ns.window), ("max_events", ns.max_events)]
    elif sc == "mft":
        extras.append(("events", ns.events))
        if ns.kinds is not None:
            extras.append(("kinds", ns.kinds))
    elif sc == "kernel":
        extras.append(("report", ns.report))
        if ns.report == "canonical":
            if ns.beta is None:
                raise ConfigError("--report canonical requires --beta")
            extras.append(("beta", ns.beta))
        else:
            if ns.eb is None or ns.ep is None:
                raise ConfigError(f"--report {ns.report} requires "
                                  "--eb and --ep")
            extras += [("eb", ns.eb), ("ep", ns.ep)]
            if ns.report == "density":
                extras.append(("points", ns.points))
    elif sc == "gillespie":
        extras += [("eb", ns.eb), ("ep", ns.ep), ("tmax", ns.tmax),
                   ("paths", ns.paths)]
    elif sc == "master":
        if ns.init == "point" and ns.ep is None:
            raise ConfigError("--init point requires --ep")
        extras += [("cells", ns.cells), ("etotal", ns.etotal),
                   ("tfin", ns.tfin), ("init", ns.init)]
        if ns.dt is not None:
            extras.append(("dt", ns.dt))
        if ns.ep is not None:
            eps = (ns.ep,)
    return RunConfig(subcommand=sc, rho=ns.rho, deltas=deltas, eps=eps,
                     n=getattr(ns, "n", None),
                     samples=getattr(ns, "samples", None),
                     bins=getattr(ns, "bins", None),
                     seed=getattr(ns, "seed", None),
                     out=ns.output, fmt=ns.format,
                     threads=getattr(ns, "threads", 1),
                     extras=tuple(sorted(extras)))


def main(argv=None) -> int:
    try:
        config = _build_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"ballpiston: config error: {exc}", file=sys.stderr)
        return 1
    try:
        _RUNNERS[config.subcommand](config)
    except BallPistonError as exc:
        print(f"ballpiston: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ValueError) else 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
