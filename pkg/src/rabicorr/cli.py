"""``simulate`` command line entry point.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 partial sweep (some grid points invalid; their cells are marked).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from rabicorr import __version__
from rabicorr.config import SCHEMA_VERSION, ConfigError, RunConfig, parse_config
from rabicorr.hierarchy import (
    build_hierarchy,
    initial_moments_from_state,
    integrate_hierarchy,
    spectrum_scaling,
)
from rabicorr.lindblad import IntegrationError, TimeSeries, simulate, time_grid
from rabicorr.model import RabiParams
from rabicorr.operators import observable_name
from rabicorr.regimes import (
    classify_regime,
    compute_delta,
    paired_runs,
    sweep_regime_map,
)

log = logging.getLogger("rabicorr")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3


def fmt(x) -> str:
    """17 significant digits; NaN/inf spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def write_csv(path: Path, columns: dict[str, np.ndarray], digest: str,
              comments: list[str] = ()) -> None:
    names = list(columns)
    data = [np.asarray(columns[c]) for c in names]
    lines = [f"# rabicorr {__version__} schema_version={SCHEMA_VERSION}",
             f"# manifest_sha256: {digest}"]
    lines += [f"# {c}" for c in comments]
    lines.append(",".join(names))
    for row in zip(*data):
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, payload: dict, digest: str) -> None:
    body = {"schema_version": SCHEMA_VERSION, "manifest_sha256": digest, **payload}
    path.write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n")


def _series_columns(series: TimeSeries, orders, suffix: str = "") -> dict[str, np.ndarray]:
    cols = {}
    for n in orders:
        cols[f"re_g{n}{suffix}"] = series.corr(n)
        name = observable_name(n, "population")
        if name in series.observables:
            cols[f"re_g{n}_ee{suffix}"] = np.real(series[name])
    return cols


def _with_time(series: TimeSeries, orders) -> dict[str, np.ndarray]:
    cols = {"t": series.times}
    for n in orders:
        cols[f"nt_g{n}"] = n * series.times
    return cols


def _monitor_summary(*series: TimeSeries) -> dict:
    out = {}
    for s in series:
        key = f"{s.metadata.get('solver')}:{s.metadata.get('model_level')}"
        out[key] = s.metadata.get("monitors", {})
    return out


def run_timeseries(cfg: RunConfig, out: Path, digest: str) -> tuple[int, dict]:
    levels = ["rwa", "full"] if cfg.model_level == "both" else [cfg.model_level]
    p0 = cfg.params(levels[0])
    t = time_grid(p0 if len(levels) == 1 else cfg.params("full"), cfg.rates,
                  cfg.initial_state, cfg.solver)
    runs = {lvl: simulate(cfg.params(lvl), cfg.rates, cfg.initial_state, cfg.dims,
                          cfg.orders, t, cfg.solver) for lvl in levels}
    cols = _with_time(next(iter(runs.values())), cfg.orders)
    for lvl, series in runs.items():
        cols.update(_series_columns(series, cfg.orders, f"_{lvl}" if len(runs) > 1 else ""))
    write_csv(out / "timeseries.csv", cols, digest,
              [f"model_level={cfg.model_level}", "nt_gN = N * t (time rescaled by order)"])
    return EXIT_OK, _monitor_summary(*runs.values())


def run_hierarchy(cfg: RunConfig, out: Path, digest: str) -> tuple[int, dict]:
    params = cfg.params("rwa")
    t = time_grid(params, cfg.rates, cfg.initial_state, cfg.solver)
    h = build_hierarchy(params, cfg.rates, cfg.n_cut)
    x0 = initial_moments_from_state(cfg.initial_state, cfg.n_cut)
    s = cfg.solver
    series = integrate_hierarchy(h, x0, t, tol=s.rtol, atol=s.atol,
                                 method=s.method)
    cols = _with_time(series, cfg.orders)
    cols.update(_series_columns(series, cfg.orders))
    write_csv(out / "hierarchy.csv", cols, digest, [f"n_cut={cfg.n_cut}"])
    return EXIT_OK, _monitor_summary(series)


def run_spectrum(cfg: RunConfig, out: Path, digest: str) -> tuple[int, dict]:
    spec = cfg.tree["spectrum"]
    res = spectrum_scaling(cfg.params("rwa"), cfg.rates, spec["orders"], spec["reduction"])
    fits = {
        "frequency_exponent": res.frequency_fit.exponent,
        "frequency_exponent_stderr": res.frequency_fit.exponent_stderr,
        "frequency_prefactor": res.frequency_fit.prefactor,
        "relaxation_exponent": res.relaxation_fit.exponent,
        "relaxation_exponent_stderr": res.relaxation_fit.exponent_stderr,
        "relaxation_prefactor": res.relaxation_fit.prefactor,
        "relaxation_prefactor_stderr": res.relaxation_fit.prefactor_stderr,
    }
    write_csv(out / "spectrum.csv",
              {"n": res.orders, "re_lambda_max": -res.relaxations,
               "im_lambda_max": res.frequencies},
              digest, [f"{k}={fmt(v)}" for k, v in fits.items()])
    write_json(out / "spectrum_fit.json", {"reduction": spec["reduction"], **fits}, digest)
    return EXIT_OK, {}


def run_delta(cfg: RunConfig, out: Path, digest: str) -> tuple[int, dict]:
    coupling = cfg.tree["params"]["coupling"]
    t = time_grid(cfg.params("full"), cfg.rates, cfg.initial_state, cfg.solver)
    full, rwa = paired_runs(coupling, cfg.rates, cfg.initial_state, cfg.dims, cfg.orders,
                            cfg.solver, t)
    threshold = cfg.tree["sweep"]["delta_threshold"]
    deltas = [compute_delta(full, rwa, n) for n in cfg.orders]
    labels = [classify_regime(RabiParams(coupling), cfg.rates, n, d, threshold)
              for n, d in zip(cfg.orders, deltas)]
    write_csv(out / "delta.csv",
              {"n": np.array(cfg.orders), "delta": np.array(deltas),
               "ln_delta": np.array([math.log(d) if d > 0 else math.nan for d in deltas]),
               "label": np.array(labels, dtype=object)},
              digest, [f"coupling={fmt(coupling)}", f"delta_threshold={fmt(threshold)}"])
    return EXIT_OK, _monitor_summary(full, rwa)


def run_sweep(cfg: RunConfig, out: Path, digest: str, threads: int) -> tuple[int, dict]:
    grid = sweep_regime_map(cfg.sweep_config(workers=threads))
    write_json(out / "grid.json", grid.to_dict(), digest)
    ns, ws = np.meshgrid(grid.n_values, grid.omega_values, indexing="ij")
    write_csv(out / "delta_grid.csv",
              {"n": ns.ravel(), "omega": ws.ravel(), "delta": grid.delta.ravel(),
               "ln_delta": grid.ln_delta.ravel(),
               "label": grid.labels.ravel().astype(object),
               "valid": np.array(["1" if v else "0" for v in grid.valid.ravel()], dtype=object)},
              digest, [f"delta_threshold={fmt(grid.delta_threshold)}"])
    write_csv(out / "boundaries.csv",
              {"n": np.array(grid.n_values), "omega_sc": grid.omega_sc,
               "omega_usc": grid.omega_usc},
              digest, ["omega_sc = 2 gamma_a n^(2/3); omega_usc = Delta threshold contour"])
    summary = {"grid_errors": {str(k): v for k, v in grid.errors.items()},
               "monotonicity_violation": grid.monotonicity_violation()}
    return (EXIT_OK if grid.complete else EXIT_PARTIAL), summary


TASK_RUNNERS = {
    "timeseries": run_timeseries,
    "hierarchy": run_hierarchy,
    "spectrum_scaling": run_spectrum,
    "delta": run_delta,
}


def run(cfg: RunConfig, output: str | Path | None = None, threads: int = 1) -> int:
    """Execute the configured task and write manifest + outputs."""
    out = Path(output or cfg.tree["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    digest = cfg.digest()
    manifest = {"code_version": __version__, "config": cfg.to_dict()}
    try:
        if cfg.task == "sweep":
            status, monitors = run_sweep(cfg, out, digest, threads)
        else:
            status, monitors = TASK_RUNNERS[cfg.task](cfg, out, digest)
    except IntegrationError as exc:
        log.error("numerical failure: %s", exc)
        manifest["failure"] = str(exc)
        write_json(out / "manifest.json", manifest, digest)
        return EXIT_NUMERICAL
    manifest["invariant_monitors"] = monitors
    manifest["status"] = {EXIT_OK: "ok", EXIT_PARTIAL: "partial"}[status]
    write_json(out / "manifest.json", manifest, digest)
    return status


def _parse_overrides(items) -> dict:
    overrides = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError({"--override": f"expected key=value, got {item!r}"})
        overrides[key.strip()] = yaml.safe_load(value)
    return overrides


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="simulate", description="Dissipative quantum Rabi model correlation toolkit")
    parser.add_argument("config", help="YAML run configuration")
    parser.add_argument("--output", help="output directory (overrides output.directory)")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
    parser.add_argument("--override", action="append", metavar="KEY=VALUE",
                        help="override a config field by dotted path, e.g. params.coupling=0.1")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, _parse_overrides(args.override))
    except ConfigError as exc:
        for field_name, msg in exc.problems.items():
            print(f"config error: {field_name}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, args.output, max(1, args.threads))


if __name__ == "__main__":
    sys.exit(main())
