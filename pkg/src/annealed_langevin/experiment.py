"""Method x T sweeps writing plot-ready CSV files.

Layout (one folder per T, labelled like ``T_01`` for 0.1)::

    <out>/gt_density.csv                                  d = 1
    <out>/T_<label>/KL_comparison.csv                     d <= 2
    <out>/T_<label>/histo_comparison_iter_<k>.csv         d = 1: x plus one density column per method
    <out>/T_<label>/histo_comparison_iter_<k>_<m>.csv     d = 2: x0, x1, density grid per method and gt
    <out>/T_<label>/histo_comparison_iter_<k>_axis<i>.csv d > 2: first four marginals
    <out>/T<label>_KLmarginal<i>.csv                      d > 2
    <out>/metadata.json
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
import json
import logging
import math
import platform
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import METHODS, ExperimentConfig
from .metrics import (bin_masses, convolution_lsi_surrogate, default_histogram_spec,
                      empirical_histogram, histogram_kl_estimate, theory_bound)
from .paths import make_path
from .sampler import RunPlan, default_init_point, run
from .schedules import Schedule

logger = logging.getLogger(__name__)


def t_label(T: float) -> str:
    """``0.1 -> '01'``, ``2 -> '2'``, ``2.5 -> '25'``."""
    s = repr(float(T))
    if s.endswith(".0"):
        s = s[:-2]
    return s.replace(".", "")


def fmt(v) -> str:
    """Round-trip decimal formatting; integers stay integral."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return repr(float(v))


def write_csv(fname: Path, header, rows):
    with open(fname, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def build_paths(config: ExperimentConfig) -> dict:
    """Construct every path up front so invalid combinations fail before simulating."""
    paths = {}
    for m in config.sampler_methods:
        variant = METHODS[m][0]
        paths[m] = make_path(variant, config.target, **config.path_options.get(variant, {}))
    return paths


def _schedule(config, T):
    if config.schedule_kind == "frozen":
        return Schedule.frozen(config.frozen_tau)
    return Schedule.exponential(T)


def _kl_specs(config):
    target = config.target
    if target.dim <= 2:
        return [(None, config.histogram or default_histogram_spec(target))]
    axes = range(min(config.n_marginals, target.dim))
    return [(i, config.histogram.axis(0) if config.histogram else default_histogram_spec(target, [i]))
            for i in axes]


def _kl_values(samples, config):
    """KL per estimator: one full-space value, or one per marginal."""
    out = []
    for axis, spec in _kl_specs(config):
        if axis is None:
            est = histogram_kl_estimate(samples, config.target, spec)
        else:
            est = histogram_kl_estimate(samples[:, axis:axis + 1], config.target.marginal(axis), spec)
        out.append((est.kl, est.out_of_range))
    return out


# histogram column / file tags
HIST_NAMES = {"direct_sample": "sample", "ula": "ULA", "dilation": "dilation",
              "tempering": "tempering", "convolution": "diffusion", "daz": "daz"}


def _hist_axes(config):
    return list(range(min(config.target.dim, 4)))


def _hist_spec_2d(config):
    return config.histogram if config.histogram is not None else default_histogram_spec(config.target)


def _hist_spec_1d(config, axis):
    if config.histogram is not None:
        return config.histogram.axis(min(axis, config.histogram.dim - 1))
    return default_histogram_spec(config.target, [axis])


def _densities(samples, config):
    if config.target.dim == 2:
        spec = _hist_spec_2d(config)
        frac, _ = empirical_histogram(samples, spec)
        area = math.prod((hi - lo) / b for (lo, hi), b in zip(spec.ranges, spec.bins))
        return [frac.ravel() / area]
    res = []
    for axis in _hist_axes(config):
        spec = _hist_spec_1d(config, axis)
        frac, _ = empirical_histogram(samples[:, axis:axis + 1], spec)
        lo, hi = spec.ranges[0]
        res.append(frac / ((hi - lo) / spec.bins[0]))
    return res


def run_cell(config: ExperimentConfig, method: str, T: float, n_threads=None) -> dict:
    """Simulate one (method, T) cell and evaluate its snapshots."""
    start = time.perf_counter()
    path = build_paths(config)[method] if method != "direct_sample" else None
    snaps = sorted(set(config.snapshot_iterations) | set(config.histogram_iterations))
    cell = {"method": method, "T": T, "kl": {}, "oor": {}, "hist": {}, "tau": {}}
    if path is None:
        for k in snaps:
            rng = np.random.default_rng([config.seed, k, 0x67])
            x = config.target.sample(config.n_chains, rng)
            vals = _kl_values(x, config)
            cell["kl"][k] = [v for v, _ in vals]
            cell["oor"][k] = max(o for _, o in vals)
            if k in config.histogram_iterations:
                cell["hist"][k] = _densities(x, config)
        cell["wall_time"] = time.perf_counter() - start
        return cell

    plan = RunPlan(config.n_chains, config.max_steps, snaps, config.init, config.max_sim_time)
    result = run(path, _schedule(config, T), config.policy, plan, config.seed, n_threads=n_threads)
    for s in result.snapshots:
        x = s.ensemble.states
        vals = _kl_values(x, config)
        cell["kl"][s.iteration] = [v for v, _ in vals]
        cell["oor"][s.iteration] = max(o for _, o in vals)
        cell["tau"][s.iteration] = s.tau
        if s.iteration in config.histogram_iterations:
            cell["hist"][s.iteration] = _densities(x, config)
    cell["trace"] = {"h": result.step_sizes, "tau": result.taus, "t": result.times}
    cell["terminated_by"] = result.terminated_by
    cell["final_iteration"] = result.final.iteration
    cell["final_time"] = result.final.ensemble.sim_time
    if method == "convolution":
        c_lsi = convolution_lsi_surrogate(config.target)
        kl0 = cell["kl"].get(0, [math.nan])[0]
        bounds = {}
        for k in cell["kl"]:
            if 0 < k <= len(result.step_sizes) and math.isfinite(kl0):
                bounds[k] = theory_bound(c_lsi, result.step_sizes[:k], result.taus[:k], kl0,
                                         config.theory_c)
        cell["theory_bound"] = bounds
    cell["wall_time"] = time.perf_counter() - start
    return cell


def _cell_job(args):
    config, method, T = args
    return run_cell(config, method, T, n_threads=1)


def run_experiment(config: ExperimentConfig, out_dir=None, parallel: bool = False,
                   n_threads=None) -> list:
    """Run every (method, T) cell and write the CSV artefacts; returns written paths."""
    out = Path(out_dir) if out_dir is not None else Path(config.output_dir)
    build_paths(config)  # fail fast on invalid method/path combinations
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as err:
        raise OSError(f"output directory {out} is not writable: {err}") from err

    jobs = [(config, m, T) for T in config.T_values for m in config.methods]
    started = time.perf_counter()
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor() as pool:
            cells = list(pool.map(_cell_job, jobs))
    else:
        cells = [run_cell(config, m, T, n_threads=n_threads) for _, m, T in jobs]
    by_key = {(c["method"], c["T"]): c for c in cells}

    written = []
    d = config.target.dim
    if d == 1:
        spec = _hist_spec_1d(config, 0)
        x = spec.centers(0)
        fname = out / "gt_density.csv"
        write_csv(fname, ["x", "Ground truth density"],
                  zip(x, np.exp(config.target.log_density(x[:, None]))))
        written.append(fname)

    metadata = {
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "seed": config.seed,
        "config": config.raw,
        "init_point": (default_init_point(config.target).tolist()
                       if config.init.kind == "point" and config.init.point is None else None),
        "init_is_default_guess": config.init.kind == "point" and config.init.point is None,
        "cells": [],
    }

    for T in config.T_values:
        label = t_label(T)
        iters = sorted(set().union(*(by_key[(m, T)]["kl"].keys() for m in config.methods)))
        n_est = len(_kl_specs(config))
        if d <= 2:
            tdir = out / f"T_{label}"
            tdir.mkdir(exist_ok=True)
            rows = []
            for k in iters:
                row = [k]
                for m in config.methods:
                    vals = by_key[(m, T)]["kl"].get(k)
                    row.append(None if vals is None else vals[0])
                rows.append(row)
            fname = tdir / "KL_comparison.csv"
            write_csv(fname, ["iter"] + config.columns, rows)
            written.append(fname)
        else:
            tdir = out / f"T_{label}"
            tdir.mkdir(exist_ok=True)
            for i in range(n_est):
                rows = []
                for k in iters:
                    row = [k]
                    for m in config.methods:
                        vals = by_key[(m, T)]["kl"].get(k)
                        row.append(None if vals is None else vals[i])
                    rows.append(row)
                header = ["iter"] + [f"KL_{i}_{METHODS[m][1] if m != 'direct_sample' else 'gt'}"
                                     for m in config.methods]
                fname = out / f"T{label}_KLmarginal{i}.csv"
                write_csv(fname, header, rows)
                written.append(fname)

        for k in config.histogram_iterations:
            present = [m for m in config.methods if k in by_key[(m, T)]["hist"]]
            if not present:
                continue
            if d == 2:
                spec = _hist_spec_2d(config)
                g0, g1 = np.meshgrid(spec.centers(0), spec.centers(1), indexing="ij")
                area = math.prod((hi - lo) / b for (lo, hi), b in zip(spec.ranges, spec.bins))
                grids = [("gt", bin_masses(config.target, spec).ravel() / area)]
                grids += [(HIST_NAMES[m], by_key[(m, T)]["hist"][k][0]) for m in present]
                for tag, dens in grids:
                    fname = tdir / f"histo_comparison_iter_{k}_{tag}.csv"
                    write_csv(fname, ["x0", "x1", "density"], zip(g0.ravel(), g1.ravel(), dens))
                    written.append(fname)
                continue
            for a in _hist_axes(config):
                centers = _hist_spec_1d(config, a).centers(0)
                cols = [by_key[(m, T)]["hist"][k][a] for m in present]
                suffix = "" if d == 1 else f"_axis{a}"
                fname = tdir / f"histo_comparison_iter_{k}{suffix}.csv"
                write_csv(fname, ["x"] + [HIST_NAMES[m] for m in present], zip(centers, *cols))
                written.append(fname)

        for m in config.methods:
            c = by_key[(m, T)]
            meta = {"method": m, "T": T, "wall_time_s": c["wall_time"],
                    "max_out_of_range_fraction": max(c["oor"].values()) if c["oor"] else 0.0}
            if "trace" in c:
                tr = c["trace"]
                idx = [k for k in sorted(c["kl"]) if k < len(tr["h"])]
                meta.update({
                    "terminated_by": c["terminated_by"],
                    "final_iteration": c["final_iteration"],
                    "final_sim_time": c["final_time"],
                    "snapshot_tau": {str(k): v for k, v in sorted(c["tau"].items())},
                    "step_size_trace": {str(k): float(tr["h"][k]) for k in idx},
                    "tau_trace": {str(k): float(tr["tau"][k]) for k in idx},
                })
                if "theory_bound" in c:
                    meta["theory_bound"] = {str(k): v for k, v in sorted(c["theory_bound"].items())}
                if config.write_traces:
                    fname = tdir / f"trace_{METHODS[m][1]}.csv"
                    write_csv(fname, ["iter", "t", "tau", "h"],
                              zip(range(len(tr["h"])), tr["t"], tr["tau"], tr["h"]))
                    written.append(fname)
            metadata["cells"].append(meta)

    metadata["wall_time_s"] = time.perf_counter() - started
    fname = out / "metadata.json"
    fname.write_text(json.dumps(metadata, indent=2, default=float) + "\n")
    written.append(fname)
    return written


def constants_table(config: ExperimentConfig, taus=None) -> list:
    """``(method, tau, a_tau, L_tau, h)`` rows over a tau grid clipped to each domain."""
    from .schedules import STRICT_SHAVE

    taus = taus if taus is not None else [0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 0.9, 0.99, 1.0]
    rows = []
    for m, path in build_paths(config).items():
        grid = sorted({t for t in taus if t <= path.tau_max} | {path.tau_max})
        for tau in grid:
            a, lip = path.step_constants(tau)
            h = min(a / lip**2, config.policy.h_max) * (1 - STRICT_SHAVE)
            rows.append((m, tau, a, lip, h))
    return rows
