"""Experiment configuration: flat ``key = value`` text with dotted sections.

Example::

    seed = 12345
    methods = direct_sample, ULA, dilation, tempering, convolution, DAZ

    target.weights = 0.3, 0.4, 0.3
    target.means = -2; 0; 2          # components separated by ';'
    target.stds = 0.2; 0.1; 0.3      # per-axis std devs, same layout

    schedule.T = 0.1, 1, 2, 10
    policy.kind = theory_max
    run.n_chains = 2000
    run.max_steps = 40000
    run.snapshot_every = 1000
    output.dir = out/gmm_1d

Lines starting with ``#`` and trailing ``# ...`` comments are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .metrics import HistogramSpec
from .sampler import InitSpec
from .schedules import StepPolicy
from .targets import GaussianMixture, random_mixture


class ConfigError(ValueError):
    pass


# method name -> (path variant, CSV column)
METHODS = {
    "direct_sample": (None, "KL_gt"),
    "ula": ("identity", "ULA"),
    "dilation": ("dilation", "dilation"),
    "tempering": ("tempering", "tempering"),
    "convolution": ("convolution", "diffusion"),
    "daz": ("daz", "DAZ"),
}
METHOD_ORDER = ["direct_sample", "ula", "dilation", "tempering", "convolution", "daz"]

KNOWN_KEYS = {
    "seed", "methods",
    "target.kind", "target.weights", "target.means", "target.stds", "target.variances",
    "target.dim", "target.components", "target.seed", "target.std_range",
    "schedule.kind", "schedule.T", "schedule.frozen_tau",
    "policy.kind", "policy.h0", "policy.p", "policy.h_max",
    "run.n_chains", "run.max_steps", "run.max_sim_time", "run.snapshots",
    "run.snapshot_every", "run.histogram_iterations", "run.init", "run.init_point",
    "run.init_mean", "run.init_scale",
    "histogram.bins", "histogram.range", "histogram.marginals",
    "paths.dilation_tau_max", "paths.daz_tau_max", "paths.tempering_std",
    "paths.convolution_tau_max",
    "metrics.theory_c",
    "output.dir", "output.traces",
}


@dataclass
class ExperimentConfig:
    target: GaussianMixture
    methods: list
    T_values: list
    n_chains: int
    max_steps: int
    snapshot_iterations: list
    histogram_iterations: list
    seed: int
    output_dir: Path
    schedule_kind: str = "exponential_anneal"
    frozen_tau: float = 0.0
    policy: StepPolicy = field(default_factory=StepPolicy)
    max_sim_time: Optional[float] = None
    init: InitSpec = field(default_factory=InitSpec)
    histogram: Optional[HistogramSpec] = None
    n_marginals: int = 4
    path_options: dict = field(default_factory=dict)
    theory_c: float = 1.0
    write_traces: bool = False
    raw: dict = field(default_factory=dict)

    @property
    def columns(self):
        return [METHODS[m][1] for m in self.methods]

    @property
    def sampler_methods(self):
        return [m for m in self.methods if METHODS[m][0] is not None]


def parse_pairs(text: str) -> dict:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _floats(value: str) -> list:
    try:
        return [float(v) for v in value.replace(",", " ").split()]
    except ValueError as err:
        raise ConfigError(f"cannot parse numbers from {value!r}") from err


def _ints(value: str) -> list:
    vals = _floats(value)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"expected integers in {value!r}")
    return [int(v) for v in vals]


def _matrix(value: str) -> np.ndarray:
    rows = [_floats(r) for r in value.split(";")]
    if len({len(r) for r in rows}) != 1:
        raise ConfigError(f"ragged component list {value!r}")
    return np.array(rows)


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _target(p: dict) -> GaussianMixture:
    kind = p.get("target.kind", "explicit")
    try:
        if kind == "random":
            lo, hi = _floats(p.get("target.std_range", "0.1, 0.4"))
            n = int(p.get("target.components", "4"))
            w = _floats(p["target.weights"]) if "target.weights" in p else None
            return random_mixture(int(p["target.dim"]), n, int(p.get("target.seed", "0")),
                                  weights=w if w else (0.2, 0.4, 0.2, 0.2), std_range=(lo, hi))
        if kind != "explicit":
            raise ConfigError(f"unknown target.kind {kind!r}")
        weights = _floats(p["target.weights"])
        means = _matrix(p["target.means"])
        if "target.stds" in p:
            var = _matrix(p["target.stds"]) ** 2
        elif "target.variances" in p:
            var = _matrix(p["target.variances"])
        else:
            raise ConfigError("target needs target.stds or target.variances")
        if var.shape[1] == 1 and means.shape[1] > 1:
            var = np.repeat(var, means.shape[1], axis=1)
        return GaussianMixture(weights, means, var)
    except KeyError as err:
        raise ConfigError(f"missing key {err.args[0]}") from err
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(f"invalid target: {err}") from err


def parse_config(text: str, base_dir: Optional[Path] = None) -> ExperimentConfig:
    p = parse_pairs(text)
    target = _target(p)

    methods = [m.strip().lower() for m in p.get("methods", "").replace(",", " ").split()]
    if not methods:
        raise ConfigError("methods must be non-empty")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"unknown methods {unknown}; choose from {sorted(METHODS)}")
    methods = [m for m in METHOD_ORDER if m in methods]

    T_values = _floats(p.get("schedule.T", "1"))
    if not T_values or any(not t > 0 for t in T_values):
        raise ConfigError("schedule.T values must be positive")
    schedule_kind = p.get("schedule.kind", "exponential_anneal")
    if schedule_kind not in ("exponential_anneal", "frozen"):
        raise ConfigError(f"unknown schedule.kind {schedule_kind!r}")

    try:
        policy = StepPolicy(p.get("policy.kind", "theory_max"),
                            h0=float(p.get("policy.h0", "0.1")),
                            p=float(p.get("policy.p", "1")),
                            h_max=float(p.get("policy.h_max", "0.5")))
    except ValueError as err:
        raise ConfigError(str(err)) from err

    n_chains = int(p.get("run.n_chains", "5000"))
    max_steps = int(p.get("run.max_steps", "1000"))
    if n_chains < 1 or max_steps < 0:
        raise ConfigError("run.n_chains must be >= 1 and run.max_steps >= 0")
    max_sim_time = float(p["run.max_sim_time"]) if "run.max_sim_time" in p else None
    if "run.snapshots" in p:
        snaps = _ints(p["run.snapshots"])
    else:
        every = int(p.get("run.snapshot_every", str(max(1, max_steps // 40) if max_steps else 1)))
        snaps = list(range(0, max_steps + 1, every))
    snaps = sorted(set(snaps) | {0, max_steps})
    hist_iters = sorted(set(_ints(p["run.histogram_iterations"]))) if "run.histogram_iterations" in p else []
    if any(k < 0 or k > max_steps for k in snaps + hist_iters):
        raise ConfigError("snapshot iterations must lie in [0, run.max_steps]")

    init_kind = p.get("run.init", "point")
    try:
        if init_kind == "point":
            init = InitSpec("point", point=_floats(p["run.init_point"]) if "run.init_point" in p else None)
        else:
            init = InitSpec(init_kind,
                            mean=_floats(p["run.init_mean"]) if "run.init_mean" in p else None,
                            scale=float(p.get("run.init_scale", "1")))
    except ValueError as err:
        raise ConfigError(str(err)) from err

    histogram = None
    if "histogram.bins" in p or "histogram.range" in p:
        dims = target.dim if target.dim <= 2 else 1
        bins = int(p.get("histogram.bins", "200" if dims == 1 else "100"))
        if "histogram.range" not in p:
            raise ConfigError("histogram.bins requires histogram.range")
        lo, hi = _floats(p["histogram.range"])
        try:
            histogram = HistogramSpec.uniform(lo, hi, bins, dims)
        except ValueError as err:
            raise ConfigError(str(err)) from err

    path_options = {}
    for key, opt in (("paths.dilation_tau_max", ("dilation", "tau_max")),
                     ("paths.daz_tau_max", ("daz", "tau_max")),
                     ("paths.convolution_tau_max", ("convolution", "tau_max"))):
        if key in p:
            path_options.setdefault(opt[0], {})[opt[1]] = float(p[key])
    if "paths.tempering_std" in p:
        s = float(p["paths.tempering_std"])
        path_options.setdefault("tempering", {})["reference"] = GaussianMixture(
            [1.0], np.zeros((1, target.dim)), np.full((1, target.dim), s * s))

    out = Path(p.get("output.dir", "out"))
    if base_dir is not None and not out.is_absolute():
        out = base_dir / out
    seed = int(p.get("seed", "0"))
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must fit in 64 bits")
    theory_c = float(p.get("metrics.theory_c", "1"))
    if not math.isfinite(theory_c) or theory_c <= 0:
        raise ConfigError("metrics.theory_c must be positive")

    return ExperimentConfig(
        target=target, methods=methods, T_values=T_values, n_chains=n_chains,
        max_steps=max_steps, snapshot_iterations=snaps, histogram_iterations=hist_iters,
        seed=seed, output_dir=out, schedule_kind=schedule_kind,
        frozen_tau=float(p.get("schedule.frozen_tau", "0")), policy=policy,
        max_sim_time=max_sim_time, init=init, histogram=histogram,
        n_marginals=int(p.get("histogram.marginals", "4")), path_options=path_options,
        theory_c=theory_c, write_traces=_bool(p.get("output.traces", "false")), raw=p,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return parse_config(text, base_dir=None)
