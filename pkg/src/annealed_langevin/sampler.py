"""Ensemble Euler-Maruyama simulation of annealed Langevin dynamics.

Each chain draws its Gaussian increments from a counter-based stream keyed by
``(seed, chain_id, step)``, so trajectories are bit-reproducible and do not
depend on how chains are split across worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math
import os
from typing import Optional, Sequence

import numpy as np

from . import rng
from .schedules import Schedule, StepPolicy, TimeAccumulator, next_step, tau_at

logger = logging.getLogger(__name__)

THREADS_ENV = "ANNEALED_LANGEVIN_THREADS"


class NonFiniteStateError(FloatingPointError):
    def __init__(self, chain: int, step: int, detail: str = ""):
        msg = f"non-finite state in chain {chain} at step {step}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.chain = chain
        self.step = step


@dataclass
class Ensemble:
    """States of N chains plus the step counter and simulated time."""

    states: np.ndarray
    chain_ids: np.ndarray
    seed: int
    step_index: int = 0
    sim_time: float = 0.0
    time_comp: float = 0.0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2:
            raise ValueError("states must be an (N, d) array")
        self.chain_ids = np.asarray(self.chain_ids, dtype=np.int64)
        if self.chain_ids.shape != (self.states.shape[0],):
            raise ValueError("one chain id per state row required")

    @property
    def n_chains(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[1]

    def copy(self) -> "Ensemble":
        return replace(self, states=self.states.copy(), chain_ids=self.chain_ids.copy())


@dataclass(frozen=True)
class InitSpec:
    """Chain initialisation: a common point, or ``mean + scale * Z`` per chain."""

    kind: str = "point"
    point: Optional[Sequence[float]] = None
    mean: Optional[Sequence[float]] = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("point", "gaussian"):
            raise ValueError(f"unknown init kind {self.kind!r}")


@dataclass(frozen=True)
class RunPlan:
    n_chains: int
    n_steps: int
    snapshot_iterations: Sequence[int] = ()
    init: InitSpec = field(default_factory=InitSpec)
    max_sim_time: Optional[float] = None
    chain_ids: Optional[Sequence[int]] = None

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        snaps = tuple(sorted(set(int(k) for k in self.snapshot_iterations)))
        if snaps and (snaps[0] < 0 or snaps[-1] > self.n_steps):
            raise ValueError("snapshot iterations must lie in [0, n_steps]")
        object.__setattr__(self, "snapshot_iterations", snaps)
        if self.chain_ids is not None and len(self.chain_ids) != self.n_chains:
            raise ValueError("chain_ids must have n_chains entries")
        if self.max_sim_time is not None and not self.max_sim_time > 0:
            raise ValueError("max_sim_time must be positive")


@dataclass
class Snapshot:
    iteration: int
    tau: float
    ensemble: Ensemble


@dataclass
class RunResult:
    snapshots: list
    step_sizes: np.ndarray
    taus: np.ndarray
    times: np.ndarray
    terminated_by: str

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]


def default_init_point(target) -> np.ndarray:
    """Coordinate-wise smallest component mean minus one."""
    return np.min(target.means, axis=0) - 1.0


def initial_ensemble(plan: RunPlan, target, seed: int) -> Ensemble:
    ids = (np.arange(plan.n_chains, dtype=np.int64) if plan.chain_ids is None
           else np.asarray(plan.chain_ids, dtype=np.int64))
    d = target.dim
    init = plan.init
    if init.kind == "point":
        x0 = default_init_point(target) if init.point is None else np.asarray(init.point, dtype=float)
        states = np.broadcast_to(x0.reshape(1, d), (plan.n_chains, d)).copy()
    else:
        mean = np.zeros(d) if init.mean is None else np.asarray(init.mean, dtype=float).reshape(d)
        states = mean + init.scale * rng.standard_normal(seed, ids, rng.INIT_STEP, d)
    return Ensemble(states, ids, seed)


def resolve_threads(n_threads: Optional[int] = None) -> int:
    if n_threads is None:
        n_threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(n_threads))


_executors: dict = {}


def _executor(n: int) -> ThreadPoolExecutor:
    ex = _executors.get(n)
    if ex is None:
        ex = _executors[n] = ThreadPoolExecutor(max_workers=n, thread_name_prefix="em-step")
    return ex


def _update_rows(states, chain_ids, path, h, tau, seed, step, noise):
    drift = path.grad_potential(states, tau)
    if noise is None:
        noise = rng.standard_normal(seed, chain_ids, step, states.shape[1])
    return states - h * drift + math.sqrt(2.0 * h) * noise


def em_step(ensemble: Ensemble, path, h: float, tau: float, noise=None,
            n_threads: Optional[int] = None) -> Ensemble:
    """One Euler-Maruyama step ``X <- X - h grad U_tau(X) + sqrt(2h) Z``.

    ``noise`` overrides the counter-stream draws (shape ``(N, d)``).
    """
    if not h >= 0:
        raise ValueError(f"step size must be non-negative, got {h!r}")
    x = ensemble.states
    threads = resolve_threads(n_threads)
    k = ensemble.step_index
    if threads == 1 or x.shape[0] < 2 * threads:
        new = _update_rows(x, ensemble.chain_ids, path, h, tau, ensemble.seed, k, noise)
    else:
        bounds = np.linspace(0, x.shape[0], threads + 1).astype(int)
        jobs = [_executor(threads).submit(
                    _update_rows, x[lo:hi], ensemble.chain_ids[lo:hi], path, h, tau,
                    ensemble.seed, k, None if noise is None else noise[lo:hi])
                for lo, hi in zip(bounds[:-1], bounds[1:])]
        new = np.concatenate([j.result() for j in jobs])
    bad = ~np.isfinite(new).all(axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteStateError(int(ensemble.chain_ids[i]), k,
                                  f"h={h!r}, tau={tau!r}; step size or constants misconfigured?")
    clock = TimeAccumulator(ensemble.sim_time, ensemble.time_comp)
    clock.add(h)
    t, comp = clock.state()
    return Ensemble(new, ensemble.chain_ids, ensemble.seed, k + 1, t, comp)


def run(path, schedule: Schedule, policy: StepPolicy, plan: RunPlan, seed: int,
        n_threads: Optional[int] = None) -> RunResult:
    """Simulate ``plan.n_steps`` steps (or until ``plan.max_sim_time``).

    Snapshots are deep copies taken after the requested number of steps; the
    final state is always included. The recorded tau of a snapshot is the
    schedule value at its simulated time.
    """
    ens = initial_ensemble(plan, path.target, seed)
    wanted = set(plan.snapshot_iterations)
    snapshots = []
    hs, taus, ts = [], [], []
    terminated_by = "n_steps"

    def snap(e):
        snapshots.append(Snapshot(e.step_index, tau_at(schedule, e.sim_time, path.tau_max), e.copy()))

    if 0 in wanted:
        snap(ens)
    for k in range(plan.n_steps):
        if plan.max_sim_time is not None and ens.sim_time >= plan.max_sim_time:
            terminated_by = "max_sim_time"
            break
        h, tau = next_step(policy, path, schedule, k, ens.sim_time)
        hs.append(h)
        taus.append(tau)
        ts.append(ens.sim_time)
        try:
            ens = em_step(ens, path, h, tau, n_threads=n_threads)
        except NonFiniteStateError as err:
            raise NonFiniteStateError(err.chain, err.step,
                                      f"{path.variant} path, h={h!r}, tau={tau!r}") from err
        if ens.step_index in wanted:
            snap(ens)
    if not snapshots or snapshots[-1].iteration != ens.step_index:
        snap(ens)
    logger.debug("run finished after %d steps (t=%g, %s)", ens.step_index, ens.sim_time, terminated_by)
    return RunResult(snapshots, np.array(hs), np.array(taus), np.array(ts), terminated_by)


# snapshot export


def write_snapshot_csv(fname, ensemble: Ensemble):
    """Chain-major CSV: ``chain, x0, x1, ...`` with round-trip float formatting."""
    d = ensemble.dim
    with open(fname, "w", newline="\n") as fh:
        fh.write(",".join(["chain"] + [f"x{i}" for i in range(d)]) + "\n")
        for cid, row in zip(ensemble.chain_ids.tolist(), ensemble.states.tolist()):
            fh.write(",".join([str(cid)] + [repr(v) for v in row]) + "\n")


def write_snapshot_binary(fname, ensemble: Ensemble):
    """Raw little-endian float64, chain-major ``(N, d)``."""
    ensemble.states.astype("<f8").tofile(fname)


def read_snapshot_binary(fname, dim: int) -> np.ndarray:
    return np.fromfile(fname, dtype="<f8").reshape(-1, dim)
