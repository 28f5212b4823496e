"""Annealing schedules ``t -> tau(t)`` and step-size policies."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

# h_k is kept strictly below a/L^2 by this relative margin
STRICT_SHAVE = 1e-9


@dataclass(frozen=True)
class Schedule:
    """``exponential_anneal``: ``tau(t) = exp(-t / T)``; ``frozen``: constant tau."""

    kind: str = "exponential_anneal"
    T: float = 1.0
    frozen_tau: float = 0.0

    def __post_init__(self):
        if self.kind not in ("exponential_anneal", "frozen"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "exponential_anneal" and not self.T > 0:
            raise ValueError("T must be positive")
        if self.kind == "frozen" and not self.frozen_tau >= 0:
            raise ValueError("frozen_tau must be non-negative")

    @classmethod
    def exponential(cls, T: float) -> "Schedule":
        return cls("exponential_anneal", T=T)

    @classmethod
    def frozen(cls, tau: float = 0.0) -> "Schedule":
        return cls("frozen", frozen_tau=tau)


@dataclass(frozen=True)
class StepPolicy:
    """Step-size rule.

    ``theory_max`` takes the largest admissible step ``a_tau / L_tau**2``
    (capped at ``h_max``); ``square_summable`` uses ``h0 / (k + 1)**p`` with
    ``p`` in (1/2, 1], still capped by the admissible step.
    """

    kind: str = "theory_max"
    h0: float = 0.1
    p: float = 1.0
    h_max: float = 0.5

    def __post_init__(self):
        if self.kind not in ("theory_max", "square_summable"):
            raise ValueError(f"unknown step policy {self.kind!r}")
        if not (self.h0 > 0 and self.h_max > 0):
            raise ValueError("h0 and h_max must be positive")
        if not 0.5 < self.p <= 1.0:
            raise ValueError("p must lie in (0.5, 1]")


def tau_at(schedule: Schedule, t: float, tau_max: float = 1.0) -> float:
    """Path parameter at simulated time ``t``, clamped to ``tau_max``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if schedule.kind == "frozen":
        return schedule.frozen_tau
    return min(math.exp(-t / schedule.T), tau_max)


def next_step(policy: StepPolicy, path, schedule: Schedule, k: int, t_k: float):
    """Return ``(h_k, tau_k)`` for iteration ``k`` at time ``t_k``."""
    tau = tau_at(schedule, t_k, path.tau_max)
    a, lip = path.step_constants(tau)
    cap = a / lip**2
    if policy.kind == "theory_max":
        h = min(cap, policy.h_max) * (1.0 - STRICT_SHAVE)
    else:
        h = min(policy.h0 / (k + 1) ** policy.p, cap * (1.0 - STRICT_SHAVE), policy.h_max)
    return h, tau


class TimeAccumulator:
    """Compensated (Kahan) running sum of step sizes."""

    __slots__ = ("total", "_comp")

    def __init__(self, total: float = 0.0, comp: float = 0.0):
        self.total = total
        self._comp = comp

    def add(self, h: float) -> float:
        y = h - self._comp
        t = self.total + y
        self._comp = (t - self.total) - y
        self.total = t
        return t

    def state(self):
        return self.total, self._comp


def step_sequence(policy: StepPolicy, path, schedule: Schedule, n_steps: int, t0: float = 0.0):
    """Arrays ``(h, tau, t)`` for ``n_steps`` iterations, identical to repeated
    ``next_step`` calls with compensated time accumulation."""
    hs, taus, ts = [], [], []
    constants = path._constants  # tau_at already clamps into the domain
    tau_max = path.tau_max
    frozen = schedule.kind == "frozen"
    T = schedule.T
    harmonic = policy.kind == "square_summable"
    h0, p, h_max = policy.h0, policy.p, policy.h_max
    keep = 1.0 - STRICT_SHAVE
    total, comp = float(t0), 0.0
    exp = math.exp
    for k in range(n_steps):
        tau = schedule.frozen_tau if frozen else min(exp(-total / T), tau_max)
        a, lip = constants(tau)
        cap = a / lip**2
        if harmonic:
            h = min(h0 / (k + 1) ** p, cap * keep, h_max)
        else:
            h = min(cap, h_max) * keep
        hs.append(h)
        taus.append(tau)
        ts.append(total)
        y = h - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return np.array(hs), np.array(taus), np.array(ts)
