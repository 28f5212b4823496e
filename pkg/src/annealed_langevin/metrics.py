"""KL estimates of an ensemble against its analytic target, plus the
discrete-time error bound evaluator."""

from __future__ import annotations

from dataclasses import dataclass
import math
import warnings
from typing import Optional, Sequence

import numpy as np

from .targets import GaussianMixture

Q_FLOOR = 1e-300
SUBSAMPLE = 4
OUT_OF_RANGE_WARN = 0.05


@dataclass(frozen=True)
class HistogramSpec:
    """Per-axis ranges ``(lo, hi)`` and bin counts."""

    ranges: tuple
    bins: tuple

    def __post_init__(self):
        ranges = tuple((float(lo), float(hi)) for lo, hi in self.ranges)
        bins = tuple(int(b) for b in self.bins)
        if len(ranges) != len(bins):
            raise ValueError("one bin count per axis range required")
        for lo, hi in ranges:
            if not lo < hi:
                raise ValueError(f"empty histogram range ({lo}, {hi})")
        if any(b < 2 for b in bins):
            raise ValueError("at least two bins per axis")
        if math.prod(bins) > 10**6:
            raise ValueError("histogram exceeds 10**6 cells")
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "bins", bins)

    @property
    def dim(self):
        return len(self.bins)

    @classmethod
    def uniform(cls, lo, hi, bins, dim=1):
        return cls(((lo, hi),) * dim, (bins,) * dim)

    def axis(self, i) -> "HistogramSpec":
        return HistogramSpec((self.ranges[i],), (self.bins[i],))

    def edges(self, i):
        lo, hi = self.ranges[i]
        return np.linspace(lo, hi, self.bins[i] + 1)

    def centers(self, i):
        e = self.edges(i)
        return 0.5 * (e[:-1] + e[1:])


def default_histogram_spec(target: GaussianMixture, axes: Optional[Sequence[int]] = None) -> HistogramSpec:
    """``min m - 4 s .. max m + 4 s`` per axis (``s^2`` the largest eigenvalue);
    200 bins in 1-D, 100 per axis otherwise."""
    axes = range(target.dim) if axes is None else axes
    pad = 4.0 * math.sqrt(float(np.max(target.eigenvalues)))
    axes = list(axes)
    bins = 200 if len(axes) == 1 else 100
    ranges = [(float(target.means[:, i].min()) - pad, float(target.means[:, i].max()) + pad)
              for i in axes]
    return HistogramSpec(tuple(ranges), (bins,) * len(axes))


@dataclass(frozen=True)
class KlEstimate:
    kl: float
    raw: float
    out_of_range: float


@dataclass(frozen=True)
class KlReport:
    iteration: int
    tau: float
    kl: float
    estimator: str
    baseline_kl: float = float("nan")
    out_of_range: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.kl) and self.kl >= 0):
            raise ValueError(f"invalid KL value {self.kl!r}")


def empirical_histogram(samples, spec: HistogramSpec):
    """Bin fractions with out-of-range samples clamped into edge bins.

    Returns ``(fractions, out_of_range_fraction)``.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != spec.dim:
        raise ValueError(f"samples have dimension {x.shape[1]}, spec has {spec.dim}")
    n = x.shape[0]
    idx = []
    outside = np.zeros(n, dtype=bool)
    for i, ((lo, hi), b) in enumerate(zip(spec.ranges, spec.bins)):
        col = x[:, i]
        outside |= (col < lo) | (col > hi)
        j = np.floor((col - lo) / (hi - lo) * b).astype(np.int64)
        idx.append(np.clip(j, 0, b - 1))
    flat = np.ravel_multi_index(idx, spec.bins)
    counts = np.bincount(flat, minlength=math.prod(spec.bins)).reshape(spec.bins)
    return counts / n, float(outside.mean())


def bin_masses(target: GaussianMixture, spec: HistogramSpec, sub: int = SUBSAMPLE) -> np.ndarray:
    """Target probability of each bin by midpoint quadrature on a ``sub``-times finer grid."""
    if target.dim != spec.dim:
        raise ValueError("target and histogram dimensions differ")
    fine_axes, vol = [], 1.0
    for (lo, hi), b in zip(spec.ranges, spec.bins):
        w = (hi - lo) / (b * sub)
        fine_axes.append(lo + (np.arange(b * sub) + 0.5) * w)
        vol *= w
    grid = np.stack(np.meshgrid(*fine_axes, indexing="ij"), axis=-1).reshape(-1, spec.dim)
    dens = np.exp(target.log_density(grid)) * vol
    shape = []
    for b in spec.bins:
        shape += [b, sub]
    dens = dens.reshape(shape)
    return dens.sum(axis=tuple(range(1, 2 * spec.dim, 2)))


def histogram_kl_estimate(samples, target: GaussianMixture, spec: HistogramSpec) -> KlEstimate:
    p, oor = empirical_histogram(samples, spec)
    q = np.maximum(bin_masses(target, spec), Q_FLOOR)
    occ = p > 0
    raw = float(np.sum(p[occ] * np.log(p[occ] / q[occ])))
    if raw < -1e-6:
        raise ArithmeticError(f"histogram KL {raw!r} below quadrature tolerance")
    return KlEstimate(max(raw, 0.0), raw, oor)


def histogram_kl(samples, target: GaussianMixture, spec: Optional[HistogramSpec] = None) -> float:
    """Plug-in KL(empirical | target) over histogram bins.

    ``sum_b p_b log(p_b / q_b)`` over occupied bins, where ``p_b`` are sample
    fractions and ``q_b`` the target bin masses. Samples outside the range are
    clamped into edge bins; a warning is issued when more than 5% are.
    """
    if spec is None:
        spec = default_histogram_spec(target)
    if spec.dim > 2:
        raise ValueError("full-space histogram KL is limited to d <= 2; use marginal_kl")
    est = histogram_kl_estimate(samples, target, spec)
    if est.out_of_range > OUT_OF_RANGE_WARN:
        warnings.warn(f"{est.out_of_range:.1%} of samples fall outside the histogram range",
                      RuntimeWarning, stacklevel=2)
    return est.kl


def marginal_kl(samples, target: GaussianMixture, axis: int,
                spec: Optional[HistogramSpec] = None) -> float:
    """Histogram KL of coordinate ``axis`` against the target's marginal."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    marg = target.marginal(axis)
    if spec is None:
        spec = default_histogram_spec(marg)
    elif spec.dim != 1:
        spec = spec.axis(axis)
    return histogram_kl(samples[:, axis:axis + 1], marg, spec)


def theory_bound(c_lsi, step_sizes, taus, kl0: float, c: float = 1.0) -> float:
    """Right-hand side of the discrete KL error bound.

    ``step_sizes`` and ``taus`` are indexed ``0..k`` (``h_i``, ``tau(t_i)``);
    ``c_lsi`` maps tau values to log-Sobolev constants. The bound is

        kl0 exp(-S_1) + c sum_{m=1..k} exp(-S_m) |tau_m - tau_{m-1}|
                      + c sum_{m=1..k} h_m^2 exp(-S_{m+1}) + c tau_k

    with ``S_m = sum_{j=m..k} 2 h_j / C(tau_j)`` and ``S_{k+1} = 0``.
    """
    h = np.asarray(step_sizes, dtype=float)
    tau = np.asarray(taus, dtype=float)
    if h.shape != tau.shape or h.ndim != 1 or h.size < 1:
        raise ValueError("step_sizes and taus must be equal-length 1-D histories")
    k = h.size - 1
    if k == 0:
        return float(kl0 + c * tau[0])
    cl = np.asarray(c_lsi(tau[1:]), dtype=float) * np.ones(k)
    if np.any(~(cl > 0)):
        raise ValueError("log-Sobolev constants must be positive")
    rate = 2.0 * h[1:] / cl  # e_1..e_k
    # suffix sums accumulated from the back: S[m-1] = S_m
    suffix = np.cumsum(rate[::-1])[::-1]
    s_next = np.append(suffix[1:], 0.0)  # S_{m+1}
    decay = float(kl0) * math.exp(-suffix[0])
    drift = c * float(np.sum(np.exp(-suffix) * np.abs(np.diff(tau))))
    disc = c * float(np.sum(h[1:] ** 2 * np.exp(-s_next)))
    return decay + drift + disc + c * float(tau[k])


def convolution_lsi_surrogate(target: GaussianMixture):
    """Heuristic ``C(tau) = 2 lambda_max((1 - tau) S_i + tau I)`` for the convolution path."""
    lam = float(np.max(target.eigenvalues))

    def c_lsi(tau):
        tau = np.asarray(tau, dtype=float)
        return 2.0 * np.maximum((1.0 - tau) * lam + tau, 1e-300)

    return c_lsi


def moment_report(samples):
    """Sample mean and unbiased covariance."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("need at least two samples")
    return x.mean(axis=0), np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
