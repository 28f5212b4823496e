"""Brute-force reference computations.

These deliberately avoid the library's fast paths (exhaustive grids, finite
differences, Monte Carlo) so they can certify them. ``verification_checks``
bundles them into the suite run by ``annealed-langevin verify``.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Callable, List, NamedTuple, Optional

import numpy as np

from .metrics import HistogramSpec, histogram_kl
from .paths import ConvolutionPath, DazPath, ProxSettings
from .targets import GaussianMixture, as_generator, paper_mixture_1d


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Per-axis ``(lo, hi, resolution)`` triples."""

    axes: tuple

    def __post_init__(self):
        axes = tuple((float(lo), float(hi), float(res)) for lo, hi, res in self.axes)
        for lo, hi, res in axes:
            if not res > 0 or not lo < hi:
                raise ValueError(f"invalid grid axis ({lo}, {hi}, {res})")
        if math.prod(self._count(a) for a in axes) > 10**7:
            raise ValueError("grid exceeds 10**7 points")
        object.__setattr__(self, "axes", axes)

    @staticmethod
    def _count(axis):
        lo, hi, res = axis
        return int(math.floor((hi - lo) / res + 1e-9)) + 1

    def points(self):
        coords = [lo + res * np.arange(self._count((lo, hi, res))) for lo, hi, res in self.axes]
        mesh = np.meshgrid(*coords, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, len(coords)), [len(c) for c in coords]


def grid_prox(potential: Callable, x, tau: float, grid: GridSpec) -> np.ndarray:
    """Exhaustive minimiser of ``y -> U(y) + |x - y|^2 / (2 tau)`` over the grid.

    ``potential`` maps an ``(n, d)`` batch to ``(n,)`` values. Ties go to the
    lowest flat index. A minimiser on the grid boundary raises ``GridError``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    pts, shape = grid.points()
    if pts.shape[1] != x.shape[0]:
        raise ValueError("grid and point dimensions differ")
    obj = np.asarray(potential(pts), dtype=float) + np.sum((pts - x) ** 2, axis=1) / (2.0 * tau)
    i = int(np.argmin(obj))
    for j, n in zip(np.unravel_index(i, shape), shape):
        if j == 0 or j == n - 1:
            raise GridError("minimiser on the grid boundary; enlarge the grid")
    return pts[i]


def fd_gradient(f: Callable, x, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar field.

    With ``x`` of shape ``(d,)`` ``f`` takes one point; with ``(n, d)`` it must
    be vectorised over rows and an ``(n, d)`` array is returned.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None] if single else x
    grad = np.empty_like(xb)
    for i in range(xb.shape[1]):
        e = np.zeros(xb.shape[1])
        e[i] = step
        if single:
            grad[0, i] = (f(xb[0] + e) - f(xb[0] - e)) / (2.0 * step)
        else:
            grad[:, i] = (np.asarray(f(xb + e)) - np.asarray(f(xb - e))) / (2.0 * step)
    return grad[0] if single else grad


def mc_convolution_check(target: GaussianMixture, tau: float, n_mc: int,
                         spec: HistogramSpec, seed=0) -> float:
    """Histogram KL between Monte-Carlo draws of ``sqrt(1-tau) X + sqrt(tau) Z``
    and the analytic convolution-path mixture at ``tau``."""
    if target.dim > 2:
        raise ValueError("mc_convolution_check supports d <= 2")
    rng = as_generator(seed)
    x = target.sample(n_mc, rng)
    z = rng.standard_normal(x.shape)
    y = math.sqrt(1.0 - tau) * x + math.sqrt(tau) * z
    return histogram_kl(y, ConvolutionPath(target).mixture_at(tau), spec)


def gaussian_kl(mean1, cov1, mean2, cov2) -> float:
    """Closed-form ``KL(N(m1, S1) | N(m2, S2))``."""
    m1 = np.atleast_1d(np.asarray(mean1, dtype=float))
    m2 = np.atleast_1d(np.asarray(mean2, dtype=float))
    s1 = np.atleast_2d(np.asarray(cov1, dtype=float))
    s2 = np.atleast_2d(np.asarray(cov2, dtype=float))
    for s in (s1, s2):
        if not np.allclose(s, s.T) or np.min(np.linalg.eigvalsh(s)) <= 0:
            raise ValueError("covariances must be symmetric positive definite")
    d = m1.shape[0]
    c1 = np.linalg.cholesky(s1)
    c2 = np.linalg.cholesky(s2)
    s2inv_s1 = np.linalg.solve(s2, s1)
    dm = m2 - m1
    logdet = 2.0 * (np.sum(np.log(np.diag(c2))) - np.sum(np.log(np.diag(c1))))
    return 0.5 * float(np.trace(s2inv_s1) + dm @ np.linalg.solve(s2, dm) - d + logdet)


# -- verification suite ---------------------------------------------------------------


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def _check_score(target):
    rng = np.random.default_rng(11)
    pts = rng.uniform(-4.0, 4.0, size=(100, target.dim))
    fd = fd_gradient(lambda y: target.log_density(y), pts, 1e-5)
    an = target.score(pts)
    err = float(np.max(np.abs(fd - an) / np.maximum(1.0, np.abs(an))))
    return err <= 1e-5, f"max rel. error {err:.2e} (tol 1e-5)"


def _check_prox(target, prox_settings):
    path = DazPath(target, prox_settings=prox_settings)
    tau = path.tau_max
    grid = GridSpec(((-5.0, 5.0, 1e-4),))
    pot = lambda y: -target.log_density(y)
    worst = 0.0
    for x in np.linspace(-2.5, 2.5, 6):
        ref = grid_prox(pot, [x], tau, grid)
        worst = max(worst, float(abs(path.prox(x, tau)[0] - ref[0])))
    return worst <= 2e-4, f"max |prox - grid| {worst:.2e} (tol 2e-4)"


def _check_convolution(target):
    spec = HistogramSpec.uniform(-4.0, 4.0, 200)
    kl = mc_convolution_check(target, 0.5, 100_000, spec, seed=3)
    return kl <= 0.01, f"MC vs analytic KL {kl:.4f} (tol 0.01)"


def _check_gaussian_kl():
    val = gaussian_kl(np.zeros(2), 2 * np.eye(2), np.zeros(2), np.eye(2))
    ref = 1.0 - math.log(2.0)
    return abs(val - ref) < 1e-12, f"{val:.12f} vs {ref:.12f}"


def _check_histogram_kl():
    rng = np.random.default_rng(5)
    x = rng.normal(1.0, 1.0, size=(200_000, 1))
    ref = GaussianMixture([1.0], [[0.0]], [[1.0]])
    kl = histogram_kl(x, ref, HistogramSpec.uniform(-5.0, 7.0, 240))
    return abs(kl - 0.5) <= 0.03, f"histogram KL {kl:.4f} vs closed form 0.5"


def verification_checks(target: Optional[GaussianMixture] = None,
                        prox_settings: Optional[ProxSettings] = None) -> List[CheckResult]:
    """Run the oracle suite; each check is caught so one failure does not mask others."""
    target = target if target is not None else paper_mixture_1d()
    checks = [
        ("score vs finite differences", lambda: _check_score(target)),
        ("daz prox vs grid search", lambda: _check_prox(target, prox_settings)),
        ("convolution path vs Monte Carlo", lambda: _check_convolution(target)),
        ("gaussian KL closed form", _check_gaussian_kl),
        ("histogram KL calibration", _check_histogram_kl),
    ]
    results = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as err:  # reported as a failed check
            ok, detail = False, f"{type(err).__name__}: {err}"
        results.append(CheckResult(name, bool(ok), detail))
    return results
