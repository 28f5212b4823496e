"""Annealing paths ``tau -> p_tau`` over a Gaussian-mixture target.

Every path exposes the drift ingredient ``grad_potential(x, tau)`` (gradient of
``U_tau = -log p_tau``), the per-tau step constants ``(a_tau, L_tau)`` and an
unnormalised potential for finite-difference checks. ``tau = 0`` is always the
target itself.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .targets import GaussianMixture, TargetConstants, estimate_constants


class TauDomainError(ValueError):
    pass


class ProxConvergenceError(RuntimeError):
    """Raised when the inner prox solver exhausts its iteration budget."""

    def __init__(self, message, grad_norm, iterations):
        super().__init__(f"{message} (final gradient norm {grad_norm:.3e} "
                         f"after {iterations} iterations)")
        self.grad_norm = grad_norm
        self.iterations = iterations


@dataclass(frozen=True)
class ProxSettings:
    tolerance: float = 1e-10
    max_iterations: int = 10_000
    step_rule: str = "fixed"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.step_rule not in ("fixed", "backtracking"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")


@dataclass(frozen=True)
class LinearGaussianLikelihood:
    """Observation model ``y = A x + eps`` with ``eps ~ N(0, sigma^2 I)``."""

    matrix: np.ndarray
    observation: np.ndarray
    noise_sigma: float

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        y = np.asarray(self.observation, dtype=float).reshape(-1)
        if a.shape[0] != y.shape[0]:
            raise ValueError(f"matrix has {a.shape[0]} rows but observation has {y.shape[0]} entries")
        if not self.noise_sigma > 0:
            raise ValueError("noise_sigma must be positive")
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "observation", y)

    @property
    def dim(self):
        return self.matrix.shape[1]

    def grad(self, x):
        """``sigma^-2 A^T (A x - y)`` for a point or a batch."""
        resid = np.einsum("ij,...j->...i", self.matrix, x) - self.observation
        return np.einsum("ij,...i->...j", self.matrix, resid) / self.noise_sigma**2

    def potential(self, x):
        resid = np.einsum("ij,...j->...i", self.matrix, x) - self.observation
        return 0.5 * np.sum(resid * resid, axis=-1) / self.noise_sigma**2

    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.matrix.T @ self.matrix, 2)) / self.noise_sigma**2


class AnnealingPath:
    """Base class; subclasses implement ``_grad``, ``_potential`` and ``_constants``."""

    variant = "abstract"

    def __init__(self, target: GaussianMixture, tau_max: float = 1.0,
                 constants: TargetConstants | None = None):
        self.target = target
        self.tau_max = float(tau_max)
        self.constants = constants if constants is not None else estimate_constants(target)

    @property
    def dim(self):
        return self.target.dim

    def __repr__(self):
        return f"{type(self).__name__}(tau_max={self.tau_max:g}, target={self.target!r})"

    def check_tau(self, tau):
        tau = float(tau)
        if not (0.0 <= tau <= self.tau_max):
            raise TauDomainError(
                f"tau={tau!r} outside [0, {self.tau_max!r}] for the {self.variant} path")
        return tau

    def grad_potential(self, x, tau):
        """Gradient of ``U_tau`` at ``x`` (a point or an ``(n, d)`` batch)."""
        return self._grad(np.asarray(x, dtype=float), self.check_tau(tau))

    def potential(self, x, tau):
        """``U_tau(x)`` up to a tau-dependent additive constant."""
        return self._potential(np.asarray(x, dtype=float), self.check_tau(tau))

    def step_constants(self, tau):
        """``(a_tau, L_tau)`` bounding the admissible step ``a_tau / L_tau**2``."""
        return self._constants(self.check_tau(tau))

    def _target_potential(self, x):
        return -self.target.log_density(x)

    def _target_grad(self, x):
        return -self.target.score(x)


class IdentityPath(AnnealingPath):
    """``p_tau = p`` for all tau (plain ULA)."""

    variant = "identity"

    def _grad(self, x, tau):
        return self._target_grad(x)

    def _potential(self, x, tau):
        return self._target_potential(x)

    def _constants(self, tau):
        c = self.constants
        return c.dissipativity_a, c.lipschitz


def default_reference(target: GaussianMixture) -> GaussianMixture:
    """``N(0, s^2 I)`` with ``s^2`` the largest covariance eigenvalue of the target."""
    var = float(np.max(target.eigenvalues))
    return GaussianMixture([1.0], np.zeros((1, target.dim)), np.full((1, target.dim), var))


class TemperingPath(AnnealingPath):
    """Geometric path ``p_tau ~ p_1^tau p_0^(1 - tau)``; potentials mix linearly."""

    variant = "tempering"

    def __init__(self, target, reference: GaussianMixture | None = None,
                 tau_max: float = 1.0, constants=None):
        if tau_max > 1.0:
            raise ValueError("tempering is defined for tau in [0, 1]")
        super().__init__(target, tau_max, constants)
        self.reference = reference if reference is not None else default_reference(target)
        if self.reference.dim != target.dim:
            raise ValueError("reference and target dimensions differ")
        self.reference_constants = estimate_constants(self.reference)

    def _grad(self, x, tau):
        return (1.0 - tau) * self._target_grad(x) - tau * self.reference.score(x)

    def _potential(self, x, tau):
        return (1.0 - tau) * self._target_potential(x) - tau * self.reference.log_density(x)

    def _constants(self, tau):
        c0, c1 = self.constants, self.reference_constants
        return (min(c0.dissipativity_a, c1.dissipativity_a),
                (1.0 - tau) * c0.lipschitz + tau * c1.lipschitz)


class DilationPath(AnnealingPath):
    """``p_tau(x) = (1 - tau)^(-d/2) p(x / sqrt(1 - tau))`` on ``[0, tau_max]``, tau_max < 1."""

    variant = "dilation"

    def __init__(self, target, tau_max: float = 0.99, constants=None):
        if not 0.0 <= tau_max < 1.0:
            raise ValueError("dilation requires tau_max < 1")
        super().__init__(target, tau_max, constants)

    def _grad(self, x, tau):
        s = 1.0 / math.sqrt(1.0 - tau)
        return s * self._target_grad(s * x)

    def _potential(self, x, tau):
        s = 1.0 / math.sqrt(1.0 - tau)
        return self._target_potential(s * x) + 0.5 * self.dim * math.log(1.0 - tau)

    def _constants(self, tau):
        c = self.constants
        return c.dissipativity_a, c.lipschitz / (1.0 - tau)


class ConvolutionPath(AnnealingPath):
    """Variance-preserving path, the law of ``sqrt(1 - tau) X + sqrt(tau) Z``.

    For a mixture target this is again a mixture, with means scaled by
    ``sqrt(1 - tau)`` and covariances ``(1 - tau) S_i + tau I``.
    """

    variant = "convolution"

    def __init__(self, target, tau_max: float = 1.0, constants=None):
        if tau_max > 1.0:
            raise ValueError("the convolution path is defined for tau in [0, 1]")
        super().__init__(target, tau_max, constants)
        self._cache = (None, None)

    def mixture_at(self, tau: float) -> GaussianMixture:
        tau = self.check_tau(tau)
        cached_tau, cached = self._cache
        if cached_tau == tau:
            return cached
        if tau == 0.0:
            gmm = self.target
        else:
            t = self.target
            base = t.variances if t.is_diagonal else t.covariances
            cov = (1.0 - tau) * base
            if t.is_diagonal:
                cov = cov + tau
            else:
                cov = cov + tau * np.eye(t.dim)[None]
            gmm = GaussianMixture(t.weights, math.sqrt(1.0 - tau) * t.means, cov)
        self._cache = (tau, gmm)
        return gmm

    def _grad(self, x, tau):
        return -self.mixture_at(tau).score(x)

    def _potential(self, x, tau):
        return -self.mixture_at(tau).log_density(x)

    def _constants(self, tau):
        # eigenvalues of (1 - tau) S + tau I are affine images of those of S
        lam = (1.0 - tau) * self.target.eigenvalues + tau
        return 1.0 / float(np.max(lam)), 1.0 / float(np.min(lam))


class DazPath(AnnealingPath):
    """Moreau-envelope path: ``U_tau = inf_y U(y) + |x - y|^2 / (2 tau)``.

    Valid for ``tau < min(1/alpha, 1/L)``; ``tau_max`` defaults to half that
    bound.
    """

    variant = "daz"

    def __init__(self, target, tau_max: float | None = None, constants=None,
                 prox_settings: ProxSettings | None = None):
        constants = constants if constants is not None else estimate_constants(target)
        bound = min(1.0 / constants.lipschitz,
                    1.0 / constants.weak_convexity if constants.weak_convexity > 0 else math.inf)
        if tau_max is None:
            tau_max = 0.5 * bound
        if not 0.0 <= tau_max < bound:
            raise ValueError(f"daz requires tau_max < min(1/alpha, 1/L) = {bound!r}, got {tau_max!r}")
        super().__init__(target, tau_max, constants)
        self.prox_settings = prox_settings or ProxSettings()
        self.tau_bound = bound

    def prox(self, x, tau):
        """Minimiser of ``y -> U(y) + |x - y|^2 / (2 tau)``."""
        tau = self.check_tau(tau)
        if tau == 0.0:
            return np.array(x, dtype=float)
        x = np.asarray(x, dtype=float)
        xb, single = self.target._as_batch(x)
        y = self._prox_batch(xb, tau)
        return y[0] if single else y

    def _objective(self, y, x, tau):
        diff = y - x
        return -self.target.log_density(y) + 0.5 * np.sum(diff * diff, axis=1) / tau

    def _descend(self, x, y0, tau):
        s = self.prox_settings
        y = y0.copy()
        # rows still iterating: positions idx, iterates ya, anchors xa
        idx = np.arange(x.shape[0])
        ya, xa = y.copy(), x
        fixed = 1.0 / (1.0 / tau + self.constants.lipschitz)
        step = np.full(x.shape[0], fixed)
        # tolerance relative to the roundoff floor of (y - x) / tau
        tol = s.tolerance * (1.0 + (np.abs(y0).max(axis=1) + 2.0 * np.abs(x).max(axis=1) + 1.0) / tau)
        one_dim = x.shape[1] == 1
        for it in range(s.max_iterations + 1):
            g = (ya - xa) / tau - self.target.score(ya)
            gn = np.abs(g[:, 0]) if one_dim else np.sqrt(np.einsum("ni,ni->n", g, g))
            done = gn <= tol
            if done.any():
                y[idx[done]] = ya[done]
                if done.all():
                    return y
                keep = ~done
                idx, ya, xa, g, gn, tol = idx[keep], ya[keep], xa[keep], g[keep], gn[keep], tol[keep]
            if it == s.max_iterations:
                break
            if s.step_rule == "fixed":
                ya = ya - fixed * g
            else:
                ya = self._backtrack(ya, xa, g, tau, step, idx)
        raise ProxConvergenceError(f"prox did not converge at tau={tau!r}",
                                   float(np.max(gn)), s.max_iterations)

    def _backtrack(self, ya, xa, g, tau, step, idx):
        # never below the fixed step, which the curvature bound makes safe
        floor = 1.0 / (1.0 / tau + self.constants.lipschitz)
        f0 = self._objective(ya, xa, tau)
        gg = np.sum(g * g, axis=1)
        eta = np.minimum(2.0 * step[idx], tau)
        for _ in range(60):
            cand = ya - eta[:, None] * g
            ok = (self._objective(cand, xa, tau) <= f0 - 0.5 * eta * gg) | (eta <= floor)
            if np.all(ok):
                break
            eta = np.where(ok, eta, np.maximum(0.5 * eta, floor))
        step[idx] = eta
        return ya - eta[:, None] * g

    def _gaussian_prox_points(self, x, tau):
        """Prox of each single component's quadratic potential, shape (K, n, d)."""
        t = self.target
        diff = x[None, :, :] - t.means[:, None, :]
        if t.is_diagonal:
            gain = t.variances / (t.variances + tau)
            return t.means[:, None, :] + gain[:, None, :] * diff
        eye = np.eye(t.dim)
        out = np.empty((t.n_components,) + x.shape)
        for k in range(t.n_components):
            gain = t.covariances[k] @ np.linalg.inv(t.covariances[k] + tau * eye)
            out[k] = t.means[k] + np.einsum("ij,nj->ni", gain, diff[k])
        return out

    def _prox_batch(self, x, tau):
        y = self._descend(x, x, tau)
        # The estimated weak-convexity constant can be optimistic for narrow
        # mixtures, so cross-check the warm-started minimiser against restarts
        # from each component's own prox point.
        f_y = self._objective(y, x, tau)
        cands = self._gaussian_prox_points(x, tau)
        f_c = np.stack([self._objective(c, x, tau) for c in cands])
        best = np.argmin(f_c, axis=0)
        f_best = f_c[best, np.arange(x.shape[0])]
        redo = np.nonzero(f_best < f_y - 1e-12 * (1.0 + np.abs(f_y)))[0]
        if redo.size:
            y_alt = self._descend(x[redo], cands[best[redo], redo], tau)
            f_alt = self._objective(y_alt, x[redo], tau)
            better = f_alt < f_y[redo]
            y[redo[better]] = y_alt[better]
        return y

    def _grad(self, x, tau):
        if tau == 0.0:
            return self._target_grad(x)
        return (x - self.prox(x, tau)) / tau

    def _potential(self, x, tau):
        if tau == 0.0:
            return self._target_potential(x)
        xb, single = self.target._as_batch(x)
        y = self._prox_batch(xb, tau)
        val = self._objective(y, xb, tau)
        return float(val[0]) if single else val

    def _constants(self, tau):
        c = self.constants
        shrink = 1.0 - tau * c.lipschitz
        return max(c.dissipativity_a * shrink, 0.5 * c.dissipativity_a), c.lipschitz / shrink


def posterior_mixture(prior: GaussianMixture, likelihood: LinearGaussianLikelihood) -> GaussianMixture:
    """Exact posterior of a mixture prior under a linear-Gaussian likelihood."""
    a, y, s2 = likelihood.matrix, likelihood.observation, likelihood.noise_sigma**2
    if a.shape[1] != prior.dim:
        raise ValueError("likelihood matrix does not match the prior dimension")
    k = a.shape[0]
    means, covs, logw = [], [], []
    for i in range(prior.n_components):
        cov = prior.covariances[i]
        prec = np.linalg.inv(cov)
        post_cov = np.linalg.inv(prec + a.T @ a / s2)
        post_cov = 0.5 * (post_cov + post_cov.T)
        means.append(post_cov @ (prec @ prior.means[i] + a.T @ y / s2))
        covs.append(post_cov)
        pred_cov = s2 * np.eye(k) + a @ cov @ a.T
        r = y - a @ prior.means[i]
        _, logdet = np.linalg.slogdet(pred_cov)
        logw.append(math.log(prior.weights[i])
                    - 0.5 * (r @ np.linalg.solve(pred_cov, r) + logdet + k * math.log(2 * math.pi)))
    logw = np.array(logw)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    return GaussianMixture(w, np.array(means), np.array(covs))


class PosteriorPath(AnnealingPath):
    """Prior path composed with a fixed linear-Gaussian likelihood."""

    variant = "posterior"

    def __init__(self, inner: AnnealingPath, likelihood: LinearGaussianLikelihood):
        if likelihood.dim != inner.dim:
            raise ValueError("likelihood and prior path dimensions differ")
        self.inner = inner
        self.likelihood = likelihood
        super().__init__(posterior_mixture(inner.target, likelihood), inner.tau_max,
                         inner.constants)

    def _grad(self, x, tau):
        return self.likelihood.grad(x) + self.inner._grad(x, tau)

    def _potential(self, x, tau):
        return self.likelihood.potential(x) + self.inner._potential(x, tau)

    def _constants(self, tau):
        a, lip = self.inner._constants(tau)
        return a, lip + self.likelihood.lipschitz()


PATH_TYPES = {
    "identity": IdentityPath,
    "tempering": TemperingPath,
    "dilation": DilationPath,
    "daz": DazPath,
    "convolution": ConvolutionPath,
}

# method names used by the experiment harness
METHOD_ALIASES = {
    "ula": "identity",
    "identity": "identity",
    "tempering": "tempering",
    "dilation": "dilation",
    "daz": "daz",
    "convolution": "convolution",
    "diffusion": "convolution",
}


def make_path(variant: str, target: GaussianMixture, **options) -> AnnealingPath:
    """Build a path by name (``ULA``/``identity``, ``tempering``, ``dilation``, ``DAZ``, ``convolution``)."""
    key = METHOD_ALIASES.get(variant.lower())
    if key is None:
        raise ValueError(f"unknown path variant {variant!r}")
    return PATH_TYPES[key](target, **options)


# functional interface


def grad_potential(path: AnnealingPath, x, tau):
    return path.grad_potential(x, tau)


def step_constants(path: AnnealingPath, tau):
    return path.step_constants(tau)


def prox(path: DazPath, x, tau):
    if not isinstance(path, DazPath):
        raise TypeError("prox is defined for the daz path only")
    return path.prox(x, tau)
