"""Gaussian-mixture targets with analytic density, score and exact sampling."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TargetConstants:
    """Smoothness / dissipativity constants of a potential.

    Only ``lipschitz`` and ``dissipativity_a`` feed the step-size rule; the
    remaining fields are coarse far-field placeholders.
    """

    lipschitz: float
    dissipativity_a: float
    dissipativity_b: float = 0.0
    dissipativity_radius: float = 0.0
    weak_convexity: float = 0.0

    def __post_init__(self):
        vals = (self.lipschitz, self.dissipativity_a, self.dissipativity_b,
                self.dissipativity_radius, self.weak_convexity)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite constants: {vals}")
        if self.lipschitz <= 0 or self.dissipativity_a <= 0:
            raise ValueError("lipschitz and dissipativity_a must be positive")
        if self.lipschitz < self.dissipativity_a:
            raise ValueError(
                f"lipschitz ({self.lipschitz}) < dissipativity_a ({self.dissipativity_a})")


class GaussianMixture:
    """Finite mixture ``sum_i w_i N(m_i, S_i)`` on R^d.

    Parameters
    ----------
    weights : array-like, shape (n_components,)
        Positive mixture weights summing to one.
    means : array-like, shape (n_components, dim)
    covariances : array-like
        Either full matrices of shape (n_components, dim, dim) or, for the
        diagonal case, per-axis variances of shape (n_components, dim).

    Instances are immutable; Cholesky factors and eigenvalues are computed
    once here.
    """

    def __init__(self, weights, means, covariances):
        weights = np.asarray(weights, dtype=float).reshape(-1)
        means = np.atleast_2d(np.asarray(means, dtype=float))
        if means.shape[0] != weights.shape[0] and means.shape[1] == weights.shape[0]:
            # 1-D mixtures given as a flat list of means
            means = means.T
        n, d = means.shape
        if weights.shape[0] != n:
            raise ValueError(f"{weights.shape[0]} weights for {n} means")
        if np.any(weights <= 0):
            raise ValueError("mixture weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {weights.sum()!r}, expected 1")

        cov = np.asarray(covariances, dtype=float)
        if cov.ndim == 1 and d == 1:
            cov = cov.reshape(n, 1)
        if cov.shape == (n, d):
            self._diag = True
            if np.any(cov <= 0):
                raise ValueError("covariances must be positive definite")
            full = np.zeros((n, d, d))
            idx = np.arange(d)
            full[:, idx, idx] = cov
            self._var = cov.copy()
        elif cov.shape == (n, d, d):
            if not np.allclose(cov, np.swapaxes(cov, 1, 2), rtol=0, atol=1e-12):
                raise ValueError("covariances must be symmetric")
            off = cov.copy()
            idx = np.arange(d)
            off[:, idx, idx] = 0.0
            self._diag = not np.any(off)
            full = cov.copy()
            self._var = np.diagonal(cov, axis1=1, axis2=2).copy()
        else:
            raise ValueError(f"covariances of shape {cov.shape} do not match "
                             f"{n} components in dimension {d}")

        eig = np.linalg.eigvalsh(full)
        if np.any(eig <= 0):
            raise ValueError("covariances must be positive definite")

        self.dim = d
        self.n_components = n
        self.weights = weights
        self.means = means
        self.covariances = full
        self.eigenvalues = eig  # (n, d), ascending per component
        self._log_weights = np.log(weights)
        if self._diag:
            self._inv_std = 1.0 / np.sqrt(self._var)
            self._prec = 1.0 / self._var
            self._log_det = np.sum(np.log(self._var), axis=1)
        else:
            chol = np.linalg.cholesky(full)
            self.cholesky = chol
            # z = W (x - m) with W = L^{-1}; S^{-1} = W^T W
            self._whiten = np.linalg.inv(chol)
            self._log_det = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
        for arr in (self.weights, self.means, self.covariances, self.eigenvalues):
            arr.setflags(write=False)

    def __repr__(self):
        return (f"GaussianMixture(dim={self.dim}, n_components={self.n_components}, "
                f"weights={self.weights.tolist()})")

    @property
    def is_diagonal(self) -> bool:
        return self._diag

    @property
    def variances(self) -> np.ndarray:
        """Per-axis variances, shape (n_components, dim)."""
        return self._var

    @classmethod
    def from_stds(cls, weights, means, stds):
        """Diagonal mixture from per-component (per-axis) standard deviations."""
        means = np.asarray(means, dtype=float)
        stds = np.asarray(stds, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        if stds.ndim == 1:
            stds = np.broadcast_to(stds[:, None], means.shape)
        return cls(weights, means, stds**2)

    # -- evaluation -----------------------------------------------------------------

    def _as_batch(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim <= 1
        if x.ndim == 0:
            x = x.reshape(1, 1)
        elif x.ndim == 1:
            if self.dim == 1 and x.shape[0] != 1:
                raise ValueError(
                    f"1-D vector of length {x.shape[0]} given for a dim-1 mixture; "
                    "pass an (n, 1) batch instead")
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got shape {x.shape}")
        return x, single

    def _component_terms(self, x):
        """Per-component log-densities and score contributions, lists of length K."""
        log_comp, comp_scores = [], []
        const = -0.5 * self.dim * LOG_2PI
        for k in range(self.n_components):
            diff = x - self.means[k]
            if self._diag:
                z = diff * self._inv_std[k]
                comp_scores.append(-diff * self._prec[k])
            else:
                z = np.einsum("ij,nj->ni", self._whiten[k], diff)
                comp_scores.append(-np.einsum("ij,ni->nj", self._whiten[k], z))
            quad = z[:, 0] * z[:, 0] if self.dim == 1 else np.einsum("ni,ni->n", z, z)
            log_comp.append(const - 0.5 * self._log_det[k] - 0.5 * quad
                            + self._log_weights[k])
        return log_comp, comp_scores

    @staticmethod
    def _logsumexp(log_comp):
        amax = log_comp[0]
        for a in log_comp[1:]:
            amax = np.maximum(amax, a)
        total = np.exp(log_comp[0] - amax)
        for a in log_comp[1:]:
            total = total + np.exp(a - amax)
        return amax + np.log(total)

    def log_density(self, x):
        """Log of the mixture density via log-sum-exp.

        Accepts one point (shape ``(d,)``; a scalar in 1-D) or a batch
        ``(n, d)`` and returns a float or an ``(n,)`` array respectively.
        """
        xb, single = self._as_batch(x)
        log_comp, _ = self._component_terms(xb)
        lse = self._logsumexp(log_comp)
        return float(lse[0]) if single else lse

    def density(self, x):
        return np.exp(self.log_density(x))

    def score(self, x):
        """Gradient of the log-density, ``sum_i r_i(x) * (-S_i^{-1}(x - m_i))``.

        Responsibilities ``r_i`` are formed in log space.
        """
        xb, single = self._as_batch(x)
        log_comp, comp_scores = self._component_terms(xb)
        lse = self._logsumexp(log_comp)
        out = np.exp(log_comp[0] - lse)[:, None] * comp_scores[0]
        for a, sc in zip(log_comp[1:], comp_scores[1:]):
            out = out + np.exp(a - lse)[:, None] * sc
        return out[0] if single else out

    def sample(self, count: int, rng=None) -> np.ndarray:
        """Exact i.i.d. draws, shape ``(count, dim)``."""
        if count < 1:
            raise ValueError("count must be >= 1")
        rng = as_generator(rng)
        comp = rng.choice(self.n_components, size=count, p=self.weights)
        z = rng.standard_normal((count, self.dim))
        if self._diag:
            return self.means[comp] + z * np.sqrt(self._var)[comp]
        chol = np.linalg.cholesky(self.covariances)
        return self.means[comp] + np.einsum("nij,nj->ni", chol[comp], z)

    def marginal(self, axis: int) -> "GaussianMixture":
        """One-dimensional mixture of the ``axis`` coordinate."""
        if not 0 <= axis < self.dim:
            raise ValueError(f"axis {axis} out of range for dimension {self.dim}")
        return GaussianMixture(self.weights, self.means[:, axis:axis + 1],
                               self._var[:, axis:axis + 1])

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        mu = self.mean()
        dev = self.means - mu
        return (np.einsum("k,kij->ij", self.weights, self.covariances)
                + np.einsum("k,ki,kj->ij", self.weights, dev, dev))

    def affine(self, scale: float, add_identity: float = 0.0) -> "GaussianMixture":
        """Law of ``scale * X + sqrt(add_identity) * Z`` for X ~ self, Z ~ N(0, I)."""
        cov = scale**2 * (self._var if self._diag else self.covariances)
        if add_identity:
            if self._diag:
                cov = cov + add_identity
            else:
                cov = cov + add_identity * np.eye(self.dim)[None]
        return GaussianMixture(self.weights, scale * self.means, cov)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


# functional aliases


def log_density(gmm: GaussianMixture, x):
    return gmm.log_density(x)


def score(gmm: GaussianMixture, x):
    return gmm.score(x)


def sample(gmm: GaussianMixture, count: int, rng=None):
    return gmm.sample(count, rng)


def marginal(gmm: GaussianMixture, axis: int) -> GaussianMixture:
    return gmm.marginal(axis)


def estimate_constants(gmm: GaussianMixture) -> TargetConstants:
    """Step-size constants from the covariance spectrum.

    ``L = 1/lambda_min`` and ``a = 1/lambda_max`` over all components; exact
    for a single Gaussian. The dissipativity offset ``b`` and radius ``R`` are
    far-field placeholders and weak convexity is set to ``L``.
    """
    lam_min = float(np.min(gmm.eigenvalues))
    lam_max = float(np.max(gmm.eigenvalues))
    lip = 1.0 / lam_min
    a = 1.0 / lam_max
    radius = float(np.max(np.linalg.norm(gmm.means, axis=1))) + 3.0 * math.sqrt(lam_max)
    return TargetConstants(
        lipschitz=lip,
        dissipativity_a=a,
        dissipativity_b=a * radius**2,
        dissipativity_radius=radius,
        weak_convexity=lip,
    )


def paper_mixture_1d() -> GaussianMixture:
    """Three-component 1-D benchmark mixture."""
    return GaussianMixture.from_stds([0.3, 0.4, 0.3], [-2.0, 0.0, 2.0], [0.2, 0.1, 0.3])


def paper_mixture_2d() -> GaussianMixture:
    """Four-component 2-D benchmark mixture with axis-aligned covariances."""
    return GaussianMixture.from_stds(
        [0.2, 0.4, 0.2, 0.2],
        [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]],
        [[0.2, 0.2], [0.1, 0.2], [0.3, 0.1], [0.1, 0.1]],
    )


def random_mixture(dim: int, n_components: int = 4, seed: int = 0,
                   weights=(0.2, 0.4, 0.2, 0.2), std_range=(0.1, 0.4)) -> GaussianMixture:
    """Mixture with N(0, I) means and uniform per-axis standard deviations."""
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((n_components, dim))
    stds = rng.uniform(std_range[0], std_range[1], size=(n_components, dim))
    w = np.asarray(weights, dtype=float)
    if w.shape[0] != n_components:
        w = np.full(n_components, 1.0 / n_components)
    return GaussianMixture.from_stds(w, means, stds)
