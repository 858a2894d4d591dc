"""
Gaussian and Gaussian-mixture algebra for the confounder-conditioned latent model.

The do^c expectation of a latent coordinate is the mixture-weighted average of the
per-component conditional means. With diagonal components those conditional means
do not depend on the other coordinates, which is what :func:`lc_moment` measures.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from .logger import get_logger

SYMMETRY_TOL = 1e-10
EIGEN_TOL = 1e-10


class GaussMixError(Exception):
    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class SingularBlockError(GaussMixError):
    """Raised when the observed covariance block cannot be inverted."""


class NotPositiveDefiniteError(GaussMixError):
    """Raised when a density is requested for a covariance that is not positive definite."""


class ComponentGaussian:
    """
    One Gaussian component with mean and covariance.

    Args:
        mean: D-vector.
        cov: Dense D x D covariance. Mutually exclusive with ``var``.
        var: Diagonal of a diagonal covariance.
    """

    def __init__(self, mean: Sequence[float], cov: Optional[np.ndarray] = None, var: Optional[Sequence[float]] = None):
        self.mean = np.array(mean, dtype=np.float64).reshape(-1)
        if self.mean.size < 1:
            raise GaussMixError("A component needs dimension D >= 1")
        if (cov is None) == (var is None):
            raise GaussMixError("Provide exactly one of cov (dense) or var (diagonal)")
        d = self.mean.size
        if var is not None:
            self._var = np.array(var, dtype=np.float64).reshape(-1)
            if self._var.shape != (d,):
                raise GaussMixError(f"Variance vector has shape {self._var.shape}, expected {(d,)}")
            if np.any(self._var < -EIGEN_TOL):
                raise GaussMixError(f"Variances must be nonnegative, got {self._var}")
            self._cov = None
        else:
            cov = np.array(cov, dtype=np.float64)
            if cov.shape != (d, d):
                raise GaussMixError(f"Covariance has shape {cov.shape}, expected {(d, d)}")
            if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOL:
                raise GaussMixError("Covariance is not symmetric")
            if np.min(np.linalg.eigvalsh(cov)) < -EIGEN_TOL:
                raise GaussMixError("Covariance is not positive semi-definite")
            self._cov = cov
            self._var = None

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def is_diagonal(self) -> bool:
        return self._cov is None

    @property
    def covariance(self) -> np.ndarray:
        return np.diag(self._var) if self._cov is None else self._cov

    @property
    def variances(self) -> np.ndarray:
        return self._var if self._cov is None else np.diag(self._cov).copy()

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.variances, 0.0))

    def __repr__(self) -> str:
        kind = "diag" if self.is_diagonal else "dense"
        return f"ComponentGaussian(D={self.dim}, {kind})"


@dataclass
class MixtureLatent:
    """Mixture of per-confounder-value Gaussian components."""
    components: List[ComponentGaussian]
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if not self.components:
            raise GaussMixError("A mixture needs at least one component")
        if self.weights.shape != (len(self.components),):
            raise GaussMixError(f"weights has shape {self.weights.shape}, expected {(len(self.components),)}")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise GaussMixError(f"weights must be a probability vector, got {self.weights}")
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise GaussMixError(f"All components must share D, got {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def active(self) -> List[Tuple[float, ComponentGaussian]]:
        """(weight, component) pairs with nonzero weight."""
        return [(float(w), c) for w, c in zip(self.weights, self.components) if w > 0]

    def mean(self) -> np.ndarray:
        return sum(w * c.mean for w, c in self.active())


def conditional(g: ComponentGaussian, observed_idx: Sequence[int], values: Sequence[float]) -> ComponentGaussian:
    """Distribution of the unobserved coordinates given Z_j = values.

    mean = mu_k + S_kj S_jj^-1 (z_j - mu_j), cov = S_kk - S_kj S_jj^-1 S_jk
    """
    j = sorted(int(i) for i in observed_idx)
    if len(set(j)) != len(j) or any(not 0 <= i < g.dim for i in j):
        raise GaussMixError(f"Observed indices {list(observed_idx)} invalid for D={g.dim}")
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size != len(j):
        raise GaussMixError(f"Got {values.size} observed values for {len(j)} indices")
    values = values[np.argsort([int(i) for i in observed_idx])]
    k = [i for i in range(g.dim) if i not in j]
    if not k:
        raise GaussMixError("Conditioning on every coordinate leaves nothing to return")

    if g.is_diagonal:
        var = g.variances
        if j and np.min(var[j]) <= EIGEN_TOL:
            raise SingularBlockError(f"Observed block {j} is singular (min variance {np.min(var[j]):.3e})")
        return ComponentGaussian(g.mean[k], var=var[k])

    cov = g.covariance
    s_kk = cov[np.ix_(k, k)]
    if not j:
        return ComponentGaussian(g.mean[k], cov=s_kk)
    s_jj = cov[np.ix_(j, j)]
    s_kj = cov[np.ix_(k, j)]
    min_eig = float(np.min(np.linalg.eigvalsh(s_jj)))
    if min_eig <= EIGEN_TOL:
        raise SingularBlockError(f"Observed block {j} is singular (min eigenvalue {min_eig:.3e})")
    mean = g.mean[k] + s_kj @ np.linalg.solve(s_jj, values - g.mean[j])
    cond = s_kk - s_kj @ np.linalg.solve(s_jj, s_kj.T)
    return ComponentGaussian(mean, cov=0.5 * (cond + cond.T))


def kl_unit_cov(variances: Sequence[float]) -> float:
    """KL from N(mu, diag(var)) to N(mu, I): 0.5 * (-sum log var - D + sum var)."""
    var = np.asarray(variances, dtype=np.float64).reshape(-1)
    if np.any(var <= 0):
        raise GaussMixError(f"Variances must be strictly positive, got min {var.min()}")
    return float(0.5 * (-np.sum(np.log(var)) - var.size + np.sum(var)))


def doc_moment(m: MixtureLatent, i: int, z_minus_i: Sequence[float], moment: int = 1) -> float:
    """Mixture-weighted E[Z_i^moment | Z_-i = z_-i] across components (do^c estimate)."""
    if not 0 <= i < m.dim:
        raise GaussMixError(f"Index {i} out of range for D={m.dim}")
    others = [j for j in range(m.dim) if j != i]
    z_minus_i = np.asarray(z_minus_i, dtype=np.float64).reshape(-1)
    if z_minus_i.size != len(others):
        raise GaussMixError(f"z_minus_i has {z_minus_i.size} entries, expected {len(others)}")
    total = 0.0
    for w, comp in m.active():
        if others:
            cond = conditional(comp, others, z_minus_i)
            mu, var = float(cond.mean[0]), float(cond.variances[0])
        else:
            mu, var = float(comp.mean[0]), float(comp.variances[0])
        total += w * (mu if moment == 1 else var + mu * mu)
    return total


def _marginal_moment(m: MixtureLatent, i: int, moment: int) -> float:
    if moment == 1:
        return float(sum(w * c.mean[i] for w, c in m.active()))
    return float(sum(w * (c.variances[i] + c.mean[i] ** 2) for w, c in m.active()))


def default_eval_points(m: MixtureLatent) -> np.ndarray:
    """Means of nonzero-weight components, shifted by +/- one std along each axis."""
    points = []
    for _, comp in m.active():
        std = comp.std
        for axis in range(m.dim):
            for sign in (1.0, -1.0):
                p = comp.mean.copy()
                p[axis] += sign * std[axis]
                points.append(p)
    return np.asarray(points)


def lc_moment(
    m: MixtureLatent,
    eval_points: Optional[np.ndarray] = None,
    reduce: str = "mean",
    moment: int = 1,
) -> float:
    """Sum over i of |E[Z_i | do^c(Z_-i = z_-i)] - E[Z_i]|, reduced over eval points.

    Args:
        m: The mixture latent.
        eval_points: (P, D) points; defaults to :func:`default_eval_points`.
        reduce: "mean" or "sup" over eval points.
        moment: 1 for the first moment, 2 for the raw second moment.
    """
    if reduce not in ("mean", "sup"):
        raise ValueError(f"reduce must be 'mean' or 'sup', got {reduce!r}")
    if moment not in (1, 2):
        raise ValueError(f"moment must be 1 or 2, got {moment}")
    points = default_eval_points(m) if eval_points is None else np.atleast_2d(np.asarray(eval_points, dtype=np.float64))
    if points.shape[1] != m.dim:
        raise GaussMixError(f"Eval points have dimension {points.shape[1]}, expected {m.dim}")
    targets = [_marginal_moment(m, i, moment) for i in range(m.dim)]
    values = []
    for z in points:
        total = 0.0
        for i in range(m.dim):
            z_minus_i = np.delete(z, i)
            total += abs(doc_moment(m, i, z_minus_i, moment) - targets[i])
        values.append(total)
    return float(np.mean(values) if reduce == "mean" else np.max(values))


def mixture_logpdf(m: MixtureLatent, z: np.ndarray):
    """log sum_c pi_c N(z; mu_c, S_c); z may be a D-vector or an (n, D) batch."""
    z = np.asarray(z, dtype=np.float64)
    terms = []
    for w, comp in m.active():
        cov = comp.covariance
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as e:
            raise NotPositiveDefiniteError(f"Component covariance is not positive definite: {e}") from e
        terms.append(np.log(w) + multivariate_normal(comp.mean, cov).logpdf(z))
    value = logsumexp(np.stack(terms), axis=0)
    if np.ndim(value) == 0:
        return float(value)
    return value


def sample_mixture(m: MixtureLatent, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Draw n samples; returns (samples (n, D), component index per sample)."""
    labels = rng.choice(len(m.components), size=n, p=m.weights)
    samples = np.empty((n, m.dim))
    for c, comp in enumerate(m.components):
        idx = np.flatnonzero(labels == c)
        if idx.size:
            samples[idx] = rng.multivariate_normal(comp.mean, comp.covariance, size=idx.size)
    return samples, labels


def mixture_from_encoder(mu: np.ndarray, logvar: np.ndarray, weights: np.ndarray) -> MixtureLatent:
    """Build a diagonal mixture from per-component mean and log-variance rows."""
    mu, logvar = np.asarray(mu, dtype=np.float64), np.asarray(logvar, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    weights = weights / weights.sum()
    if np.any(np.abs(logvar) > 50):
        get_logger().warning("gaussmix", "extreme log-variances in encoder output")
    components = [ComponentGaussian(mu[c], var=np.exp(logvar[c])) for c in range(mu.shape[0])]
    return MixtureLatent(components, weights)
