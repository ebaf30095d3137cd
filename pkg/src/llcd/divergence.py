"""Symmetric Kullback-Leibler (Jeffreys) divergence between pre- and
post-change densities.

The change model is ``phi1(x) = phi0(Q x + v)`` with ``Q`` orthogonal, i.e.
``phi1`` is the density of ``Q'(X - v)`` for ``X ~ phi0``.  For Gaussian
``phi0`` the divergence has a closed form in ``(Q, v)``; for anything else it
is estimated by Monte Carlo from both directions of the KL integral.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .models import GaussianModel, GaussianMixtureModel, as_data_matrix

__all__ = [
    "DivergenceEstimate",
    "check_orthogonal",
    "skl_gaussian_transform",
    "skl_monte_carlo",
    "transform_model",
]


@dataclass(frozen=True)
class DivergenceEstimate:
    """A divergence value with its Monte-Carlo standard error.

    Closed-form results carry ``std_error = 0`` and ``n_samples = 0``.
    ``raw_value`` keeps the estimate before tiny negative Monte-Carlo noise
    (above -1e-9) is clipped to zero.
    """

    value: float
    std_error: float = 0.0
    n_samples: int = 0
    raw_value: float = None

    def __post_init__(self):
        if self.raw_value is None:
            object.__setattr__(self, "raw_value", self.value)
        if self.value < 0 or self.std_error < 0:
            raise ValueError(f"invalid divergence estimate: {self}")


def _clipped(value: float, std_error: float = 0.0, n_samples: int = 0) -> DivergenceEstimate:
    raw = float(value)
    if raw < -1e-9:
        raise ValueError(f"divergence estimate is negative beyond tolerance: {raw!r}")
    return DivergenceEstimate(max(raw, 0.0), float(std_error), int(n_samples), raw)


def check_orthogonal(Q: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Return Q as a float array after checking ``max|Q'Q - I| < tol``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"Q must be square, got shape {Q.shape}")
    err = float(np.max(np.abs(Q.T @ Q - np.eye(Q.shape[0]))))
    if not err < tol:
        raise ValueError(f"Q is not orthogonal: max|Q'Q - I| = {err!r} >= {tol!r}")
    return Q


def skl_gaussian_transform(model: GaussianModel, Q, v) -> DivergenceEstimate:
    """Closed-form sKL between a Gaussian ``phi0`` and ``phi0(Q x + v)``.

    Evaluated term by term from the (Q, v) expansion of the two KL
    directions, using the cached Cholesky factor (no explicit inverse):

    - translation quadratic:  v' S^-1 v  +  (Q'v)' S^-1 (Q'v)
    - translation-rotation cross terms, linear in v
    - rotation traces:  Tr(Q' S^-1 Q S) + Tr(S^-1 Q' S Q) - 2 d
    - mean-rotation quadratic in mu

    all divided by two.
    """
    if not isinstance(model, GaussianModel):
        raise TypeError("closed form requires a GaussianModel")
    d = model.dim
    Q = check_orthogonal(Q)
    if Q.shape != (d, d):
        raise ValueError(f"Q shape {Q.shape} does not match model dimension {d}")
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (d,):
        raise ValueError(f"v shape {v.shape} does not match model dimension {d}")

    cf = (model.chol, True)
    mu, S = model.mean, model.covariance
    qtv = Q.T @ v
    a = mu - Q.T @ mu  # (I - Q') mu
    b = mu - Q @ mu    # (I - Q) mu

    quad_v = v @ cho_solve(cf, v) + qtv @ cho_solve(cf, qtv)
    linear = -2.0 * (v @ cho_solve(cf, b)) + 2.0 * (qtv @ cho_solve(cf, a))
    traces = (
        float(np.trace(cho_solve(cf, Q @ S @ Q.T)))
        + float(np.trace(cho_solve(cf, Q.T @ S @ Q)))
        - 2.0 * d
    )
    quad_mu = a @ cho_solve(cf, a) + b @ cho_solve(cf, b)
    return _clipped(0.5 * (quad_v + linear + traces + quad_mu))


def skl_monte_carlo(p, q, n: int = 100_000, rng: np.random.Generator = None) -> DivergenceEstimate:
    """Monte-Carlo sKL estimate ``KL(p, q) + KL(q, p)``.

    Each KL integral is estimated from ``n`` samples of its own base
    distribution; the standard error combines the two integrand variances in
    quadrature.
    """
    if rng is None:
        rng = np.random.default_rng()
    if n < 1_000:
        raise ValueError(f"need n >= 1000 Monte-Carlo samples, got {n}")
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: p has d={p.dim}, q has d={q.dim}")
    xp = p.sample(n, rng)
    xq = q.sample(n, rng)
    fwd = p.log_density(xp) - q.log_density(xp)
    rev = q.log_density(xq) - p.log_density(xq)
    bad = int(np.sum(~np.isfinite(fwd)) + np.sum(~np.isfinite(rev)))
    if bad:
        raise ValueError(f"non-finite log-density ratio at {bad} of {2 * n} points")
    value = float(fwd.mean() + rev.mean())
    std_error = float(np.sqrt(fwd.var(ddof=1) / n + rev.var(ddof=1) / n))
    return _clipped(value, std_error, 2 * n)


def transform_model(model, Q, v):
    """The model of ``phi1(x) = phi0(Q x + v)``.

    Gaussians map to ``N(Q'(mu - v), Q' Sigma Q)``; mixtures transform every
    component, weights unchanged.  Consequence: if ``y ~ phi0`` then
    ``Q'(y - v) ~ phi1``.
    """
    Q = check_orthogonal(Q)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if isinstance(model, GaussianModel):
        if Q.shape != (model.dim, model.dim) or v.shape != (model.dim,):
            raise ValueError(
                f"transform shapes Q{Q.shape}, v{v.shape} do not match d={model.dim}"
            )
        cov = Q.T @ model.covariance @ Q
        return GaussianModel(Q.T @ (model.mean - v), 0.5 * (cov + cov.T))
    if isinstance(model, GaussianMixtureModel):
        return GaussianMixtureModel(
            model.weights, [transform_model(c, Q, v) for c in model.components]
        )
    raise TypeError(f"not a density model: {type(model).__name__}")
