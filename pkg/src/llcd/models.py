"""Gaussian and Gaussian-mixture density models.

Everything downstream (divergence calibration, log-likelihood monitoring,
power experiments) works against the two model classes defined here.  Both
are immutable after construction and safe to share across workers; all
randomness flows through explicitly passed ``numpy.random.Generator``
instances.

Data matrices are plain ``(n, d)`` float arrays, one observation per row.
They serialize to headerless CSV (:func:`load_data_csv` /
:func:`save_data_csv`); models serialize to a small JSON schema
(:func:`save_model` / :func:`load_model`)::

    {"type": "gaussian", "mean": [...], "covariance": [[...], ...]}
    {"type": "mixture", "weights": [...], "components": [<gaussian>, ...]}

Covariance rows are stored row-major (outer list = rows).
"""

from __future__ import annotations

import json
import math

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

__all__ = [
    "GaussianModel",
    "GaussianMixtureModel",
    "as_data_matrix",
    "load_data_csv",
    "save_data_csv",
    "fit_gaussian",
    "fit_gmm_em",
    "select_k_cv",
    "random_gaussian",
    "random_mixture",
    "evaluate_log_likelihood",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
]

_LOG_2PI = math.log(2.0 * math.pi)


def as_data_matrix(values) -> np.ndarray:
    """Validate and return a data matrix as a float ``(n, d)`` array.

    Accepts anything array-like; 1-D input is treated as a single column.
    Raises ``ValueError`` on empty or non-finite input.
    """
    X = np.asarray(values, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"data matrix must be 2-dimensional, got shape {X.shape}")
    n, d = X.shape
    if n < 1 or d < 1:
        raise ValueError(f"data matrix must be at least 1x1, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("data matrix contains non-finite entries")
    return X


def load_data_csv(path) -> np.ndarray:
    """Read a headerless comma-separated matrix of reals, one row per observation."""
    X = np.loadtxt(path, delimiter=",", ndmin=2)
    return as_data_matrix(X)


def save_data_csv(path, X) -> None:
    """Write a data matrix as headerless CSV with round-trip precision."""
    X = as_data_matrix(X)
    np.savetxt(path, X, delimiter=",", fmt="%.17g")


def _check_dims(model_dim: int, X: np.ndarray) -> None:
    if X.shape[1] != model_dim:
        raise ValueError(
            f"dimension mismatch: model has d={model_dim}, data has d={X.shape[1]}"
        )


class GaussianModel:
    """Multivariate Gaussian with a cached Cholesky factorization.

    Parameters
    ----------
    mean : array-like, shape (d,)
    covariance : array-like, shape (d, d)
        Must be symmetric positive definite; the constructor fails if the
        Cholesky factorization does.

    Attributes
    ----------
    mean : (d,) array
    covariance : (d, d) array
    chol : (d, d) lower-triangular factor, ``chol @ chol.T == covariance``
    log_det : log-determinant of the covariance
    """

    def __init__(self, mean, covariance):
        # copy so freezing the fields below cannot affect caller arrays
        mean = np.atleast_1d(np.array(mean, dtype=float))
        covariance = np.atleast_2d(np.array(covariance, dtype=float))
        if mean.ndim != 1:
            raise ValueError(f"mean must be a vector, got shape {mean.shape}")
        d = mean.shape[0]
        if d < 1:
            raise ValueError("dimension must be >= 1")
        if covariance.shape != (d, d):
            raise ValueError(
                f"covariance shape {covariance.shape} does not match mean length {d}"
            )
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(covariance)):
            raise ValueError("model parameters contain non-finite entries")
        if not np.allclose(covariance, covariance.T, rtol=1e-8, atol=1e-10):
            raise ValueError("covariance is not symmetric")
        try:
            chol = np.linalg.cholesky(covariance)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance is not positive definite") from exc

        self.mean = mean
        self.covariance = covariance
        self.chol = chol
        self.log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        for a in (self.mean, self.covariance, self.chol):
            a.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def _maha(self, X: np.ndarray) -> np.ndarray:
        # X already validated; inputs are finite so the solver check is skipped
        Z = solve_triangular(self.chol, (X - self.mean).T, lower=True,
                             check_finite=False)
        return np.einsum("ij,ij->j", Z, Z)

    def mahalanobis_sq(self, X) -> np.ndarray:
        """Squared Mahalanobis distances of each row, via one triangular solve."""
        X = as_data_matrix(X)
        _check_dims(self.dim, X)
        return self._maha(X)

    def log_likelihood(self, X) -> np.ndarray:
        """Per-row log-density: -(d log 2pi + log det + mahalanobis^2) / 2."""
        X = as_data_matrix(X)
        _check_dims(self.dim, X)
        return -0.5 * (self.dim * _LOG_2PI + self.log_det + self._maha(X))

    # same quantity under the name shared with the mixture class
    def log_density(self, X) -> np.ndarray:
        return self.log_likelihood(X)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` rows; identical generator state gives identical output."""
        if n < 1:
            raise ValueError(f"sample size must be >= 1, got {n}")
        Z = rng.standard_normal((n, self.dim))
        return self.mean + Z @ self.chol.T

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GaussianModel)
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.covariance, other.covariance)
        )

    def __repr__(self) -> str:
        return f"GaussianModel(d={self.dim})"


class GaussianMixtureModel:
    """Finite mixture of :class:`GaussianModel` components.

    Weights must be strictly positive and sum to one (within 1e-10); all
    components must share one dimension.
    """

    def __init__(self, weights, components):
        weights = np.atleast_1d(np.array(weights, dtype=float))
        components = list(components)
        if weights.ndim != 1 or len(components) != weights.shape[0]:
            raise ValueError("one weight per component is required")
        if len(components) < 1:
            raise ValueError("mixture needs at least one component")
        if np.any(weights <= 0):
            raise ValueError("mixture weights must be strictly positive")
        if abs(float(weights.sum()) - 1.0) > 1e-10:
            raise ValueError(f"mixture weights sum to {weights.sum()!r}, expected 1")
        d = components[0].dim
        for c in components:
            if c.dim != d:
                raise ValueError(
                    f"components disagree on dimension: {c.dim} != {d}"
                )
        self.weights = weights
        self.components = tuple(components)
        self.weights.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def n_components(self) -> int:
        return len(self.components)

    def _component_log_densities(self, X) -> np.ndarray:
        X = as_data_matrix(X)
        _check_dims(self.dim, X)
        d = self.dim
        return np.stack(
            [-0.5 * (d * _LOG_2PI + c.log_det + c._maha(X)) for c in self.components],
            axis=1,
        )

    def log_density(self, X) -> np.ndarray:
        """Exact log of the mixture pdf, via log-sum-exp."""
        log_comp = self._component_log_densities(X)
        return logsumexp(log_comp + np.log(self.weights), axis=1)

    def log_likelihood_upper(self, X, conventional: bool = False) -> np.ndarray:
        """Dominant-component approximation of the mixture log-likelihood.

        The dominant component ``i*`` maximizes the weighted density
        ``w_i N_i(x)``.  The default returns
        ``-(k w_{i*} / 2) [log((2 pi)^d det S_{i*}) + mahalanobis^2]``;
        with ``conventional=True`` it returns ``log(w_{i*} N_{i*}(x))``
        instead.
        """
        X = as_data_matrix(X)
        log_weighted = self._component_log_densities(X) + np.log(self.weights)
        istar = np.argmax(log_weighted, axis=1)
        if conventional:
            return log_weighted[np.arange(X.shape[0]), istar]
        k = self.n_components
        out = np.empty(X.shape[0])
        for i, comp in enumerate(self.components):
            mask = istar == i
            if not np.any(mask):
                continue
            quad = self.dim * _LOG_2PI + comp.log_det + comp._maha(X[mask])
            out[mask] = -0.5 * k * self.weights[i] * quad
        return out

    def log_likelihood_lower(self, X) -> np.ndarray:
        """Jensen lower bound: weighted average of component log-densities."""
        X = as_data_matrix(X)
        _check_dims(self.dim, X)
        acc = np.zeros(X.shape[0])
        for w, comp in zip(self.weights, self.components):
            acc += w * (self.dim * _LOG_2PI + comp.log_det + comp._maha(X))
        return -0.5 * acc

    def sample(self, n: int, rng: np.random.Generator, return_components: bool = False):
        """Draw ``n`` rows, assigning each to a component by its weight."""
        if n < 1:
            raise ValueError(f"sample size must be >= 1, got {n}")
        idx = rng.choice(self.n_components, size=n, p=self.weights)
        X = np.empty((n, self.dim))
        for i, comp in enumerate(self.components):
            mask = idx == i
            count = int(mask.sum())
            if count:
                X[mask] = comp.sample(count, rng)
        if return_components:
            return X, idx
        return X

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GaussianMixtureModel)
            and np.array_equal(self.weights, other.weights)
            and self.components == other.components
        )

    def __repr__(self) -> str:
        return f"GaussianMixtureModel(k={self.n_components}, d={self.dim})"


def evaluate_log_likelihood(model, X, variant: str = "exact") -> np.ndarray:
    """Log-likelihood values under a model, by variant.

    ``variant`` is one of ``exact`` (Gaussian density / exact mixture
    log-density), ``upper`` (dominant component) or ``lower`` (Jensen bound);
    the two approximations only apply to mixtures.
    """
    if isinstance(model, GaussianModel):
        if variant != "exact":
            raise ValueError(f"variant {variant!r} only applies to mixtures")
        return model.log_likelihood(X)
    if variant == "exact":
        return model.log_density(X)
    if variant == "upper":
        return model.log_likelihood_upper(X)
    if variant == "lower":
        return model.log_likelihood_lower(X)
    raise ValueError(f"unknown likelihood variant {variant!r}")


# ---------------------------------------------------------------------------
# fitting


def fit_gaussian(X) -> GaussianModel:
    """Sample-estimator Gaussian fit (mean, unbiased covariance).

    Requires ``n >= d + 1`` rows.  If the sample covariance fails to
    factorize, a jitter of ``1e-8 * (trace/d)`` is added to the diagonal
    once before giving up.
    """
    X = as_data_matrix(X)
    n, d = X.shape
    if n <= d:
        raise ValueError(f"insufficient samples: n={n} rows for d={d} (need n >= d+1)")
    mean = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    trace = float(np.trace(cov))
    if trace <= 0:
        raise ValueError("degenerate covariance: data rows are all identical")
    try:
        return GaussianModel(mean, cov)
    except ValueError:
        jitter = 1e-8 * (trace / d)
        try:
            return GaussianModel(mean, cov + jitter * np.eye(d))
        except ValueError as exc:
            raise ValueError("degenerate covariance: regularization failed") from exc


def _kmeans_pp_seeds(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: k rows of X chosen by squared-distance weighting."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i] = X[rng.integers(n)]
            continue
        centers[i] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((X - centers[i]) ** 2, axis=1))
    return centers


def _em_once(X, k, rng, max_iter, tol, reg):
    """One EM pass. Returns (weights, means, covs, trace) or None on collapse."""
    n, d = X.shape
    means = _kmeans_pp_seeds(X, k, rng)
    base_cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    base_cov = base_cov + reg * (np.trace(base_cov) / d) * np.eye(d)
    covs = np.repeat(base_cov[None, :, :], k, axis=0)
    weights = np.full(k, 1.0 / k)

    chols = np.empty_like(covs)
    log_dets = np.empty(k)
    for i in range(k):
        try:
            chols[i] = np.linalg.cholesky(covs[i])
        except np.linalg.LinAlgError:
            return None
        log_dets[i] = 2.0 * np.sum(np.log(np.diag(chols[i])))

    ll_prev = -np.inf
    trace = []
    for _ in range(max_iter):
        # E-step
        log_resp = np.empty((n, k))
        for i in range(k):
            Z = solve_triangular(chols[i], (X - means[i]).T, lower=True,
                                 check_finite=False)
            log_resp[:, i] = (
                np.log(weights[i])
                - 0.5 * (d * _LOG_2PI + log_dets[i] + np.einsum("ij,ij->j", Z, Z))
            )
        norm = logsumexp(log_resp, axis=1)
        ll = float(norm.sum())
        trace.append(ll)
        resp = np.exp(log_resp - norm[:, None])

        # M-step
        nk = resp.sum(axis=0)
        if np.any(nk < 1e-10 * n) or not np.all(np.isfinite(nk)):
            return None
        weights = nk / n
        means = (resp.T @ X) / nk[:, None]
        for i in range(k):
            diff = X - means[i]
            cov = (diff * resp[:, i : i + 1]).T @ diff / nk[i]
            cov = 0.5 * (cov + cov.T)
            cov += reg * (np.trace(cov) / d) * np.eye(d)
            try:
                chols[i] = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                return None
            covs[i] = cov
            log_dets[i] = 2.0 * np.sum(np.log(np.diag(chols[i])))

        if ll_prev > -np.inf and (ll - ll_prev) / abs(ll_prev) < tol:
            break
        ll_prev = ll

    return weights, means, covs, trace


def fit_gmm_em(
    X,
    k: int,
    rng: np.random.Generator,
    max_iter: int = 200,
    tol: float = 1e-6,
    reg: float = 1e-6,
    n_restarts: int = 5,
    return_trace: bool = False,
):
    """Fit a k-component mixture by EM.

    Means are seeded by k-means++, covariances start at the global sample
    covariance, weights uniform.  Iteration stops when the relative
    log-likelihood improvement drops below ``tol`` or after ``max_iter``
    iterations.  A collapsed component triggers a fresh restart (at most
    ``n_restarts``) before raising.

    Returns the fitted :class:`GaussianMixtureModel`; with
    ``return_trace=True``, a ``(model, per-iteration log-likelihood list)``
    pair.
    """
    X = as_data_matrix(X)
    n, d = X.shape
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k * (d + 1):
        raise ValueError(
            f"insufficient samples: n={n} rows for k={k}, d={d} (need n >= k*(d+1))"
        )
    for _ in range(n_restarts + 1):
        result = _em_once(X, k, rng, max_iter=max_iter, tol=tol, reg=reg)
        if result is not None:
            weights, means, covs, trace = result
            model = GaussianMixtureModel(
                weights / weights.sum(),
                [GaussianModel(means[i], covs[i]) for i in range(k)],
            )
            return (model, trace) if return_trace else model
    raise RuntimeError(
        f"EM failed for k={k}: component collapsed in all {n_restarts + 1} attempts"
    )


def select_k_cv(
    X,
    k_candidates,
    folds: int,
    rng: np.random.Generator,
    **em_kwargs,
) -> int:
    """Pick the component count maximizing mean held-out log-density.

    Candidates failing EM on any fold are excluded; ties break toward the
    smaller k.  Raises if every candidate fails, or if some candidate cannot
    satisfy the EM sample requirement on the smallest training fold.
    """
    X = as_data_matrix(X)
    n, d = X.shape
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    k_candidates = sorted(set(int(k) for k in k_candidates))
    if not k_candidates:
        raise ValueError("no candidates given")
    perm = rng.permutation(n)
    fold_indices = np.array_split(perm, folds)
    min_train = n - max(len(f) for f in fold_indices)
    for k in k_candidates:
        if min_train < k * (d + 1):
            raise ValueError(
                f"candidate k={k} cannot be fitted on the smallest "
                f"training fold ({min_train} rows)"
            )

    scores = {}
    for k in k_candidates:
        fold_scores = []
        try:
            for held in fold_indices:
                train = np.setdiff1d(perm, held, assume_unique=True)
                model = fit_gmm_em(X[train], k, rng, **em_kwargs)
                fold_scores.append(float(np.mean(model.log_density(X[held]))))
        except (RuntimeError, ValueError):
            continue
        scores[k] = float(np.mean(fold_scores))

    if not scores:
        raise RuntimeError("EM failed for every candidate k")
    best = max(scores.values())
    return min(k for k, s in scores.items() if s == best)


# ---------------------------------------------------------------------------
# random model generation used by the experiments


def random_covariance(d: int, rng: np.random.Generator) -> np.ndarray:
    """R diag(e) R' with R Haar-orthogonal and eigenvalues uniform in [0.5, 2].

    The bounded spectrum keeps condition numbers small so Cholesky and
    divergence computations stay stable up to d=128.
    """
    G = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(G)
    Q = Q * np.sign(np.diag(R))  # fix column signs -> unique factorization
    e = rng.uniform(0.5, 2.0, size=d)
    return (Q * e) @ Q.T


def random_gaussian(d: int, rng: np.random.Generator) -> GaussianModel:
    """Random model: standard-normal mean, bounded-spectrum random covariance."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    return GaussianModel(rng.standard_normal(d), random_covariance(d, rng))


def random_mixture(
    d: int, k: int, rng: np.random.Generator, weights=None
) -> GaussianMixtureModel:
    """Random mixture with independently generated components (equal weights
    by default)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if weights is None:
        weights = np.full(k, 1.0 / k)
    return GaussianMixtureModel(weights, [random_gaussian(d, rng) for _ in range(k)])


# ---------------------------------------------------------------------------
# serialization


def model_to_dict(model) -> dict:
    if isinstance(model, GaussianModel):
        return {
            "type": "gaussian",
            "mean": model.mean.tolist(),
            "covariance": model.covariance.tolist(),
        }
    if isinstance(model, GaussianMixtureModel):
        return {
            "type": "mixture",
            "weights": model.weights.tolist(),
            "components": [model_to_dict(c) for c in model.components],
        }
    raise TypeError(f"not a density model: {type(model).__name__}")


def model_from_dict(obj: dict):
    kind = obj.get("type")
    if kind == "gaussian":
        return GaussianModel(obj["mean"], obj["covariance"])
    if kind == "mixture":
        return GaussianMixtureModel(
            obj["weights"], [model_from_dict(c) for c in obj["components"]]
        )
    raise ValueError(f"unknown model type {kind!r}")


def save_model(path, model) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
