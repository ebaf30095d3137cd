"""Construction of changes with calibrated symmetric-KL magnitude.

Given a reference density ``phi0``, build an orthogonal ``Q`` and a
translation ``v`` so that ``phi1(x) = phi0(Q x + v)`` sits at a target sKL
(default 1): first pick the largest rotation from a shrinking-angle schedule
that stays below the target, then push along a random unit direction until
the target is met -- exactly via the Gaussian closed form, or by a
Monte-Carlo grid search with interpolation for general models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .divergence import (
    DivergenceEstimate,
    skl_gaussian_transform,
    skl_monte_carlo,
    transform_model,
)
from .models import GaussianModel, as_data_matrix

__all__ = [
    "ChangeSpec",
    "rotation_sequence",
    "select_rotation",
    "random_unit_vector",
    "translation_coefficients",
    "solve_translation_gaussian",
    "solve_translation_mc",
    "generate_change",
    "save_change",
    "load_change",
]

_ORTH_TOL = 1e-10
_MAX_ROTATION_INDEX = 60
_MAX_GRID_STEPS = 1000


@dataclass
class ChangeSpec:
    """A calibrated change: rotation ``Q``, translation ``v``, and how close
    the achieved sKL landed to the target."""

    Q: np.ndarray
    v: np.ndarray
    target_skl: float
    achieved_skl: DivergenceEstimate
    rotation_index: int
    method: str  # "closed_form" | "monte_carlo"
    rotation_skl: float = field(default=0.0)

    def mc_tolerance(self) -> float:
        return max(0.05, 3.0 * self.achieved_skl.std_error)

    def validate(self) -> None:
        """Raise unless orthogonality, calibration and rotation-margin
        invariants all hold."""
        d = self.Q.shape[0]
        err = float(np.max(np.abs(self.Q.T @ self.Q - np.eye(d))))
        if not err < _ORTH_TOL:
            raise ValueError(f"Q orthogonality violated: max|Q'Q - I| = {err!r}")
        det = float(np.linalg.det(self.Q))
        if not abs(det - 1.0) < 1e-8:
            raise ValueError(f"Q is not a proper rotation: det = {det!r}")
        gap = abs(self.achieved_skl.value - self.target_skl)
        if self.method == "closed_form":
            if not gap < 1e-9:
                raise ValueError(f"closed-form calibration off target by {gap!r}")
        elif self.method == "monte_carlo":
            if not gap < self.mc_tolerance():
                raise ValueError(
                    f"Monte-Carlo calibration off target by {gap!r} "
                    f"(tolerance {self.mc_tolerance()!r})"
                )
        else:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.rotation_skl < self.target_skl:
            raise ValueError(
                f"rotation-only sKL {self.rotation_skl!r} must stay below "
                f"the target {self.target_skl!r}"
            )

    def apply(self, X) -> np.ndarray:
        """Map observations x -> Q'(x - v); sends phi0-distributed rows to phi1."""
        X = as_data_matrix(X)
        return (X - self.v) @ self.Q

    def to_dict(self) -> dict:
        return {
            "Q": self.Q.tolist(),
            "v": self.v.tolist(),
            "target_skl": self.target_skl,
            "achieved_skl": {
                "value": self.achieved_skl.value,
                "std_error": self.achieved_skl.std_error,
                "n_samples": self.achieved_skl.n_samples,
                "raw_value": self.achieved_skl.raw_value,
            },
            "rotation_index": self.rotation_index,
            "method": self.method,
            "rotation_skl": self.rotation_skl,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ChangeSpec":
        est = obj["achieved_skl"]
        return cls(
            Q=np.asarray(obj["Q"], dtype=float),
            v=np.asarray(obj["v"], dtype=float),
            target_skl=float(obj["target_skl"]),
            achieved_skl=DivergenceEstimate(
                est["value"], est["std_error"], est["n_samples"], est.get("raw_value")
            ),
            rotation_index=int(obj["rotation_index"]),
            method=obj["method"],
            rotation_skl=float(obj["rotation_skl"]),
        )


def save_change(path, spec: ChangeSpec) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2)
        fh.write("\n")


def load_change(path) -> ChangeSpec:
    import json

    with open(path, "r", encoding="utf-8") as fh:
        return ChangeSpec.from_dict(json.load(fh))


def random_unit_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform direction on the unit sphere (normalized standard normal)."""
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    while True:
        u = rng.standard_normal(d)
        norm = float(np.linalg.norm(u))
        if norm >= 1e-12:
            return u / norm


def _random_plane(d: int, rng: np.random.Generator):
    """Orthonormal basis of a random 2-plane; redraws degenerate pairs."""
    b1 = random_unit_vector(d, rng)
    for _ in range(100):
        g2 = rng.standard_normal(d)
        r = g2 - (b1 @ g2) * b1
        norm = float(np.linalg.norm(r))
        if norm > 1e-10:
            r = r - (b1 @ r) * b1  # second pass tightens orthogonality
            return b1, r / np.linalg.norm(r)
    raise RuntimeError("could not draw a non-degenerate rotation plane in 100 attempts")


def rotation_sequence(d: int, rng: np.random.Generator):
    """Yield rotations Q_0, Q_1, ... by angles pi * 2^-j in one random 2-plane.

    Each Q_j is identity on the plane's orthogonal complement; the angles
    halve toward zero, so Q_j -> I.  For d = 1 every Q_j is the 1x1 identity
    (the only 1-D rotation).
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if d == 1:
        while True:
            yield np.array([[1.0]])
    b1, b2 = _random_plane(d, rng)
    sym = np.outer(b1, b1) + np.outer(b2, b2)
    skew = np.outer(b2, b1) - np.outer(b1, b2)
    eye = np.eye(d)
    j = 0
    while True:
        theta = math.pi * 2.0 ** (-j)
        yield eye + (math.cos(theta) - 1.0) * sym + math.sin(theta) * skew
        j += 1


def _rotation_only_skl(model, Q, rng, mc_samples) -> DivergenceEstimate:
    if isinstance(model, GaussianModel):
        return skl_gaussian_transform(model, Q, np.zeros(model.dim))
    return skl_monte_carlo(model, transform_model(model, Q, np.zeros(model.dim)),
                           n=mc_samples, rng=rng)


def select_rotation(model, seq, target: float, rng: np.random.Generator = None,
                    mc_samples: int = 100_000):
    """First rotation in the schedule whose rotation-only sKL falls below the
    target.

    Returns ``(Q, j, estimate)``.  Gaussian models use the closed form;
    anything else is estimated by Monte Carlo with ``rng``.  Since the
    angles shrink to zero this always terminates; running past j = 60 means
    the divergence computation itself is broken.
    """
    if target <= 0:
        raise ValueError(f"target sKL must be positive, got {target}")
    for j, Q in enumerate(seq):
        if j > _MAX_ROTATION_INDEX:
            raise RuntimeError(
                f"no rotation with sKL < {target} found up to j = "
                f"{_MAX_ROTATION_INDEX}; the divergence computation is suspect"
            )
        est = _rotation_only_skl(model, Q, rng, mc_samples)
        if est.value < target:
            return Q, j, est
    raise RuntimeError("rotation schedule ended unexpectedly")  # pragma: no cover


def translation_coefficients(model: GaussianModel, Q, u):
    """Coefficients (a, b, c) of the closed-form sKL along ``v = rho u``:
    ``sKL(rho) = a rho^2 + b rho + c`` with ``a > 0`` and ``c`` the
    rotation-only sKL."""
    from scipy.linalg import cho_solve

    if not isinstance(model, GaussianModel):
        raise TypeError("the sKL quadratic requires a GaussianModel")
    u = np.asarray(u, dtype=float)
    cf = (model.chol, True)
    mu = model.mean
    qtu = Q.T @ u
    a_vec = mu - Q.T @ mu
    b_vec = mu - Q @ mu
    a = 0.5 * (u @ cho_solve(cf, u) + qtu @ cho_solve(cf, qtu))
    b = -(u @ cho_solve(cf, b_vec)) + (qtu @ cho_solve(cf, a_vec))
    c = skl_gaussian_transform(model, Q, np.zeros(model.dim)).value
    return float(a), float(b), float(c)


def solve_translation_gaussian(model: GaussianModel, Q, u, target: float) -> float:
    """Exact translation length for a Gaussian: the positive root of the
    quadratic the closed form reduces to along ``v = rho u``.

    Requires the rotation-only sKL to sit strictly below the target, which
    makes the constant coefficient negative and guarantees one positive root.
    """
    a, b, c = translation_coefficients(model, Q, u)
    if not c < target:
        raise ValueError(
            f"rotation-only sKL {c!r} must be below the target {target!r}"
        )

    disc = b * b - 4.0 * a * (c - target)
    if disc < 0:  # impossible with a > 0, c < target
        raise RuntimeError(f"negative discriminant {disc!r} in translation solve")
    sqrt_disc = math.sqrt(disc)
    if b <= 0:
        rho = (-b + sqrt_disc) / (2.0 * a)
    else:
        rho = 2.0 * (target - c) / (b + sqrt_disc)

    achieved = skl_gaussian_transform(model, Q, rho * np.asarray(u, dtype=float)).value
    if not abs(achieved - target) < 1e-9:
        raise RuntimeError(
            f"translation solve verification failed: sKL = {achieved!r}, "
            f"target = {target!r}"
        )
    return float(rho)


def _mean_component_std(model) -> float:
    """Average per-coordinate standard deviation; sets the grid step scale."""
    if isinstance(model, GaussianModel):
        return float(np.mean(np.sqrt(np.diag(model.covariance))))
    return float(
        sum(
            w * np.mean(np.sqrt(np.diag(c.covariance)))
            for w, c in zip(model.weights, model.components)
        )
    )


def solve_translation_mc(model, Q, u, target: float, rng: np.random.Generator,
                         mc_samples: int = 100_000):
    """Monte-Carlo translation length: walk an increasing rho grid until the
    estimated sKL crosses the target, interpolate, verify.

    Returns ``(rho, verification_estimate)``.  The grid step is a tenth of
    the model's mean coordinate standard deviation; if the verification
    misses the tolerance ``max(0.05, 3 sigma)``, up to ten bisection steps
    refine the bracket.
    """
    u = np.asarray(u, dtype=float)
    zero = np.zeros(model.dim)
    prev_rho = 0.0
    prev_est = skl_monte_carlo(model, transform_model(model, Q, zero),
                               n=mc_samples, rng=rng)
    if prev_est.value >= target:
        # only legitimate for a zero-magnitude request (identity rotation)
        if abs(prev_est.value - target) <= max(0.05, 3.0 * prev_est.std_error):
            return 0.0, prev_est
        raise ValueError(
            f"rotation-only sKL {prev_est.value!r} is not below the target {target!r}"
        )

    delta = 0.1 * _mean_component_std(model)
    hi_rho, hi_est = None, None
    for n in range(1, _MAX_GRID_STEPS + 1):
        rho = n * delta
        est = skl_monte_carlo(model, transform_model(model, Q, rho * u),
                              n=mc_samples, rng=rng)
        if est.value >= target:
            hi_rho, hi_est = rho, est
            break
        prev_rho, prev_est = rho, est
    else:
        raise RuntimeError(
            f"target unreachable on grid: {_MAX_GRID_STEPS} steps of {delta!r} "
            f"reached sKL = {prev_est.value!r} < {target!r}"
        )

    frac = (target - prev_est.value) / (hi_est.value - prev_est.value)
    rho_star = prev_rho + frac * (hi_rho - prev_rho)
    ver = skl_monte_carlo(model, transform_model(model, Q, rho_star * u),
                          n=mc_samples, rng=rng)
    if abs(ver.value - target) <= max(0.05, 3.0 * ver.std_error):
        return float(rho_star), ver

    lo, hi = prev_rho, hi_rho
    for _ in range(10):
        mid = 0.5 * (lo + hi)
        est = skl_monte_carlo(model, transform_model(model, Q, mid * u),
                              n=mc_samples, rng=rng)
        if abs(est.value - target) <= max(0.05, 3.0 * est.std_error):
            return float(mid), est
        if est.value < target:
            lo = mid
        else:
            hi = mid
    raise RuntimeError(
        f"bisection failed to reach sKL = {target!r} within tolerance on "
        f"[{prev_rho!r}, {hi_rho!r}]"
    )


def generate_change(model, target: float = 1.0, rng: np.random.Generator = None,
                    mc_samples: int = 100_000) -> ChangeSpec:
    """Build a calibrated change for a model: rotation below the target, then
    a translation that closes the gap.

    Gaussian models are calibrated exactly through the closed form; mixtures
    (or any sampleable density with a log-density) go through the
    Monte-Carlo path and land within ``max(0.05, 3 sigma)`` of the target.
    """
    if target <= 0:
        raise ValueError(f"target sKL must be positive, got {target}")
    if rng is None:
        rng = np.random.default_rng()
    seq = rotation_sequence(model.dim, rng)
    Q, j, rot_est = select_rotation(model, seq, target, rng=rng, mc_samples=mc_samples)
    u = random_unit_vector(model.dim, rng)
    if isinstance(model, GaussianModel):
        # u and -u are equidistributed; orient along the increasing branch of
        # the sKL quadratic so sKL(rho) is non-decreasing for rho >= 0
        if translation_coefficients(model, Q, u)[1] < 0:
            u = -u
        rho = solve_translation_gaussian(model, Q, u, target)
        achieved = skl_gaussian_transform(model, Q, rho * u)
        method = "closed_form"
    else:
        rho, achieved = solve_translation_mc(model, Q, u, target, rng, mc_samples)
        method = "monte_carlo"
    spec = ChangeSpec(
        Q=Q,
        v=rho * u,
        target_skl=float(target),
        achieved_skl=achieved,
        rotation_index=j,
        method=method,
        rotation_skl=rot_est.value,
    )
    spec.validate()
    return spec
