"""Gaussian-process models of track position and speed versus arc-length.

Rational quadratic kernel, log-marginal-likelihood fitting by gradient ascent
in log-parameter space with analytic gradients, noise tuned so the raw
demonstrations sit inside the 99% confidence band, and bounded joint
trajectory sampling.  Models are immutable once built; fitting returns new
instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg.lapack import dpotri

CI_MULTIPLIER = 2.576  # two-sided Gaussian 99%
JITTER_FRACTION = 1e-8
NOISE_GRID = tuple(10.0 ** (0.5 * k) for k in range(-12, 5))  # 1e-6 .. 1e2, ratio sqrt(10)


class GPError(ValueError):
    pass


def rq_kernel(x1, x2, signal_var: float, length_scale: float, shape: float) -> np.ndarray:
    """Rational quadratic covariance sf2 * (1 + r^2 / (2*shape*ell^2))^(-shape)."""
    if min(signal_var, length_scale, shape) <= 0:
        raise GPError("kernel parameters must be positive")
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    r2 = (x1[:, None] - x2[None, :]) ** 2
    return signal_var * np.exp(-shape * np.log1p(r2 / (2.0 * shape * length_scale**2)))


@dataclass(frozen=True)
class GPModel:
    """Fitted GP: kernel hyperparameters, noise, training data and factorization."""

    x_train: np.ndarray
    y_train: np.ndarray          # raw targets
    signal_var: float
    length_scale: float
    shape: float
    noise_var: float
    y_mean: float
    chol: np.ndarray             # lower Cholesky of K + (noise + jitter) I
    weights: np.ndarray          # (K + noise I)^-1 (y - y_mean)

    def posterior(self, x_star) -> tuple[np.ndarray, np.ndarray]:
        """Latent posterior mean and variance at x_star (noise excluded)."""
        x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
        k_star = rq_kernel(self.x_train, x_star, self.signal_var,
                           self.length_scale, self.shape)
        mean = k_star.T @ self.weights + self.y_mean
        v = solve_triangular(self.chol, k_star, lower=True)
        var = np.maximum(self.signal_var - np.einsum("ij,ij->j", v, v), 0.0)
        return mean, var

    def predictive_band(self, x_star) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(mean, lower, upper) of the 99% band that must cover raw data."""
        mean, var = self.posterior(x_star)
        half = CI_MULTIPLIER * np.sqrt(var + self.noise_var)
        return mean, mean - half, mean + half

    def with_noise(self, noise_var: float) -> "GPModel":
        return _assemble(self.x_train, self.y_train, self.signal_var,
                         self.length_scale, self.shape, noise_var)


def _assemble(x, y, signal_var, length_scale, shape, noise_var) -> GPModel:
    y_mean = float(np.mean(y))
    k = rq_kernel(x, x, signal_var, length_scale, shape)
    k[np.diag_indices_from(k)] += noise_var + JITTER_FRACTION * signal_var
    chol = np.linalg.cholesky(k)
    weights = cho_solve((chol, True), y - y_mean)
    return GPModel(np.asarray(x, float), np.asarray(y, float), float(signal_var),
                   float(length_scale), float(shape), float(noise_var),
                   y_mean, chol, weights)


# -- log marginal likelihood -------------------------------------------------------


def log_marginal_likelihood(x, y, signal_var, length_scale, shape, noise_var,
                            with_grad: bool = False, r2: np.ndarray | None = None):
    """LML of centered y under the RQ kernel plus noise.

    With with_grad=True also returns the gradient with respect to
    (log signal_var, log length_scale, log shape).  `r2` may carry the
    precomputed squared-distance matrix.
    """
    x = np.asarray(x, dtype=float)
    yc = np.asarray(y, dtype=float) - np.mean(y)
    n = len(x)
    if r2 is None:
        r2 = (x[:, None] - x[None, :]) ** 2
    u = 1.0 + r2 / (2.0 * shape * length_scale**2)
    k_rq = signal_var * np.exp(-shape * np.log(u))
    k = k_rq.copy()
    k[np.diag_indices_from(k)] += noise_var + JITTER_FRACTION * signal_var
    try:
        chol = np.linalg.cholesky(k)
    except np.linalg.LinAlgError as exc:
        raise GPError(f"kernel matrix not positive definite: {exc}") from exc
    alpha_vec = cho_solve((chol, True), yc)
    lml = -0.5 * yc @ alpha_vec - np.log(np.diag(chol)).sum() - 0.5 * n * math.log(2.0 * math.pi)
    if not math.isfinite(lml):
        raise GPError("non-finite log marginal likelihood")
    if not with_grad:
        return lml
    inv_tri, info = dpotri(chol, lower=1)
    if info != 0:
        raise GPError(f"dpotri failed with info={info}")
    k_inv = inv_tri + np.tril(inv_tri, -1).T
    outer = np.outer(alpha_vec, alpha_vec) - k_inv

    def trace_term(dk):
        return 0.5 * float(np.sum(outer * dk))

    log_u = np.log(u)
    jitter_eye = JITTER_FRACTION * signal_var * np.eye(n)
    d_sf = trace_term(k_rq + jitter_eye)
    d_ell = trace_term(2.0 * shape * k_rq * (u - 1.0) / u)
    d_shape = trace_term(shape * k_rq * (-log_u + (u - 1.0) / u))
    return lml, np.array([d_sf, d_ell, d_shape])


def _initializations(x, y) -> list[tuple[float, float, float]]:
    span = float(np.max(x) - np.min(x))
    vy = max(float(np.var(y)), 1e-8)
    return [
        (vy, span / 50.0, 1.0),
        (vy, span / 15.0, 1.0),
        (vy, span / 5.0, 2.0),
        (vy, span / 15.0, 0.5),
        (vy, span / 2.0, 5.0),
    ]


def fit(x, y, fit_noise_var: float | None = None, max_iter: int = 200,
        tol: float = 1e-6, max_points: int = 2000,
        rng: np.random.Generator | None = None) -> GPModel:
    """Maximize the LML over (signal_var, length_scale, shape) in log space
    with analytic gradients (L-BFGS-B), from 5 fixed initializations.

    The noise variance is held fixed during the fit (tune_noise sets it
    afterwards); the default is 10% of the target variance.  Inputs beyond
    `max_points` are subsampled uniformly in arc-length order.
    """
    from scipy.optimize import minimize

    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise GPError("need matching 1-d x and y with at least 2 points")
    if len(x) > max_points:
        order = np.argsort(x)
        pick = order[np.linspace(0, len(x) - 1, max_points).round().astype(int)]
        x, y = x[pick], y[pick]
    noise = fit_noise_var if fit_noise_var is not None else max(0.1 * float(np.var(y)), 1e-6)

    span = float(np.max(x) - np.min(x))
    lo = np.log([1e-10, max(span * 1e-5, 1e-8), 1e-3])
    hi = np.log([1e10, span * 1e4, 1e3])
    r2 = (x[:, None] - x[None, :]) ** 2

    def objective(theta):
        try:
            lml, grad = log_marginal_likelihood(x, y, *np.exp(theta), noise,
                                                with_grad=True, r2=r2)
        except (GPError, FloatingPointError, np.linalg.LinAlgError):
            return 1e15, np.zeros(3)
        return -lml, -grad

    best_lml, best_params = -np.inf, None
    for init in _initializations(x, y):
        res = minimize(objective, np.log(np.array(init)), jac=True,
                       method="L-BFGS-B", bounds=list(zip(lo, hi)),
                       options={"maxiter": max_iter, "ftol": tol * 1e-4,
                                "gtol": 1e-7})
        if -res.fun > best_lml:
            best_lml, best_params = -res.fun, np.exp(res.x)
    if best_params is None:
        raise GPError("all fit initializations failed")
    sf2, ell, shape = best_params
    return _assemble(x, y, sf2, ell, shape, noise)


def tune_noise(model: GPModel, demo_x, demo_y,
               coverage_target: float = 0.99) -> GPModel:
    """Smallest noise variance from the geometric grid whose 99% predictive
    band covers at least `coverage_target` of the raw demo points."""
    demo_x = np.asarray(demo_x, dtype=float)
    demo_y = np.asarray(demo_y, dtype=float)
    if demo_x.shape != demo_y.shape or demo_x.ndim != 1:
        raise GPError("demo points must be matching 1-d arrays")
    # Selection uses the input model's posterior with the band inflated by the
    # candidate noise; the chosen noise is then baked into a re-factorized model.
    mean, var = model.posterior(demo_x)
    resid = np.abs(demo_y - mean)
    achieved = []
    for noise in NOISE_GRID:
        coverage = float(np.mean(resid <= CI_MULTIPLIER * np.sqrt(var + noise)))
        achieved.append(coverage)
        if coverage >= coverage_target:
            return model.with_noise(noise)
    raise GPError(
        f"no grid noise reaches {coverage_target:.2%} coverage; achieved "
        f"max {max(achieved):.4f} at noise {NOISE_GRID[int(np.argmax(achieved))]:.3g}")


# -- trajectory sampling --------------------------------------------------------------


@dataclass(frozen=True)
class TrajectorySample:
    grid: np.ndarray
    values: np.ndarray
    index: int


def sample_trajectories(model: GPModel, grid, n: int = 100,
                        rng: np.random.Generator | None = None,
                        max_attempts: int = 100_000) -> list[TrajectorySample]:
    """Draw n joint trajectories on the grid, rejecting any sample that
    leaves the pointwise 99% predictive band.

    The joint sample covariance is the latent posterior covariance plus the
    tuned noise spread correlated at the fitted kernel scale, so draws carry
    the full band width while staying smooth (white per-point noise would be
    untrackable by any driver and collapses the joint acceptance rate).
    Pointwise the sample variance equals the predictive variance.
    """
    rng = rng or np.random.default_rng(0)
    grid = np.asarray(grid, dtype=float)
    k_star = rq_kernel(model.x_train, grid, model.signal_var,
                       model.length_scale, model.shape)
    mean = k_star.T @ model.weights + model.y_mean
    v = solve_triangular(model.chol, k_star, lower=True)
    latent_cov = rq_kernel(grid, grid, model.signal_var, model.length_scale,
                           model.shape) - v.T @ v
    latent_var = np.maximum(np.diag(latent_cov), 0.0)
    corr = rq_kernel(grid, grid, 1.0, model.length_scale, model.shape)
    cov = latent_cov + model.noise_var * corr
    cov[np.diag_indices_from(cov)] += 1e-10 * model.signal_var
    chol = np.linalg.cholesky(cov)
    half = CI_MULTIPLIER * np.sqrt(latent_var + model.noise_var)

    samples: list[TrajectorySample] = []
    attempts = 0
    batch = max(4 * n, 64)
    while len(samples) < n:
        z = rng.standard_normal((batch, len(grid)))
        draws = mean[None, :] + z @ chol.T
        inside = np.all(np.abs(draws - mean[None, :]) <= half[None, :], axis=1)
        for row in draws[inside]:
            if len(samples) >= n:
                break
            samples.append(TrajectorySample(grid, row, len(samples)))
        attempts += batch
        if attempts >= max_attempts and len(samples) < attempts * 1e-3:
            raise GPError(
                f"sampling acceptance rate {len(samples)}/{attempts} below 1e-3")
    return samples


# -- serialization ----------------------------------------------------------------------
#
# Model file: structured text with the kernel parameters, noise and raw
# training data.  Samples file: CSV with columns j, sigma, value.


def write_model(model: GPModel, path) -> None:
    lines = [
        "drivemimic-gp v1",
        f"signal_var {model.signal_var!r}",
        f"length_scale {model.length_scale!r}",
        f"shape {model.shape!r}",
        f"noise_var {model.noise_var!r}",
        "[data]",
    ]
    lines.extend(f"{float(a)!r} {float(b)!r}" for a, b in zip(model.x_train, model.y_train))
    tmp = Path(str(path) + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def read_model(path) -> GPModel:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "drivemimic-gp v1":
        raise GPError(f"{path}: not a drivemimic GP model file")
    params = {}
    xs, ys = [], []
    in_data = False
    for line in lines[1:]:
        line = line.strip()
        if not line:
            continue
        if line == "[data]":
            in_data = True
            continue
        if in_data:
            a, b = line.split()
            xs.append(float(a))
            ys.append(float(b))
        else:
            key, _, value = line.partition(" ")
            params[key] = float(value)
    return _assemble(np.array(xs), np.array(ys), params["signal_var"],
                     params["length_scale"], params["shape"], params["noise_var"])


def write_samples(samples: list[TrajectorySample], path) -> None:
    lines = ["j,sigma,value"]
    for s in samples:
        lines.extend(f"{s.index},{float(g)!r},{float(v)!r}"
                     for g, v in zip(s.grid, s.values))
    tmp = Path(str(path) + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def read_samples(path) -> list[TrajectorySample]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "j,sigma,value":
        raise GPError(f"{path}: not a samples file")
    by_index: dict[int, list[tuple[float, float]]] = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        j, sigma, value = line.split(",")
        by_index.setdefault(int(j), []).append((float(sigma), float(value)))
    out = []
    for j in sorted(by_index):
        rows = by_index[j]
        grid = np.array([r[0] for r in rows])
        vals = np.array([r[1] for r in rows])
        out.append(TrajectorySample(grid, vals, j))
    return out
