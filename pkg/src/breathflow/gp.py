"""Gaussian process regression with Matern-family covariances.

The model is y = g(x) + noise with g a stationary GP: constant mean mu,
marginal variance sigma2, correlation decaying with Euclidean distance at
range rho, plus independent noise of variance tau2.  Parameters are chosen
by maximum likelihood.  Because the mean and the overall scale have closed
form optima given the correlation shape, the numerical search runs over just
(log rho, log tau2/sigma2) and stays cheap enough to refit per window.

An optional diffusion variant replaces the correlation matrix R with its
degree normalization D^{-1/2} R D^{-1/2} (D_ii = sum_j R_ij) before scaling
by sigma2.  The normalization itself is scale free, which is exactly why the
variance must stay outside it: applied to sigma2 * R the factor sigma2
cancels and the likelihood would no longer determine it.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist, pdist, squareform
from sklearn.base import BaseEstimator, RegressorMixin

from .validation import as_float_matrix, as_float_vector, check_consistent_length

__all__ = [
    "KernelSpec",
    "GpFit",
    "NotPositiveDefinite",
    "matern_cov",
    "cov_matrix",
    "diffusion_normalize",
    "log_likelihood",
    "fit_mle",
    "exact_fit",
    "predict",
    "MaternGaussianProcess",
]

FAMILIES = ("exponential", "matern_1_5", "squared_exponential")
LOG_2PI = math.log(2.0 * math.pi)

RHO_BOUNDS = (1e-3, 1e3)
VAR_BOUNDS = (1e-8, 1e4)  # for sigma2 and tau2
_JITTER_EXPONENTS = range(-10, -3)  # relative jitter ladder 1e-10 .. 1e-4


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Covariance stayed non positive definite through the jitter ladder."""


@dataclass(frozen=True)
class KernelSpec:
    family: str = "exponential"
    sigma2: float = 1.0
    rho: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, expected one of {FAMILIES}")
        if self.sigma2 <= 0 or self.rho <= 0:
            raise ValueError("sigma2 and rho must be positive")


def _correlation(dist, rho, family):
    dist = np.asarray(dist, dtype=float)
    if family == "exponential":
        return np.exp(-dist / rho)
    if family == "matern_1_5":
        z = (math.sqrt(3.0) / rho) * dist
        return (1.0 + z) * np.exp(-z)
    if family == "squared_exponential":
        return np.exp(-0.5 * (dist / rho) ** 2)
    raise ValueError(f"unknown family {family!r}")


def matern_cov(dist, kernel: KernelSpec) -> np.ndarray:
    """Covariance as a function of distance.

    exponential:          sigma2 * exp(-h/rho)
    matern_1_5:           sigma2 * (1 + sqrt(3) h/rho) * exp(-sqrt(3) h/rho)
    squared_exponential:  sigma2 * exp(-h^2 / (2 rho^2))
    """
    if np.any(np.asarray(dist) < 0):
        raise ValueError("distances must be nonnegative")
    return kernel.sigma2 * _correlation(dist, kernel.rho, kernel.family)


def cov_matrix(x: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    """Symmetric covariance matrix over rows of ``x`` (diagonal = sigma2)."""
    x = as_float_matrix(x, "x")
    dist = squareform(pdist(x)) if len(x) > 1 else np.zeros((1, 1))
    return matern_cov(dist, kernel)


def diffusion_normalize(cov: np.ndarray) -> np.ndarray:
    """Degree-normalize a covariance: D^{-1/2} C D^{-1/2}, D_ii = sum_j C_ij."""
    cov = as_float_matrix(cov, "cov")
    if cov.shape[0] != cov.shape[1]:
        raise ValueError("cov must be square")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise ValueError("cov must be symmetric")
    degrees = cov.sum(axis=1)
    if np.any(degrees <= 0):
        raise ValueError("row sums must be positive for diffusion normalization")
    inv_sqrt = 1.0 / np.sqrt(degrees)
    return cov * np.outer(inv_sqrt, inv_sqrt)


def _cholesky_with_jitter(matrix: np.ndarray, scale: float) -> np.ndarray:
    """Lower Cholesky factor, escalating diagonal jitter until it succeeds."""
    eye = np.eye(len(matrix))
    for exponent in (None, *_JITTER_EXPONENTS):
        jitter = 0.0 if exponent is None else scale * 10.0**exponent
        try:
            return np.linalg.cholesky(matrix + jitter * eye if jitter else matrix)
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite(
        f"matrix not positive definite after jitter up to {scale * 1e-4:.3g}"
    )


def _build_correlation(dist, rho, family, diffusion):
    r = _correlation(dist, rho, family)
    if diffusion:
        degrees = r.sum(axis=1)
        inv_sqrt = 1.0 / np.sqrt(degrees)
        return r * np.outer(inv_sqrt, inv_sqrt), degrees
    return r, None


def log_likelihood(
    mu: float,
    kernel: KernelSpec,
    tau2: float,
    x: np.ndarray,
    y: np.ndarray,
    diffusion: bool = False,
) -> float:
    """Gaussian log likelihood of (mu, kernel, tau2) for observations y at x.

    l = -N/2 log(2 pi) - 1/2 log|Sigma + tau2 I| - 1/2 (y-mu)' (Sigma+tau2 I)^{-1} (y-mu)

    evaluated through a Cholesky factorization with an escalating jitter
    ladder relative to sigma2.
    """
    x = as_float_matrix(x, "x")
    y = as_float_vector(y, "y")
    check_consistent_length(x, y)
    if tau2 < 0:
        raise ValueError("tau2 must be >= 0")
    dist = squareform(pdist(x)) if len(x) > 1 else np.zeros((1, 1))
    corr, _ = _build_correlation(dist, kernel.rho, kernel.family, diffusion)
    sigma = kernel.sigma2 * corr + tau2 * np.eye(len(y))
    chol = _cholesky_with_jitter(sigma, kernel.sigma2)
    white = solve_triangular(chol, y - mu, lower=True)
    return float(
        -0.5 * len(y) * LOG_2PI
        - np.log(np.diag(chol)).sum()
        - 0.5 * white @ white
    )


@dataclass(frozen=True)
class GpFit:
    """A fitted GP: parameters plus the factorizations prediction needs."""

    mu: float
    kernel: KernelSpec
    tau2: float
    x: np.ndarray
    y: np.ndarray
    log_lik: float
    diffusion: bool = False
    degenerate: bool = False
    chol: np.ndarray = None  # of sigma2 * corr + tau2 I
    alpha: np.ndarray = None  # (Sigma + tau2 I)^{-1} (y - mu)
    train_degrees: np.ndarray = None  # diffusion row sums of the raw correlation


def _profiled_nll(log_rho, log_noise_ratio, dist, y, family, diffusion):
    """Negative log likelihood with mu and sigma2 at their closed-form optima.

    With M = corr(rho) + g I and g = tau2/sigma2:
        mu_hat = (1' M^{-1} y) / (1' M^{-1} 1)
        sigma2_hat = (y - mu_hat)' M^{-1} (y - mu_hat) / N
    """
    n = len(y)
    rho = math.exp(log_rho)
    noise_ratio = math.exp(log_noise_ratio)
    corr, _ = _build_correlation(dist, rho, family, diffusion)
    m = corr + noise_ratio * np.eye(n)
    try:
        chol = _cholesky_with_jitter(m, 1.0)
    except NotPositiveDefinite:
        return np.inf, None
    ones_w = solve_triangular(chol, np.ones(n), lower=True)
    y_w = solve_triangular(chol, y, lower=True)
    mu = float(ones_w @ y_w) / float(ones_w @ ones_w)
    resid = y_w - mu * ones_w
    sigma2 = max(float(resid @ resid) / n, 1e-300)
    nll = (
        0.5 * n * LOG_2PI
        + float(np.log(np.diag(chol)).sum())
        + 0.5 * n * math.log(sigma2)
        + 0.5 * n
    )
    return nll, (mu, sigma2, rho, noise_ratio)


def _starts(dist, init):
    """Moments-based, wide-range, and narrow-range starting points."""
    positive = dist[dist > 0]
    med = float(np.median(positive)) if positive.size else 1.0
    med = min(max(med, RHO_BOUNDS[0]), RHO_BOUNDS[1])
    starts = [
        (math.log(med), math.log(0.1)),
        (math.log(min(10 * med, RHO_BOUNDS[1])), math.log(1.0)),
        (math.log(max(0.1 * med, RHO_BOUNDS[0])), math.log(1e-4)),
    ]
    if init is not None:
        mu0, kernel0, tau20 = init
        ratio = max(tau20, 1e-12 * kernel0.sigma2) / kernel0.sigma2
        starts.append((math.log(kernel0.rho), math.log(ratio)))
    return starts


def fit_mle(
    x: np.ndarray,
    y: np.ndarray,
    family: str = "exponential",
    init: tuple | None = None,
    diffusion: bool = False,
) -> GpFit:
    """Maximum-likelihood GP fit over (mu, sigma2, rho, tau2).

    The search is derivative free (Nelder-Mead simplex, multi-start:
    moments-based, wide-range, narrow-range) over (log rho, log tau2/sigma2),
    with mu and sigma2 profiled out exactly at each step; the optimum is the
    same as searching all four parameters.  ``init``, when given as
    (mu, KernelSpec, tau2), is added as a fourth start so the returned fit
    never scores below it.

    Constant y cannot identify a scale: the fit degenerates to mu = const
    with sigma2 and tau2 at their lower bound and ``degenerate`` set.
    """
    x = as_float_matrix(x, "x")
    y = as_float_vector(y, "y")
    check_consistent_length(x, y)
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    n = len(y)
    dist = squareform(pdist(x)) if n > 1 else np.zeros((1, 1))

    if float(np.ptp(y)) < 1e-12 or n == 1:
        kernel = KernelSpec(family, VAR_BOUNDS[0], 1.0)
        return _finalize_fit(
            x, y, dist, float(y.mean()), kernel, VAR_BOUNDS[0], diffusion, degenerate=True
        )

    log_rho_bounds = (math.log(RHO_BOUNDS[0]), math.log(RHO_BOUNDS[1]))
    log_ratio_bounds = (
        math.log(VAR_BOUNDS[0] / VAR_BOUNDS[1]),
        math.log(VAR_BOUNDS[1] / VAR_BOUNDS[0]),
    )
    best_nll, best_params = np.inf, None
    for start in _starts(dist, init):
        result = minimize(
            lambda z: _profiled_nll(z[0], z[1], dist, y, family, diffusion)[0],
            np.clip(start, [log_rho_bounds[0], log_ratio_bounds[0]],
                    [log_rho_bounds[1], log_ratio_bounds[1]]),
            method="Nelder-Mead",
            bounds=[log_rho_bounds, log_ratio_bounds],
            options=dict(xatol=1e-4, fatol=1e-8, maxfev=300),
        )
        for candidate in (result.x, np.asarray(start)):
            nll, params = _profiled_nll(
                candidate[0], candidate[1], dist, y, family, diffusion
            )
            if params is not None and nll < best_nll:
                best_nll, best_params = nll, params

    if best_params is None:
        raise NotPositiveDefinite("likelihood evaluation failed at every start")
    mu, sigma2, rho, noise_ratio = best_params
    sigma2 = min(max(sigma2, VAR_BOUNDS[0]), VAR_BOUNDS[1])
    tau2 = min(noise_ratio * sigma2, VAR_BOUNDS[1])
    kernel = KernelSpec(family, sigma2, rho)
    return _finalize_fit(x, y, dist, mu, kernel, tau2, diffusion)


def exact_fit(
    x: np.ndarray,
    y: np.ndarray,
    mu: float,
    kernel: KernelSpec,
    tau2: float = 0.0,
    diffusion: bool = False,
) -> GpFit:
    """Condition on data with the parameters fixed instead of estimated."""
    x = as_float_matrix(x, "x")
    y = as_float_vector(y, "y")
    check_consistent_length(x, y)
    if tau2 < 0:
        raise ValueError(f"tau2 must be nonnegative, got {tau2!r}")
    dist = squareform(pdist(x)) if len(y) > 1 else np.zeros((1, 1))
    return _finalize_fit(x, y, dist, float(mu), kernel, float(tau2), diffusion)


def _finalize_fit(x, y, dist, mu, kernel, tau2, diffusion, degenerate=False):
    corr, degrees = _build_correlation(dist, kernel.rho, kernel.family, diffusion)
    sigma = kernel.sigma2 * corr + tau2 * np.eye(len(y))
    chol = _cholesky_with_jitter(sigma, kernel.sigma2)
    white = solve_triangular(chol, y - mu, lower=True)
    log_lik = float(
        -0.5 * len(y) * LOG_2PI - np.log(np.diag(chol)).sum() - 0.5 * white @ white
    )
    alpha = solve_triangular(chol.T, white, lower=False)
    return GpFit(
        mu=mu,
        kernel=kernel,
        tau2=tau2,
        x=x,
        y=y,
        log_lik=log_lik,
        diffusion=diffusion,
        degenerate=degenerate,
        chol=chol,
        alpha=alpha,
        train_degrees=degrees,
    )


def _cross_covariance(fit: GpFit, x_new: np.ndarray):
    """(k_hat rows, prior variance per row) under the diffusion convention.

    In diffusion mode each test point is treated as one more node appended
    to the training graph: its degree is its own extended-matrix row sum
    (self correlation plus the cross correlations), while the training
    nodes keep the degrees fixed at fit time, since those define the
    covariance actually fitted.  The test node's prior marginal variance is
    then sigma2 / degree, its own normalized diagonal entry.  When every
    degree is equal the whole normalization collapses to a global scaling
    absorbed by sigma2, reproducing the plain model exactly.
    """
    dist = cdist(x_new, fit.x)
    raw = _correlation(dist, fit.kernel.rho, fit.kernel.family)
    sigma2 = fit.kernel.sigma2
    if not fit.diffusion:
        return sigma2 * raw, np.full(len(x_new), sigma2)
    test_degree = 1.0 + raw.sum(axis=1)  # self correlation plus cross terms
    k = sigma2 * raw / np.sqrt(test_degree[:, None] * fit.train_degrees[None, :])
    return k, sigma2 / test_degree


def predict(fit: GpFit, x_new: np.ndarray, return_sd: bool = True):
    """Posterior mean (and latent-function sd) at new inputs.

    mean = mu + k_hat (Sigma + tau2 I)^{-1} (y - mu)
    var  = prior - k_hat (Sigma + tau2 I)^{-1} k_hat'   (floored at zero)

    where prior is sigma2, or sigma2 over the test node's degree in
    diffusion mode.  The variance describes the noise-free g, so tau2 is
    not added back.
    """
    x_new = as_float_matrix(x_new, "x_new")
    if x_new.shape[1] != fit.x.shape[1]:
        raise ValueError("x_new dimension does not match training inputs")
    k, prior_var = _cross_covariance(fit, x_new)
    mean = fit.mu + k @ fit.alpha
    if not return_sd:
        return mean
    half = solve_triangular(fit.chol, k.T, lower=True)
    var = np.maximum(prior_var - np.einsum("ij,ij->j", half, half), 0.0)
    return mean, np.sqrt(var)


class MaternGaussianProcess(BaseEstimator, RegressorMixin):
    """Estimator facade over :func:`fit_mle` / :func:`predict`.

    Parameters
    ----------
    family : one of "exponential", "matern_1_5", "squared_exponential"
    diffusion : apply degree normalization to the correlation matrix
    """

    def __init__(self, family="exponential", diffusion=False):
        self.family = family
        self.diffusion = diffusion

    def fit(self, X, y):
        self.fit_ = fit_mle(
            np.asarray(X, dtype=float),
            np.asarray(y, dtype=float),
            family=self.family,
            diffusion=self.diffusion,
        )
        return self

    def predict(self, X, return_sd=False):
        if not hasattr(self, "fit_"):
            raise RuntimeError("estimator is not fitted")
        out = predict(self.fit_, np.asarray(X, dtype=float), return_sd=return_sd)
        return out

    def log_marginal_likelihood(self):
        if not hasattr(self, "fit_"):
            raise RuntimeError("estimator is not fitted")
        return self.fit_.log_lik
