"""Extreme-value calibration of virtual samples.

Per class, the largest prototype distances of correctly classified
training graphs form a tail sample.  A Weibull model fitted to that
tail turns any distance into an OOD confidence in [0, 1]: the CDF
probability that the distance is tail-extreme.  Those confidences are
normalized per mini-batch into loss weights with mean 1.

Fitting is two-parameter maximum likelihood on values shifted by a
location term.  When every tail value is strictly positive the location
stays at 0, so the fit is a plain Weibull MLE (this is what makes
direct draws from a Weibull recoverable); a tail touching zero or below
is shifted to just under its minimum instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from .errors import ContractError, DomainError
from .mixup import VirtualSample
from .prototypes import PrototypeSet, distances_to_prototypes, predict

XI_MIN = 0.05
XI_MAX = 50.0
MIN_TAIL_SIZE = 3
MEAN_OMEGA_FLOOR = 1e-8
NEUTRAL_OMEGA = 0.5


@dataclass(frozen=True)
class EvtModel:
    class_index: int
    mu: float
    sigma: float
    xi: float
    tail_size: int
    valid: bool


def invalid_model(class_index: int, tail_size: int = 0) -> EvtModel:
    return EvtModel(class_index=class_index, mu=0.0, sigma=1.0, xi=1.0, tail_size=tail_size, valid=False)


def collect_tail_distances(
    train_embeddings: list[tuple[np.ndarray, int]],
    protos: PrototypeSet,
    tau: int,
) -> dict[int, np.ndarray]:
    """Top-tau prototype distances of correctly classified samples, per class.

    Classes with fewer than three correct samples yield an empty array;
    their models will simply be invalid, which is a state rather than an
    error.
    """
    if tau < 1:
        raise ContractError("tau must be at least 1")
    per_class: dict[int, list[float]] = {k: [] for k in range(protos.n_classes)}
    for z, label in train_embeddings:
        if predict(z, protos) == label:
            per_class[label].append(float(distances_to_prototypes(z, protos)[label]))
    tails: dict[int, np.ndarray] = {}
    for k, values in per_class.items():
        if len(values) < MIN_TAIL_SIZE:
            tails[k] = np.empty(0, dtype=np.float64)
        else:
            ordered = np.sort(np.asarray(values, dtype=np.float64))[::-1]
            tails[k] = ordered[:tau].copy()
    return tails


def _moment_shape_estimate(x: np.ndarray) -> float:
    """Method-of-moments initializer: match the coefficient of variation.

    For Weibull(shape k), CV^2 = Gamma(1+2/k)/Gamma(1+1/k)^2 - 1, which
    is strictly decreasing in k; invert it by bracketed root finding.
    """
    mean = x.mean()
    if mean <= 0:
        return 1.0
    cv2 = x.var() / mean**2

    def gap(k):
        return math.exp(gammaln(1 + 2 / k) - 2 * gammaln(1 + 1 / k)) - 1 - cv2

    if gap(XI_MIN) < 0:
        return XI_MIN
    if gap(XI_MAX) > 0:
        return XI_MAX
    return float(brentq(gap, XI_MIN, XI_MAX, xtol=1e-10))


def _profile_terms(xi: float, y: np.ndarray, log_y: np.ndarray):
    powered = y**xi
    total = powered.sum()
    weighted_log = float(powered @ log_y)
    return powered, total, weighted_log


def _profile_equation(xi: float, y: np.ndarray, log_y: np.ndarray) -> float:
    _, total, weighted_log = _profile_terms(xi, y, log_y)
    return weighted_log / total - 1.0 / xi - log_y.mean()


def _profile_log_likelihood(xi: float, y: np.ndarray, log_y: np.ndarray) -> float:
    """Log-likelihood with the scale profiled out (up to the data size)."""
    n = y.size
    sigma = (np.mean(y**xi)) ** (1.0 / xi)
    return n * math.log(xi) + (xi - 1.0) * float(log_y.sum()) - n * xi * math.log(sigma) - n


def _golden_section_shape(y: np.ndarray, log_y: np.ndarray, lo: float, hi: float) -> float:
    """Golden-section maximization of the profile log-likelihood."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc = _profile_log_likelihood(c, y, log_y)
    fd = _profile_log_likelihood(d, y, log_y)
    for _ in range(200):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = _profile_log_likelihood(c, y, log_y)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = _profile_log_likelihood(d, y, log_y)
        if b - a < 1e-12 * max(1.0, b):
            break
    return (a + b) / 2.0


def _solve_shape(y: np.ndarray, log_y: np.ndarray) -> float | None:
    """Safeguarded Newton on the profile score equation.

    The score is strictly increasing in the shape, so a bracket survives
    every iteration; Newton steps that leave it fall back to bisection.
    Returns None only if even the golden-section fallback produces a
    non-finite result.
    """
    f_lo = _profile_equation(XI_MIN, y, log_y)
    f_hi = _profile_equation(XI_MAX, y, log_y)
    if f_lo >= 0:
        return XI_MIN
    if f_hi <= 0:
        return XI_MAX

    lo, hi = XI_MIN, XI_MAX
    xi = min(max(_moment_shape_estimate(y), lo), hi)
    converged = False
    for _ in range(100):
        powered, total, weighted_log = _profile_terms(xi, y, log_y)
        f = weighted_log / total - 1.0 / xi - log_y.mean()
        if abs(f) < 1e-13:
            converged = True
            break
        if f < 0:
            lo = xi
        else:
            hi = xi
        weighted_log_sq = float(powered @ (log_y * log_y))
        variance = weighted_log_sq / total - (weighted_log / total) ** 2
        derivative = variance + 1.0 / xi**2
        step = f / derivative if derivative > 0 else None
        candidate = xi - step if step is not None else None
        if candidate is None or not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        if abs(candidate - xi) < 1e-15 * max(1.0, xi):
            xi = candidate
            converged = True
            break
        xi = candidate
    if not converged:
        xi = _golden_section_shape(y, log_y, XI_MIN, XI_MAX)
    if not math.isfinite(xi) or xi <= 0:
        return None
    return float(xi)


def weibull_fit_high(tail, tau: int, class_index: int = -1) -> EvtModel:
    """Fit a Weibull tail model to the tau largest values by MLE.

    Degenerate inputs (fewer than three values, or all values equal)
    give an invalid model rather than an error; callers fall back to a
    neutral confidence for such classes.
    """
    values = np.asarray(tail, dtype=np.float64)
    if tau < 1:
        raise ContractError("tau must be at least 1")
    if values.ndim != 1:
        values = values.ravel()
    values = np.sort(values)[::-1][:tau]
    n = values.size
    if n < MIN_TAIL_SIZE:
        return invalid_model(class_index, n)
    vmax = float(values.max())
    vmin = float(values.min())
    if vmax == vmin:
        return invalid_model(class_index, n)

    # location: keep 0 when the tail is strictly positive so the fit is a
    # plain two-parameter MLE; otherwise shift to just under the minimum
    if vmin > 0:
        mu = 0.0
    else:
        mu = vmin - max(1e-3 * (vmax - vmin), 1e-6)
    x = values - mu

    # normalize by the largest value: the score equation is invariant to
    # scaling, and it keeps powers like x^50 inside float range
    x_scale = float(x.max())
    y = x / x_scale
    log_y = np.log(y)

    xi = _solve_shape(y, log_y)
    if xi is None:
        return invalid_model(class_index, n)
    sigma = float((np.mean(y**xi)) ** (1.0 / xi) * x_scale)
    if not (math.isfinite(sigma) and sigma > 0):
        return invalid_model(class_index, n)
    return EvtModel(class_index=class_index, mu=float(mu), sigma=sigma, xi=xi, tail_size=n, valid=True)


def weibull_log_likelihood(values, mu: float, sigma: float, xi: float) -> float:
    """Log-likelihood of a (mu, sigma, xi) Weibull model on raw values."""
    x = (np.asarray(values, dtype=np.float64) - mu) / sigma
    if np.any(x <= 0):
        return -math.inf
    log_x = np.log(x)
    return float(x.size * math.log(xi / sigma) + (xi - 1.0) * log_x.sum() - np.sum(x**xi))


def ood_confidence(d: float, model: EvtModel) -> float:
    """Weibull CDF of a distance: 0 at the location, 1 in the far tail.

    The exponent is formed in log space so huge distances saturate at 1
    instead of overflowing.
    """
    if not model.valid:
        raise ContractError("ood_confidence requires a valid EVT model; check model.valid")
    if d <= model.mu:
        return 0.0
    exponent = model.xi * math.log((d - model.mu) / model.sigma)
    if exponent > 700.0:
        return 1.0
    return -math.expm1(-math.exp(exponent))


def gpd_cdf(x: float, mu: float, sigma: float, xi: float) -> float:
    """Generalized Pareto CDF (analysis utility for excess modeling).

    Values below the location return 0; arguments outside the support
    (1 + xi*(x-mu)/sigma <= 0) are domain errors.  |xi| < 1e-8 uses the
    exponential limit.
    """
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    z = (x - mu) / sigma
    if z <= 0:
        if 1.0 + xi * z <= 0:
            raise DomainError(f"x={x} outside GPD support")
        return 0.0
    if abs(xi) < 1e-8:
        return -math.expm1(-z)
    arg = 1.0 + xi * z
    if arg <= 0:
        raise DomainError(f"x={x} outside GPD support")
    return -math.expm1(-math.log(arg) / xi)


def score_virtual_samples(
    samples: list[VirtualSample],
    protos: PrototypeSet,
    models: dict[int, EvtModel],
) -> list[VirtualSample]:
    """Fill omega on each sample from its class model.

    Classes whose model is invalid get the neutral confidence 0.5, so
    they neither dominate nor vanish from the batch weighting.
    """
    for sample in samples:
        model = models.get(sample.label)
        if model is None or not model.valid:
            sample.omega = NEUTRAL_OMEGA
        else:
            d = float(distances_to_prototypes(sample.z_tilde, protos)[sample.label])
            sample.omega = ood_confidence(d, model)
    return samples


def normalize_weights(batch: list[VirtualSample]) -> list[VirtualSample]:
    """Per-batch mean normalization: omega_bar = omega / max(mean, 1e-8)."""
    if not batch:
        raise ContractError("cannot normalize an empty batch")
    omegas = []
    for sample in batch:
        if sample.omega is None:
            raise ContractError("every sample needs omega before normalization")
        omegas.append(sample.omega)
    denom = max(float(np.mean(omegas)), MEAN_OMEGA_FLOOR)
    for sample in batch:
        sample.omega_bar = sample.omega / denom
    return batch
