"""Client-level DP machinery: clipping, distributed Gaussian noise, and the
moments-accountant epsilon calculator for the subsampled Gaussian mechanism."""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import ConfigError, NumericError

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def clip(delta_w, s):
    """Scale delta_w down to L2 norm at most s; no-op if already within."""
    if s <= 0:
        raise ConfigError(f"clipping threshold must be positive, got {s}")
    out = np.asarray(delta_w, dtype=np.float64)
    norm = np.linalg.norm(out)
    # Rescaling can land an ulp above s; iterate so clip(clip(x)) == clip(x)
    # exactly. Converges in one or two passes.
    while norm > s:
        out = out * (s / norm)
        norm = np.linalg.norm(out)
    return out


def add_client_noise(delta_w, s, sigma, num_selected, rng_seed):
    """Add i.i.d. Gaussian noise with per-coordinate std s*sigma/sqrt(num_selected).

    Summing the noises of num_selected clients yields total std s*sigma,
    which is what the accountant assumes for the aggregate.
    """
    if s <= 0 or sigma <= 0:
        raise ConfigError("s and sigma must be positive")
    if num_selected < 1:
        raise ConfigError("num_selected must be >= 1")
    delta_w = np.asarray(delta_w, dtype=np.float64)
    rng = np.random.default_rng(rng_seed)
    std = s * sigma / math.sqrt(num_selected)
    return delta_w + rng.normal(0.0, std, size=delta_w.shape)


def _log_mix_densities(x, sigma, c):
    """Log pdfs of N(0, sigma^2) and the mixture (1-c)N(0,sigma^2) + cN(1,sigma^2)."""
    log_n0 = -0.5 * (x / sigma) ** 2 - math.log(sigma) - _LOG_SQRT_2PI
    log_n1_shift = -0.5 * ((x - 1.0) / sigma) ** 2 - math.log(sigma) - _LOG_SQRT_2PI
    if c >= 1.0:
        log_mix = log_n1_shift
    else:
        log_mix = np.logaddexp(math.log1p(-c) + log_n0, math.log(c) + log_n1_shift)
    return log_n0, log_mix


def log_moment(lam, sigma, c):
    """Log moment alpha(lambda|c) of the subsampled Gaussian privacy loss.

    Returns log max(E1, E2) with E1 = int n0 (n0/n1)^lam, E2 = int n1 (n1/n0)^lam,
    where n0 = pdf of N(0, sigma^2) and n1 = (1-c) n0 + c pdf of N(1, sigma^2).
    Both integrals are evaluated with adaptive quadrature, densities in log space.
    """
    if lam < 1 or int(lam) != lam:
        raise ConfigError(f"lambda must be a positive integer, got {lam}")
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    if not 0 <= c <= 1:
        raise ConfigError(f"sampling fraction must be in [0, 1], got {c}")
    if c == 0:
        return 0.0

    def e1_exponent(x):
        log_n0, log_n1 = _log_mix_densities(x, sigma, c)
        return log_n0 + lam * (log_n0 - log_n1)

    def e2_exponent(x):
        log_n0, log_n1 = _log_mix_densities(x, sigma, c)
        return log_n1 + lam * (log_n1 - log_n0)

    # The E2 integrand peaks near x = lam + 1; the bound must cover that peak
    # plus 12 sigma of Gaussian width on either side.
    bound = 12.0 * sigma + lam + 2.0
    log_e1 = _log_quad(e1_exponent, bound, lam)
    log_e2 = _log_quad(e2_exponent, bound, lam)
    # Quadrature can undershoot 1 by rounding error when c is tiny.
    return max(log_e1, log_e2, 0.0)


def _log_quad(exponent, bound, lam):
    """log of the integral of exp(exponent(x)) over [-bound, bound].

    The exponent can reach thousands for large lambda, so the integrand is
    shifted by its maximum (located on a dense grid) before quadrature.
    """
    grid = np.linspace(-bound, bound, 4097)
    shift = float(np.max(exponent(grid)))
    val, err = integrate.quad(lambda x: np.exp(exponent(x) - shift),
                              -bound, bound, points=[0.0, 1.0, float(lam + 1)],
                              limit=200, epsabs=1e-13, epsrel=1e-11)
    if not math.isfinite(val) or val <= 0 or err > 1e-6 * val:
        raise NumericError(f"quadrature did not converge: value={val}, err={err}")
    return math.log(val) + shift


@lru_cache(maxsize=None)
def _log_moment_grid(sigma, c, lam_max):
    return tuple(log_moment(lam, sigma, c) for lam in range(1, lam_max + 1))


@dataclass(frozen=True)
class AccountantQuery:
    sigma: float
    c: float
    t: int
    delta: float = 1e-5
    lam_max: int = 64

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.c <= 1:
            raise ConfigError(f"sampling fraction must be in (0, 1], got {self.c}")
        if self.t < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.t}")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must be in (0, 1), got {self.delta}")
        if self.lam_max < 1:
            raise ConfigError(f"lam_max must be >= 1, got {self.lam_max}")


def epsilon(query):
    """(epsilon, best lambda) after query.t rounds of the subsampled Gaussian.

    epsilon = min over integer lambda in [1, lam_max] of
    (t * alpha(lambda|c) - ln delta) / lambda.
    """
    alphas = _log_moment_grid(query.sigma, query.c, query.lam_max)
    log_delta = math.log(query.delta)
    best_eps = math.inf
    best_lam = 1
    for lam, alpha in enumerate(alphas, start=1):
        eps = (query.t * alpha - log_delta) / lam
        if eps < best_eps:
            best_eps = eps
            best_lam = lam
    return best_eps, best_lam


def calibrate_sensitivity(train_fn, index_sets, trials=1):
    """Clipping threshold from local dry runs: L2 norm of the compressed update.

    train_fn(index_set) must run one local training round from the initial
    model on public data and return the compressed update vector. Fixed-set
    schemes use trials=1; schemes that redraw the index set every round pass
    trials=100 and a sequence/generator of index sets, and the median of the
    resulting norms is returned.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    sets = iter(index_sets)
    norms = []
    for _ in range(trials):
        update = train_fn(next(sets))
        norms.append(float(np.linalg.norm(update)))
    if trials == 1:
        return norms[0]
    return float(np.median(norms))
