"""Truncated Gaussian / lognormal helpers and the expected steering correlation.

Only the symmetric zero-mean truncation is exercised by the simulator, but
:class:`TruncGauss` keeps a general location and bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, ndtr, ndtri

from spoofsim.scenario import ArrayConfig, EveKnowledge, EveUncertainty, UserLink

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)

# below this acceptance rate rejection sampling is replaced by inverse CDF
_MIN_ACCEPTANCE = 0.5


@dataclass(frozen=True)
class TruncGauss:
    mu: float
    sigma: float
    a: float
    b: float

    def __post_init__(self):
        if not self.sigma > 0 or not self.b > self.a:
            raise ValueError("need sigma > 0 and b > a")

    @classmethod
    def symmetric(cls, sigma: float, half_width: float) -> "TruncGauss":
        return cls(0.0, sigma, -half_width, half_width)

    @property
    def norm_const(self) -> float:
        """C = [erf((b-mu)/(sqrt2 sigma)) - erf((a-mu)/(sqrt2 sigma))] / 2."""
        s = SQRT2 * self.sigma
        return 0.5 * (erf((self.b - self.mu) / s) - erf((self.a - self.mu) / s))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        dens = np.exp(-((x - self.mu) ** 2) / (2 * self.sigma ** 2)) / (self.norm_const * SQRT2PI * self.sigma)
        return np.where((x >= self.a) & (x <= self.b), dens, 0.0)

    def second_moment_symmetric(self) -> float:
        """E[X^2] = sigma^2 (1 - 2 b p(b)), valid for mu = 0 and a = -b."""
        return self.sigma ** 2 * (1.0 - 2.0 * self.b * float(self.pdf(self.b)))

    def sample(self, rng: np.random.Generator, size=None):
        n = 1 if size is None else int(np.prod(size))
        if self.norm_const >= _MIN_ACCEPTANCE:
            out = np.empty(0)
            while out.size < n:
                draw = self.mu + self.sigma * rng.standard_normal(max(n - out.size, 8) * 2)
                out = np.concatenate([out, draw[(draw >= self.a) & (draw <= self.b)]])
            out = out[:n]
        else:
            lo = ndtr((self.a - self.mu) / self.sigma)
            hi = ndtr((self.b - self.mu) / self.sigma)
            out = self.mu + self.sigma * ndtri(lo + (hi - lo) * rng.random(n))
            out = np.clip(out, self.a, self.b)
        return float(out[0]) if size is None else out.reshape(size)


def trunc_gauss_pdf(dist: TruncGauss, x):
    return dist.pdf(x)


def trunc_gauss_sample(dist: TruncGauss, rng: np.random.Generator, size=None):
    return dist.sample(rng, size)


def trunc_lognormal_mean(sigma: float, b: float) -> float:
    """E[e^X] = E[e^-X] for X ~ N_T(0, sigma, -b, b)."""
    s = SQRT2 * sigma
    return (math.exp(sigma ** 2 / 2) / (2.0 * math.erf(b / s))
            * (math.erf((b - sigma ** 2) / s) + math.erf((b + sigma ** 2) / s)))


def raa_matrix(theta_hat: float, sigma_theta: float, delta_theta_max: float,
               array: ArrayConfig) -> np.ndarray:
    """Second-order approximation of E[a(theta_hat - e) a(theta_hat - e)^H].

    ``e`` is the truncated-Gaussian AoA error.  The phase-progression
    constant is the element spacing in wavelengths.
    """
    n = np.arange(array.n_antennas)
    lag = (n[:, None] - n[None, :]).astype(float)
    spacing = array.spacing_over_wavelength
    s, b = sigma_theta, delta_theta_max
    shrink = s ** 2 * (0.5 - b / (math.erf(b / (SQRT2 * s)) * SQRT2PI * s) * math.exp(-b ** 2 / (2 * s ** 2)))
    beta = 2 * np.pi * lag * spacing
    corr = 1.0 - (beta ** 2 * math.sin(theta_hat) ** 2 - 1j * beta * math.cos(theta_hat)) * shrink
    return corr * np.exp(-1j * beta * math.cos(theta_hat)) / array.n_antennas


def sample_eve_knowledge(link: UserLink, unc: EveUncertainty, rng: np.random.Generator) -> EveKnowledge:
    """Alice's noisy view of one Eve: theta_hat = theta + e_theta, P_hat = P exp(e_P)."""
    d_theta = TruncGauss.symmetric(unc.sigma_theta, unc.delta_theta_max).sample(rng, link.n_paths)
    d_power = TruncGauss.symmetric(unc.sigma_power, unc.delta_power_max).sample(rng)
    return EveKnowledge.from_estimates(np.asarray(link.aoas) + d_theta,
                                       link.power * math.exp(d_power), unc)
