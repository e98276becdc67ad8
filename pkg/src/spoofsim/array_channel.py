"""ULA steering, Rayleigh channel draws, received training data and pilot correlation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from spoofsim.scenario import ArrayConfig, ScenarioConfig, UserLink


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly symmetric CN(0, variance) samples (real/imag each N(0, variance/2))."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def steering_vector(theta, array: ArrayConfig) -> np.ndarray:
    """Unit-norm ULA response; entry n is exp(-j 2 pi n (d/lambda) cos theta) / sqrt(N).

    ``theta`` may be an array of angles, in which case one column per angle
    is returned.
    """
    n = np.arange(array.n_antennas)
    theta = np.asarray(theta, dtype=float)
    phase = -2.0 * np.pi * array.spacing_over_wavelength * np.multiply.outer(n, np.cos(theta))
    return np.exp(1j * phase) / np.sqrt(array.n_antennas)


def steering_matrix(link: UserLink | tuple, array: ArrayConfig) -> np.ndarray:
    """N x L matrix whose columns are a(theta_l) / sqrt(L)."""
    aoas = link.aoas if isinstance(link, UserLink) else tuple(link)
    return steering_vector(np.array(aoas), array) / np.sqrt(len(aoas))


@dataclass(frozen=True)
class ChannelDraw:
    h_b: tuple[np.ndarray, ...]
    h_e: tuple[np.ndarray, ...]
    noise: np.ndarray  # N x K


@dataclass(frozen=True)
class CorrelatedObservation:
    y: np.ndarray
    k_b: np.ndarray
    k_e: np.ndarray  # ground truth; oracle metrics only


def sample_channel_draw(config: ScenarioConfig, rng: np.random.Generator) -> ChannelDraw:
    h_b = tuple(complex_normal(rng, b.n_paths) for b in config.bobs)
    h_e = tuple(complex_normal(rng, e.n_paths) for e in config.eves)
    noise = complex_normal(rng, (config.array.n_antennas, config.pilot_length), config.noise_variance)
    return ChannelDraw(h_b, h_e, noise)


def composite_matrices(config: ScenarioConfig, user: int) -> tuple[np.ndarray, np.ndarray]:
    """(K_B, K_E) = (sqrt(P_B) A_B, sqrt(P_E) A_E) of one user."""
    b, e = config.bobs[user], config.eves[user]
    return (np.sqrt(b.power) * steering_matrix(b, config.array),
            np.sqrt(e.power) * steering_matrix(e, config.array))


def synthesize_received(config: ScenarioConfig, pilots: np.ndarray, draw: ChannelDraw) -> np.ndarray:
    """N x K training block Y = sum_m (K_B h_B + K_E h_E) p_m^T + V."""
    n, k = config.array.n_antennas, config.pilot_length
    if pilots.shape != (config.n_users, k) or draw.noise.shape != (n, k):
        raise ValueError(f"dimension mismatch: pilots {pilots.shape}, noise {draw.noise.shape}")
    y = draw.noise.copy()
    for m in range(config.n_users):
        k_b, k_e = composite_matrices(config, m)
        y += np.outer(k_b @ draw.h_b[m] + k_e @ draw.h_e[m], pilots[m])
    return y


def correlate(y_block: np.ndarray, pilot: np.ndarray, config: ScenarioConfig | None = None,
              target_user: int | None = None) -> CorrelatedObservation | np.ndarray:
    """y = Y p^*.  With a config and user index the ground-truth K_B/K_E ride along."""
    y = y_block @ np.conj(pilot)
    if config is None:
        return y
    k_b, k_e = composite_matrices(config, target_user)
    return CorrelatedObservation(y, k_b, k_e)
