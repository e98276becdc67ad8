"""Closed-form BMSE expressions, floor bounds and downlink secrecy evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from spoofsim.array_channel import steering_matrix
from spoofsim.errors import ModelError
from spoofsim.estimators import (check_full_column_rank, data_correlation, disturbance_correlation,
                                 herm_solve, hermitian)
from spoofsim.scenario import ArrayConfig, EveUncertainty, UserLink
from spoofsim.stats import TruncGauss

AGREEMENT_TOL = 1e-9


@dataclass
class BmseReport:
    estimator: str
    closed_form: float
    floor: float | None = None
    bounds: tuple[float, float] | None = None
    extras: dict = field(default_factory=dict)


def _h(a):
    return a.conj().T


def _inv_trace(a: np.ndarray) -> float:
    return float(np.real(np.trace(herm_solve(a, np.eye(a.shape[0])))))


def lse_floor_bounds(a_b: np.ndarray, a_e: np.ndarray, ssr: float) -> tuple[float, float]:
    """Singular-value sandwich of the LSE floor."""
    check_full_column_rank(a_b)
    n, l_b = a_b.shape
    sb = np.sort(np.linalg.svd(a_b, compute_uv=False))  # increasing
    se = np.zeros(n)
    sv_e = np.linalg.svd(a_e, compute_uv=False)
    se[: sv_e.size] = np.sort(sv_e)[::-1]  # decreasing, zero padded to N
    lower = sum(se[n - 1 - i] ** 2 / sb[i] ** 2 for i in range(l_b)) / ssr
    upper = sum(se[i] ** 2 / sb[i] ** 2 for i in range(l_b)) / ssr
    return float(lower), float(upper)


def bmse_lse_closed_form(a_b: np.ndarray, a_e: np.ndarray, snr_b: float, ssr: float) -> BmseReport:
    check_full_column_rank(a_b)
    gram_inv = herm_solve(_h(a_b) @ a_b, np.eye(a_b.shape[1]))
    floor = 0.0
    if math.isfinite(ssr):
        m = a_b @ gram_inv @ gram_inv @ _h(a_b)
        floor = float(np.real(np.trace(m @ a_e @ _h(a_e)))) / ssr
    noise = float(np.real(np.trace(gram_inv))) / snr_b
    bounds = lse_floor_bounds(a_b, a_e, ssr) if math.isfinite(ssr) else (0.0, 0.0)
    return BmseReport("lse", floor + noise, floor, bounds)


def _null_projector(g: np.ndarray, scale: float, rtol: float = 1e-9) -> np.ndarray:
    """Projector onto the eigenvectors of Hermitian ``g`` with eigenvalue <= rtol * scale."""
    ev, vec = np.linalg.eigh(hermitian(g))
    null = vec[:, ev <= rtol * scale]
    return null @ _h(null)


def _residual(k_b: np.ndarray, k_e: np.ndarray) -> np.ndarray:
    """P_B K_E, the part of R(K_E) orthogonal to R(K_B), via an orthonormal basis of K_B."""
    q, _ = np.linalg.qr(k_b)
    return k_e - q @ (_h(q) @ k_e)


def mle_bmse_projector_form(k_b: np.ndarray, k_e: np.ndarray, sigma_v2: float) -> float:
    """BMSE_ML written with the projector onto the orthogonal complement of R(K_B)."""
    gram_inv = herm_solve(_h(k_b) @ k_b, np.eye(k_b.shape[1]))
    res = _residual(k_b, k_e)
    inner = _h(res) @ res + sigma_v2 * np.eye(k_e.shape[1])
    t = gram_inv @ _h(k_b) @ k_e
    second = np.real(np.trace(t @ herm_solve(inner, _h(t))))
    return float(sigma_v2 * np.real(np.trace(gram_inv)) + sigma_v2 * second)


def bmse_mle_closed_form(k_b: np.ndarray, k_e: np.ndarray, sigma_v2: float) -> BmseReport:
    """trace[(K_B^H R_dd^-1 K_B)^-1] with the noiseless floor.

    The floor is the sigma_v^2 -> 0 limit of the projector form: the
    part of R(K_E) lying inside R(K_B) leaks through ``K_B^+``.
    """
    check_full_column_rank(k_b)
    r_dd = disturbance_correlation(k_e, sigma_v2)
    fisher = _h(k_b) @ herm_solve(r_dd, k_b)
    closed = _inv_trace(fisher)
    alt = mle_bmse_projector_form(k_b, k_e, sigma_v2)
    if abs(closed - alt) > AGREEMENT_TOL * max(1.0, abs(closed)):
        raise ModelError(f"MLE BMSE forms disagree: {closed} vs {alt}")
    t = np.linalg.pinv(k_b, rcond=1e-10) @ k_e
    res = _residual(k_b, k_e)
    proj = _null_projector(_h(res) @ res, max(np.linalg.norm(k_e, 2) ** 2, 1e-300))
    floor = float(np.real(np.trace(t @ proj @ _h(t))))
    return BmseReport("mle", closed, floor, extras={"projector_form": alt})


def mle_overlap_floor(k_b: np.ndarray, k_e: np.ndarray) -> float:
    """trace[K_B^+ K_E K_E^H (K_B^H)^+], the floor when R(K_E) lies inside R(K_B)."""
    t = np.linalg.pinv(k_b) @ k_e
    return float(np.real(np.trace(t @ _h(t))))


def bayesian_information_matrix(k_b: np.ndarray, r_dd: np.ndarray) -> np.ndarray:
    return _h(k_b) @ herm_solve(r_dd, k_b) + np.eye(k_b.shape[1])


def bmse_mmse_closed_form(k_b: np.ndarray, k_e: np.ndarray, sigma_v2: float) -> BmseReport:
    """trace[(I + K_B^H R_dd^-1 K_B)^-1]; needs no rank condition on K_B."""
    r_dd = disturbance_correlation(k_e, sigma_v2)
    bim = bayesian_information_matrix(k_b, r_dd)
    closed = _inv_trace(bim)
    # same value through L_B - trace(K_B^H R_yy^-1 K_B)
    alt = k_b.shape[1] - float(np.real(np.trace(_h(k_b) @ herm_solve(data_correlation(k_b, k_e, sigma_v2), k_b))))
    k = np.hstack([k_b, k_e])
    proj = np.linalg.pinv(k, rcond=1e-10) @ k
    l_b = k_b.shape[1]
    floor = float(l_b - np.real(np.trace(_h(proj)[:l_b, :l_b])))
    return BmseReport("mmse", closed, max(floor, 0.0), extras={"bcrlb": closed, "bim": bim,
                                                                "ryy_form": alt})


def bmse_lmmse_naive_semianalytic(k_b: np.ndarray, true_eve: UserLink, unc: EveUncertainty,
                                  sigma_v2: float, array: ArrayConfig, error_samples: int,
                                  rng: np.random.Generator) -> BmseReport:
    """BMSE of the naive LMMSE, averaging exact conditional traces over sampled Eve errors.

    ``extras['delta']`` is the mismatch term, ``extras['approx']`` the
    approximation BMSE_MMSE + delta.
    """
    if error_samples < 1:
        raise ValueError("error_samples must be >= 1")
    n, l_b = k_b.shape
    k_e = math.sqrt(true_eve.power) * steering_matrix(true_eve, array)
    r_yy = data_correlation(k_b, k_e, sigma_v2)
    th_dist = TruncGauss.symmetric(unc.sigma_theta, unc.delta_theta_max)
    p_dist = TruncGauss.symmetric(unc.sigma_power, unc.delta_power_max)
    mismatch, mmse_term = [], []
    for _ in range(error_samples):
        aoas = np.asarray(true_eve.aoas) + th_dist.sample(rng, true_eve.n_paths)
        k_hat = math.sqrt(true_eve.power * math.exp(p_dist.sample(rng))) * steering_matrix(tuple(aoas), array)
        r_dd_hat = disturbance_correlation(k_hat, sigma_v2)
        r_hat = k_b @ _h(k_b) + r_dd_hat
        g = herm_solve(r_hat, k_b)  # R_hat^-1 K_B
        mismatch.append(float(np.real(np.trace(_h(g) @ r_yy @ g - _h(k_b) @ g))))
        mmse_term.append(_inv_trace(bayesian_information_matrix(k_b, r_dd_hat)))
    delta = math.fsum(mismatch) / error_samples
    second = math.fsum(mmse_term) / error_samples
    exact = bmse_mmse_closed_form(k_b, k_e, sigma_v2).closed_form
    return BmseReport("lmmse-naive", delta + second,
                      extras={"delta": delta, "mmse_term": second, "approx": exact + delta,
                              "bmse_mmse": exact})


# ------------------------------------------------------------------ downlink

def matched_filter_precoder(estimates, steering) -> np.ndarray:
    """W = conj(H_hat) / ||H_hat||_F with column m equal to A_B,m h_hat_m."""
    h_hat = np.column_stack([a @ h for a, h in zip(steering, estimates)])
    norm = np.linalg.norm(h_hat)
    if not norm > 0 or not np.isfinite(norm):
        raise ModelError("degenerate precoder: estimated channel matrix is zero")
    return h_hat.conj() / norm


def downlink_sinr(h: np.ndarray, a: np.ndarray, w: np.ndarray, user: int, snr_dl: float) -> float:
    """SINR of a receiver with uplink channel A h; transposes (no conjugate) by reciprocity."""
    gains = np.abs((a @ h) @ w) ** 2  # |h^T A^T w_m|^2 for every m
    interference = gains.sum() - gains[user]
    return float(snr_dl * gains[user] / (snr_dl * interference + 1.0))


def sinr_and_secrecy(draw, w: np.ndarray, bob_steering, eve_steering, snr_dl: float):
    """Per-user (SINR_B, SINR_E, rate_B, rate_E, instantaneous secrecy) records.

    Eve m eavesdrops on stream m.  Ergodic averaging is left to the caller.
    """
    out = []
    for m in range(w.shape[1]):
        sb = downlink_sinr(draw.h_b[m], bob_steering[m], w, m, snr_dl)
        se = downlink_sinr(draw.h_e[m], eve_steering[m], w, m, snr_dl)
        rb, re = math.log2(1 + sb), math.log2(1 + se)
        out.append({"sinr_b": sb, "sinr_e": se, "rate_b": rb, "rate_e": re,
                    "secrecy": max(rb - re, 0.0)})
    return out


def secrecy_rate(rate_b: float, rate_e: float) -> float:
    return max(rate_b - rate_e, 0.0)
