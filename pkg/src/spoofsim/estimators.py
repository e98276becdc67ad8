"""Channel estimators for one Bob under a pilot spoofing attack.

Each function receives only the side information its estimator is allowed
to use: the LSE sees ``K_B``; the MLE adds the disturbance correlation; the
MMSE family adds the data correlation (exact, sampled or its signal
subspace); the LMMSE variants get Alice's imperfect :class:`EveKnowledge`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from spoofsim.array_channel import steering_matrix
from spoofsim.errors import ModelError, NotIdentifiableError
from spoofsim.scenario import ArrayConfig, EveKnowledge
from spoofsim.stats import raa_matrix, trunc_lognormal_mean

RANK_RTOL = 1e-10


def hermitian(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def check_full_column_rank(k_b: np.ndarray) -> None:
    sv = np.linalg.svd(k_b, compute_uv=False)
    if k_b.shape[0] < k_b.shape[1] or sv[0] == 0 or sv[-1] / sv[0] < RANK_RTOL:
        raise NotIdentifiableError(
            f"K_B ({k_b.shape[0]}x{k_b.shape[1]}) is not full column rank; h_B is not identifiable")


def check_invertible(a: np.ndarray, what: str = "matrix") -> None:
    """Raise ModelError when a Hermitian PSD matrix is (numerically) singular."""
    ev = np.linalg.eigvalsh(hermitian(a))
    if ev[-1] <= 0 or ev[0] <= RANK_RTOL * ev[-1]:
        raise ModelError(f"{what} is singular (eigenvalue ratio {ev[0] / max(ev[-1], 1e-300):.3g})")


def herm_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for Hermitian positive definite A."""
    try:
        return sla.solve(hermitian(a), b, assume_a="pos", check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ModelError(f"matrix is not positive definite: {exc}") from exc


def lse(y: np.ndarray, k_b: np.ndarray) -> np.ndarray:
    """(K_B^H K_B)^-1 K_B^H y."""
    check_full_column_rank(k_b)
    return herm_solve(k_b.conj().T @ k_b, k_b.conj().T @ y)


def mle(y: np.ndarray, k_b: np.ndarray, r_dd: np.ndarray) -> np.ndarray:
    """(K_B^H R_dd^-1 K_B)^-1 K_B^H R_dd^-1 y."""
    check_full_column_rank(k_b)
    d = r_dd[0, 0]
    if np.array_equal(r_dd, d * np.eye(r_dd.shape[0])) and np.real(d) > 0:
        # white disturbance: whitening cancels, identical to the LSE
        return lse(y, k_b)
    l_b = k_b.shape[1]
    w = herm_solve(r_dd, np.column_stack([k_b, y]))
    rk, ry = w[:, :l_b], w[:, l_b:].reshape(np.shape(y))
    return herm_solve(k_b.conj().T @ rk, k_b.conj().T @ ry)


def mmse(y: np.ndarray, k_b: np.ndarray, r_yy: np.ndarray) -> np.ndarray:
    """K_B^H R_yy^-1 y."""
    return k_b.conj().T @ herm_solve(r_yy, y)


def mmse_whitened(y: np.ndarray, k_b: np.ndarray, r_dd: np.ndarray) -> np.ndarray:
    """(I + K_B^H R_dd^-1 K_B)^-1 K_B^H R_dd^-1 y; equal to :func:`mmse` with exact R_yy."""
    l_b = k_b.shape[1]
    w = herm_solve(r_dd, np.column_stack([k_b, y]))
    gram = np.eye(l_b) + k_b.conj().T @ w[:, :l_b]
    return herm_solve(gram, k_b.conj().T @ w[:, l_b:].reshape(np.shape(y)))


def disturbance_correlation(k_e: np.ndarray, sigma_v2: float) -> np.ndarray:
    return k_e @ k_e.conj().T + sigma_v2 * np.eye(k_e.shape[0])


def data_correlation(k_b: np.ndarray, k_e: np.ndarray, sigma_v2: float) -> np.ndarray:
    return k_b @ k_b.conj().T + disturbance_correlation(k_e, sigma_v2)


def estimate_sample_correlation(snapshots) -> np.ndarray:
    """S_yy = (1/Q) sum_q y_q y_q^H from a (Q, N) array of snapshots."""
    snaps = np.atleast_2d(np.asarray(snapshots))
    if snaps.shape[0] == 0 or snaps.size == 0:
        raise ValueError("need at least one snapshot")
    return hermitian(snaps.T @ snaps.conj() / snaps.shape[0])


def mmse_smi(y: np.ndarray, k_b: np.ndarray, s_yy: np.ndarray) -> np.ndarray:
    """K_B^H S_yy^-1 y.  A singular S_yy is an error; no diagonal loading."""
    check_invertible(s_yy, "sample correlation S_yy")
    return mmse(y, k_b, s_yy)


@dataclass(frozen=True)
class SubspaceDecomp:
    u_s: np.ndarray
    lambda_s: np.ndarray  # decreasing
    u_n: np.ndarray
    lambda_n: np.ndarray  # decreasing

    @property
    def r(self) -> int:
        return self.u_s.shape[1]

    def reconstruct(self) -> np.ndarray:
        return (self.u_s * self.lambda_s) @ self.u_s.conj().T + (self.u_n * self.lambda_n) @ self.u_n.conj().T


def eigendecompose_signal_subspace(corr: np.ndarray, r: int) -> SubspaceDecomp:
    n = corr.shape[0]
    if not 1 <= r <= n:
        raise ValueError(f"signal dimension r={r} outside [1, {n}]")
    ev, vec = np.linalg.eigh(hermitian(corr))
    ev, vec = ev[::-1], vec[:, ::-1]
    return SubspaceDecomp(vec[:, :r], ev[:r], vec[:, r:], ev[r:])


def mmse_subspace(y: np.ndarray, k_b: np.ndarray, decomp: SubspaceDecomp) -> np.ndarray:
    """K_B^H U_s Lambda_s^-1 U_s^H y."""
    if np.any(decomp.lambda_s <= 0):
        raise ModelError("non-positive signal eigenvalue")
    u = decomp.u_s
    return (k_b.conj().T @ u) @ ((u.conj().T @ y) / decomp.lambda_s)


def _estimated_eve_correlation(know: EveKnowledge, array: ArrayConfig) -> np.ndarray:
    k_hat = np.sqrt(know.power_estimate) * steering_matrix(know.aoa_estimates, array)
    return k_hat @ k_hat.conj().T


def lmmse_naive(y: np.ndarray, k_b: np.ndarray, eve_know: EveKnowledge, sigma_v2: float,
                array: ArrayConfig) -> np.ndarray:
    """Plug the point estimates of Eve's AoAs and power into the MMSE form."""
    r_hat = k_b @ k_b.conj().T + _estimated_eve_correlation(eve_know, array) + sigma_v2 * np.eye(len(y))
    return mmse(y, k_b, r_hat)


def psd_part(a: np.ndarray) -> np.ndarray:
    """Nearest (Frobenius) positive semidefinite matrix to Hermitian ``a``."""
    ev, vec = np.linalg.eigh(hermitian(a))
    return hermitian((vec * np.clip(ev, 0.0, None)) @ vec.conj().T)


def improved_eve_correlation(eve_know: EveKnowledge, array: ArrayConfig, clip: bool = True) -> np.ndarray:
    """P_hat E[e^-dP] (1/L_E) sum_l R_aa(theta_hat_l).

    The second-order R_aa expansion is slightly indefinite for large
    element lags; with ``clip`` its negative eigenvalues are zeroed so the
    matrix stays a valid correlation at any spoofing power.
    """
    raa = sum(raa_matrix(t, eve_know.sigma_theta, eve_know.delta_theta_max, array)
              for t in eve_know.aoa_estimates) / len(eve_know.aoa_estimates)
    if clip:
        raa = psd_part(raa)
    gain = eve_know.power_estimate * trunc_lognormal_mean(eve_know.sigma_power, eve_know.delta_power_max)
    return gain * raa


def lmmse_improved(y: np.ndarray, k_b: np.ndarray, eve_know: EveKnowledge, sigma_v2: float,
                   array: ArrayConfig, clip: bool = True) -> np.ndarray:
    """LMMSE that averages R_yy over the known error distribution of Eve's parameters."""
    r = k_b @ k_b.conj().T + improved_eve_correlation(eve_know, array, clip) + sigma_v2 * np.eye(len(y))
    if clip:
        return mmse(y, k_b, r)
    return k_b.conj().T @ sla.solve(hermitian(r), y, assume_a="her")
