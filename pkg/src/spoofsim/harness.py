"""Deterministic Monte Carlo engine and figure sweeps.

Trial ``t`` of a run draws from ``Philox(SeedSequence([master_seed, t]))``,
so any trial can be reproduced in isolation and the same channel/noise
realizations are reused at every grid point of a sweep.  Aggregation uses
``math.fsum`` over trial-ordered lists, making results independent of the
number of worker processes.
"""

from __future__ import annotations

import csv
import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from spoofsim import estimators as est
from spoofsim import metrics
from spoofsim.array_channel import (complex_normal, composite_matrices, correlate, sample_channel_draw,
                                    steering_matrix, synthesize_received)
from spoofsim.errors import ConfigurationError, ModelError
from spoofsim.scenario import ScenarioConfig, Sweep, apply_sweep_value, db2lin, make_dft_pilots
from spoofsim.stats import sample_eve_knowledge

ESTIMATORS = ("lse", "mle", "mmse", "mmse-smi", "mmse-sub", "lmmse-naive", "lmmse-improved")
PASSIVE_ESTIMATORS = ("lse", "mle", "mmse")
CLOSED_FORM_TAGS = ("lse", "mle", "mmse", "lse-passive", "mle-passive", "mmse-passive")
SYY_SAMPLERS = ("snapshots", "wishart")
CSV_COLUMNS = ("sweep_var", "sweep_value", "estimator", "nbmse", "bmse", "closed_form_bmse",
               "secrecy_rate", "rate_bob", "rate_eve", "trials", "failures")


@dataclass(frozen=True)
class TrialPlan:
    master_seed: int = 0
    trials: int = 1000
    estimators: tuple[str, ...] = ("lse", "mle", "mmse", "lmmse-naive", "lmmse-improved")
    sweep: Sweep | None = None
    q_snapshots: int | None = None
    snr_dl_db: float | None = None  # None: SNR_DL = SNR_B
    passive_baseline: bool = False
    target_user: int = 0
    subspace_dim: int | None = None  # None: L_B + L_E (L_B for a silent Eve)
    workers: int = 1
    syy_sampler: str = "snapshots"  # or "wishart": same law, cost independent of Q

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ConfigurationError(f"unknown estimators: {sorted(unknown)}")
        needs_q = {"mmse-smi", "mmse-sub"} & set(self.estimators)
        q_swept = self.sweep is not None and self.sweep.var == "q"
        if needs_q and not q_swept and (self.q_snapshots is None or self.q_snapshots < 1):
            raise ConfigurationError("mmse-smi/mmse-sub need q_snapshots >= 1 or a q sweep")
        if self.syy_sampler not in SYY_SAMPLERS:
            raise ConfigurationError(f"syy_sampler must be one of {SYY_SAMPLERS}")
        if not 0 <= self.target_user:
            raise ConfigurationError("target_user must be >= 0")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([master_seed, trial_index])))


@dataclass(frozen=True)
class _Context:
    pilots: np.ndarray
    a_b: tuple
    a_e: tuple
    k_b: tuple
    k_e: tuple
    r_dd: tuple
    r_yy: tuple
    r_dd_passive: tuple
    r_yy_passive: tuple


@functools.lru_cache(maxsize=64)
def _context(config: ScenarioConfig) -> _Context:
    users = range(config.n_users)
    a_b = tuple(steering_matrix(b, config.array) for b in config.bobs)
    a_e = tuple(steering_matrix(e, config.array) for e in config.eves)
    kk = [composite_matrices(config, m) for m in users]
    s2 = config.noise_variance
    eye = s2 * np.eye(config.array.n_antennas)
    return _Context(
        pilots=make_dft_pilots(config.pilot_length, config.n_users),
        a_b=a_b, a_e=a_e,
        k_b=tuple(k[0] for k in kk), k_e=tuple(k[1] for k in kk),
        r_dd=tuple(est.disturbance_correlation(k[1], s2) for k in kk),
        r_yy=tuple(est.data_correlation(k[0], k[1], s2) for k in kk),
        r_dd_passive=tuple(eye for _ in users),
        r_yy_passive=tuple(k[0] @ k[0].conj().T + eye for k in kk),
    )


def estimate_syy_protocol(config: ScenarioConfig, q: int, rng: np.random.Generator,
                          users=None, method: str = "snapshots") -> list[np.ndarray]:
    """Sample correlation of each user's correlated training block over ``q`` coherence intervals.

    Every interval has fresh fading for all Bobs and Eves; both transmit the
    same pilots used for channel estimation.  The noise after correlation
    with the orthonormal pilots, ``V p_m^*``, is drawn directly: those
    projections are i.i.d. CN(0, sigma_v^2 I) across users, which is exactly
    their joint law for unitary-completed pilots.

    ``method="wishart"`` draws ``q S_yy`` straight from its complex Wishart
    law (Bartlett factor) when ``q >= N``; it is distributionally identical
    to summing snapshots but costs O(N^2) regardless of ``q``.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    if method not in SYY_SAMPLERS:
        raise ValueError(f"unknown S_yy sampler {method!r}")
    ctx = _context(config)
    n = config.array.n_antennas
    users = range(config.n_users) if users is None else users
    out = []
    for m in users:
        if method == "wishart" and q >= n:
            out.append(sample_wishart_correlation(ctx.r_yy[m], q, rng))
            continue
        h_b = complex_normal(rng, (q, ctx.k_b[m].shape[1]))
        h_e = complex_normal(rng, (q, ctx.k_e[m].shape[1]))
        v = complex_normal(rng, (q, n), config.noise_variance)
        snaps = h_b @ ctx.k_b[m].T + h_e @ ctx.k_e[m].T + v
        out.append(est.estimate_sample_correlation(snaps))
    return out


def sample_wishart_correlation(r: np.ndarray, q: int, rng: np.random.Generator) -> np.ndarray:
    """(1/q) sum of q outer products of CN(0, r) vectors, via the complex Bartlett decomposition."""
    n = r.shape[0]
    if q < n:
        raise ValueError("Bartlett sampling needs q >= N")
    t = np.tril(complex_normal(rng, (n, n)), -1)
    t[np.diag_indices(n)] = np.sqrt(rng.gamma(q - np.arange(n), 1.0))
    c = np.linalg.cholesky(r) @ t
    return est.hermitian(c @ c.conj().T / q)


def _estimate(tag, m, y, config, ctx, know, s_yy, plan, passive):
    k_b = ctx.k_b[m]
    if tag == "lse":
        return est.lse(y, k_b)
    if tag == "mle":
        return est.mle(y, k_b, (ctx.r_dd_passive if passive else ctx.r_dd)[m])
    if tag == "mmse":
        return est.mmse(y, k_b, (ctx.r_yy_passive if passive else ctx.r_yy)[m])
    if tag == "mmse-smi":
        return est.mmse_smi(y, k_b, s_yy[m])
    if tag == "mmse-sub":
        r = plan.subspace_dim
        if r is None:
            r = k_b.shape[1] + (ctx.k_e[m].shape[1] if config.eves[m].power > 0 else 0)
        return est.mmse_subspace(y, k_b, est.eigendecompose_signal_subspace(s_yy[m], r))
    if tag == "lmmse-naive":
        return est.lmmse_naive(y, k_b, know[m], config.noise_variance, config.array)
    if tag == "lmmse-improved":
        return est.lmmse_improved(y, k_b, know[m], config.noise_variance, config.array)
    raise ConfigurationError(tag)


def run_trial(config: ScenarioConfig, plan: TrialPlan, trial_index: int, q: int | None = None) -> dict:
    """One Monte Carlo trial for every selected estimator.

    Returns ``{tag: (sq_err, nsq_err, rate_b, rate_e)}`` for the target user;
    an estimator whose preconditions fail yields NaNs.
    """
    ctx = _context(config)
    rng = trial_rng(plan.master_seed, trial_index)
    draw = sample_channel_draw(config, rng)
    know = [sample_eve_knowledge(e, config.eve_uncertainty, rng) for e in config.eves]
    q = plan.q_snapshots if q is None else q
    s_yy = None
    if {"mmse-smi", "mmse-sub"} & set(plan.estimators):
        s_yy = estimate_syy_protocol(config, int(q), rng, method=plan.syy_sampler)

    jobs = [(t, False) for t in plan.estimators]
    blocks = {False: synthesize_received(config, ctx.pilots, draw)}
    if plan.passive_baseline:
        jobs += [(t, True) for t in PASSIVE_ESTIMATORS]
        blocks[True] = synthesize_received(config.passive(), ctx.pilots, draw)
    ys = {p: [correlate(b, ctx.pilots[m]) for m in range(config.n_users)] for p, b in blocks.items()}

    tu = plan.target_user
    snr_dl = config.snr_b(tu) if plan.snr_dl_db is None else db2lin(plan.snr_dl_db)
    h = draw.h_b[tu]
    out = {}
    nan = (math.nan,) * 4
    for tag, passive in jobs:
        name = f"{tag}-passive" if passive else tag
        try:
            hats = [_estimate(tag, m, ys[passive][m], config, ctx, know, s_yy, plan, passive)
                    for m in range(config.n_users)]
        except ModelError:
            out[name] = nan
            continue
        sq = float(np.real(np.vdot(hats[tu] - h, hats[tu] - h)))
        nsq = sq / float(np.real(np.vdot(h, h)))
        try:
            w = metrics.matched_filter_precoder(hats, ctx.a_b)
            rb = math.log2(1 + metrics.downlink_sinr(draw.h_b[tu], ctx.a_b[tu], w, tu, snr_dl))
            re = math.log2(1 + metrics.downlink_sinr(draw.h_e[tu], ctx.a_e[tu], w, tu, snr_dl))
        except ModelError:
            rb = re = math.nan
        out[name] = (sq, nsq, rb, re)
    return out


def _run_chunk(args):
    config, plan, indices, q = args
    return [run_trial(config, plan, i, q) for i in indices]


def run_trials(config: ScenarioConfig, plan: TrialPlan, q: int | None = None,
               executor: ProcessPoolExecutor | None = None) -> list[dict]:
    """All trials of one grid point, returned in trial-index order."""
    idx = list(range(plan.trials))
    if executor is None:
        return _run_chunk((config, plan, idx, q))
    n_chunks = max(1, min(len(idx), 4 * plan.workers))
    chunks = [idx[i::n_chunks] for i in range(n_chunks)]
    results = [None] * len(idx)
    for chunk, recs in zip(chunks, executor.map(_run_chunk, [(config, plan, c, q) for c in chunks])):
        for i, r in zip(chunk, recs):
            results[i] = r
    return results


def closed_form_reference(config: ScenarioConfig, tag: str, user: int = 0) -> float:
    """Closed-form BMSE of lse/mle/mmse (optionally ``-passive``) for one user; NaN if undefined."""
    passive = tag.endswith("-passive")
    base = tag.removesuffix("-passive")
    cfg = config.passive() if passive else config
    ctx = _context(cfg)
    try:
        if base == "lse":
            return metrics.bmse_lse_closed_form(ctx.a_b[user], ctx.a_e[user], cfg.snr_b(user),
                                                cfg.ssr(user)).closed_form
        if base == "mle":
            return metrics.bmse_mle_closed_form(ctx.k_b[user], ctx.k_e[user], cfg.noise_variance).closed_form
        if base == "mmse":
            return metrics.bmse_mmse_closed_form(ctx.k_b[user], ctx.k_e[user], cfg.noise_variance).closed_form
    except ModelError:
        return math.nan
    return math.nan


def _mean(xs):
    return math.fsum(xs) / len(xs) if xs else math.nan


def aggregate(records: list[dict], tag: str) -> dict:
    rows = [r[tag] for r in records]
    ok = [r for r in rows if not math.isnan(r[0])]
    rated = [r for r in ok if not math.isnan(r[2])]
    rate_b = _mean([r[2] for r in rated])
    rate_e = _mean([r[3] for r in rated])
    return {
        "nbmse": _mean([r[1] for r in ok]),
        "bmse": _mean([r[0] for r in ok]),
        "rate_bob": rate_b,
        "rate_eve": rate_e,
        "secrecy_rate": metrics.secrecy_rate(rate_b, rate_e) if rated else math.nan,
        "trials": len(rows),
        "failures": len(rows) - len(ok),
    }


@dataclass
class SweepResult:
    sweep_var: str
    rows: list[dict] = field(default_factory=list)

    def select(self, estimator: str, key: str = "nbmse") -> list[float]:
        return [r[key] for r in self.rows if r["estimator"] == estimator]

    def values(self) -> list[float]:
        seen = []
        for r in self.rows:
            if r["sweep_value"] not in seen:
                seen.append(r["sweep_value"])
        return seen

    def row(self, value: float, estimator: str) -> dict:
        for r in self.rows:
            if r["estimator"] == estimator and r["sweep_value"] == value:
                return r
        raise KeyError((value, estimator))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in self.rows:
                writer.writerow([_fmt(r[c]) for c in CSV_COLUMNS])


def _fmt(x):
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def run_sweep(config: ScenarioConfig, plan: TrialPlan) -> SweepResult:
    if plan.sweep is None:
        raise ConfigurationError("plan has no sweep")
    sweep = plan.sweep
    tags = list(plan.estimators) + ([f"{t}-passive" for t in PASSIVE_ESTIMATORS]
                                    if plan.passive_baseline else [])
    result = SweepResult(sweep.var)
    executor = ProcessPoolExecutor(plan.workers) if plan.workers > 1 else None
    try:
        for value in sweep.values:
            cfg = apply_sweep_value(config, sweep.var, value)
            q = int(value) if sweep.var == "q" else plan.q_snapshots
            records = run_trials(cfg, plan, q, executor)
            for tag in tags:
                row = {"sweep_var": sweep.var, "sweep_value": float(value), "estimator": tag}
                row.update(aggregate(records, tag))
                row["closed_form_bmse"] = (closed_form_reference(cfg, tag, plan.target_user)
                                           if tag in CLOSED_FORM_TAGS else math.nan)
                result.rows.append(row)
    finally:
        if executor is not None:
            executor.shutdown()
    return result
