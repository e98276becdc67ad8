"""Scenario description, figure presets and the YAML config format.

Powers are linear everywhere in this module except the ``*_db`` helpers
and the config/CLI boundary.  Angles are radians in ``[0, pi]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from spoofsim.errors import ConfigurationError

PI = math.pi


def db2lin(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def lin2db(x: float) -> float:
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class ArrayConfig:
    n_antennas: int = 10
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if int(self.n_antennas) != self.n_antennas or self.n_antennas < 1:
            raise ConfigurationError(f"n_antennas must be a positive integer, got {self.n_antennas}")
        if not self.spacing_over_wavelength > 0:
            raise ConfigurationError("spacing_over_wavelength must be positive")


@dataclass(frozen=True)
class UserLink:
    """Multipath link of one single-antenna transmitter towards the array."""

    aoas: tuple[float, ...]
    power: float

    def __post_init__(self):
        object.__setattr__(self, "aoas", tuple(float(a) for a in self.aoas))
        if len(self.aoas) < 1:
            raise ConfigurationError("a link needs at least one path")
        for a in self.aoas:
            # no wrapping: cos() folds angles outside [0, pi] onto other AoAs
            if not 0.0 <= a <= PI:
                raise ConfigurationError(f"AoA {a!r} outside [0, pi]")
        if not self.power >= 0:
            raise ConfigurationError("link power must be non-negative")

    @property
    def n_paths(self) -> int:
        return len(self.aoas)


@dataclass(frozen=True)
class EveUncertainty:
    """Truncated-Gaussian error model of Alice's knowledge about an Eve.

    ``sigma_theta``/``delta_theta_max`` act on each AoA (radians),
    ``sigma_power``/``delta_power_max`` on the natural log of the power.
    """

    sigma_theta: float = PI / 75
    delta_theta_max: float = PI / 25
    sigma_power: float = 0.3454 / 2
    delta_power_max: float = 0.3454

    def __post_init__(self):
        for name in ("sigma_theta", "delta_theta_max", "sigma_power", "delta_power_max"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")


@dataclass(frozen=True)
class EveKnowledge:
    """Alice's point estimates of one Eve plus the error hyperparameters."""

    aoa_estimates: tuple[float, ...]
    power_estimate: float
    sigma_theta: float
    delta_theta_max: float
    sigma_power: float
    delta_power_max: float

    @classmethod
    def from_estimates(cls, aoas, power, unc: EveUncertainty) -> "EveKnowledge":
        return cls(tuple(float(a) for a in aoas), float(power), unc.sigma_theta,
                   unc.delta_theta_max, unc.sigma_power, unc.delta_power_max)


@dataclass(frozen=True)
class ScenarioConfig:
    array: ArrayConfig
    bobs: tuple[UserLink, ...]
    eves: tuple[UserLink, ...]
    noise_variance: float = 1.0
    pilot_length: int = 8
    psi: float = PI / 10
    phi: float = PI / 10
    eve_uncertainty: EveUncertainty = field(default_factory=EveUncertainty)

    def __post_init__(self):
        object.__setattr__(self, "bobs", tuple(self.bobs))
        object.__setattr__(self, "eves", tuple(self.eves))
        if len(self.bobs) < 1 or len(self.bobs) != len(self.eves):
            raise ConfigurationError("bobs and eves must be non-empty and paired by index")
        if not self.noise_variance > 0:
            raise ConfigurationError("noise_variance must be positive")
        if self.pilot_length < len(self.bobs):
            raise ConfigurationError(
                f"pilot_length {self.pilot_length} < {len(self.bobs)} users: no orthogonal pilots")

    @property
    def n_users(self) -> int:
        return len(self.bobs)

    def snr_b(self, user: int = 0) -> float:
        return self.bobs[user].power / self.noise_variance

    def ssr(self, user: int = 0) -> float:
        pe = self.eves[user].power
        return math.inf if pe == 0 else self.bobs[user].power / pe

    def with_snr_ssr(self, snr_b_db: float | None = None, ssr_db: float | None = None) -> "ScenarioConfig":
        """Re-derive every user's powers from SNR_B and SSR (dB), keeping sigma_v^2."""
        bobs, eves = [], []
        for b, e in zip(self.bobs, self.eves):
            pb = b.power if snr_b_db is None else db2lin(snr_b_db) * self.noise_variance
            if ssr_db is None:
                ratio = 0.0 if b.power == 0 else e.power / b.power
                pe = ratio * pb
            else:
                pe = pb / db2lin(ssr_db)
            bobs.append(replace(b, power=pb))
            eves.append(replace(e, power=pe))
        return replace(self, bobs=tuple(bobs), eves=tuple(eves))

    def passive(self) -> "ScenarioConfig":
        """Same scenario with every Eve silent during training."""
        return replace(self, eves=tuple(replace(e, power=0.0) for e in self.eves))

    def with_angles(self, psi: float | None = None, phi: float | None = None) -> "ScenarioConfig":
        """Substitute psi as Bob-1's second AoA and phi as Eve-1's offset.

        Eve-1's first AoA becomes Bob-1's last AoA plus ``phi``.
        """
        psi = self.psi if psi is None else float(psi)
        phi = self.phi if phi is None else float(phi)
        bobs, eves = list(self.bobs), list(self.eves)
        b0 = list(bobs[0].aoas)
        if len(b0) >= 2:
            b0[1] = psi
            bobs[0] = replace(bobs[0], aoas=tuple(b0))
        e0 = list(eves[0].aoas)
        e0[0] = bobs[0].aoas[-1] + phi
        eves[0] = replace(eves[0], aoas=tuple(e0))
        return replace(self, bobs=tuple(bobs), eves=tuple(eves), psi=psi, phi=phi)


def make_dft_pilots(pilot_length: int, user_count: int) -> np.ndarray:
    """Columns 0..M-1 of the unitary K-point DFT matrix, returned as rows (M, K)."""
    if user_count < 1 or pilot_length < user_count:
        raise ConfigurationError(
            f"cannot allocate {user_count} orthogonal pilots of length {pilot_length}")
    k = np.arange(pilot_length)
    m = np.arange(user_count)
    return np.exp(-2j * np.pi * np.outer(m, k) / pilot_length) / np.sqrt(pilot_length)


def reference_scenario(snr_b_db: float = 30.0, ssr_db: float = 0.0, psi: float = PI / 10,
                       phi: float = PI / 10, n_users: int = 2) -> ScenarioConfig:
    """Two Bob-Eve pairs, N = 10 half-wavelength ULA, K = 8, sigma_v^2 = 1."""
    bobs = (UserLink((0.0, psi, PI / 5), 1.0), UserLink((3 * PI / 5, 7 * PI / 10), 1.0))
    eves = (UserLink((PI / 5 + phi, 2 * PI / 5, PI / 2), 1.0), UserLink((4 * PI / 5, 9 * PI / 10), 1.0))
    if not 1 <= n_users <= 2:
        raise ConfigurationError("the reference scenario has one or two Bob-Eve pairs")
    cfg = ScenarioConfig(ArrayConfig(10, 0.5), bobs[:n_users], eves[:n_users],
                         noise_variance=1.0, pilot_length=8, psi=psi, phi=phi)
    return cfg.with_snr_ssr(snr_b_db, ssr_db)


@dataclass(frozen=True)
class Sweep:
    var: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.var not in SWEEP_VARS:
            raise ConfigurationError(f"unknown sweep variable {self.var!r}")
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise ConfigurationError("sweep grid is empty")


SWEEP_VARS = ("snr_b_db", "ssr_db", "q", "psi", "phi", "sigma_theta")

_DEFAULT_EST = ("lse", "mle", "mmse", "lmmse-naive", "lmmse-improved")

PRESETS: dict[str, dict[str, Any]] = {
    "fig3": dict(sweep=Sweep("snr_b_db", tuple(float(x) for x in range(0, 35, 2))),
                 estimators=_DEFAULT_EST),
    "fig4": dict(sweep=Sweep("ssr_db", tuple(float(x) for x in range(-10, 21, 2))),
                 estimators=_DEFAULT_EST),
    "fig5": dict(sweep=Sweep("q", tuple(float(2 ** i) for i in range(4, 15))),
                 estimators=("mmse", "mmse-smi", "mmse-sub")),
    "fig8": dict(sweep=Sweep("psi", (0.0, PI / 80, PI / 40, PI / 20, 3 * PI / 40, PI / 10)),
                 estimators=_DEFAULT_EST),
    "fig9": dict(sweep=Sweep("phi", (0.0, PI / 80, PI / 40, PI / 20, 3 * PI / 40, PI / 10)),
                 estimators=_DEFAULT_EST),
    "fig10": dict(sweep=Sweep("sigma_theta", tuple(PI / 25 * f for f in
                                                   (0.05, 0.1, 0.2, 1 / 3, 0.5, 0.75, 1.0))),
                  estimators=("lse", "lmmse-naive", "lmmse-improved")),
}

OVERRIDE_KEYS = ("n_users", "snr_b_db", "ssr_db", "psi", "phi", "n_antennas",
                 "spacing_over_wavelength", "pilot_length", "noise_variance", "sigma_theta",
                 "delta_theta_max", "sigma_power", "delta_power_max", "grid")


def build_reference_scenario(figure_preset: str, overrides: Mapping[str, Any] | None = None):
    """Return ``(ScenarioConfig, Sweep, default estimator tags)`` for a figure preset.

    The swept variable is left free; everything else takes the reference
    values (SNR_B = 30 dB, SSR = 0 dB unless swept or overridden).
    """
    if figure_preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {figure_preset!r}; choose from {sorted(PRESETS)}")
    overrides = dict(overrides or {})
    bad = set(overrides) - set(OVERRIDE_KEYS)
    if bad:
        raise ConfigurationError(f"unknown override keys: {sorted(bad)}")
    preset = PRESETS[figure_preset]
    sweep = preset["sweep"]
    if "grid" in overrides:
        sweep = Sweep(sweep.var, tuple(float(v) for v in overrides.pop("grid")))

    cfg = reference_scenario(overrides.pop("snr_b_db", 30.0), overrides.pop("ssr_db", 0.0),
                             overrides.pop("psi", PI / 10), overrides.pop("phi", PI / 10),
                             int(overrides.pop("n_users", 2)))
    arr = {k: overrides.pop(k) for k in ("n_antennas", "spacing_over_wavelength") if k in overrides}
    if arr:
        cfg = replace(cfg, array=replace(cfg.array, **arr))
    if "pilot_length" in overrides:
        cfg = replace(cfg, pilot_length=int(overrides.pop("pilot_length")))
    if "noise_variance" in overrides:
        snr, ssr = lin2db(cfg.snr_b()), lin2db(cfg.ssr())
        cfg = replace(cfg, noise_variance=float(overrides.pop("noise_variance"))).with_snr_ssr(snr, ssr)
    if overrides:
        cfg = replace(cfg, eve_uncertainty=replace(cfg.eve_uncertainty, **overrides))
    return cfg, sweep, preset["estimators"]


def apply_sweep_value(cfg: ScenarioConfig, var: str, value: float) -> ScenarioConfig:
    """Scenario at one grid point.  ``q`` does not change the scenario."""
    if var == "snr_b_db":
        return cfg.with_snr_ssr(snr_b_db=value)
    if var == "ssr_db":
        return cfg.with_snr_ssr(ssr_db=value)
    if var == "psi":
        return cfg.with_angles(psi=value)
    if var == "phi":
        return cfg.with_angles(phi=value)
    if var == "sigma_theta":
        return replace(cfg, eve_uncertainty=replace(cfg.eve_uncertainty, sigma_theta=value))
    if var == "q":
        return cfg
    raise ConfigurationError(f"unknown sweep variable {var!r}")


# ---------------------------------------------------------------- config file

def scenario_to_dict(cfg: ScenarioConfig, sweep: Sweep | None = None) -> dict:
    out = {
        "array": {"n_antennas": cfg.array.n_antennas,
                  "spacing_over_wavelength": cfg.array.spacing_over_wavelength},
        "pilots": {"length": cfg.pilot_length},
        "noise": {"variance": cfg.noise_variance},
        "angles": {"psi": cfg.psi, "phi": cfg.phi},
        "bobs": [{"aoas": list(b.aoas), "power": b.power} for b in cfg.bobs],
        "eves": [{"aoas": list(e.aoas), "power": e.power} for e in cfg.eves],
        "eve_knowledge": {k: getattr(cfg.eve_uncertainty, k) for k in
                          ("sigma_theta", "delta_theta_max", "sigma_power", "delta_power_max")},
    }
    if sweep is not None:
        out["sweep"] = {"var": sweep.var, "values": list(sweep.values)}
    return out


def _link(d: Mapping, noise: float) -> UserLink:
    if "power" in d:
        power = float(d["power"])
    elif "power_db" in d:
        power = db2lin(float(d["power_db"]))
    elif "snr_db" in d:
        power = db2lin(float(d["snr_db"])) * noise
    else:
        raise ConfigurationError("link needs one of power, power_db, snr_db")
    return UserLink(tuple(d["aoas"]), power)


def scenario_from_dict(d: Mapping) -> tuple[ScenarioConfig, Sweep | None]:
    try:
        arr = ArrayConfig(int(d["array"]["n_antennas"]), float(d["array"]["spacing_over_wavelength"]))
        noise = float(d.get("noise", {}).get("variance", 1.0))
        bobs = tuple(_link(b, noise) for b in d["bobs"])
        eves = tuple(_link(e, noise) for e in d["eves"])
        angles = d.get("angles", {})
        unc = EveUncertainty(**{k: float(v) for k, v in d.get("eve_knowledge", {}).items()})
        cfg = ScenarioConfig(arr, bobs, eves, noise_variance=noise,
                             pilot_length=int(d.get("pilots", {}).get("length", 8)),
                             psi=float(angles.get("psi", PI / 10)),
                             phi=float(angles.get("phi", PI / 10)), eve_uncertainty=unc)
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed scenario config: {exc!r}") from exc
    sweep = None
    if "sweep" in d:
        sweep = Sweep(d["sweep"]["var"], tuple(float(v) for v in d["sweep"]["values"]))
    return cfg, sweep


def dump_config(cfg: ScenarioConfig, sweep: Sweep | None = None) -> str:
    return yaml.safe_dump(scenario_to_dict(cfg, sweep), sort_keys=False)


def load_config(path: str | Path) -> tuple[ScenarioConfig, Sweep | None]:
    with open(path, encoding="utf-8") as fh:
        return scenario_from_dict(yaml.safe_load(fh))


def save_config(path: str | Path, cfg: ScenarioConfig, sweep: Sweep | None = None) -> None:
    Path(path).write_text(dump_config(cfg, sweep), encoding="utf-8")
