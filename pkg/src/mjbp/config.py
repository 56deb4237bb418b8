"""Experiment configuration: a sectioned ``key = value`` text format.

Example::

    # desk-scale SNR sweep
    [system]
    M = 16
    K = 4

    [experiment]
    sweep = snr
    values = 0, 10, 15
    schemes = mjbp, mrt, zf

Keys left out take the defaults in :data:`DEFAULTS`.  Powers are given in
dBm, gains and error variances in dB; they are converted to linear units
once, here.  Every error names the offending line.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ConfigurationError, GeometryConfig, SystemDims
from .fp import FpOptions
from .power import EhParams, NoiseParams, UtilitySpec
from .ssca import LongTermOptions, StepSchedule, SystemParams


class ConfigError(ConfigurationError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _names(text):
    return tuple(x.strip().lower() for x in text.replace(",", " ").split())


# section -> key -> (parser, default)
DEFAULTS = {
    "system": {
        "M": (_int, 64),
        "K": (_int, 12),
        "Np": (_int, 6),
        "T": (_int, 400),
        "Ts": (_int, 10),
        "Tf": (_int, 500),
        "N": (_int, 200),
        "cell_radius": (float, 100.0),
        "d_min": (float, 10.0),
        "angular_spread_deg": (float, 10.0),
    },
    "power": {
        "pmax_dbm": (float, 10.0),
        "sigma2_dbm": (float, -60.0),
        "delta2_dbm": (float, -50.0),
        "omega2_db": (float, -40.0),
        "eh_s_mw": (float, 24.0),
        "eh_a": (float, 150.0),
        "eh_b": (float, 0.014),
        "gamma": (float, 10.0),
    },
    "algorithm": {
        "utility": (str.lower, "sum"),
        "log_offset": (float, 1.0),
        "tau": (float, 1.0),
        "rho_min": (float, 1e-3),
        "rho0": (float, 0.5),
        "eps_alpha": (float, 0.6),
        "eps_beta": (float, 0.9),
        "c_alpha": (float, 1.0),
        "c_beta": (float, 1.0),
        "bcd_tol": (float, 1e-4),
        "max_cycles": (_int, 100),
        "sub_tol": (float, 1e-6),
        "init": (str.lower, "mrt"),
    },
    "experiment": {
        "seeds": (_int, 1),
        "master_seed": (_int, 0),
        "sweep": (str.lower, "none"),
        "values": (_floats, ()),
        "schemes": (_names, ("mjbp", "mrt", "zf")),
        "gain_normalization": (str.lower, "median_snr"),
        "snr_db": (float, 10.0),
        "eval_fraction": (float, 0.2),
        "cdf_instances": (_int, 50),
        "cdf_samples": (_int, 200),
        "cdf_rho": (float, 1.0),
        "cdf_policy": (str.lower, "mrt"),
    },
}

SWEEP_AXES = ("none", "snr", "k", "m", "gamma")
SCHEMES = ("mjbp", "mrt", "zf")


def dbm_to_mw(x):
    return 10.0 ** (x / 10.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment settings; every power is linear (mW)."""

    dims: SystemDims
    N: int
    geometry: GeometryConfig
    pmax: float
    sigma2: float
    delta2: float
    eh_S: float
    eh_a: float
    eh_b: float
    gamma: float
    utility: UtilitySpec
    schedule: StepSchedule
    tau: float
    rho_min: float
    rho0: float
    fp: FpOptions
    seeds: int = 1
    master_seed: int = 0
    sweep: str = "none"
    values: tuple = ()
    schemes: tuple = SCHEMES
    gain_normalization: str = "median_snr"
    snr_db: float = 10.0
    eval_fraction: float = 0.2
    cdf_instances: int = 50
    cdf_samples: int = 200
    cdf_rho: float = 1.0
    cdf_policy: str = "mrt"
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def system_params(self, K=None, pmax=None, gamma=None):
        K = self.dims.K if K is None else K
        g = self.gamma if gamma is None else gamma
        return SystemParams(
            Pmax=self.pmax if pmax is None else pmax,
            noise=NoiseParams.uniform(K, self.sigma2, self.delta2),
            eh=EhParams.uniform(K, self.eh_S, self.eh_a, self.eh_b),
            gamma=np.full(K, float(g)),
            N=self.N,
        )

    def long_term(self):
        return LongTermOptions(utility=self.utility, schedule=self.schedule,
                               tau=self.tau, rho_min=self.rho_min, rho0=self.rho0)

    def with_overrides(self, **sections):
        """New config with ``{section: {key: text}}`` entries replaced, revalidated."""
        raw = {s: dict(v) for s, v in self.raw.items()}
        for section, items in sections.items():
            raw.setdefault(section, {}).update({k: (str(v), None) for k, v in items.items()})
        return build_config(raw)


def _parse_lines(text):
    raw = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip().lower()
            if section not in DEFAULTS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in stripped:
            raise ConfigError(f"malformed line {line.strip()!r} (expected key = value)", lineno)
        if section is None:
            raise ConfigError("key outside of any [section]", lineno)
        key, value = (x.strip() for x in stripped.split("=", 1))
        keys = {k.lower(): k for k in DEFAULTS[section]}
        if key.lower() not in keys:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
        raw.setdefault(section, {})[keys[key.lower()]] = (value, lineno)
    return raw


def build_config(raw):
    """Build and validate a config from ``{section: {key: (text, line)}}``."""
    vals, lines = {}, {}
    for section, keys in DEFAULTS.items():
        for key, (parse, default) in keys.items():
            text, lineno = raw.get(section, {}).get(key, (None, None))
            if text is None:
                vals[key] = default
                continue
            try:
                vals[key] = parse(text)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}", lineno) from None
            lines[key] = lineno

    def check(cond, key, message):
        if not cond:
            raise ConfigError(f"{key}: {message}", lines.get(key))

    def guarded(key, make):
        try:
            return make()
        except ConfigurationError as exc:
            raise ConfigError(str(exc), lines.get(key)) from None

    for key in ("M", "K", "Np", "T", "Ts", "Tf", "N", "seeds", "cdf_instances", "cdf_samples"):
        check(vals[key] >= 1, key, "must be a positive integer")
    dims = SystemDims(vals["M"], vals["K"], vals["Np"], vals["T"], vals["Ts"], vals["Tf"])
    geometry = guarded("d_min", lambda: GeometryConfig(
        vals["cell_radius"], vals["d_min"], vals["angular_spread_deg"], vals["omega2_db"]))
    check(vals["utility"] in ("sum", "log"), "utility", "must be 'sum' or 'log'")
    check(vals["log_offset"] > 0, "log_offset", "must be positive")
    check(vals["tau"] > 0, "tau", "must be positive")
    check(0 < vals["rho_min"] <= 1, "rho_min", "must lie in (0, 1]")
    check(vals["rho_min"] <= vals["rho0"] <= 1, "rho0", "must lie in [rho_min, 1]")
    check(0 < vals["cdf_rho"] <= 1, "cdf_rho", "must lie in (0, 1]")
    check(vals["eh_s_mw"] > 0 and vals["eh_a"] > 0, "eh_a", "EH saturation and steepness must be positive")
    check(vals["gamma"] >= 0, "gamma", "must be nonnegative")
    check(vals["bcd_tol"] > 0 and vals["sub_tol"] > 0, "bcd_tol", "tolerances must be positive")
    check(vals["max_cycles"] >= 0, "max_cycles", "must be nonnegative")
    check(vals["init"] in ("mrt", "zf", "zero"), "init", "must be mrt, zf or zero")
    check(0 < vals["eval_fraction"] <= 1, "eval_fraction", "must lie in (0, 1]")
    check(vals["sweep"] in SWEEP_AXES, "sweep", f"must be one of {', '.join(SWEEP_AXES)}")
    check(vals["sweep"] == "none" or len(vals["values"]) > 0, "values", "sweep needs at least one value")
    check(vals["gain_normalization"] in ("none", "median_snr"), "gain_normalization",
          "must be 'none' or 'median_snr'")
    check(len(vals["schemes"]) > 0 and all(s in SCHEMES for s in vals["schemes"]), "schemes",
          f"schemes must be drawn from {', '.join(SCHEMES)}")
    check(vals["cdf_policy"] in ("mrt", "zf"), "cdf_policy", "must be mrt or zf")
    if vals["sweep"] in ("k", "m"):
        check(all(v >= 1 and v == int(v) for v in vals["values"]), "values", "sizes must be positive integers")
    if "zf" in vals["schemes"] or "zf" == vals["init"]:
        Ks = [int(v) for v in vals["values"]] if vals["sweep"] == "k" else [vals["K"]]
        Ms = [int(v) for v in vals["values"]] if vals["sweep"] == "m" else [vals["M"]]
        key = "values" if vals["sweep"] in ("k", "m") else "K"
        check(max(Ks) <= min(Ms), key, "zero-forcing requires K <= M")
    schedule = guarded("eps_alpha", lambda: StepSchedule(
        vals["eps_alpha"], vals["eps_beta"], vals["c_alpha"], vals["c_beta"]))

    return ExperimentConfig(
        dims=dims,
        N=vals["N"],
        geometry=geometry,
        pmax=dbm_to_mw(vals["pmax_dbm"]),
        sigma2=dbm_to_mw(vals["sigma2_dbm"]),
        delta2=dbm_to_mw(vals["delta2_dbm"]),
        eh_S=vals["eh_s_mw"],
        eh_a=vals["eh_a"],
        eh_b=vals["eh_b"],
        gamma=vals["gamma"],
        utility=UtilitySpec(vals["utility"], vals["log_offset"]),
        schedule=schedule,
        tau=vals["tau"],
        rho_min=vals["rho_min"],
        rho0=vals["rho0"],
        fp=FpOptions(bcd_tol=vals["bcd_tol"], max_cycles=vals["max_cycles"],
                     sub_tol=vals["sub_tol"], init=vals["init"]),
        seeds=vals["seeds"],
        master_seed=vals["master_seed"],
        sweep=vals["sweep"],
        values=tuple(vals["values"]),
        schemes=tuple(vals["schemes"]),
        gain_normalization=vals["gain_normalization"],
        snr_db=vals["snr_db"],
        eval_fraction=vals["eval_fraction"],
        cdf_instances=vals["cdf_instances"],
        cdf_samples=vals["cdf_samples"],
        cdf_rho=vals["cdf_rho"],
        cdf_policy=vals["cdf_policy"],
        raw=raw,
    )


def parse_config_text(text):
    return build_config(_parse_lines(text))


def parse_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())
