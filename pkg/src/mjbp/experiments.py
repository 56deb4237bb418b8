"""Experiment orchestration: sweeps, the rate-energy tradeoff, bound CDFs, CSV output.

Random streams for one run are derived from ``(master_seed, seed index)``
only.  Neither the scheme nor the sweep point enters the derivation, so
every scheme at every sweep point sees the same channel statistics and the
same slot-by-slot draws, and results never depend on worker scheduling.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .baselines import baseline_beamformer
from .channel import draw_estimated_channels, sample_statistics
from .power import NoiseParams, rate_bounds, utility
from .ssca import run

RESULT_CSV_HEADER = [
    "scheme", "sweep", "value", "seed", "utility", "sum_rate",
    "sum_harvested_mw", "final_rho", "unconverged_slots", "channel_digest", "status",
]
CDF_CSV_HEADER = ["bound", "value", "probability"]

SNR_DEFINITION = (
    "SNR = Pmax * G_med / sigma2, where G_med is the median large-scale gain over "
    "the devices of one statistics epoch (after gain normalization); SNR sweeps scale Pmax"
)


@dataclass(frozen=True)
class ResultRow:
    scheme: str
    sweep: str
    value: float
    seed: int
    utility: float
    sum_rate: float
    sum_harvested_mw: float
    final_rho: tuple
    unconverged_slots: int = 0
    channel_digest: str = ""
    status: str = "ok"
    runtime_s: float = 0.0


def _streams(master_seed, seed_index):
    ss = np.random.SeedSequence([int(master_seed), int(seed_index)])
    stats_ss, ch, smp, ev = ss.spawn(4)
    return stats_ss, {
        "channel": np.random.default_rng(ch),
        "samples": np.random.default_rng(smp),
        "eval": np.random.default_rng(ev),
    }


def _normalized_statistics(config, dims, stats_seed):
    stats = sample_statistics(dims, config.geometry, np.random.default_rng(stats_seed))
    if config.gain_normalization == "median_snr":
        target = 10.0 ** (config.snr_db / 10.0) * config.sigma2 / config.pmax
        stats = stats.scaled(target / np.median(stats.gain))
    return stats


def run_point(config, axis, value, seed_index, scheme):
    """One full mixed-timescale simulation; failures become a row with status text."""
    start = time.perf_counter()
    try:
        dims = config.dims
        if axis == "k":
            dims = replace(dims, K=int(value))
        elif axis == "m":
            dims = replace(dims, M=int(value))
        stats_seed, streams = _streams(config.master_seed, seed_index)
        stats = _normalized_statistics(config, dims, stats_seed)
        pmax = config.pmax
        if axis == "snr":
            pmax = 10.0 ** (value / 10.0) * config.sigma2 / np.median(stats.gain)
        system = config.system_params(K=dims.K, pmax=pmax, gamma=value if axis == "gamma" else None)
        if scheme == "zf":
            dims.check_zf()
        traj = run(stats, dims, system, dims.Tf, streams, policy=scheme,
                   options=config.long_term(), fp_opts=config.fp)
        window = max(1, math.ceil(config.eval_fraction * dims.Tf))
        rate = traj.rate[-window:].mean(axis=0)
        harv = traj.harvested[-window:].mean(axis=0)
        util = utility(rate + system.gamma * harv, config.utility)
        return ResultRow(scheme, axis, float(value), seed_index, float(util), float(rate.sum()),
                         float(harv.sum()), tuple(float(x) for x in traj.rho[-1]),
                         traj.unconverged_slots, traj.channel_digest[:16], "ok",
                         time.perf_counter() - start)
    except Exception as exc:  # recorded per row; the sweep goes on
        nan = float("nan")
        return ResultRow(scheme, axis, float(value), seed_index, nan, nan, nan, (),
                         0, "", f"error: {type(exc).__name__}: {exc}", time.perf_counter() - start)


def _tasks(config, axis, values):
    return [(config, axis, v, s, scheme)
            for v in values for s in range(config.seeds) for scheme in config.schemes]


def _execute(tasks, threads=1):
    if threads <= 1 or len(tasks) <= 1:
        return [run_point(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        # map keeps submission order, so the output never depends on scheduling
        return list(pool.map(run_point, *zip(*tasks)))


def run_sweep(config, threads=1):
    """Rows ordered by sweep value, then seed, then scheme."""
    if config.sweep == "none":
        axis, values = "snr", (config.snr_db,)
    else:
        axis, values = config.sweep, config.values
    return _execute(_tasks(config, axis, values), threads)


TRADEOFF_GAMMAS = (0.1, 1.0, 10.0, 100.0)


def tradeoff_sweep(config, threads=1):
    """Sweep the energy weight gamma; rows trace each scheme's rate-energy frontier."""
    values = config.values if config.sweep == "gamma" else TRADEOFF_GAMMAS
    return _execute(_tasks(config, "gamma", values), threads)


@dataclass
class CdfTable:
    lower: np.ndarray   # sorted bound values
    upper: np.ndarray

    @staticmethod
    def probabilities(n):
        return np.arange(1, n + 1) / n

    def rows(self):
        out = []
        for name, vals in (("lower", self.lower), ("upper", self.upper)):
            out += [(name, float(x), float(p)) for x, p in zip(vals, self.probabilities(len(vals)))]
        return out


def device_bounds(config, stats, dims, pmax, rng, n_samples, policy=None, rho=None):
    """Per-device (lower, upper) rate bounds from ``n_samples`` joint channel/error draws."""
    policy = config.cdf_policy if policy is None else policy
    rho = config.cdf_rho if rho is None else rho
    K, M = dims.K, dims.M
    H = draw_estimated_channels(stats, dims, n_samples, rng)
    F_s = np.stack([baseline_beamformer(policy, H[i], pmax) for i in range(n_samples)])
    std = np.sqrt(np.asarray(stats.omega2) / 2.0)[None, :, None]
    phi = std * (rng.standard_normal((n_samples, K, M)) + 1j * rng.standard_normal((n_samples, K, M)))
    h_s = np.transpose(H, (0, 2, 1)) + phi
    noise = NoiseParams.uniform(K, config.sigma2, config.delta2)
    return np.array([
        rate_bounds(rho, k, F_s, h_s[:, k, :], dims.T, pmax, noise.device(k)) for k in range(K)
    ])


def cdf_bounds(config, n_samples=None):
    """Empirical CDFs of the lower and upper rate bounds over devices and instances."""
    n_samples = config.cdf_samples if n_samples is None else n_samples
    dims = config.dims
    bounds = []
    for inst in range(config.cdf_instances):
        stats_seed, streams = _streams(config.master_seed, inst)
        stats = _normalized_statistics(config, dims, stats_seed)
        bounds.append(device_bounds(config, stats, dims, config.pmax, streams["channel"], n_samples))
    b = np.concatenate(bounds)
    return CdfTable(lower=np.sort(b[:, 0]), upper=np.sort(b[:, 1]))


def _fmt(x):
    return f"{x:.9g}"


def emit_csv(rows, path):
    """Write result rows under :data:`RESULT_CSV_HEADER`; runtime is left out (see :func:`emit_meta`)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_CSV_HEADER)
        for r in rows:
            writer.writerow([r.scheme, r.sweep, _fmt(r.value), r.seed, _fmt(r.utility), _fmt(r.sum_rate),
                             _fmt(r.sum_harvested_mw), ";".join(_fmt(x) for x in r.final_rho),
                             r.unconverged_slots, r.channel_digest, r.status])


def read_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != RESULT_CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        for rec in reader:
            scheme, sweep, value, seed, util, rate, harv, rho, unconv, digest, status = rec
            rows.append(ResultRow(scheme, sweep, float(value), int(seed), float(util), float(rate),
                                  float(harv), tuple(float(x) for x in rho.split(";") if x),
                                  int(unconv), digest, status))
    return rows


def emit_cdf_csv(table, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CDF_CSV_HEADER)
        for name, value, prob in table.rows():
            writer.writerow([name, _fmt(value), _fmt(prob)])


def read_cdf_csv(path):
    lower, upper = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader) != CDF_CSV_HEADER:
            raise ValueError("unexpected CDF header")
        for name, value, _ in reader:
            (lower if name == "lower" else upper).append(float(value))
    return CdfTable(np.array(lower), np.array(upper))


def emit_meta(path, command, config, rows=None, extra=None):
    """JSON sidecar with the SNR definition, the effective settings and per-row runtimes."""
    meta = {
        "command": command,
        "snr_definition": SNR_DEFINITION,
        "gain_normalization": config.gain_normalization,
        "snr_db": config.snr_db,
        "master_seed": config.master_seed,
        "seeds": config.seeds,
        "frames": config.dims.Tf,
        "eval_fraction": config.eval_fraction,
    }
    if rows is not None:
        meta["runtime_s"] = [r.runtime_s for r in rows]
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2)
