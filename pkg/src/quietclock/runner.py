"""Seeded single runs and parameter sweeps with reproducibility manifests.

Config schema (JSON)::

    {
      "model": "clock" | "poisson" | "laser",
      "params": {"delta": 1e-5, "p": 0.01, "w": 0.001, "damping": "linearized", "e0": null},
      "periods": 100000000,
      "seed": 42,
      "burn_in": 0,
      "psd": {"segment_len": 1048576, "window": "rectangular", "bins_per_decade": 10,
              "lowfreq_segment_len": null},
      "outputs": ["psd", "summary", "events", "ledger"],
      "fano_windows": [100, 1000, 10000],
      "sweep": {"grid": {"p": [0.005, 0.01, 0.02]}, "workers": 1}
    }

Model params: clock ``delta, p, w, damping, e0``; poisson ``p, mark``;
laser ``delta, quantum``.  ``psd`` may be ``null`` for a ledger-only run.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .artifacts import dumps_json, sha256_file, write_events, write_json, write_psd, write_table
from .model import (
    DEFAULT_CHUNK,
    RNG_ALGORITHM,
    ClockParams,
    ClockStream,
    LaserAnalogParams,
    LaserStream,
    PoissonParams,
    PoissonStream,
)
from .spectral import PsdAccumulator, PsdEstimate, analytic_psd, fit_corner, log_bin
from .stats import (
    CountingStats,
    RunLedger,
    fano_factor,
    gap_mark_correlation,
    interevent_stats,
    mark_stats,
)

log = logging.getLogger(__name__)

MODELS = ("clock", "poisson", "laser")
OUTPUT_KINDS = ("psd", "summary", "events", "ledger")
MODEL_KEYS = {
    "clock": ("delta", "p", "w", "damping", "e0"),
    "poisson": ("p", "mark"),
    "laser": ("delta", "quantum"),
}
REQUIRED_KEYS = {
    "clock": ("delta", "p", "w"),
    "poisson": ("p", "mark"),
    "laser": ("delta", "quantum"),
}
MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass(frozen=True)
class PsdSettings:
    segment_len: int = 2**20
    window: str = "rectangular"
    bins_per_decade: int = 10
    # Optional second, longer segment fed in the same pass to reach lower frequencies.
    lowfreq_segment_len: Optional[int] = None


@dataclass(frozen=True)
class RunConfig:
    model: str
    params: dict
    periods: int
    seed: int = 0
    psd: Optional[PsdSettings] = PsdSettings()
    outputs: tuple = ("psd", "summary")
    fano_windows: tuple = (100, 1000, 10000)
    burn_in: int = 0
    chunk_len: int = field(default=DEFAULT_CHUNK, compare=False)

    def model_params(self):
        """Validated parameter object for the configured model."""
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {', '.join(MODELS)}")
        missing = [k for k in REQUIRED_KEYS[self.model] if self.params.get(k) is None]
        if missing:
            raise ConfigError(f"model {self.model!r} requires parameter(s): {', '.join(missing)}")
        unknown = set(self.params) - set(MODEL_KEYS[self.model])
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {self.model!r}: {', '.join(sorted(unknown))}")
        prm = self.params
        try:
            if self.model == "clock":
                return ClockParams(float(prm["delta"]), float(prm["p"]), float(prm["w"]),
                                   prm.get("damping") or "linearized",
                                   None if prm.get("e0") is None else float(prm["e0"]))
            if self.model == "poisson":
                return PoissonParams(float(prm["p"]), float(prm["mark"]))
            return LaserAnalogParams(float(prm["delta"]), float(prm["quantum"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def validate(self):
        mp = self.model_params()
        if not isinstance(self.periods, int) or self.periods < 1:
            raise ConfigError(f"periods must be an integer >= 1, got {self.periods!r}")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")
        if self.burn_in and self.model != "clock":
            raise ConfigError("burn_in applies to the clock model only")
        bad = set(self.outputs) - set(OUTPUT_KINDS)
        if bad:
            raise ConfigError(f"unknown output kind(s): {', '.join(sorted(bad))}")
        if "psd" in self.outputs and self.psd is None:
            raise ConfigError("psd output requested without psd settings")
        if self.psd is not None:
            for m in (self.psd.segment_len, self.psd.lowfreq_segment_len):
                if m is None:
                    continue
                if m < 2 or m & (m - 1):
                    raise ConfigError(f"segment_len must be a power of two, got {m}")
                if self.periods < m:
                    raise ConfigError(f"periods ({self.periods}) shorter than segment_len ({m})")
            if self.psd.window not in ("rectangular", "hann"):
                raise ConfigError(f"unknown window {self.psd.window!r}")
            if self.psd.bins_per_decade < 0:
                raise ConfigError("bins_per_decade must be >= 0")
        for wdw in self.fano_windows:
            if int(wdw) < 1:
                raise ConfigError(f"fano window must be >= 1, got {wdw}")
        return mp

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": {k: self.params[k] for k in sorted(self.params) if self.params[k] is not None},
            "periods": self.periods,
            "seed": self.seed,
            "burn_in": self.burn_in,
            "psd": None if self.psd is None else asdict(self.psd),
            "outputs": list(self.outputs),
            "fano_windows": [int(x) for x in self.fano_windows],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        doc.pop("sweep", None)
        try:
            psd = doc.get("psd", {})
            return cls(
                model=doc["model"],
                params=dict(doc.get("params", {})),
                periods=int(doc["periods"]),
                seed=int(doc.get("seed", 0)),
                psd=None if psd is None else PsdSettings(**psd),
                outputs=tuple(doc.get("outputs", ("psd", "summary"))),
                fano_windows=tuple(int(x) for x in doc.get("fano_windows", (100, 1000, 10000))),
                burn_in=int(doc.get("burn_in", 0)),
            )
        except KeyError as exc:
            raise ConfigError(f"config missing required key {exc.args[0]!r}") from exc
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from exc

    @property
    def run_id(self) -> str:
        digest = hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()
        return f"{self.model}-s{self.seed}-{digest[:10]}"


def load_config(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def make_stream(config: RunConfig, mp=None):
    mp = mp or config.model_params()
    if config.model == "clock":
        return ClockStream(mp, config.seed, config.periods, config.chunk_len, config.burn_in)
    if config.model == "poisson":
        return PoissonStream(mp, config.seed, config.periods, config.chunk_len)
    return LaserStream(mp, config.periods, config.chunk_len)


def expected_mean_power(config: RunConfig, mp) -> float:
    if config.model == "poisson":
        return mp.p * mp.mark
    return mp.delta


def reference_psd(config: RunConfig, mp, omega):
    """Reference column for the psd file.

    clock: the analytic Lorentzian-suppressed spectrum; poisson: its exact
    white level ``p(1-p)mark^2``; laser: the white level of a Bernoulli stream
    with the same event size and mean rate (the shot-noise level it beats).
    """
    om = np.asarray(omega, float)
    if config.model == "clock":
        return analytic_psd(mp, om)
    if config.model == "poisson":
        level = mp.p * (1 - mp.p) * mp.mark**2
    else:
        rate = mp.delta / mp.quantum
        level = mp.quantum**2 * rate * (1 - rate) if rate < 1 else mp.quantum * mp.delta
    return np.full(om.shape, level)


@dataclass
class RunResult:
    config: RunConfig
    run_id: str
    ledger: RunLedger
    summary: dict
    manifest: dict
    psd: Optional[PsdEstimate] = None
    psd_binned: Optional[PsdEstimate] = None
    psd_lowfreq: Optional[PsdEstimate] = None
    counting: list = field(default_factory=list)
    event_k: Optional[np.ndarray] = None
    event_marks: Optional[np.ndarray] = None
    paths: dict = field(default_factory=dict)


class _Events:
    # Minimal series-like view for the stats functions.
    def __init__(self, k, marks):
        self.event_k = k
        self.event_marks = marks


def _psd_summary(config, mp, est: PsdEstimate, binned: Optional[PsdEstimate], low: Optional[PsdEstimate]):
    out = {
        "segment_len": est.segment_len,
        "window": est.window,
        "segments": est.segments,
        "mean_removed": est.mean,
    }
    hi = (est.freqs >= 1.0) & (est.freqs <= math.pi)
    out["plateau_estimate"] = float(est.values[hi].mean()) if hi.any() else None
    ref = reference_psd(config, mp, np.array([math.pi]))[0]
    if config.model == "clock":
        out["plateau_expected"] = mp.p * (1 - mp.p) * (mp.delta / mp.p) ** 2
        out["plateau_eq1"] = mp.delta**2 / mp.p
    else:
        out["plateau_expected"] = float(ref)
    src = low if low is not None else est
    bpd = config.psd.bins_per_decade or 10
    lowest = log_bin(src, bpd)
    out["lowest_band"] = {
        "omega": float(lowest.freqs[0]),
        "n_bins": int(lowest.counts[0]),
        "s_est": float(lowest.values[0]),
        "segment_len": src.segment_len,
        "segments": src.segments,
    }
    f1 = src.freqs[0]
    dec = src.freqs < 10 * f1
    out["lowest_decade"] = {"omega_lo": float(f1), "omega_hi": float(10 * f1),
                            "s_est": float(src.values[dec].mean())}
    if config.model == "clock" and binned is not None and len(binned.freqs) >= 3:
        try:
            A, c = fit_corner(binned.freqs, binned.values, binned.counts)
            # A corner below the lowest resolved bin is not constrained by the data.
            resolved = c >= est.freqs[0]
            out["fit_plateau"], out["fit_corner"] = A, (c if resolved else None)
        except (ValueError, RuntimeError) as exc:
            log.warning("corner fit failed: %s", exc)
            out["fit_plateau"] = out["fit_corner"] = None
        out["corner_expected"] = mp.p * mp.w
    return out


def run_single(config: RunConfig, out_dir=None) -> RunResult:
    """One seeded run, streamed once through the PSD estimator(s) and counters.

    With ``out_dir`` the requested artifacts plus ``manifest.json`` are
    written under ``out_dir/<run_id>/``.
    """
    mp = config.validate()
    t0 = time.perf_counter()
    started = datetime.now(timezone.utc).isoformat()
    stream = make_stream(config, mp)
    hint = expected_mean_power(config, mp)
    accs = []
    if config.psd is not None:
        accs.append(PsdAccumulator(config.psd.segment_len, config.psd.window, hint))
        if config.psd.lowfreq_segment_len:
            accs.append(PsdAccumulator(config.psd.lowfreq_segment_len, config.psd.window, hint))
    ks, marks = [], []
    for chunk in stream:
        for acc in accs:
            acc.feed(chunk.samples)
        ks.append(chunk.event_k)
        marks.append(chunk.event_marks)
    event_k = np.concatenate(ks)
    event_marks = np.concatenate(marks)
    a, b = stream.initial_state, stream.final_state
    led = RunLedger(float(stream.input_total), float(stream.dissipated_total),
                    (b.e - a.e) + (b.lo - a.lo))

    n = config.periods
    summary = {
        "run_id": config.run_id,
        "config": config.to_dict(),
        "ledger": {**asdict(led), "residual": led.residual, "relative_residual": led.relative_residual},
        "events": {"count": int(event_k.size), "rate": event_k.size / n},
    }
    if config.model == "clock":
        summary["mean_energy"] = stream.energy_sum / n
        summary["mean_energy_expected"] = mp.delta / (mp.p * mp.w)
    ev = _Events(event_k, event_marks)
    if event_k.size >= 2:
        ie = interevent_stats(ev)
        summary["interevent"] = {"mean_gap": ie.mean_gap, "var_gap": ie.var_gap}
    if event_k.size >= 1:
        summary["marks"] = asdict(mark_stats(ev))
    if config.model == "clock" and event_k.size >= 3:
        summary["gap_mark_correlation"] = gap_mark_correlation(ev)
    counting: list[CountingStats] = []
    for wdw in config.fano_windows:
        if n // int(wdw) >= 10:
            counting.append(fano_factor(ev, int(wdw), n))
    summary["fano"] = [asdict(c) for c in counting]

    est = binned = low = None
    if accs:
        est = accs[0].result()
        low = accs[1].result() if len(accs) > 1 else None
        if config.psd.bins_per_decade:
            binned = log_bin(est, config.psd.bins_per_decade)
        summary["psd"] = _psd_summary(config, mp, est, binned, low)

    wall = time.perf_counter() - t0
    result = RunResult(config, config.run_id, led, summary, {}, est, binned, low, counting,
                       event_k, event_marks)
    result.manifest = {
        "run_id": config.run_id,
        "config": config.to_dict(),
        "rng": {"algorithm": RNG_ALGORITHM, "numpy": np.__version__, "seed": config.seed,
                "draws_per_period": 1 if config.model != "laser" else 0},
        "code_version": __version__,
        "started_utc": started,
        "wall_time_s": wall,
        "counts": {"periods": n, "burn_in": config.burn_in, "events": int(event_k.size),
                   "psd_segments": None if est is None else est.segments},
    }
    if out_dir is not None:
        _write_artifacts(result, Path(out_dir), mp)
    return result


def _write_artifacts(result: RunResult, out_dir: Path, mp):
    cfg = result.config
    run_dir = out_dir / result.run_id
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        paths = {}
        if "psd" in cfg.outputs and result.psd is not None:
            tab = result.psd_binned if result.psd_binned is not None else result.psd
            paths["psd"] = write_psd(run_dir / "psd.csv", tab.freqs, tab.values,
                                     _reference_for(cfg, mp, tab), tab.segments)
        if "summary" in cfg.outputs:
            paths["summary"] = write_json(run_dir / "summary.json", result.summary)
        if "ledger" in cfg.outputs:
            paths["ledger"] = write_json(run_dir / "ledger.json", result.summary["ledger"])
        if "events" in cfg.outputs:
            paths["events"] = write_events(run_dir / "events.csv", result.event_k, result.event_marks)
        result.manifest["digests"] = {k: sha256_file(p) for k, p in sorted(paths.items())}
        paths["manifest"] = write_json(run_dir / "manifest.json", result.manifest)
    except OSError as exc:
        raise OSError(f"failed writing artifacts under {run_dir}: {exc}") from exc
    result.paths = {k: Path(v) for k, v in paths.items()}


def _reference_for(cfg, mp, tab: PsdEstimate):
    if tab.counts is None or cfg.model != "clock":
        return reference_psd(cfg, mp, tab.freqs)
    # Binned clock file: average the analytic curve over the same raw bins.
    M = tab.segment_len
    raw = 2.0 * np.pi * np.arange(1, M // 2 + 1) / M
    vals = analytic_psd(mp, raw)
    bounds = np.concatenate([[0], np.cumsum(tab.counts)])
    return np.add.reduceat(vals, bounds[:-1]) / tab.counts


# ---------------------------------------------------------------- sweeps

def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def cell_seed(base_seed: int, index: int) -> int:
    return (base_seed ^ splitmix64(index)) & MASK64


def expand_grid(base: RunConfig, grid: dict) -> list[RunConfig]:
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("sweep grid must be non-empty")
    keys = list(grid)
    cells = []
    for i, combo in enumerate(itertools.product(*(grid[k] for k in keys))):
        params = dict(base.params)
        top = {}
        for k, v in zip(keys, combo):
            if k in ("periods", "burn_in"):
                top[k] = int(v)
            else:
                params[k] = v
        cells.append(replace(base, params=params, seed=cell_seed(base.seed, i), **top))
    return cells


SWEEP_COLUMNS = ("cell", "status", "error", "seed", "run_id", "grid", "mean_energy", "event_rate",
                 "plateau_estimate", "fit_corner", "corner_expected", "ledger_relative_residual")


def _sweep_cell(payload):
    index, config, out_dir, grid_keys = payload
    row = {"cell": index, "seed": config.seed,
           "grid": ";".join(f"{k}={config.params.get(k, getattr(config, k, None))}" for k in grid_keys)}
    try:
        res = run_single(config, out_dir)
    except Exception as exc:  # a failing cell is recorded, the sweep continues
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return row
    s = res.summary
    psd = s.get("psd", {})
    row.update(
        status="ok",
        error="",
        run_id=res.run_id,
        mean_energy=s.get("mean_energy"),
        event_rate=s["events"]["rate"],
        plateau_estimate=psd.get("plateau_estimate"),
        fit_corner=psd.get("fit_corner"),
        corner_expected=psd.get("corner_expected"),
        ledger_relative_residual=s["ledger"]["relative_residual"],
    )
    return row


@dataclass
class SweepReport:
    rows: list
    table_path: Optional[Path] = None

    @property
    def failed(self):
        return [r for r in self.rows if r["status"] != "ok"]


def run_sweep(base: RunConfig, grid: dict, workers: int = 1, out_dir=None) -> SweepReport:
    """Run every grid cell independently; cell ``i`` uses ``cell_seed(base.seed, i)``."""
    cells = expand_grid(base, grid)
    sweep_dir = None
    if out_dir is not None:
        tag = hashlib.sha256(dumps_json({"base": base.to_dict(), "grid": grid}).encode()).hexdigest()[:10]
        sweep_dir = Path(out_dir) / f"sweep-{base.model}-s{base.seed}-{tag}"
        sweep_dir.mkdir(parents=True, exist_ok=True)
    payloads = [(i, c, sweep_dir, list(grid)) for i, c in enumerate(cells)]
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, payloads))
    else:
        rows = [_sweep_cell(p) for p in payloads]
    report = SweepReport(rows)
    if sweep_dir is not None:
        report.table_path = write_table(sweep_dir / "sweep.csv", rows, list(SWEEP_COLUMNS))
    return report
