"""Scenario configuration, paired sweeps, aggregation, and exports.

A sweep runs, per disease and per (band, k, theta) cell, paired
simulations on the full matrix and on its transit subsample. Pairs
share the seed location and the introduction RNG stream so metric
differences isolate the matrix effect. Every run is reconstructible
from its ledger entry plus the scenario config.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import engine, metrics, transit
from .mobility import ContactMatrix, load_matrix_npz
from .synthcity import CityConfig, generate_synthetic_city

log = logging.getLogger(__name__)

# Named settings: two documented outbreaks plus three hypothetical
# transmission levels. Further entries are free config additions.
DISEASE_DEFAULTS = (
    ("h1n1", 0.50, 1.0 / 3.0),
    ("varicella", 1.55, 0.2),
    ("hypothetical_low", 2.0, 1.0),
    ("hypothetical_mediate", 5.0, 1.0),
    ("hypothetical_high", 15.0, 1.0),
)

# RNG stream tags; children are derived as SeedSequence((master, tag, ...))
_TAG_SEED_LOC = 0
_TAG_INTRO = 1
_TAG_TRANSIT = 2
_TAG_CITY = 3


@dataclass(frozen=True)
class Disease:
    name: str
    beta: float
    gamma: float

    @property
    def r0(self) -> float:
        return self.beta / self.gamma


@dataclass
class ScenarioConfig:
    diseases: list = field(default_factory=lambda: [Disease(*d) for d in DISEASE_DEFAULTS])
    delta_bands: list = field(default_factory=lambda: ["low", "mediate", "high"])
    mu: float = transit.DEFAULT_MODE_SHARE
    k_range: tuple = transit.DEFAULT_K_RANGE
    theta_range: tuple = transit.DEFAULT_THETA_RANGE
    pairs: list | None = None  # explicit (k, theta) list overriding enumeration
    max_pairs: int | None = None  # desk-scale cap on pairs per band
    seed_draws: int = 100
    replicates: int = 30
    seed_rule: str = "proportional"
    master_seed: int = 1
    horizon: int = 300
    extinction_threshold: float = 1e-3
    hazard_variant: str = "as_printed"
    compare: metrics.CompareConfig = field(default_factory=metrics.CompareConfig)
    city: CityConfig | None = field(default_factory=CityConfig)
    matrix_npz: str | None = None
    output_dir: str = "out"

    def __post_init__(self):
        if self.seed_draws < 1 or self.replicates < 1:
            raise ValueError("seed_draws and replicates must be >= 1")
        if not self.diseases:
            raise ValueError("at least one disease required")
        for d in self.diseases:
            if d.beta <= 0 or not 0.0 < d.gamma <= 1.0:
                raise ValueError(f"disease {d.name}: require beta > 0 and gamma in (0, 1]")
        if self.city is None and self.matrix_npz is None:
            raise ValueError("either a synthetic city spec or a matrix file is required")

    def to_json_dict(self) -> dict:
        out = {
            "diseases": [asdict(d) for d in self.diseases],
            "delta_bands": list(self.delta_bands),
            "mu": self.mu,
            "k_range": list(self.k_range),
            "theta_range": list(self.theta_range),
            "pairs": [list(p) for p in self.pairs] if self.pairs is not None else None,
            "max_pairs": self.max_pairs,
            "seed_draws": self.seed_draws,
            "replicates": self.replicates,
            "seed_rule": self.seed_rule,
            "master_seed": self.master_seed,
            "horizon": self.horizon,
            "extinction_threshold": self.extinction_threshold,
            "hazard_variant": self.hazard_variant,
            "compare": asdict(self.compare),
            "city": asdict(self.city) if self.city is not None else None,
            "matrix_npz": self.matrix_npz,
            "output_dir": self.output_dir,
        }
        out["compare"]["thresholds"] = list(out["compare"]["thresholds"])
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "ScenarioConfig":
        kwargs = dict(d)
        if "diseases" in kwargs:
            kwargs["diseases"] = [Disease(**x) for x in kwargs["diseases"]]
        if kwargs.get("pairs") is not None:
            kwargs["pairs"] = [tuple(p) for p in kwargs["pairs"]]
        if "k_range" in kwargs:
            kwargs["k_range"] = tuple(kwargs["k_range"])
        if "theta_range" in kwargs:
            kwargs["theta_range"] = tuple(kwargs["theta_range"])
        if "compare" in kwargs:
            cmp_kwargs = dict(kwargs["compare"])
            if cmp_kwargs.get("thresholds") is not None:
                cmp_kwargs["thresholds"] = tuple(cmp_kwargs["thresholds"])
            kwargs["compare"] = metrics.CompareConfig(**cmp_kwargs)
        if kwargs.get("city") is not None:
            kwargs["city"] = CityConfig(**kwargs["city"])
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path) -> "ScenarioConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _seed_seq(master: int, tag: int, *rest) -> np.random.SeedSequence:
    return np.random.SeedSequence((master, tag) + tuple(int(r) for r in rest))


def base_matrix(config: ScenarioConfig) -> ContactMatrix:
    """The full-mobility matrix for a scenario: loaded or generated."""
    if config.matrix_npz is not None:
        return load_matrix_npz(config.matrix_npz)
    _, matrix = generate_synthetic_city(config.city, _seed_seq(config.master_seed, _TAG_CITY))
    return matrix


def band_pairs(config: ScenarioConfig, band: transit.DeltaBand) -> list:
    if config.pairs is not None:
        pairs = [p for p in config.pairs if band.contains(p[0] * p[1])]
    else:
        pairs = transit.enumerate_param_pairs(band, config.k_range, config.theta_range)
    if config.max_pairs is not None:
        pairs = pairs[: config.max_pairs]
    return pairs


@dataclass
class SweepResult:
    """All aggregates, the per-run ledger, and plot-ready extras."""

    config: dict
    cells: list
    ledger: list
    infeasible_cells: list
    total_runs: int
    histograms: dict
    example_curves: dict

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "cells": self.cells,
            "ledger": self.ledger,
            "infeasible_cells": self.infeasible_cells,
            "total_runs": self.total_runs,
            "histograms": self.histograms,
            "example_curves": self.example_curves,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SweepResult":
        return cls(**d)

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "SweepResult":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


def _hist_dict(h: transit.DistanceHistogram) -> dict:
    return {
        "bin_edges": [float(v) for v in h.bin_edges],
        "masses": [float(v) for v in h.masses],
        "p95_km": h.p95_km,
    }


def _aggregate(values: list) -> dict:
    """Mean and population sd over the uncensored values of one statistic."""
    clean = [v for v in values if v is not None]
    out = {
        "n": len(clean),
        "censored": len(values) - len(clean),
        "mean": float(np.mean(clean)) if clean else None,
        "sd": float(np.std(clean)) if clean else None,
    }
    return out


def _cell_aggregates(reports: list, thresholds) -> dict:
    agg = {
        "early_warning": _aggregate([r.early_warning for r in reports]),
        "peak_timing": _aggregate([r.peak_timing for r in reports]),
        "peak_magnitude": _aggregate([r.peak_magnitude for r in reports]),
        "situational_awareness": _aggregate([r.situational_awareness for r in reports]),
    }
    for thr in thresholds:
        agg[f"locations_timing_{int(round(thr * 100))}"] = _aggregate(
            [r.locations_timing.get(float(thr)) for r in reports]
        )
    return agg


def run_sweep(config: ScenarioConfig, matrix: ContactMatrix | None = None) -> SweepResult:
    """Execute the full paired-sweep structure.

    Per disease, the full-mobility baseline is run once per
    (seed draw, replicate) and reused across every (band, k, theta)
    cell, mirroring the 1 + n_pairs run structure. Cells whose mode
    share is unreachable are skipped and logged.
    """
    if matrix is None:
        matrix = base_matrix(config)
    master = config.master_seed

    seed_locs = [
        engine.seed_outbreak(
            matrix, config.seed_rule, np.random.default_rng(_seed_seq(master, _TAG_SEED_LOC, s))
        )
        for s in range(config.seed_draws)
    ]

    cells = []
    ledger = []
    infeasible = []
    histograms = {"full": _hist_dict(transit.distance_histogram(matrix))}
    example_curves = {}
    total_runs = 0
    run_index = 0

    for disease in config.diseases:
        params = engine.EpidemicParams(
            beta=disease.beta,
            gamma=disease.gamma,
            horizon=config.horizon,
            extinction_threshold=config.extinction_threshold,
            hazard_variant=config.hazard_variant,
        )
        baselines = {}
        for s in range(config.seed_draws):
            for r in range(config.replicates):
                baselines[(s, r)] = engine.run_simulation(
                    matrix, params, seed_locs[s], _seed_seq(master, _TAG_INTRO, s, r)
                )
        total_runs += len(baselines)

        for band_idx, band_label in enumerate(config.delta_bands):
            band = transit.DeltaBand.from_label(band_label)
            for pair_idx, (k, theta) in enumerate(band_pairs(config, band)):
                model = transit.GammaTripModel(k=k, theta=theta, mu=config.mu)
                try:
                    model = transit.calibrate(model, matrix)
                except transit.InfeasibleModeShare as exc:
                    log.warning("cell (%s, k=%d, theta=%d) infeasible: %s", band_label, k, theta, exc)
                    infeasible.append(
                        {"disease": disease.name, "band": band_label, "k": k, "theta": theta,
                         "achievable": exc.achievable}
                    )
                    continue
                sub = transit.sample_transit_matrix(
                    matrix, model, _seed_seq(master, _TAG_TRANSIT, band_idx, k, theta)
                )
                hist_key = f"{band_label}:k{k}:t{theta}"
                if pair_idx == 0 and hist_key not in histograms:
                    histograms[hist_key] = _hist_dict(transit.distance_histogram(sub))

                reports = []
                for s in range(config.seed_draws):
                    for r in range(config.replicates):
                        ptt = engine.run_simulation(
                            sub, params, seed_locs[s], _seed_seq(master, _TAG_INTRO, s, r)
                        )
                        total_runs += 1
                        mpt = baselines[(s, r)]
                        try:
                            report = metrics.compare(ptt, mpt, config.compare)
                        except metrics.NoAdmissibleLag:
                            log.warning("run %d: series too short to compare; censored", run_index)
                            run_index += 1
                            continue
                        reports.append(report)
                        ledger.append(
                            {
                                "run_index": run_index,
                                "disease": disease.name,
                                "beta": disease.beta,
                                "gamma": disease.gamma,
                                "band": band_label,
                                "band_index": band_idx,
                                "k": k,
                                "theta": theta,
                                "lambda": model.lam,
                                "seed_draw": s,
                                "replicate": r,
                                "seed_location_index": seed_locs[s],
                                "seed_location": matrix.table.ids[seed_locs[s]],
                                "report": report.to_json_dict(),
                            }
                        )
                        run_index += 1
                        if disease.name not in example_curves:
                            example_curves[disease.name] = {
                                "band": band_label,
                                "k": k,
                                "theta": theta,
                                "seed_draw": s,
                                "replicate": r,
                                "ptt_prevalence": [float(v) for v in ptt.prevalence],
                                "mpt_prevalence": [float(v) for v in mpt.prevalence],
                            }
                cell = {
                    "disease": disease.name,
                    "beta": disease.beta,
                    "gamma": disease.gamma,
                    "r0": disease.r0,
                    "band": band_label,
                    "k": k,
                    "theta": theta,
                    "lambda": model.lam,
                    "aggregates": _cell_aggregates(reports, config.compare.thresholds),
                }
                cells.append(cell)

    return SweepResult(
        config=config.to_json_dict(),
        cells=cells,
        ledger=ledger,
        infeasible_cells=infeasible,
        total_runs=total_runs,
        histograms=histograms,
        example_curves=example_curves,
    )


def replay_run(config: ScenarioConfig, entry: dict, matrix: ContactMatrix | None = None) -> metrics.ComparisonReport:
    """Reproduce one ledger entry's comparison bit-exactly."""
    if matrix is None:
        matrix = base_matrix(config)
    master = config.master_seed
    disease = next(d for d in config.diseases if d.name == entry["disease"])
    params = engine.EpidemicParams(
        beta=disease.beta,
        gamma=disease.gamma,
        horizon=config.horizon,
        extinction_threshold=config.extinction_threshold,
        hazard_variant=config.hazard_variant,
    )
    model = transit.calibrate(
        transit.GammaTripModel(k=entry["k"], theta=entry["theta"], mu=config.mu), matrix
    )
    sub = transit.sample_transit_matrix(
        matrix, model, _seed_seq(master, _TAG_TRANSIT, entry["band_index"], entry["k"], entry["theta"])
    )
    s, r = entry["seed_draw"], entry["replicate"]
    intro = _seed_seq(master, _TAG_INTRO, s, r)
    loc = entry["seed_location_index"]
    ptt = engine.run_simulation(sub, params, loc, intro)
    mpt = engine.run_simulation(matrix, params, loc, _seed_seq(master, _TAG_INTRO, s, r))
    return metrics.compare(ptt, mpt, config.compare)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def export_results(result: SweepResult, out_dir) -> list:
    """Write the sweep's exports; returns the written paths.

    Everything is plain sorted text, so identical results export to
    byte-identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    thresholds = result.config["compare"]["thresholds"]
    stat_names = ["early_warning", "peak_timing", "peak_magnitude", "situational_awareness"] + [
        f"locations_timing_{int(round(t * 100))}" for t in thresholds
    ]
    path = os.path.join(out_dir, "cells.csv")
    with open(path, "w", encoding="utf-8") as fh:
        cols = ["disease", "beta", "gamma", "r0", "band", "k", "theta", "lambda"]
        for name in stat_names:
            cols += [f"{name}_mean", f"{name}_sd", f"{name}_n", f"{name}_censored"]
        fh.write(",".join(cols) + "\n")
        for cell in result.cells:
            row = [_fmt(cell[c]) for c in ("disease", "beta", "gamma", "r0", "band", "k", "theta", "lambda")]
            for name in stat_names:
                agg = cell["aggregates"][name]
                row += [_fmt(agg["mean"]), _fmt(agg["sd"]), _fmt(agg["n"]), _fmt(agg["censored"])]
            fh.write(",".join(row) + "\n")
    written.append(path)

    path = os.path.join(out_dir, "ledger.jsonl")
    with open(path, "w", encoding="utf-8") as fh:
        for entry in result.ledger:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    written.append(path)

    # Panel data: one row per (disease, band), pooled over (k, theta) cells.
    path = os.path.join(out_dir, "metrics_vs_r0.csv")
    with open(path, "w", encoding="utf-8") as fh:
        cols = ["disease", "r0", "band"]
        for name in stat_names:
            cols += [f"{name}_mean", f"{name}_sd"]
        fh.write(",".join(cols) + "\n")
        seen = []
        for cell in result.cells:
            key = (cell["disease"], cell["band"])
            if key in seen:
                continue
            seen.append(key)
            group = [c for c in result.cells if (c["disease"], c["band"]) == key]
            row = [cell["disease"], _fmt(cell["r0"]), cell["band"]]
            for name in stat_names:
                means = [c["aggregates"][name]["mean"] for c in group]
                means = [m for m in means if m is not None]
                row += [
                    _fmt(float(np.mean(means)) if means else None),
                    _fmt(float(np.std(means)) if means else None),
                ]
            fh.write(",".join(row) + "\n")
    written.append(path)

    for disease, curves in sorted(result.example_curves.items()):
        path = os.path.join(out_dir, f"prevalence_pair_{disease}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("day,ptt_prevalence,mpt_prevalence\n")
            ptt, mpt = curves["ptt_prevalence"], curves["mpt_prevalence"]
            for t in range(max(len(ptt), len(mpt))):
                a = repr(ptt[t]) if t < len(ptt) else ""
                b = repr(mpt[t]) if t < len(mpt) else ""
                fh.write(f"{t},{a},{b}\n")
        written.append(path)

    for key, hist in sorted(result.histograms.items()):
        fname = "distance_hist_" + key.replace(":", "_") + ".csv"
        path = os.path.join(out_dir, fname)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("bin_left_km,bin_right_km,mass\n")
            edges, masses = hist["bin_edges"], hist["masses"]
            for lo, hi, mass in zip(edges[:-1], edges[1:], masses):
                fh.write(f"{lo!r},{hi!r},{mass!r}\n")
        written.append(path)

    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "total_runs": result.total_runs,
                "n_cells": len(result.cells),
                "n_ledger": len(result.ledger),
                "infeasible_cells": result.infeasible_cells,
                "config": result.config,
                "histogram_p95_km": {k: v["p95_km"] for k, v in result.histograms.items()},
            },
            fh,
            sort_keys=True,
            indent=2,
        )
        fh.write("\n")
    written.append(path)
    return written


def expected_run_count(config: ScenarioConfig) -> int:
    """The combinatorial run total: diseases x draws x replicates x (1 + pairs)."""
    n_pairs = sum(
        len(band_pairs(config, transit.DeltaBand.from_label(b))) for b in config.delta_bands
    )
    return len(config.diseases) * config.seed_draws * config.replicates * (1 + n_pairs)


def bootstrap_mean_ci(values, n_boot: int = 2000, alpha: float = 0.05, seed: int = 0):
    """Percentile bootstrap CI for the mean of a sample."""
    values = np.asarray([v for v in values if v is not None], dtype=float)
    if values.size == 0:
        raise ValueError("no uncensored values")
    rng = np.random.default_rng(seed)
    draws = rng.choice(values, size=(n_boot, values.size), replace=True).mean(axis=1)
    lo, hi = np.quantile(draws, [alpha / 2, 1 - alpha / 2])
    return float(lo), float(hi)
