"""Batch experiment harness: parameter sweeps over configuration grids and
the fixed throughput-comparison profile.

A sweep spec is a flat text file:

    axis = latency.uc_interconnect_ns
    values = 5, 100, 400, 700
    presets = memc_low, memc_mid, memc_high
    requests = 20000
    repetitions = 1
    base_seed = 1
    mode = arcalis

One row is emitted per (axis value, preset, seed); rows are independent, so
any point rerun in isolation reproduces its row exactly. Per-point failures
become error rows without aborting the sweep. Relative columns are
normalized to the first axis value of the same (preset, seed) series.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

from .config import ConfigError, RunConfig, parse_config_text
from .system import run_simulation
from .workload import derive_seed

CSV_COLUMNS = ("axis", "axis_value", "preset", "seed", "mode", "requests",
               "completed", "errors", "drops", "sim_time_ps",
               "throughput_rps", "latency_p50_ns", "latency_p95_ns",
               "latency_p99_ns", "rel_time", "rel_throughput", "status")

# published axis points that shipped specs must cover
AXES = {
    "latency.uc_interconnect_ns": (5, 100, 400, 700),
    "workload.value_size": (64, 512, 1024, 1518),
    "accel.cache_bytes": (64 * 1024, 128 * 1024, 256 * 1024, 512 * 1024,
                          2 * 1024 * 1024),
}


@dataclass
class SweepSpec:
    axis: str
    values: list
    presets: list
    requests: int = 20000
    repetitions: int = 1
    base_seed: int = 1
    mode: str = "arcalis"
    overrides: dict = field(default_factory=dict)

    def validate(self):
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one axis value")
        if not self.presets:
            raise ConfigError("sweep needs at least one preset")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")


def parse_sweep_spec(text: str) -> SweepSpec:
    fields = parse_config_text(text)
    missing = {"axis", "values", "presets"} - set(fields)
    if missing:
        raise ConfigError(f"sweep spec missing {sorted(missing)}")
    spec = SweepSpec(
        axis=fields["axis"],
        values=[_num(v) for v in fields["values"].split(",")],
        presets=[p.strip() for p in fields["presets"].split(",")],
        requests=int(fields.get("requests", 20000)),
        repetitions=int(fields.get("repetitions", 1)),
        base_seed=int(fields.get("base_seed", 1)),
        mode=fields.get("mode", "arcalis"),
    )
    spec.validate()
    return spec


def _num(s: str):
    s = s.strip()
    return float(s) if "." in s or "e" in s.lower() else int(s)


def sweep_seeds(spec: SweepSpec) -> list[int]:
    """Per-repetition seeds, derived from the base seed by the documented
    splitmix64 rule."""
    if spec.repetitions == 1:
        return [spec.base_seed]
    return [derive_seed(spec.base_seed, i) for i in range(spec.repetitions)]


def run_sweep(spec: SweepSpec, base_config: RunConfig | None = None) -> str:
    """Execute the grid; returns the CSV text."""
    spec.validate()
    base = base_config if base_config is not None else RunConfig.build()
    if spec.overrides:
        base = base.with_overrides(spec.overrides)

    rows = []
    first_point: dict[tuple, tuple] = {}  # (preset, seed) -> (time, thr)
    for value in spec.values:
        for preset in spec.presets:
            for seed in sweep_seeds(spec):
                row = {"axis": spec.axis, "axis_value": value,
                       "preset": preset, "seed": seed, "mode": spec.mode,
                       "requests": spec.requests}
                try:
                    cfg = base.with_overrides({
                        spec.axis: value, "run.preset": preset,
                        "run.seed": seed, "run.requests": spec.requests,
                        "run.mode": spec.mode})
                    report, _ = run_simulation(cfg)
                except Exception as exc:  # per-point failures become rows
                    row.update({"status": f"error:{type(exc).__name__}"})
                    rows.append(row)
                    continue
                key = (preset, seed)
                if key not in first_point:
                    first_point[key] = (report.sim_time_ps,
                                        report.throughput_rps)
                t0, thr0 = first_point[key]
                row.update({
                    "completed": report.requests_completed,
                    "errors": report.errors, "drops": report.drops,
                    "sim_time_ps": report.sim_time_ps,
                    "throughput_rps": f"{report.throughput_rps:.6f}",
                    "latency_p50_ns": f"{report.latency_p50_ns:.3f}",
                    "latency_p95_ns": f"{report.latency_p95_ns:.3f}",
                    "latency_p99_ns": f"{report.latency_p99_ns:.3f}",
                    "rel_time": f"{report.sim_time_ps / t0:.6f}",
                    "rel_throughput": f"{report.throughput_rps / thr0:.6f}",
                    "status": "ok"})
                rows.append(row)
    return to_csv(rows)


def to_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    out.write(",".join(CSV_COLUMNS) + "\n")
    for row in rows:
        out.write(",".join(str(row.get(col, "")) for col in CSV_COLUMNS) + "\n")
    return out.getvalue()


# -- throughput comparison profile -------------------------------------------

DAGGER_CELLS = (("memc_tiny", 0.5), ("memc_small", 0.5),
                ("memc_tiny", 0.05), ("memc_small", 0.05))


def run_comparison_profile(name: str = "dagger_table",
                           base_config: RunConfig | None = None,
                           requests: int = 20000, seed: int = 1) -> list[dict]:
    """Accelerated-mode MRPS for the small-message comparison cells
    (memc_tiny / memc_small at SET ratios 0.5 and 0.05)."""
    if name != "dagger_table":
        raise ConfigError(f"unknown comparison profile {name!r}")
    base = base_config if base_config is not None else RunConfig.build()
    rows = []
    for preset, set_ratio in DAGGER_CELLS:
        cfg = base.with_overrides({
            "run.preset": preset, "run.mode": "arcalis",
            "run.requests": requests, "run.seed": seed,
            "workload.set_ratio": set_ratio})
        report, _ = run_simulation(cfg)
        rows.append({"preset": preset, "set_ratio": set_ratio,
                     "mrps": report.throughput_rps / 1e6,
                     "completed": report.requests_completed})
    return rows
