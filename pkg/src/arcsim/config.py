"""Run configuration: layered flat key=value settings.

Precedence, lowest to highest: built-in defaults, the calibration profile,
a user config file, explicit overrides (CLI --set). Every key is flat and
dotted; the effective configuration serializes canonically (sorted keys)
and its sha256 prefix is the run's config fingerprint, embedded in every
output file.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .accel import EngineCostModel
from .memmodel import LatencyConfig

LOGIC_METHODS = ("set", "get", "store_post", "read_post", "read_posts",
                 "compose_unique_id")

# key -> (type, default). The calibration profile ships the engine.*,
# cpu.* and logic.* layers; everything here is overridable per run.
_BASE_DEFAULTS: dict[str, tuple[type, object]] = {
    "run.mode": (str, "arcalis"),
    "run.preset": (str, "memc_mid"),
    "run.requests": (int, 10000),
    "run.seed": (int, 1),

    "workload.key_size": (int, 0),       # 0 = preset default
    "workload.value_size": (int, 0),
    "workload.text_size": (int, 0),
    "workload.list_length": (int, 0),
    "workload.keyspace": (int, 0),
    "workload.zipf_s": (float, 0.0),
    "workload.set_ratio": (float, -1.0),  # <0 = preset default

    "load.mode": (str, "closed_loop"),
    "load.window": (int, 16),
    "load.rate_rps": (float, 0.0),
    "load.stagger_ns": (float, 1000.0),

    "latency.cpu_freq_hz": (int, 4_000_000_000),
    "latency.accel_freq_hz": (int, 1_000_000_000),
    "latency.l1_hit_cycles": (int, 4),
    "latency.l2_hit_cycles": (int, 14),
    "latency.llc_hit_cycles": (int, 40),
    "latency.dram_ns": (float, 90.0),
    "latency.accel_cache_hit_cycles": (int, 2),
    "latency.uc_interconnect_ns": (float, 40.0),
    "latency.tlb_hit_cycles": (int, 1),
    "latency.page_walk_ns": (float, 60.0),
    "latency.dca_injection_ns": (float, 100.0),
    "latency.mem_parallelism": (int, 4),

    "accel.cache_bytes": (int, 512 * 1024),
    "accel.queue_depth": (int, 16),
    "accel.tlb_entries": (int, 64),
    "accel.page_size_bytes": (int, 4096),
    "accel.premap": (int, 1),
    "buffers.bytes": (int, 256 * 1024),

    "engine.header_parse_base": (int, 8),
    "engine.header_parse_milli_per_byte": (int, 125),
    "engine.dispatch_cycles": (int, 4),
    "engine.deserialize_base": (int, 60),
    "engine.deserialize_milli_per_byte": (int, 300),
    "engine.header_create_base": (int, 24),
    "engine.serialize_base": (int, 0),
    "engine.serialize_milli_per_byte": (int, 150),

    "cpu.header_parse_base": (int, 1400),
    "cpu.header_parse_per_byte": (int, 2),
    "cpu.dispatch_cycles": (int, 900),
    "cpu.deserialize_base": (int, 2200),
    "cpu.deserialize_per_byte": (int, 12),
    "cpu.header_create_base": (int, 1300),
    "cpu.serialize_base": (int, 1500),
    "cpu.serialize_per_byte": (int, 8),
    "cpu.cpi_rpc_milli": (int, 1500),
    "cpu.poll_ns": (float, 50.0),
    "cpu.transmit_ns": (float, 50.0),
    "cpu.uc_issue_cycles": (int, 4),
    "cpu.baseline_loop_cycles": (int, 1200),
    "cpu.netcore_ingress_cycles": (int, 300),
    "cpu.netcore_egress_cycles": (int, 300),
    "cpu.appcore_loop_cycles": (int, 400),

    "logic.cpi_milli": (int, 6000),
}
for _m in LOGIC_METHODS:
    _BASE_DEFAULTS[f"logic.{_m}_base_cycles"] = (int, 600)
    _BASE_DEFAULTS[f"logic.{_m}_milli_per_byte"] = (int, 500)


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    """Parse 'key = value' lines; '#' comments and blanks ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


@dataclass
class RunConfig:
    values: dict

    @classmethod
    def build(cls, calibration_path=None, config_path=None,
              overrides: dict | None = None) -> "RunConfig":
        values = {k: d for k, (_, d) in _BASE_DEFAULTS.items()}
        layers = []
        if calibration_path is None:
            layers.append(_builtin_calibration())
        else:
            with open(calibration_path, encoding="utf-8") as fh:
                layers.append(parse_config_text(fh.read()))
        if config_path is not None:
            with open(config_path, encoding="utf-8") as fh:
                layers.append(parse_config_text(fh.read()))
        if overrides:
            layers.append(dict(overrides))
        for layer in layers:
            for key, val in layer.items():
                if key not in _BASE_DEFAULTS:
                    raise ConfigError(f"unknown config key {key!r}")
                values[key] = _coerce(key, val)
        return cls(values)

    def get(self, key: str):
        return self.values[key]

    def with_overrides(self, overrides: dict) -> "RunConfig":
        values = dict(self.values)
        for key, val in overrides.items():
            if key not in _BASE_DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _coerce(key, val)
        return RunConfig(values)

    def canonical(self) -> str:
        lines = []
        for key in sorted(self.values):
            val = self.values[key]
            if isinstance(val, float):
                lines.append(f"{key}={val:.9g}")
            else:
                lines.append(f"{key}={val}")
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    # -- typed views --------------------------------------------------------

    def latency(self) -> LatencyConfig:
        g = self.get
        return LatencyConfig(
            cpu_freq_hz=g("latency.cpu_freq_hz"),
            accel_freq_hz=g("latency.accel_freq_hz"),
            l1_hit_cycles=g("latency.l1_hit_cycles"),
            l2_hit_cycles=g("latency.l2_hit_cycles"),
            llc_hit_cycles=g("latency.llc_hit_cycles"),
            dram_ns=g("latency.dram_ns"),
            accel_cache_hit_cycles=g("latency.accel_cache_hit_cycles"),
            uc_interconnect_ns=g("latency.uc_interconnect_ns"),
            tlb_hit_cycles=g("latency.tlb_hit_cycles"),
            page_walk_ns=g("latency.page_walk_ns"),
            dca_injection_ns=g("latency.dca_injection_ns"),
            mem_parallelism=g("latency.mem_parallelism"),
        )

    def engine_cost(self) -> EngineCostModel:
        g = self.get
        return EngineCostModel(
            header_parse_base=g("engine.header_parse_base"),
            header_parse_milli_per_byte=g("engine.header_parse_milli_per_byte"),
            dispatch_cycles=g("engine.dispatch_cycles"),
            deserialize_base=g("engine.deserialize_base"),
            deserialize_milli_per_byte=g("engine.deserialize_milli_per_byte"),
            header_create_base=g("engine.header_create_base"),
            serialize_base=g("engine.serialize_base"),
            serialize_milli_per_byte=g("engine.serialize_milli_per_byte"),
        )


def _coerce(key: str, val):
    typ = _BASE_DEFAULTS[key][0]
    if isinstance(val, str):
        try:
            return int(val, 0) if typ is int else typ(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {val!r}") from exc
    if typ is float and isinstance(val, int):
        return float(val)
    if not isinstance(val, typ):
        raise ConfigError(f"bad type for {key}: {val!r}")
    return val


def _builtin_calibration() -> dict[str, str]:
    from importlib import resources

    text = (resources.files("arcsim") / "calibration" / "default.cfg").read_text()
    return parse_config_text(text)
