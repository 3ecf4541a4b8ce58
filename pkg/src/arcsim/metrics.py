"""Counter collection and report generation.

RunStats is the mutable scoreboard one simulation instance writes into;
finalize() freezes it into a StatsReport after checking conservation.
Reports serialize to a flat key=value text block with a fixed key order,
so identical runs produce byte-identical report files.

Latency is measured NIC-ingress (DCA start) to NIC-egress (transmit done).
Percentiles are exact nearest-rank over all recorded per-request latencies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

TOOL_VERSION = "arcsim-0.1.0"

ENGINE_STAGES = ("header_parse", "dispatch", "deserialize",
                 "header_create", "serialize")
CPU_STAGES = ("header_parse", "dispatch", "deserialize", "logic",
              "header_create", "serialize")


class ConservationViolation(Exception):
    """Injected != completed + drops + errors; a simulator bug."""


class MismatchedRuns(ValueError):
    pass


@dataclass
class RunStats:
    """Mutable per-run counters, owned by a single simulation instance."""

    injected: int = 0
    completed: int = 0
    drops: int = 0
    errors: int = 0
    fault_retries: int = 0

    latencies_ps: list = field(default_factory=list)
    responses: list = field(default_factory=list)  # (seq_id, frame bytes)

    engine_stage_cycles: dict = field(
        default_factory=lambda: {s: 0 for s in ENGINE_STAGES})
    cpu_stage_cycles: dict = field(
        default_factory=lambda: {s: 0 for s in CPU_STAGES})

    rx_busy_ps: int = 0
    tx_busy_ps: int = 0
    rx_mem_stall_ps: int = 0
    tx_mem_stall_ps: int = 0
    rx_rpcs: int = 0
    tx_rpcs: int = 0
    rx_tx_overlap_events: int = 0

    cpu_busy_cycles: dict = field(default_factory=dict)     # actor -> cycles
    cpu_instructions: dict = field(default_factory=dict)    # actor -> instr
    codec_bytes_cpu: int = 0      # bytes (de)serialized in software
    codec_bytes_engine: int = 0

    uc_commands: int = 0
    unknown_opcodes: int = 0
    rejected_commands: int = 0

    def add_cpu(self, actor: str, cycles: int, instructions: int) -> None:
        self.cpu_busy_cycles[actor] = self.cpu_busy_cycles.get(actor, 0) + cycles
        self.cpu_instructions[actor] = (self.cpu_instructions.get(actor, 0)
                                        + instructions)


def _percentile(sorted_vals: list, q: float) -> int:
    """Exact nearest-rank percentile; 0 for an empty sample."""
    if not sorted_vals:
        return 0
    rank = max(1, -(-len(sorted_vals) * q // 100))
    return sorted_vals[int(rank) - 1]


@dataclass(frozen=True)
class StatsReport:
    """Immutable per-run report; fields mirror the serialized key order."""

    preset: str
    mode: str
    seed: int
    prng: str
    config_fingerprint: str
    requests_injected: int
    requests_completed: int
    drops: int
    errors: int
    fault_retries: int
    sim_time_ps: int
    throughput_rps: float
    latency_p50_ns: float
    latency_p95_ns: float
    latency_p99_ns: float
    engine_stage_cycles: dict
    cpu_stage_cycles: dict
    rx_busy_ps: int
    tx_busy_ps: int
    rx_mem_stall_ps: int
    tx_mem_stall_ps: int
    rx_rpcs: int
    tx_rpcs: int
    rx_tx_overlap_events: int
    cpu_busy_cycles: dict
    cpu_instructions: dict
    codec_bytes_cpu: int
    codec_bytes_engine: int
    accel_cache_hits: int
    accel_cache_misses: int
    llc_hits: int
    dram_accesses: int
    tlb_hits: int
    tlb_misses: int
    tlb_faults: int
    uc_commands: int
    unknown_opcodes: int
    rejected_commands: int

    @property
    def total_cpu_cycles(self) -> int:
        return sum(self.cpu_busy_cycles.values())

    @property
    def total_cpu_instructions(self) -> int:
        return sum(self.cpu_instructions.values())

    @property
    def engine_cycles_total(self) -> int:
        return sum(self.engine_stage_cycles.values())

    @property
    def deserialize_fraction(self) -> float:
        total = self.engine_cycles_total
        return self.engine_stage_cycles["deserialize"] / total if total else 0.0

    @property
    def rx_share(self) -> float:
        """RxEngine stage cycles (parse+dispatch+deserialize) as a fraction
        of all engine stage cycles."""
        total = self.engine_cycles_total
        rx = (self.engine_stage_cycles["header_parse"]
              + self.engine_stage_cycles["dispatch"]
              + self.engine_stage_cycles["deserialize"])
        return rx / total if total else 0.0

    def to_text(self) -> str:
        lines = [f"tool_version={TOOL_VERSION}",
                 f"preset={self.preset}",
                 f"mode={self.mode}",
                 f"seed={self.seed}",
                 f"prng={self.prng}",
                 f"config_fingerprint={self.config_fingerprint}"]
        for name in ("requests_injected", "requests_completed", "drops",
                     "errors", "fault_retries", "sim_time_ps"):
            lines.append(f"{name}={getattr(self, name)}")
        lines.append(f"throughput_rps={self.throughput_rps:.6f}")
        for name in ("latency_p50_ns", "latency_p95_ns", "latency_p99_ns"):
            lines.append(f"{name}={getattr(self, name):.3f}")
        for stage in ENGINE_STAGES:
            lines.append(f"engine.{stage}_cycles={self.engine_stage_cycles[stage]}")
        for stage in CPU_STAGES:
            lines.append(f"cpu.{stage}_cycles={self.cpu_stage_cycles[stage]}")
        for name in ("rx_busy_ps", "tx_busy_ps", "rx_mem_stall_ps",
                     "tx_mem_stall_ps", "rx_rpcs", "tx_rpcs",
                     "rx_tx_overlap_events"):
            lines.append(f"{name}={getattr(self, name)}")
        for actor in sorted(self.cpu_busy_cycles):
            lines.append(f"busy_cycles.{actor}={self.cpu_busy_cycles[actor]}")
        for actor in sorted(self.cpu_instructions):
            lines.append(f"instructions.{actor}={self.cpu_instructions[actor]}")
        for name in ("codec_bytes_cpu", "codec_bytes_engine",
                     "accel_cache_hits", "accel_cache_misses", "llc_hits",
                     "dram_accesses", "tlb_hits", "tlb_misses", "tlb_faults",
                     "uc_commands", "unknown_opcodes", "rejected_commands"):
            lines.append(f"{name}={getattr(self, name)}")
        lines.append(f"derived.deserialize_fraction={self.deserialize_fraction:.6f}")
        lines.append(f"derived.rx_share={self.rx_share:.6f}")
        return "\n".join(lines) + "\n"


def finalize(stats: RunStats, *, preset: str, mode: str, seed: int,
             prng: str, fingerprint: str, sim_time_ps: int,
             mem=None) -> StatsReport:
    """Freeze run counters into a report; enforces conservation."""
    if stats.injected != stats.completed + stats.drops + stats.errors:
        raise ConservationViolation(
            f"injected {stats.injected} != completed {stats.completed} "
            f"+ drops {stats.drops} + errors {stats.errors}")
    lat = sorted(stats.latencies_ps)
    seconds = sim_time_ps / 1e12
    throughput = stats.completed / seconds if sim_time_ps else 0.0
    return StatsReport(
        preset=preset, mode=mode, seed=seed, prng=prng,
        config_fingerprint=fingerprint,
        requests_injected=stats.injected,
        requests_completed=stats.completed,
        drops=stats.drops, errors=stats.errors,
        fault_retries=stats.fault_retries,
        sim_time_ps=sim_time_ps,
        throughput_rps=throughput,
        latency_p50_ns=_percentile(lat, 50) / 1000,
        latency_p95_ns=_percentile(lat, 95) / 1000,
        latency_p99_ns=_percentile(lat, 99) / 1000,
        engine_stage_cycles=dict(stats.engine_stage_cycles),
        cpu_stage_cycles=dict(stats.cpu_stage_cycles),
        rx_busy_ps=stats.rx_busy_ps, tx_busy_ps=stats.tx_busy_ps,
        rx_mem_stall_ps=stats.rx_mem_stall_ps,
        tx_mem_stall_ps=stats.tx_mem_stall_ps,
        rx_rpcs=stats.rx_rpcs, tx_rpcs=stats.tx_rpcs,
        rx_tx_overlap_events=stats.rx_tx_overlap_events,
        cpu_busy_cycles=dict(stats.cpu_busy_cycles),
        cpu_instructions=dict(stats.cpu_instructions),
        codec_bytes_cpu=stats.codec_bytes_cpu,
        codec_bytes_engine=stats.codec_bytes_engine,
        accel_cache_hits=mem.cache.hits if mem else 0,
        accel_cache_misses=mem.cache.misses if mem else 0,
        llc_hits=mem.llc_hits if mem else 0,
        dram_accesses=mem.dram_accesses if mem else 0,
        tlb_hits=mem.tlb.hits if mem else 0,
        tlb_misses=mem.tlb.misses if mem else 0,
        tlb_faults=mem.tlb.faults if mem else 0,
        uc_commands=stats.uc_commands,
        unknown_opcodes=stats.unknown_opcodes,
        rejected_commands=stats.rejected_commands,
    )


@dataclass(frozen=True)
class ComparisonReport:
    preset: str
    seed: int
    speedup: float
    throughput_ratio: float
    instruction_reduction: float
    cycle_reduction: float
    codec_byte_reduction: float

    def to_text(self) -> str:
        return (f"preset={self.preset}\nseed={self.seed}\n"
                f"speedup={self.speedup:.6f}\n"
                f"throughput_ratio={self.throughput_ratio:.6f}\n"
                f"instruction_reduction={self.instruction_reduction:.6f}\n"
                f"cycle_reduction={self.cycle_reduction:.6f}\n"
                f"codec_byte_reduction={self.codec_byte_reduction:.6f}\n")


def compare(baseline: StatsReport, accel: StatsReport) -> ComparisonReport:
    """Baseline-vs-accelerated comparison for the same workload and seed."""
    if (baseline.preset, baseline.seed) != (accel.preset, accel.seed):
        raise MismatchedRuns(
            f"({baseline.preset}, {baseline.seed}) vs "
            f"({accel.preset}, {accel.seed})")
    if baseline.requests_injected != accel.requests_injected:
        raise MismatchedRuns("request counts differ")

    def reduction(b, a):
        return 1.0 - a / b if b else 0.0

    return ComparisonReport(
        preset=baseline.preset, seed=baseline.seed,
        speedup=baseline.sim_time_ps / accel.sim_time_ps,
        throughput_ratio=accel.throughput_rps / baseline.throughput_rps,
        instruction_reduction=reduction(baseline.total_cpu_instructions,
                                        accel.total_cpu_instructions),
        cycle_reduction=reduction(baseline.total_cpu_cycles,
                                  accel.total_cpu_cycles),
        codec_byte_reduction=reduction(baseline.codec_bytes_cpu,
                                       accel.codec_bytes_cpu),
    )
