"""Acceptance suite: every criterion runs at its stated tolerance and
prints one pass/fail line.

The seven-preset baseline/accelerated pairs run once at 100k requests
(shared across criteria); sensitivity checks run at reduced request counts
where throughput and fraction metrics are already size-stable.
"""

import random
import time

import pytest

from arcsim import wirecodec as wc
from arcsim.accel import LEGAL_EDGES
from arcsim.config import RunConfig
from arcsim.metrics import compare
from arcsim.system import Machine, run_pair, run_simulation
from arcsim.workload import derive_seed

SPEEDUP_TARGETS = {"memc_low": 4.16, "memc_mid": 3.68, "memc_high": 3.05,
                   "post_low": 2.58, "post_mid": 2.21, "post_high": 1.79,
                   "unique_id": 3.33}
DAGGER_TARGETS = {("memc_tiny", 0.5): 1.00, ("memc_small", 0.5): 0.91,
                  ("memc_tiny", 0.05): 1.58, ("memc_small", 0.05): 1.47}

FULL_N = 100_000
SWEEP_N = 10_000
ORDER_N = 5_000


def build(preset, requests, seed=1, **over):
    overrides = {"run.preset": preset, "run.requests": requests,
                 "run.seed": seed}
    overrides.update({k: str(v) for k, v in over.items()})
    return RunConfig.build(overrides=overrides)


def report(tag, ok, detail):
    print(f"[{tag}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"{tag}: {detail}"


@pytest.fixture(scope="module")
def full_pairs():
    """Seven preset pairs at 100k requests, plus the wall-clock they took."""
    t0 = time.monotonic()
    pairs = {}
    for preset in SPEEDUP_TARGETS:
        base, accel = run_pair(build(preset, FULL_N))
        pairs[preset] = (base, accel, compare(base, accel))
    return pairs, time.monotonic() - t0


@pytest.fixture(scope="module")
def dagger_reports():
    out = {}
    for (preset, set_ratio) in DAGGER_TARGETS:
        cfg = build(preset, 20_000, **{"workload.set_ratio": set_ratio})
        rep, _ = run_simulation(cfg)
        out[(preset, set_ratio)] = rep
    return out


def test_criterion_1_speedup_reproduction(full_pairs):
    pairs, elapsed = full_pairs
    for preset, target in SPEEDUP_TARGETS.items():
        speedup = pairs[preset][2].speedup
        dev = speedup / target - 1
        report(f"criterion 1 {preset}", abs(dev) <= 0.20,
               f"speedup {speedup:.2f} vs {target} ({dev:+.1%}, tol 20%)")
    report("criterion 1 runtime", elapsed < 300,
           f"seven 100k-request pairs in {elapsed:.0f}s (< 300s)")


def test_criterion_2_speedup_ordering_ten_seeds():
    for i in range(10):
        seed = derive_seed(1, i)
        sp = {}
        for preset in ("memc_low", "memc_mid", "memc_high",
                       "post_low", "post_mid", "post_high"):
            base, accel = run_pair(build(preset, ORDER_N, seed=seed))
            sp[preset] = compare(base, accel).speedup
        ok = (sp["memc_low"] > sp["memc_mid"] > sp["memc_high"]
              and sp["post_low"] > sp["post_mid"] > sp["post_high"]
              and sp["post_low"] < sp["memc_low"]
              and sp["post_mid"] < sp["memc_mid"]
              and sp["post_high"] < sp["memc_high"])
        report(f"criterion 2 seed {i}", ok,
               f"orderings hold (seed {seed & 0xFFFFFFFF:#x})")


def test_criterion_3_engine_breakdown(full_pairs, dagger_reports):
    pairs, _ = full_pairs
    accel_reports = {p: pair[1] for p, pair in pairs.items()}
    accel_reports.update({f"{p}@{r}": rep
                          for (p, r), rep in dagger_reports.items()})
    for name, rep in accel_reports.items():
        df, rx = rep.deserialize_fraction, rep.rx_share
        report(f"criterion 3 {name}",
               0.54 <= df <= 0.79 and 0.68 <= rx <= 0.96,
               f"deser fraction {df:.3f} in [0.54,0.79], "
               f"rx share {rx:.3f} in [0.68,0.96]")


def test_criterion_4_interconnect_sensitivity():
    for preset, cap in (("memc_low", 0.25), ("memc_mid", 0.25),
                        ("memc_high", 0.25), ("post_low", 0.12),
                        ("post_mid", 0.12), ("post_high", 0.12),
                        ("unique_id", 0.12)):
        times = {}
        for uc in (5, 700):
            rep, _ = run_simulation(
                build(preset, SWEEP_N, **{"latency.uc_interconnect_ns": uc}))
            times[uc] = rep.sim_time_ps
        inflation = times[700] / times[5] - 1
        report(f"criterion 4 {preset}", inflation <= cap,
               f"700ns vs 5ns inflation {inflation:.1%} (cap {cap:.0%})")


def test_criterion_5_packet_size_sensitivity():
    for preset in ("memc_low", "memc_mid", "memc_high"):
        thr = {}
        for size in (64, 512, 1024, 1518):
            rep, _ = run_simulation(
                build(preset, SWEEP_N, **{"workload.value_size": size}))
            thr[size] = rep.throughput_rps
        mono = (thr[64] >= thr[512] >= thr[1024] >= thr[1518])
        deg = 1 - thr[1518] / thr[64]
        report(f"criterion 5 {preset}", mono and 0.10 <= deg <= 0.22,
               f"monotone={mono}, 1518B degradation {deg:.1%} in [10%,22%]")


def test_criterion_6_cache_size_plateau():
    for preset in SPEEDUP_TARGETS:
        thr = {}
        for cache in (256 * 1024, 2 * 1024 * 1024):
            rep, _ = run_simulation(
                build(preset, SWEEP_N, **{"accel.cache_bytes": cache}))
            thr[cache] = rep.throughput_rps
        ratio = thr[256 * 1024] / thr[2 * 1024 * 1024]
        report(f"criterion 6 {preset}", abs(ratio - 1) <= 0.01,
               f"throughput(256KiB)/throughput(2MiB) = {ratio:.4f}")


def test_criterion_7_comparison_profile(dagger_reports):
    for (preset, set_ratio), target in DAGGER_TARGETS.items():
        mrps = dagger_reports[(preset, set_ratio)].throughput_rps / 1e6
        dev = mrps / target - 1
        report(f"criterion 7 {preset} SET={set_ratio}", abs(dev) <= 0.20,
               f"{mrps:.2f} MRPS vs {target} ({dev:+.1%}, tol 20%)")


def _random_message(rng, schema):
    method = rng.choice(schema.methods)
    direction = rng.choice((wc.DIR_REQUEST, wc.DIR_RESPONSE))

    def value(fs):
        if fs.wire_type is wc.WireType.BOOL:
            return bool(rng.getrandbits(1))
        if fs.wire_type in (wc.WireType.I8, wc.WireType.I16,
                            wc.WireType.I32, wc.WireType.I64):
            bits = {wc.WireType.I8: 8, wc.WireType.I16: 16,
                    wc.WireType.I32: 32, wc.WireType.I64: 64}[fs.wire_type]
            return rng.randrange(-(1 << (bits - 1)), 1 << (bits - 1))
        if fs.wire_type in (wc.WireType.BYTES, wc.WireType.STRING):
            return rng.randbytes(rng.randrange(0, 48))
        return [rng.randrange(-2**63, 2**63)
                for _ in range(rng.randrange(0, 12))]

    fields = {fs.name: value(fs) for fs in method.fields(direction)}
    return wc.RpcMessage(rng.getrandbits(32), method.name, direction, fields)


def test_criterion_8_codec_oracle():
    for service in wc.BUILTIN_SERVICES:
        schema = wc.builtin_schema(service)
        rng = random.Random(2024)
        for _ in range(10_000):
            msg = _random_message(rng, schema)
            assert wc.deserialize(wc.serialize(msg, schema), schema) == msg
        report(f"criterion 8 {service} round-trip", True,
               "10^4 randomized round-trips")
    schema = wc.builtin_schema("memcached")
    good = wc.serialize(wc.RpcMessage(1, "get", wc.DIR_REQUEST,
                                      {"key": b"k"}), schema)
    with pytest.raises(wc.TruncatedFrame):
        wc.parse_header(good[:8])
    bad_version = bytearray(good)
    bad_version[4] = 0x2
    with pytest.raises(wc.BadVersion):
        wc.parse_header(bytes(bad_version))
    unknown = bytearray(good)
    unknown[6] = 0xEE
    with pytest.raises(wc.UnknownMethod):
        wc.deserialize(bytes(unknown), schema)
    truncated = bytearray(good[:-3])
    truncated[:4] = (len(truncated) - 4).to_bytes(4, "big")
    with pytest.raises(wc.TruncatedFrame):
        wc.deserialize(bytes(truncated), schema)
    report("criterion 8 negative frames", True,
           "truncated / unknown method / bad version raise as specified")


def test_criterion_9_fsm_safety_and_liveness(full_pairs):
    machine = Machine(build("memc_mid", SWEEP_N))
    rep = machine.run()
    for fsm in (machine.accel.rx, machine.accel.tx):
        report(f"criterion 9 {fsm.name} edges",
               set(fsm.transition_log) <= LEGAL_EDGES,
               f"{len(fsm.transition_log)} transitions all in legal set")
        report(f"criterion 9 {fsm.name} idle", fsm.state == "IDLE_RECV",
               "engine idle at quiescence")
    report("criterion 9 in-flight", not machine.arrival_ps,
           "zero in-flight RPCs at quiescence")
    overlap = full_pairs[0]["memc_mid"][1].rx_tx_overlap_events
    report("criterion 9 overlap", overlap >= 1 and rep.rx_tx_overlap_events >= 1,
           f"simultaneous Rx/Tx BUSY observed ({overlap} events under memc_mid)")


def test_criterion_10_conservation_and_determinism(full_pairs, dagger_reports):
    pairs, _ = full_pairs
    everything = [r for pair in pairs.values() for r in pair[:2]]
    everything += list(dagger_reports.values())
    for rep in everything:
        assert rep.requests_injected == (rep.requests_completed + rep.drops
                                         + rep.errors)
    report("criterion 10 conservation", True,
           f"injected == completed + drops + errors in {len(everything)} runs")
    cfg = build("memc_mid", SWEEP_N, seed=5)
    r1, t1 = run_simulation(cfg, record_trace=True)
    r2, t2 = run_simulation(cfg, record_trace=True)
    report("criterion 10 determinism",
           r1.to_text() == r2.to_text() and t1 == t2,
           f"byte-identical reports and {len(t1)}-event traces across reruns")


def test_criterion_11_mode_equivalence():
    cases = [(preset, 1) for preset in SPEEDUP_TARGETS]
    cases += [("memc_mid", 2), ("memc_mid", 3)]
    for preset, seed in cases:
        cfg = build(preset, 3000, seed=seed)
        base_m = Machine(cfg.with_overrides({"run.mode": "baseline"}))
        accel_m = Machine(cfg.with_overrides({"run.mode": "arcalis"}))
        base_m.run()
        accel_m.run()
        same = sorted(base_m.stats.responses) == sorted(accel_m.stats.responses)
        report(f"criterion 11 {preset} seed {seed}", same,
               "identical (seq_id, response bytes) multisets across modes")


def test_criterion_12_derived_counter_bands(full_pairs):
    pairs, _ = full_pairs
    for preset, (_, _, cr) in pairs.items():
        ok = (0.60 <= cr.instruction_reduction <= 0.90
              and 0.40 <= cr.cycle_reduction <= 0.80)
        report(f"criterion 12 {preset}", ok,
               f"instr reduction {cr.instruction_reduction:.1%} in [60%,90%], "
               f"cycle reduction {cr.cycle_reduction:.1%} in [40%,80%]")
