import pytest

from arcsim.config import ConfigError, RunConfig
from arcsim.sweeps import (CSV_COLUMNS, SweepSpec, parse_sweep_spec,
                           run_comparison_profile, run_sweep, sweep_seeds)
from arcsim.workload import derive_seed

SPEC_TEXT = """
axis = latency.uc_interconnect_ns
values = 5, 700
presets = unique_id
requests = 300
repetitions = 2
base_seed = 9
mode = arcalis
"""


def test_parse_sweep_spec():
    spec = parse_sweep_spec(SPEC_TEXT)
    assert spec.axis == "latency.uc_interconnect_ns"
    assert spec.values == [5, 700]
    assert spec.presets == ["unique_id"]
    assert spec.repetitions == 2


def test_spec_validation():
    with pytest.raises(ConfigError):
        parse_sweep_spec("axis = latency.uc_interconnect_ns\n")
    with pytest.raises(ConfigError):
        parse_sweep_spec("axis = bogus\nvalues = 1\npresets = memc_low\n")
    spec = parse_sweep_spec(SPEC_TEXT)
    spec.values = []
    with pytest.raises(ConfigError):
        spec.validate()


def test_seed_derivation_documented_rule():
    spec = parse_sweep_spec(SPEC_TEXT)
    assert sweep_seeds(spec) == [derive_seed(9, 0), derive_seed(9, 1)]
    spec.repetitions = 1
    assert sweep_seeds(spec) == [9]


def test_run_sweep_rows_and_relative_columns():
    spec = parse_sweep_spec(SPEC_TEXT)
    csv = run_sweep(spec)
    lines = csv.strip().split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    rows = [dict(zip(CSV_COLUMNS, line.split(","))) for line in lines[1:]]
    assert len(rows) == 2 * 1 * 2  # values x presets x seeds
    assert all(r["status"] == "ok" for r in rows)
    # first axis point normalizes to 1.0
    for r in rows:
        if r["axis_value"] == "5":
            assert float(r["rel_time"]) == pytest.approx(1.0)
            assert float(r["rel_throughput"]) == pytest.approx(1.0)
        else:
            assert float(r["rel_time"]) >= 1.0


def test_sweep_point_rerun_reproduces_row():
    spec = parse_sweep_spec(SPEC_TEXT)
    spec.repetitions = 1
    spec.values = [700]
    one = run_sweep(spec)
    again = run_sweep(spec)
    assert one == again


def test_sweep_rerun_identical_after_sort():
    spec = parse_sweep_spec(SPEC_TEXT)
    a = sorted(run_sweep(spec).splitlines())
    b = sorted(run_sweep(spec).splitlines())
    assert a == b


def test_error_rows_do_not_abort():
    spec = parse_sweep_spec(SPEC_TEXT)
    spec.presets = ["unique_id", "memc_mid"]
    spec.requests = 100
    # an impossible override for one axis point: negative latency
    spec.values = [5, -1]
    csv = run_sweep(spec)
    rows = [line.split(",") for line in csv.strip().split("\n")[1:]]
    statuses = {row[-1] for row in rows}
    assert any(s.startswith("error:") for s in statuses)
    assert "ok" in statuses


def test_axis_values_cover_published_points():
    from arcsim.sweeps import AXES
    assert set((5, 100, 400, 700)) <= set(AXES["latency.uc_interconnect_ns"])
    assert set((64, 512, 1024, 1518)) <= set(AXES["workload.value_size"])
    assert {256 * 1024, 2 * 1024 * 1024} <= set(AXES["accel.cache_bytes"])


def test_comparison_profile_cells():
    rows = run_comparison_profile(requests=300)
    cells = [(r["preset"], r["set_ratio"]) for r in rows]
    assert cells == [("memc_tiny", 0.5), ("memc_small", 0.5),
                     ("memc_tiny", 0.05), ("memc_small", 0.05)]
    assert all(r["mrps"] > 0 for r in rows)
    with pytest.raises(ConfigError):
        run_comparison_profile("other_table")
