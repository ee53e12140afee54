"""Runs the shipped scenario files through the harness."""

import json
import pathlib

import pytest

from bundlemux.harness import ScenarioRunner, run_scenario

SCENARIOS = pathlib.Path(__file__).parent.parent / "scenarios"


def run_file(name: str, tmp_path) -> dict:
    with open(SCENARIOS / name) as handle:
        spec = json.load(handle)
    report = ScenarioRunner(spec, workdir=str(tmp_path)).run()
    assert report["ok"], report["failures"]
    return report


def test_two_node_direct(tmp_path):
    run_file("two_node_direct.json", tmp_path)


def test_three_node_relay(tmp_path):
    report = run_file("three_node_relay.json", tmp_path)
    for counters in report["counters"].values():
        total_dropped = sum(counters["dropped"].values())
        assert counters["ingested"] == (counters["delivered"]
                                        + counters["forwarded"]
                                        + counters["stored"] + total_dropped)


def test_store_and_forward(tmp_path):
    run_file("store_and_forward.json", tmp_path)


def test_fragmentation(tmp_path):
    report = run_file("fragmentation.json", tmp_path)
    assert report["counters"]["b"]["ingested"] >= 3


def test_bibe_tunnel(tmp_path):
    run_file("bibe_tunnel.json", tmp_path)


def test_bibe_tunnel_double(tmp_path):
    run_file("bibe_tunnel_double.json", tmp_path)


def test_fib_cache(tmp_path):
    run_file("fib_cache.json", tmp_path)


def _normalized_outcomes(report):
    keep = {"ingest", "deliver", "forward", "store", "drop"}
    out = {}
    for key, counters in report["counters"].items():
        out[key] = counters
    return out


def test_determinism_identical_runs(tmp_path):
    with open(SCENARIOS / "determinism_loopback.json") as handle:
        spec = json.load(handle)
    first = ScenarioRunner(spec, workdir=str(tmp_path / "run1")).run()
    second = ScenarioRunner(spec, workdir=str(tmp_path / "run2")).run()
    assert first["ok"] and second["ok"], (first["failures"], second["failures"])
    assert _normalized_outcomes(first) == _normalized_outcomes(second)


def test_junit_output(tmp_path):
    with open(SCENARIOS / "two_node_direct.json") as handle:
        spec = json.load(handle)
    out = tmp_path / "result.xml"
    report = run_scenario(spec, junit_path=str(out))
    assert report["ok"]
    text = out.read_text()
    assert "testsuite" in text and 'failures="0"' in text
