import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from utils.errors import ConfigError
from utils.perf_model import (
    REPORTED_N_OPS,
    PerfConfig,
    build_report,
    count_macs,
    format_perf_tables,
    gpu_comparison,
    heater_power,
    latency,
    list_presets,
    perf_report,
    resolve_preset,
    technology_table,
    total_power,
)


@pytest.fixture
def reported_config():
    return PerfConfig(n_ops_mode="reported")


def test_mac_count():
    assert count_macs() == 249_736
    assert count_macs([("Conv1", 10, 676)]) == 135_200


def test_latency_sums_patch_streaming_and_stages():
    assert latency() == pytest.approx(843.0)
    assert latency(PerfConfig(tau_patch_ns=2.0)) == pytest.approx(676 * 2 + 167.0)


def test_heater_power():
    assert heater_power(np.zeros(2132)) == 0.0
    assert heater_power(np.full(2132, np.pi)) == pytest.approx(21.32)
    # wrapped: 2*pi + 0.5 costs the same as 0.5
    assert heater_power([2 * np.pi + 0.5]) == pytest.approx(heater_power([0.5]))
    uniform = np.random.default_rng(0).uniform(-np.pi, np.pi, 2132)
    assert heater_power(uniform) == pytest.approx(10.3, rel=0.1)


def test_total_power_uses_reference_without_theta():
    assert total_power() == pytest.approx(14.7)
    assert total_power(np.zeros(2132)) == pytest.approx(4.4)


def test_headline_numbers(reported_config):
    report = perf_report(config=reported_config)
    assert report.n_ops == REPORTED_N_OPS
    assert report.latency_ns == pytest.approx(843.0)
    assert report.p_total == pytest.approx(14.7)
    assert report.energy_inference * 1e6 == pytest.approx(12.39, rel=1e-3)
    assert report.e_op * 1e12 == pytest.approx(46.24, rel=1e-3)
    assert report.tops == pytest.approx(0.318, rel=1e-2)


def test_formula_mode_uses_the_mac_count():
    report = perf_report()
    assert report.n_ops == 249_736
    assert report.e_op * 1e12 == pytest.approx(49.62, rel=1e-3)


def test_report_invariants():
    report = build_report(p_total=5.0, latency_ns=1000.0, n_ops=1000, p_heater=2.0)
    assert report.energy_inference == pytest.approx(5e-6)
    assert report.e_op == pytest.approx(report.energy_inference / report.n_ops)
    assert report.tops == pytest.approx(1000 / 1e-6 / 1e12)
    assert report.p_fixed == pytest.approx(3.0)
    assert set(report.to_dict()) >= {"n_ops", "latency_ns", "p_total", "e_op", "tops"}


def test_technology_rows(reported_config):
    rows = {row.name: row for row in technology_table(config=reported_config)}
    assert list(rows) == ["standard", "undercut", "suspended", "mems"]
    expected_power = {"standard": 14.7, "undercut": 4.4, "suspended": 2.3, "mems": 1.4}
    expected_energy = {"standard": 46.2, "undercut": 13.8, "suspended": 7.2, "mems": 4.4}
    for name, row in rows.items():
        assert row.p_total == pytest.approx(expected_power[name], rel=0.05)
        assert row.e_op * 1e12 == pytest.approx(expected_energy[name], rel=0.05)
    assert rows["standard"].e_op > rows["undercut"].e_op > rows["suspended"].e_op > rows["mems"].e_op
    assert len({round(row.tops, 12) for row in rows.values()}) == 1


def test_gpu_ratios(reported_config):
    rows = gpu_comparison(perf_report(config=reported_config))
    assert rows[0].name == "PCNN" and rows[0].ratio == 1.0
    ratios = {row.name: row.ratio for row in rows[1:]}
    assert ratios["NVIDIA T4"] == pytest.approx(161, rel=0.01)
    assert ratios["NVIDIA H100"] == pytest.approx(161, rel=0.01)
    assert ratios["NVIDIA A100"] == pytest.approx(242, rel=0.01)


def test_preset_aliases():
    assert resolve_preset("Thermo-Optic").name == "standard"
    assert resolve_preset("TO").name == "standard"
    assert resolve_preset("suspended-si").name == "suspended"
    assert resolve_preset("mems-based").p_pi == 1e-5
    with pytest.raises(ConfigError):
        resolve_preset("graphene")


def test_preset_from_config():
    config = PerfConfig.from_config({"perf": {"preset": "undercut"}})
    assert config.p_pi == 0.003
    assert config.p_fixed == pytest.approx(1.4)


def test_paper_is_an_alias_of_the_reported_count():
    assert PerfConfig(n_ops_mode="paper").n_ops_mode == "reported"
    config = PerfConfig.from_config({"perf": {"n_ops_mode": "paper"}})
    assert perf_report(config=config).n_ops == REPORTED_N_OPS


def test_config_validation():
    with pytest.raises(ConfigError):
        PerfConfig(n_ops_mode="guess")
    with pytest.raises(ConfigError):
        PerfConfig(tau_patch_ns=-1.0)
    with pytest.raises(ConfigError):
        PerfConfig(reference_p_pi=0.0)


def test_list_presets_groups_by_category():
    lines = list_presets()
    assert lines[0] == "Thermo-optic:"
    assert "Mechanical:" in lines
    assert any(line.strip().startswith("mems") for line in lines)
    assert any("thermo-optic" in line for line in lines)


def test_format_perf_tables(reported_config):
    report = perf_report(config=reported_config)
    text = format_perf_tables(report, technology_table(config=reported_config), gpu_comparison(report))
    assert "268,000" in text
    assert "46.24" in text
    assert "NVIDIA A100" in text
