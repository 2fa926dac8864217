"""Scenario runner: config resolution, file outputs, determinism."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from eia.cli_runner import PRESETS, SCENARIOS, expand_target, main, parse_config
from eia.spatial_filter import load_profile


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(v) for v in r] for r in rows[1:]]


def read_manifest(base):
    with open(str(base) + ".manifest.json") as fh:
        return json.load(fh)


class TestParseConfig:
    def test_defaults_resolve_every_key(self):
        cfg = parse_config("at_rest")
        assert cfg.out == "at_rest"
        assert cfg.values["qp_vth"] == 36.5
        assert cfg.values["gamma_pcc"] == 0.0
        assert cfg.values["deltap_hom_factor"] is None

    def test_later_source_wins(self):
        cfg = parse_config("at_rest", {"gamma_pcc": 1.0}, {"gamma_pcc": 2.5})
        assert cfg.values["gamma_pcc"] == 2.5

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown config key"):
            parse_config("at_rest", {"gamma_zz": 1.0})

    def test_range_check(self):
        with pytest.raises(ValueError, match="outside allowed range"):
            parse_config("at_rest", {"gamma_pcc": -1.0})

    def test_bool_coercion(self):
        assert parse_config("at_rest", {"refine": "false"}).values["refine"] is False
        assert parse_config("at_rest", {"refine": "YES"}).values["refine"] is True
        with pytest.raises(ValueError, match="cannot read"):
            parse_config("at_rest", {"refine": "maybe"})

    def test_int_coercion(self):
        assert parse_config("at_rest", {"n_par": 2000.0}).values["n_par"] == 2000
        with pytest.raises(ValueError, match="cannot read"):
            parse_config("at_rest", {"n_par": 1500.5})

    def test_list_from_json_string(self):
        cfg = parse_config("fwhm_scan", {"dq_ladder": "[0, 0.1]"})
        assert cfg.values["dq_ladder"] == [0.0, 0.1]

    def test_nullable_sentinel(self):
        for raw in (None, "none", "NULL"):
            assert parse_config("filter_curve",
                                {"deltap_hom_factor": raw}).values["deltap_hom_factor"] is None
        cfg = parse_config("filter_curve", {"deltap_hom_factor": 1.5})
        assert cfg.values["deltap_hom_factor"] == 1.5

    def test_scan_ladder_must_ascend(self):
        with pytest.raises(ValueError, match="ascending"):
            parse_config("fwhm_scan", {"dq_ladder": [0.2, 0.1]})
        with pytest.raises(ValueError, match="ascending"):
            parse_config("fwhm_scan", {"dq_ladder": []})

    def test_unknown_scenario(self):
        with pytest.raises(ValueError, match="unknown scenario"):
            parse_config("sideband_scan")


class TestExpandTarget:
    def test_plain_scenario_is_one_run(self):
        runs = expand_target("at_rest", {}, {}, "", "csv")
        assert len(runs) == 1 and runs[0].out == "at_rest"

    def test_fig2_preset(self):
        runs = expand_target("fig2", {}, {}, "", "csv")
        assert [r.scenario for r in runs] == ["spectrum_exact", "spectrum_approx"]
        assert [r.out for r in runs] == ["fig2_exact", "fig2_approx"]
        for r in runs:
            assert r.values["gamma_pcc"] == 5.0
            assert r.values["gamma_vcc"] == 0.025
            assert r.values["n_par"] == 3000

    def test_fig6_preset(self):
        runs = expand_target("fig6", {}, {}, "", "csv")
        assert len(runs) == 5
        assert {r.scenario for r in runs} == {"filter_curve"}
        assert sorted(r.values["deltap_hom_factor"] for r in runs) == [-2, -1, 0, 1, 2]
        assert all(r.values["gamma_pcc"] == 10.0 for r in runs)

    def test_overrides_beat_preset(self):
        runs = expand_target("fig2", {}, {"n_par": 100}, "custom", "csv")
        assert all(r.values["n_par"] == 100 for r in runs)
        assert runs[0].out == "custom_exact"

    def test_unknown_target(self):
        with pytest.raises(ValueError, match="unknown scenario or preset"):
            expand_target("fig99", {}, {}, "", "csv")

    def test_every_preset_expands_cleanly(self):
        for name in PRESETS:
            for run in expand_target(name, {}, {}, "", "csv"):
                assert run.scenario in SCENARIOS


AT_REST_ARGS = ["--set", "gamma_pcc=0", "--set", "gamma_g=0",
                "--set", "detuning_n=101", "--set", "refine=false"]


class TestMainRuns:
    def test_at_rest_csv(self, tmp_path, capsys):
        out = tmp_path / "ar"
        assert main(["at_rest", *AT_REST_ARGS, "--out", str(out)]) == 0
        printed = capsys.readouterr().out.splitlines()
        assert printed == [str(out) + ".csv", str(out) + ".manifest.json"]
        header, rows = read_csv(str(out) + ".csv")
        assert header == ["deltap", "re_response", "im_response"]
        assert len(rows) == 101
        d = np.array([r[0] for r in rows])
        np.testing.assert_allclose(d, -d[::-1], atol=1e-15)
        man = read_manifest(out)
        assert man["scenario"] == "at_rest"
        assert man["report"]["n_detunings"] == 101

    def test_at_rest_json_components(self, tmp_path):
        out = tmp_path / "ar"
        assert main(["at_rest", *AT_REST_ARGS, "--format", "json",
                     "--out", str(out)]) == 0
        doc = json.loads(Path(str(out) + ".json").read_text())
        assert set(doc) == {"deltap", "re_response", "im_response", "components"}
        sharp = doc["components"]["sharp_peak"]
        assert max(abs(v) for v in sharp["im"]) == 0.0

    def test_runs_are_deterministic(self, tmp_path):
        outs = [tmp_path / "a" / "r", tmp_path / "b" / "r"]
        for out in outs:
            out.parent.mkdir()
            assert main(["at_rest", *AT_REST_ARGS, "--out", str(out)]) == 0
        a, b = (Path(str(o) + ".csv").read_bytes() for o in outs)
        assert a == b
        ma, mb = (read_manifest(o) for o in outs)
        for m in (ma, mb):
            m.pop("wall_time_s")
            m.pop("out_files")
            m["resolved"].pop("out")
        assert ma == mb

    def test_config_file_merges_under_flags(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "gamma_pcc": 5.0, "gamma_vcc": 0.025, "gamma_g": 0.001,
            "detuning_n": 41, "refine": False, "n_par": 200,
            "check_convergence": False}))
        out = tmp_path / "sp"
        rc = main(["spectrum_approx", "--config", str(cfg_path),
                   "--set", "gamma_vcc=0.1", "--out", str(out)])
        assert rc == 0
        resolved = read_manifest(out)["resolved"]
        assert resolved["gamma_vcc"] == 0.1   # flag beats file
        assert resolved["gamma_pcc"] == 5.0   # file beats default

    def test_fwhm_scan_outputs(self, tmp_path):
        out = tmp_path / "scan"
        rc = main(["fwhm_scan", "--set", "gamma_pcc=1", "--set", "gamma_vcc=0.1",
                   "--set", "gamma_g=0.001", "--set", "dq_ladder=[0, 0.01]",
                   "--set", "n_par=300", "--set", "n_res=1",
                   "--set", "check_convergence=false", "--out", str(out)])
        assert rc == 0
        header, rows = read_csv(str(out) + ".csv")
        assert header == ["dq_vth", "fwhm", "peak_abs"]
        assert [r[0] for r in rows] == [0.0, 0.01]
        assert all(r[1] > 0 and r[2] > 0 for r in rows)
        report = read_manifest(out)["report"]
        assert report["pedestal_convention"] == "fwhm_of_pedestal_component"
        assert len(report["pedestal_fwhm"]) == 2

    def test_filter_curve_outputs(self, tmp_path):
        out = tmp_path / "flt"
        rc = main(["filter_curve", "--set", "gamma_pcc=10", "--set", "gamma_vcc=0.025",
                   "--set", "gamma_g=0.001", "--set", "n_par=500", "--set", "n_k=17",
                   "--set", "check_convergence=false", "--out", str(out)])
        assert rc == 0
        header, rows = read_csv(str(out) + ".csv")
        assert header == ["k_over_qp", "re_l", "im_l", "abs_l"]
        assert len(rows) == 17
        assert rows[0][1] > rows[-1][1]  # rolls off with k
        report = read_manifest(out)["report"]
        assert report["eta"] == pytest.approx(0.816)
        assert report["diffusion_D"] == pytest.approx(53290.0)

    def test_beam_filter_zero_slice_is_identity(self, tmp_path):
        out = tmp_path / "beam"
        rc = main(["beam_filter", "--set", "gamma_pcc=5", "--set", "gamma_vcc=0.025",
                   "--set", "gamma_g=0.001", "--set", "n_par=400",
                   "--set", "slice_length=0", "--set", "check_convergence=false",
                   "--out", str(out)])
        assert rc == 0
        report = read_manifest(out)["report"]
        assert report["power_out"] == pytest.approx(report["power_in"], rel=1e-12)
        prof = load_profile(str(out) + ".profile.txt", fmt="text")
        assert prof.samples.shape == (128, 128)

    def test_ramsey_outputs(self, tmp_path):
        out = tmp_path / "rms"
        rc = main(["ramsey", "--set", "gamma_pcc=5", "--set", "gamma_vcc=0.025",
                   "--set", "gamma_g=0.001", "--set", "half_width_a=0.005",
                   "--set", "ramsey_n=3", "--set", "ramsey_span=0.004",
                   "--set", "n_par=400", "--set", "check_convergence=false",
                   "--out", str(out)])
        assert rc == 0
        report = read_manifest(out)["report"]
        assert report["qp_vth_bridge"] == pytest.approx(36.622490032397494, rel=1e-9)
        assert report["diffusion_d"] == pytest.approx(8.267709317038288e-10, rel=1e-9)
        assert report["v_th_si"] == pytest.approx(171.39325335162027, rel=1e-9)
        header, rows = read_csv(str(out) + ".csv")
        assert header == ["deltap", "re_response", "im_response"]
        mid = [r[2] for r in rows if r[0] == 0.0]
        assert mid and all(r[2] <= mid[0] + 1e-12 for r in rows)


class TestMainErrors:
    def test_unknown_target(self, capsys):
        assert main(["fig99"]) == 1
        assert "error: unknown scenario or preset" in capsys.readouterr().err

    def test_malformed_set_flag(self, capsys):
        assert main(["at_rest", "--set", "gamma_pcc"]) == 1
        assert "key=value" in capsys.readouterr().err

    def test_out_of_range_value(self, capsys):
        assert main(["at_rest", "--set", "gamma_pcc=-2"]) == 1
        assert "outside allowed range" in capsys.readouterr().err

    def test_config_file_must_be_object(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("[1, 2]")
        assert main(["at_rest", "--config", str(bad)]) == 1
        assert "JSON object" in capsys.readouterr().err
