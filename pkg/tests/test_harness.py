"""Experiment harness: strict config loading, report tables, plots, the
CLI entry point, and the experiment helpers."""

import numpy as np
import pytest

from nclab import WorldLine, integrate_geodesic, slice_through, total_mass
from nclab.harness import (
    CheckRow,
    ConfigError,
    ExperimentConfig,
    SUMMARY_COLUMNS,
    SpacetimeSpec,
    all_passed,
    build_body,
    check_spacetime_report,
    fmt,
    format_check,
    line_plot,
    load_config,
    parse_config,
    slice_times,
    spacetime_bundle,
    write_summary,
)
from nclab.harness.cli import main
from nclab.harness.experiments import _fit_line


GOLDEN = """
[spacetime]
kind = "harmonic"
strength = 0.25
extent = 1.5

[body]
event = [-0.4, 0.3, 0.0, 0.0]
velocity = [1.0, 0.0, 0.5, 0.0]
radii = [0.3, 0.15]
window = 0.8
nodes_across = 12

[slices]
count = 4
margin = 0.1

[equivalence]
count = 6
seed = 7

[tolerances]
quadrature = 2e-4

[output]
dir = "from_file"
threads = 2
"""


def write_cfg(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestConfigLoading:
    def test_golden_file(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path, GOLDEN))
        assert cfg.spacetime.kind == "harmonic"
        assert cfg.spacetime.strength == 0.25
        assert cfg.body.radii == (0.3, 0.15)
        assert cfg.body.event == (-0.4, 0.3, 0.0, 0.0)
        assert cfg.slices.count == 4
        assert cfg.equivalence.seed == 7
        assert cfg.tolerances.quadrature == 2e-4
        assert cfg.tolerances.compatibility == 1e-6  # untouched default
        assert str(cfg.out_dir) == "from_file"
        assert cfg.threads == 2
        assert cfg.tolerance_scale == 1.0

    def test_empty_config_gets_defaults(self):
        cfg = parse_config({})
        assert cfg.spacetime.kind == "flat"
        assert cfg.body.window == 1.0
        assert str(cfg.out_dir) == "out"
        assert cfg.threads == 1

    def test_cli_overrides_beat_file(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path, GOLDEN), out_dir="cli_dir",
                          threads=5, tolerance_scale=0.5)
        assert str(cfg.out_dir) == "cli_dir"
        assert cfg.threads == 5
        assert cfg.tolerance_scale == 0.5

    def test_unknown_key_names_path(self):
        with pytest.raises(ConfigError, match=r"body\.radius"):
            parse_config({"body": {"radius": 0.2}})

    def test_unknown_table_rejected(self):
        with pytest.raises(ConfigError, match=r"\[bodies\]"):
            parse_config({"bodies": {}})

    def test_nested_table_rejected(self):
        with pytest.raises(ConfigError, match="not a table"):
            parse_config({"body": {"window": {"value": 1.0}}})

    def test_unknown_output_key(self):
        with pytest.raises(ConfigError, match=r"output\.folder"):
            parse_config({"output": {"folder": "x"}})

    def test_bad_radii(self):
        with pytest.raises(ConfigError, match="strictly decreasing"):
            parse_config({"body": {"radii": [0.1, 0.2]}})
        with pytest.raises(ConfigError, match="positive"):
            parse_config({"body": {"radii": [0.2, -0.1]}})
        with pytest.raises(ConfigError, match="positive"):
            parse_config({"body": {"radii": []}})

    def test_nonpositive_tolerance(self):
        with pytest.raises(ConfigError, match=r"tolerances\.quadrature"):
            parse_config({"tolerances": {"quadrature": 0.0}})

    def test_bad_spacetime_kind(self):
        with pytest.raises(ConfigError, match="spacetime.kind"):
            parse_config({"spacetime": {"kind": "spherical"}})

    def test_bad_slice_margin(self):
        with pytest.raises(ConfigError, match="margin"):
            parse_config({"slices": {"margin": 0.5}})

    def test_malformed_toml_names_file(self, tmp_path):
        path = write_cfg(tmp_path, "[body\nwindow = 1", name="broken.toml")
        with pytest.raises(ConfigError, match="broken.toml"):
            load_config(path)

    def test_threshold_applies_scale(self):
        cfg = parse_config({}).replace(tolerance_scale=3.0)
        assert cfg.threshold("quadrature") == pytest.approx(3e-4)
        assert parse_config({}).threshold("quadrature") == pytest.approx(1e-4)

    def test_point_mass_excludes_ball_by_default(self):
        spec = SpacetimeSpec(kind="point_mass", extent=2.0)
        assert spec.ball() == 0.3
        assert spec.box().exclude_radius == 0.3
        assert SpacetimeSpec(kind="flat").ball() == 0.0
        custom = SpacetimeSpec(kind="point_mass", exclude_radius=0.5)
        assert custom.box().exclude_radius == 0.5


class TestReports:
    def test_fmt_canonical(self):
        assert fmt(0.0) == "0"
        assert fmt(-0.0) == "0"
        assert fmt(1.5) == "1.5"
        assert fmt(2) == "2"
        assert float(fmt(1.23456789012345e-7)) == pytest.approx(
            1.23456789012345e-7, rel=1e-11)

    def test_check_row_status(self):
        good = CheckRow("alpha", 1e-9, 1e-6, True)
        bad = CheckRow("beta", 1.0, 1e-6, False, notes="why")
        assert good.status == "PASS" and bad.status == "FAIL"
        assert all_passed([good]) and not all_passed([good, bad])
        line = format_check(bad)
        assert "FAIL" in line and "beta" in line and "why" in line

    def test_write_summary_deterministic(self, tmp_path):
        rows = [CheckRow("a", 1.25e-7, 1e-6, True),
                CheckRow("b", 0.0, 1e-6, True, notes="n")]
        path = tmp_path / "deep" / "summary.csv"
        write_summary(path, rows)
        first = path.read_bytes()
        lines = first.decode().splitlines()
        assert lines[0].split(",") == SUMMARY_COLUMNS
        assert lines[1] == "a,1.25e-07,1e-06,PASS,"
        assert b"\r" not in first
        write_summary(path, rows)
        assert path.read_bytes() == first


class TestSvg:
    def test_line_plot_deterministic(self, tmp_path):
        path = tmp_path / "fig.svg"
        series = [("one", [1, 2, 3], [1.0, 4.0, 9.0]),
                  ("two", [1, 2, 3], [2.0, 3.0, 5.0])]
        line_plot(path, series, title="demo", xlabel="x", ylabel="y")
        first = path.read_text()
        assert first.startswith("<svg ")
        assert "polyline" in first and "demo" in first
        line_plot(path, series, title="demo", xlabel="x", ylabel="y")
        assert path.read_text() == first

    def test_log_axes_skip_nonpositive(self, tmp_path):
        path = tmp_path / "log.svg"
        line_plot(path, [("d", [0.0, 0.1, 0.2], [0.0, 1e-3, 1e-2])],
                  title="t", xlabel="x", ylabel="y", logx=True, logy=True)
        assert "<svg" in path.read_text()


class TestExperimentHelpers:
    def test_fit_line_exact(self):
        times = np.linspace(0.0, 1.0, 9)
        u_true = np.array([1.0, 0.3, -0.2, 0.1])
        events = np.array([-0.1, 0.4, 0.0, 0.2]) + times[:, None] * u_true
        track = WorldLine(times, events, np.tile(u_true, (9, 1)),
                          parametrization="time")
        u, resid = _fit_line(track)
        assert resid < 1e-12
        assert u[0] > 0
        assert np.max(np.abs(u - u_true / np.linalg.norm(u_true))) < 1e-12

    def test_slice_times_trims_margin(self, drift_body):
        cfg = parse_config({"slices": {"count": 5, "margin": 0.1}})
        ts = slice_times(drift_body, cfg)
        lv = drift_body.level_times
        window = lv[-1] - lv[0]
        assert len(ts) == 5
        assert np.all(np.diff(ts) > 0)
        assert ts[0] >= lv[0] + 0.1 * window - 1e-12
        assert ts[-1] <= lv[-1] - 0.1 * window + 1e-12

    def test_slice_times_rejects_oversubscription(self, drift_body):
        cfg = parse_config({"slices": {"count": 4000}})
        with pytest.raises(ConfigError, match="slice plan"):
            slice_times(drift_body, cfg)

    def test_bundle_flat_kind(self):
        cfg = parse_config({"spacetime": {"kind": "flat", "extent": 1.0}})
        bundle = spacetime_bundle(cfg)
        assert bundle.kind == "flat"
        ev = np.zeros((1, 4))
        assert np.max(np.abs(bundle.st.op.coefficients(ev))) == 0.0
        assert bundle.st.box.extent[0] == pytest.approx(2.0)

    def test_leak_rate_reaches_body(self, flat_st):
        line = integrate_geodesic(
            flat_st.op, [-0.15, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0],
            0.3, 1e-10)
        cfg = parse_config({"body": {
            "event": [-0.15, 0.0, 0.0, 0.0],
            "velocity": [1.0, 0.0, 0.0, 0.0],
            "radii": [0.2], "window": 0.3, "nodes_across": 12,
            "leak_rate": 0.8,
        }})
        leaky = build_body(flat_st, line, 0.2, cfg)
        t0, t1 = float(leaky.level_times[2]), float(leaky.level_times[-3])
        m0 = total_mass(leaky, slice_through(leaky, t0), flat_st.op)
        m1 = total_mass(leaky, slice_through(leaky, t1), flat_st.op)
        assert m1 < m0 * (1.0 - 0.05)


class TestCli:
    def flat_cfg(self, tmp_path):
        return write_cfg(tmp_path, '[spacetime]\nkind = "flat"\n')

    def test_check_spacetime_passes(self, tmp_path, capsys):
        code = main(["check-spacetime", str(self.flat_cfg(tmp_path)),
                     "--out", str(tmp_path / "run")])
        out = capsys.readouterr().out
        assert code == 0
        assert out.count("PASS") == 5 and "FAIL" not in out
        summary = tmp_path / "run" / "check_spacetime" / "summary.csv"
        lines = summary.read_text().splitlines()
        assert lines[0].split(",") == SUMMARY_COLUMNS
        assert len(lines) == 6

    def test_zero_tolerance_scale_fails_everything(self, tmp_path, capsys):
        code = main(["check-spacetime", str(self.flat_cfg(tmp_path)),
                     "--out", str(tmp_path / "run"),
                     "--tolerance-scale", "0"])
        out = capsys.readouterr().out
        assert code == 1
        assert out.count("FAIL") == 5 and "PASS" not in out

    def test_bad_config_exits_2(self, tmp_path, capsys):
        path = write_cfg(tmp_path, "[body]\nradius = 0.2\n")
        code = main(["check-spacetime", str(path),
                     "--out", str(tmp_path / "run")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_file_exits_2(self, tmp_path, capsys):
        code = main(["check-spacetime", str(tmp_path / "nope.toml")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_command_rejected(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["frobnicate", str(self.flat_cfg(tmp_path))])

    def test_direct_report_respects_scale(self, tmp_path):
        cfg = parse_config({}, out_dir=tmp_path / "direct")
        report = check_spacetime_report(cfg)
        assert report.passed
        scaled = check_spacetime_report(cfg.replace(tolerance_scale=0.0))
        assert not scaled.passed
        assert not any(r.passed for r in scaled.rows)
