import json
import math

import numpy as np
import pytest

from apalm import io as apio
from apalm.cli import main
from apalm.config import ConfigError, parse_config
from apalm.engine import EngineConfig, aalm
from apalm.alm import AlmConfig
from apalm.problems import SolutionPoint, make_builtin


BASE = {
    "problem": {"name": "cubic1d"},
    "alm": {"constraint": "crisfield", "psi": 1.0},
    "engine": {"delta_L": 0.4, "steps": 15},
}


def doc(**overrides):
    out = json.loads(json.dumps(BASE))
    for key, val in overrides.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key].update(val)
        else:
            out[key] = val
    return out


class TestParseConfig:
    def test_minimal(self):
        cfg = parse_config(json.dumps(doc()))
        assert cfg.problem_name == "cubic1d"
        assert cfg.alm.constraint == "crisfield"
        assert cfg.engine.delta_L == 0.4
        assert cfg.workers == 1
        assert cfg.transport == "thread"

    def test_defaults_without_alm_section(self):
        d = doc()
        del d["alm"]
        cfg = parse_config(json.dumps(d))
        assert cfg.alm.psi == 1.0

    @pytest.mark.parametrize("mutate,needle", [
        (lambda d: d.update(bogus=1), "bogus"),
        (lambda d: d["alm"].update(psi2=1.0), "psi2"),
        (lambda d: d["engine"].update(tol=1e-2), "tol"),
        (lambda d: d["problem"].update(extra=1), "extra"),
    ])
    def test_unknown_keys_named(self, mutate, needle):
        d = doc()
        mutate(d)
        with pytest.raises(ConfigError, match=needle):
            parse_config(json.dumps(d))

    @pytest.mark.parametrize("mutate", [
        lambda d: d["engine"].update(delta_L=-1.0),
        lambda d: d["engine"].update(steps=0),
        lambda d: d["alm"].update(psi=-0.5),
        lambda d: d["alm"].update(constraint="secant"),
        lambda d: d.update(workers=0),
        lambda d: d.update(transport="smoke-signal"),
        lambda d: d.update(observable_index=-1),
    ])
    def test_constraint_violations_rejected(self, mutate):
        d = doc()
        mutate(d)
        with pytest.raises(ConfigError):
            parse_config(json.dumps(d))

    @pytest.mark.parametrize("missing", ["problem", "engine"])
    def test_required_sections(self, missing):
        d = doc()
        del d[missing]
        with pytest.raises(ConfigError, match=missing):
            parse_config(json.dumps(d))

    def test_invalid_json(self):
        with pytest.raises(ConfigError):
            parse_config("{not json")

    @pytest.mark.parametrize("payload", [
        # structural sweep over step length, metric weight, tolerances
        doc(alm={"psi": 1.0}, engine={"delta_L": 30.0, "steps": 3,
                                      "tol_lower": 1e-2, "tol_upper": 1e-2}),
        doc(alm={"psi": 0.0}, engine={"delta_L": 0.5, "steps": 10}),
        doc(engine={"delta_L": 5e-5, "steps": 4, "tol_lower": 1e-3,
                    "tol_upper": 1e-3}),
        doc(engine={"delta_L": 5.0, "steps": 4, "tol_lower": 1e-3,
                    "tol_upper": 1e-3}),
    ])
    def test_representative_configs_parse(self, payload):
        cfg = parse_config(json.dumps(payload))
        assert cfg.engine.steps >= 1


def small_run():
    p = make_builtin("cubic1d")
    return aalm(p, AlmConfig(constraint="crisfield", psi=1.0,
                             newton_tol=1e-12),
                EngineConfig(delta_L=0.4, steps=15))


class TestCsv:
    def test_round_trip_exact(self, tmp_path):
        rows = small_run().collect()
        path = tmp_path / "out.csv"
        apio.write_csv(rows, str(path))
        back = apio.read_csv(str(path))
        assert len(back) == len(rows)
        for (ba, xa, sa, la, wa), (bb, xb, sb, lb, wb) in zip(rows, back):
            assert (ba, la) == (bb, lb)
            assert xa == xb and sa == sb  # 17 significant digits: exact
            assert wa.lam == wb.lam
            assert np.array_equal(wa.u, wb.u)

    def test_column_contract_on_analytic_path(self, tmp_path):
        rows = small_run().collect()
        path = tmp_path / "out.csv"
        apio.write_csv(rows, str(path))
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        assert header == ["branch", "xi", "s", "level", "lambda", "u0"]
        for _, _, _, _, w in apio.read_csv(str(path)):
            assert abs(w.lam - (w.u[0] ** 3 - 3 * w.u[0])) <= 1e-8

    def test_norm_columns_for_large_systems(self, tmp_path):
        u = np.arange(20, dtype=float)
        rows = [(0, 0.0, 0.0, 0, SolutionPoint(u, 1.0))]
        path = tmp_path / "big.csv"
        apio.write_csv(rows, str(path), observable_index=3)
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            rec = fh.readline().strip().split(",")
        assert header[-2:] == ["u_norm", "u3"]
        assert float(rec[-2]) == pytest.approx(np.linalg.norm(u))
        assert float(rec[-1]) == 3.0
        with pytest.raises(ValueError):
            apio.read_csv(str(path))

    def test_sorted_by_branch_then_xi(self, tmp_path):
        rows = [(1, 0.0, 0.0, 0, SolutionPoint(np.zeros(1), 0.0)),
                (0, 0.5, 1.0, 0, SolutionPoint(np.ones(1), 1.0)),
                (0, 0.0, 0.0, 0, SolutionPoint(np.zeros(1), 0.0))]
        path = tmp_path / "sorted.csv"
        apio.write_csv(rows, str(path))
        back = apio.read_csv(str(path))
        assert [(b, x) for b, x, *_ in back] == [(0, 0.0), (0, 0.5), (1, 0.0)]


class TestCompare:
    def test_identical_runs(self):
        rows = small_run().collect()
        report = apio.compare(rows, rows)
        assert report.keys_match
        assert report.max_deviation == 0.0
        assert report.ok(0.0)

    def test_value_deviation(self):
        rows = small_run().collect()
        other = list(rows)
        b, xi, s, lvl, w = other[3]
        other[3] = (b, xi, s, lvl, SolutionPoint(w.u + 1e-6, w.lam))
        report = apio.compare(rows, other)
        assert report.keys_match
        assert report.max_deviation == pytest.approx(1e-6)
        assert not report.ok(1e-9)

    def test_key_mismatch(self):
        rows = small_run().collect()
        report = apio.compare(rows, rows[:-1])
        assert not report.keys_match
        assert report.missing_keys


class TestScaleHarness:
    def test_single_count_well_formed(self, tmp_path):
        cfg = parse_config(json.dumps(doc(engine={"steps": 6})))
        samples = apio.scale_harness(cfg, [1], repeats=2)
        assert len(samples) == 1
        s = samples[0]
        assert s.workers == 1
        assert s.parallel_min <= s.parallel_mean <= s.parallel_max
        out = tmp_path / "scale.csv"
        apio.write_scale_csv(samples, str(out))
        header = out.read_text().splitlines()[0].split(",")
        assert header[0] == "workers" and len(header) == 7

    def test_empty_counts_rejected(self):
        cfg = parse_config(json.dumps(doc()))
        with pytest.raises(ValueError):
            apio.scale_harness(cfg, [])


def write_cfg(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


class TestMain:
    def test_run_writes_csv_and_summary(self, tmp_path, capsys):
        out = tmp_path / "run.csv"
        cfg = write_cfg(tmp_path, doc(output=str(out)))
        assert main(["run", cfg]) == 0
        assert out.exists()
        summary = json.loads((tmp_path / "run.summary.json").read_text())
        assert summary["branches"] == 1
        assert summary["jobs_failed"] == 0
        assert summary["points"] == len(apio.read_csv(str(out)))

    def test_run_without_output_prints_stats(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, doc())
        assert main(["run", cfg]) == 0
        assert "points" in capsys.readouterr().out

    def test_compare_identical(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, doc())
        assert main(["compare", cfg, "--workers", "1,4"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["ok"] is True
        assert report["max_deviation"] == 0.0

    def test_scale_prints_rows(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, doc(engine={"steps": 6}))
        assert main(["scale", cfg, "--workers", "1,2", "--repeats", "1"]) == 0
        out = capsys.readouterr().out
        assert "workers=1" in out and "workers=2" in out

    def test_bad_config_exit_code(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, doc(bogus=1))
        assert main(["run", cfg]) == 2
        assert "bogus" in capsys.readouterr().err

    def test_missing_file_exit_code(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.json")]) == 2
