import json

import numpy as np
import pytest

from rankhier import cli
from rankhier.conic import PSD, ProgramBuilder


def eig_program_dict():
    b = ProgramBuilder("max")
    h = b.add_block(PSD, 2)
    b.add_objective_sym(h, np.diag([1.0, -1.0]))
    r = b.new_row(1.0)
    b.row_add_sym(r, h, np.eye(2))
    return b.build().to_json_dict()


class TestExitCodes:
    def test_maxcut_ok(self, capsys):
        rc = cli.main(["maxcut", "--graph6", "Bw"])
        out = capsys.readouterr().out
        assert rc == cli.EXIT_OK
        assert "instance: maxcut:Bw" in out
        assert "bruteforce: 2" in out

    def test_orthrep_excluded_is_exit_2(self, tmp_path):
        edges = tmp_path / "g.json"
        edges.write_text(json.dumps({"n_vertices": 3, "edges": []}))
        rc = cli.main(["orthrep", "--edges", str(edges), "--k", "2"])
        assert rc == cli.EXIT_EXCLUDED

    def test_bad_graph6_is_exit_1(self, capsys):
        rc = cli.main(["theta", "--graph6", "\x01nope"])
        assert rc == cli.EXIT_ERROR
        assert "error" in capsys.readouterr().err

    def test_missing_file_is_exit_1(self, capsys):
        rc = cli.main(["boolean", "--problem", "/nonexistent.json"])
        assert rc == cli.EXIT_ERROR

    def test_missing_graph_args_is_exit_1(self, capsys):
        rc = cli.main(["maxcut"])
        assert rc == cli.EXIT_ERROR


class TestReports:
    def test_out_file_written(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        rc = cli.main(["theta", "--graph6", "Bw", "--out", str(out)])
        assert rc == cli.EXIT_OK
        rep = json.loads(out.read_text())
        assert rep["levels"]["1"]["value"] == pytest.approx(1.0, abs=1e-6)
        assert rep["version"]

    def test_solve_subcommand(self, tmp_path, capsys):
        prog = tmp_path / "prog.json"
        prog.write_text(json.dumps(eig_program_dict()))
        rc = cli.main(["solve", "--problem", str(prog)])
        assert rc == cli.EXIT_OK
        assert "Optimal" in capsys.readouterr().out

    def test_sweep_subcommand(self, tmp_path, capsys):
        from rankhier.linalg import REAL, fmat
        from rankhier.problem import RankSdp
        c = np.diag([1.0, -1.0, 0.5])
        p = RankSdp(REAL, 3, fmat(c, field=REAL))
        f = tmp_path / "p.json"
        f.write_text(json.dumps(p.to_json_dict()))
        rc = cli.main(["sweep-k", "--problem", str(f), "--ks", "1,2"])
        assert rc == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "k=1:" in out and "k=2:" in out

    def test_boolean_subcommand(self, tmp_path, capsys):
        f = tmp_path / "b.json"
        f.write_text(json.dumps(
            {"q": [[0.0, 0.5], [0.5, 0.0]], "c": [0.0, 0.0]}))
        rc = cli.main(["boolean", "--problem", str(f), "--levels", "2"])
        assert rc == cli.EXIT_OK
        assert "enumeration: 1" in capsys.readouterr().out


class TestVerdictCollection:
    def test_nested_verdicts_found(self):
        report = {"verdicts": {"real": {"verdict": "ExcludedAtLevel2"},
                               "complex": {"verdict": "Inconclusive"}}}
        out = []
        cli._collect_verdicts(report, out)
        assert "ExcludedAtLevel2" in out

    def test_plain_strings_found(self):
        out = []
        cli._collect_verdicts({"verdicts": {"2": "Unfaithful"}}, out)
        assert out == ["Unfaithful"]


class TestBench:
    def job(self, g6):
        return {"subcommand": "theta", "request": {"graph": {"graph6": g6}}}

    def test_hash_is_stable_and_order_free(self):
        a = cli._instance_hash("theta", {"x": 1, "y": 2})
        b = cli._instance_hash("theta", {"y": 2, "x": 1})
        assert a == b and len(a) == 16
        assert a != cli._instance_hash("theta", {"x": 1, "y": 3})

    def test_run_and_cache(self, tmp_path, capsys):
        problems = tmp_path / "jobs.jsonl"
        problems.write_text("\n".join(
            json.dumps(self.job(g)) for g in ("A_", "Bw")) + "\n")
        out = tmp_path / "results.jsonl"
        rc = cli.main(["bench", "--problems", str(problems),
                       "--jobs", "1", "--out", str(out)])
        assert rc == cli.EXIT_OK
        first = capsys.readouterr().out
        assert "2 to run" in first
        recs = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(recs) == 2 and all(r["ok"] for r in recs)
        # Second invocation hits the cache and runs nothing.
        rc = cli.main(["bench", "--problems", str(problems),
                       "--jobs", "1", "--out", str(out)])
        assert rc == cli.EXIT_OK
        assert "2 cached, 0 to run" in capsys.readouterr().out

    def test_failures_recorded(self, tmp_path, capsys):
        problems = tmp_path / "jobs.jsonl"
        problems.write_text(json.dumps(
            {"subcommand": "theta",
             "request": {"graph": {"graph6": "\x01bad"}}}) + "\n")
        out = tmp_path / "results.jsonl"
        rc = cli.main(["bench", "--problems", str(problems),
                       "--jobs", "1", "--out", str(out)])
        assert rc == cli.EXIT_ERROR
        rec = json.loads(out.read_text().splitlines()[0])
        assert not rec["ok"] and "error" in rec

    def test_parallel_jobs(self, tmp_path, capsys):
        problems = tmp_path / "jobs.jsonl"
        problems.write_text("\n".join(
            json.dumps(self.job(g)) for g in ("A_", "Bw", "A?")) + "\n")
        out = tmp_path / "results.jsonl"
        rc = cli.main(["bench", "--problems", str(problems),
                       "--jobs", "2", "--out", str(out)])
        assert rc == cli.EXIT_OK
        recs = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(recs) == 3 and all(r["ok"] for r in recs)
