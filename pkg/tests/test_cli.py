import json

import pytest

from oracles import brute_force_svrpll
from svrpll.cli import (EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, EXIT_USAGE, aggregate, main, run_batch_instance)
from svrpll.bnc import SolveParams
from svrpll.instance import Instance, compute_cover_sets, compute_edge_costs, generate_instance
from svrpll.model import Solution, build_model, check_feasible
from svrpll.sim import TRACE_COLUMNS


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_writes_instance(tmp_path, capsys):
    path = tmp_path / "a.json"
    code, out, _ = run(["gen", "--targets", "15", "--seed", "1", "--out", str(path)], capsys)
    assert code == EXIT_OK
    inst = Instance.load(path)
    assert inst.n_targets == 15 and inst.n_sites == 75
    assert "verdict:" in out


def test_gen_deterministic_bytes(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(["gen", "--targets", "9", "--seed", "4", "--out", str(a)], capsys)
    run(["gen", "--targets", "9", "--seed", "4", "--out", str(b)], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_gen_usage_errors(tmp_path, capsys):
    code, _, err = run(["gen", "--targets", "1", "--seed", "0", "--out", str(tmp_path / "x.json")], capsys)
    assert code == EXIT_USAGE and "targets" in err
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--targets", "many", "--seed", "0", "--out", "x"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE


def test_gen_cost_overrides(tmp_path, capsys):
    path = tmp_path / "a.json"
    run(["gen", "--targets", "4", "--seed", "0", "--out", str(path), "--cost", "2.5"], capsys)
    assert Instance.load(path).landmark_cost == [2.5] * 20
    costs = tmp_path / "c.json"
    costs.write_text(json.dumps([float(k) for k in range(20)]))
    run(["gen", "--targets", "4", "--seed", "0", "--out", str(path), "--cost-file", str(costs)], capsys)
    assert Instance.load(path).landmark_cost == [float(k) for k in range(20)]
    costs.write_text("[1, 2]")
    code, _, _ = run(["gen", "--targets", "4", "--seed", "0", "--out", str(path), "--cost-file", str(costs)], capsys)
    assert code == EXIT_USAGE


def toy_square(tmp_path):
    sq = [(0, 0), (10, 0), (10, 10), (0, 10)]
    inst = Instance(sq, [(5, 5), (4, 6), (6, 4)], 35.0, [1.0, 1.0, 1.0])
    path = tmp_path / "toy.json"
    inst.save(path)
    return inst, path


def test_solve_toy(tmp_path, capsys):
    inst, ipath = toy_square(tmp_path)
    spath = tmp_path / "s.json"
    code, out, _ = run(["solve", "--instance", str(ipath), "--out", str(spath)], capsys)
    assert code == EXIT_OK and "optimal" in out
    sol = Solution.load(spath)
    cov = compute_cover_sets(inst)
    assert check_feasible(build_model(inst, cov, compute_edge_costs(inst)), sol, cov).feasible
    assert sol.objective == pytest.approx(42.0)


def test_solve_infeasible_exit(tmp_path, capsys):
    inst = Instance([(0, 0), (90, 0), (0, 90)], [(45, 45)], 35.0, [1.0])
    path = tmp_path / "inf.json"
    inst.save(path)
    code, _, _ = run(["solve", "--instance", str(path), "--out", str(tmp_path / "s.json")], capsys)
    assert code == EXIT_INFEASIBLE
    assert json.loads((tmp_path / "s.json").read_text())["status"] == "infeasible"


def test_solve_matches_oracle(tmp_path, capsys):
    inst = generate_instance(6, 3, grid_side=50.0, n_sites=8)
    ipath, spath = tmp_path / "i.json", tmp_path / "s.json"
    inst.save(ipath)
    code, _, _ = run(["solve", "--instance", str(ipath), "--out", str(spath)], capsys)
    ref = brute_force_svrpll(inst)
    assert ref is not None and code == EXIT_OK
    assert Solution.load(spath).objective == pytest.approx(ref[0], abs=1e-6)


def test_solve_limit_exit(tmp_path, capsys):
    ipath = tmp_path / "i.json"
    generate_instance(25, 25014).save(ipath)
    code, _, _ = run(["solve", "--instance", str(ipath), "--out", str(tmp_path / "s.json"),
                      "--node-limit", "1"], capsys)
    assert code == 2


def test_solve_io_errors(tmp_path, capsys):
    code, _, _ = run(["solve", "--instance", str(tmp_path / "missing.json"), "--out", str(tmp_path / "s")], capsys)
    assert code == EXIT_IO
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, _ = run(["solve", "--instance", str(bad), "--out", str(tmp_path / "s")], capsys)
    assert code == EXIT_IO
    bad.write_text('{"targets": [[0, 0]]}')
    code, _, _ = run(["solve", "--instance", str(bad), "--out", str(tmp_path / "s")], capsys)
    assert code == EXIT_IO


@pytest.fixture
def case1_files(case1, tmp_path):
    inst, sol = case1
    ipath, spath = tmp_path / "i.json", tmp_path / "s.json"
    inst.save(ipath)
    sol.save(spath)
    return ipath, spath


def test_sim_outputs(case1_files, tmp_path, capsys):
    ipath, spath = case1_files
    out_dir = tmp_path / "sim"
    code, out, _ = run(["sim", "--instance", str(ipath), "--solution", str(spath), "--gain", "2.0",
                        "--min-dist", "1.0", "--range", "35", "--steps", "3000", "--seed", "1",
                        "--out-dir", str(out_dir)], capsys)
    assert code == EXIT_OK
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["route_completed"] and summary["steps"] <= 3000
    assert (out_dir / "trace.csv").read_text().splitlines()[0] == ",".join(TRACE_COLUMNS)
    for name in ("trajectory.svg", "errors.svg"):
        text = (out_dir / name).read_text()
        assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    assert "<polyline" in (out_dir / "trajectory.svg").read_text()


def test_sim_reduced_range_lower_visibility(case1_files, tmp_path, capsys):
    ipath, spath = case1_files
    fractions = {}
    for rng in ("35", "20"):
        out_dir = tmp_path / f"r{rng}"
        run(["sim", "--instance", str(ipath), "--solution", str(spath), "--range", rng, "--out-dir", str(out_dir)],
            capsys)
        fractions[rng] = json.loads((out_dir / "summary.json").read_text())["two_visible_fraction"]
    assert fractions["20"] < fractions["35"]


def test_sim_zero_noise(case1_files, tmp_path, capsys):
    ipath, spath = case1_files
    out_dir = tmp_path / "z"
    code, _, _ = run(["sim", "--instance", str(ipath), "--solution", str(spath), "--sigma-bearing", "0",
                      "--q", "0", "--out-dir", str(out_dir)], capsys)
    s = json.loads((out_dir / "summary.json").read_text())
    assert code == EXIT_OK and s["route_completed"]
    assert s["rmse_position"] < 1e-9


def test_sim_refuses_infeasible(case1_files, tmp_path, capsys):
    ipath, spath = case1_files
    data = json.loads(spath.read_text())
    data["sites"] = data["sites"][:1]
    data["landmark_cost"] = 1.0
    data["objective"] = data["travel_cost"] + 1.0
    spath.write_text(json.dumps(data))
    code, _, err = run(["sim", "--instance", str(ipath), "--solution", str(spath), "--out-dir",
                        str(tmp_path / "x")], capsys)
    assert code == EXIT_INFEASIBLE
    assert "refusing" in err and "coverage" in err
    assert not (tmp_path / "x").exists()


def test_batch_single_bucket(tmp_path, capsys):
    out_dir = tmp_path / "b"
    code, out, _ = run(["batch", "--sizes", "5", "--per-size", "1", "--seed-base", "7", "--out-dir", str(out_dir)],
                       capsys)
    assert code == EXIT_OK
    report = json.loads((out_dir / "report.json").read_text())
    (bucket,) = report["buckets"]
    (rec_path,) = list((out_dir / "instances").glob("*.json"))
    rec = json.loads(rec_path.read_text())
    assert bucket["instances"] == 1
    if rec["status"] == "optimal":
        assert bucket["mean_objective"] == rec["solution"]["objective"]
        assert bucket["mean_landmarks"] == len(rec["solution"]["sites"])
        assert bucket["mean_sec_rows"] == rec["stats"]["sec_rows"]
        assert bucket["mean_wall_time"] == rec["stats"]["wall_time"]
    assert (out_dir / "report.txt").read_text().startswith(" |V|")


def test_batch_means_recomputable(tmp_path, capsys):
    out_dir = tmp_path / "b"
    run(["batch", "--sizes", "6,8", "--per-size", "3", "--out-dir", str(out_dir)], capsys)
    recs = [json.loads(p.read_text()) for p in sorted((out_dir / "instances").glob("*.json"))]
    assert len(recs) == 6
    report = json.loads((out_dir / "report.json").read_text())
    # NaN means never compare equal, so compare the serialized forms
    assert json.dumps(report, sort_keys=True) == json.dumps(aggregate(recs).to_dict(), sort_keys=True)
    for rec in recs:
        if rec["status"] == "optimal":
            assert rec["violations"] == []


def test_batch_records_failures(monkeypatch):
    import svrpll.cli as cli

    def boom(*a, **k):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr(cli, "solve", boom)
    rec = run_batch_instance(6, 1, SolveParams())
    assert rec["status"] == "failed" and "synthetic" in rec["error"]
    rep = aggregate([rec])
    assert rep.buckets[0].failed == 1 and rep.buckets[0].completed == 0


def test_batch_bad_sizes(tmp_path, capsys):
    code, _, _ = run(["batch", "--sizes", "a,b", "--out-dir", str(tmp_path)], capsys)
    assert code == EXIT_USAGE


def test_log_env(monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("SVRPLL_LOG", "INFO")
    inst, ipath = toy_square(tmp_path)
    assert main(["solve", "--instance", str(ipath), "--out", str(tmp_path / "s.json")]) == EXIT_OK
