import subprocess
import sys

import pytest

from qnrsim.cli import main
from qnrsim.routing import dump_routing
from qnrsim.topology import dump_topology
from qnrsim.workload import dump_flows

from conftest import make_problem


def run(*argv):
    return main([str(a) for a in argv])


def test_pipeline(tmp_path, capsys):
    topo, flows, cur, adm, new, met = (tmp_path / n for n in
                                       ("t.txt", "f.txt", "cur.txt", "adm.txt", "new.txt", "m.txt"))
    assert run("gen-topo", "--K", 4, "-o", topo) == 0
    assert topo.read_text().startswith("20\n")
    assert run("gen-flows", "--topology", topo, "-p", 300, "--seed", 2, "--big-flows", 3, "-o", flows) == 0
    assert flows.read_text().startswith("303\n")
    assert run("admit", "--topology", topo, "--flows", flows, "--demand-scale", 1.25,
               "--admitted", adm, "-o", cur) == 0
    assert run("reconfigure", "--topology", topo, "--flows", adm, "--current", cur, "--max-nodes", 20000,
               "-o", new) == 0
    err = capsys.readouterr().err
    assert "status=" in err
    assert run("metrics", "--topology", topo, "--flows", adm, "--current", cur, "--new", new, "-o", met) == 0
    fields = dict(line.split("=") for line in met.read_text().splitlines())
    assert set(fields) >= {"sftc", "rerouted_count", "max_nftc", "loss_volume_mb"}
    for alg in ("spf", "rqnr"):
        assert run("reconfigure", "--topology", topo, "--flows", adm, "--current", cur, "--algorithm", alg,
                   "--max-nodes", 20000, "-o", tmp_path / f"{alg}.txt") in (0, 1)


def test_reconfigure_infeasible_exits_1(tmp_path, diamond):
    prob = make_problem(diamond, [(0, 3, 95), (0, 3, 96), (0, 3, 97)], [[0, 1, 3]] * 3)
    (tmp_path / "t").write_text(dump_topology(diamond))
    (tmp_path / "f").write_text(dump_flows(prob.flows))
    (tmp_path / "c").write_text(dump_routing(prob.current, prob.flows))
    rc = run("reconfigure", "--topology", tmp_path / "t", "--flows", tmp_path / "f", "--current", tmp_path / "c",
             "--max-hops", 2)
    assert rc == 1


def test_bad_input_exits_2(tmp_path, capsys):
    (tmp_path / "t").write_text("2\n0 0 1\n")
    assert run("gen-flows", "--topology", tmp_path / "t", "-p", 3) == 2
    assert "line 2" in capsys.readouterr().err
    assert run("gen-topo", "--K", 3) == 2
    assert run("sweep", tmp_path / "missing.cfg") == 2
    (tmp_path / "bad.cfg").write_text("nonsense = 1\n")
    assert run("sweep", tmp_path / "bad.cfg") == 2


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        run("reconfigure")
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        run("profile-constraints", "-p", "1,x")
    assert exc.value.code == 2


def test_sweep_and_plot(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("scenario_id = cli\np = 50, 100\nalgorithms = qnr, spf\ntiming = off\nmax_nodes = 5000\n"
                   "plots = false\noutput_dir = out\n")
    assert run("sweep", cfg) == 0
    csv = tmp_path / "out" / "metrics.csv"
    assert len(csv.read_text().splitlines()) == 1 + 4
    assert run("plot", csv, "--out", tmp_path / "plots") == 0
    assert len(list((tmp_path / "plots").glob("*.svg"))) == 6
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    assert run("plot", tmp_path / "bad.csv", "--out", tmp_path / "p2") == 2


def test_profile_command(tmp_path):
    out = tmp_path / "prof.csv"
    assert run("profile-constraints", "-p", "20,40", "--repeats", 1, "-o", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("p,constraint")
    assert len(lines) == 1 + 2 * 7


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qnrsim", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "qnrsim" in proc.stdout
