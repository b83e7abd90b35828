import subprocess
import sys

from sinrcast.cli import main
from sinrcast.geometry import read_topology


def hash_line(text):
    return next(line for line in text.splitlines() if line.startswith("trace_hash"))


def test_gen_line_geometric(capsys, tmp_path):
    assert main(["gen", "--family", "line-geometric", "--n", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert [line.split(",")[1].strip() for line in out[1:]] == ["0", "0.5", "0.75"]
    assert main(["gen", "--family", "line-geometric", "--n", "3", "--out-dir", str(tmp_path)]) == 0
    path = capsys.readouterr().out.strip()
    assert read_topology(path).positions.ravel().tolist() == [0.0, 0.5, 0.75]


def test_run_twice_same_hash(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("[topology]\nfamily = uniform-square\nn = 40\n[protocol]\nname = s-broadcast\n")
    outs = []
    for _ in range(2):
        assert main(["run", "--config", str(cfg), "--seed", "7", "--out-dir", str(tmp_path / "o")]) == 0
        outs.append(capsys.readouterr().out)
    assert hash_line(outs[0]) == hash_line(outs[1])
    assert (tmp_path / "o" / "trace-7.csv").exists()
    assert "trace_hash" in (tmp_path / "o" / "summary-7.txt").read_text()


def test_flags_override_config(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("[topology]\nn = 40\n[protocol]\nname = s-broadcast\n")
    assert main(["run", "--config", str(cfg), "--protocol", "nos-broadcast", "--n", "20", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert "protocol = nos-broadcast" in out and "stations = 20" in out


def test_line_diameter_needs_param(capsys):
    base = ["run", "--protocol", "s-broadcast", "--family", "line-diameter", "--n", "16", "--seed", "1"]
    assert main(base) == 2
    assert main(base + ["--param", "diameter=4"]) == 0
    assert "success = true" in capsys.readouterr().out
    assert main(base + ["--param", "diameter"]) == 2


def test_facts_passes(capsys):
    assert main(["facts", "--vectors", "2000", "--trials", "200"]) == 0
    assert "0 counterexamples" in capsys.readouterr().out


def test_verify_coloring(capsys, tmp_path):
    assert main(["gen", "--family", "line-uniform", "--n", "4", "--param", "spacing=0.05",
                 "--out-dir", str(tmp_path)]) == 0
    topo = capsys.readouterr().out.strip()
    good = tmp_path / "good.csv"
    good.write_text("".join(f"{i}, 0.01875\n" for i in range(4)))
    assert main(["verify", "--topology", topo, "--coloring", str(good)]) == 0
    bad = tmp_path / "bad.csv"
    bad.write_text("".join(f"{i}, 0.9\n" for i in range(4)))
    assert main(["verify", "--topology", topo, "--coloring", str(bad)]) == 1


def test_usage_errors(capsys):
    assert main(["run", "--bogus"]) == 2
    assert main([]) == 2
    assert main(["run", "--n", "0"]) == 2
    assert main(["verify", "--topology", "/nonexistent", "--coloring", "/nonexistent"]) == 2


def test_calibrate_and_sweep(capsys, tmp_path):
    assert main(["calibrate", "--n", "50", "--seeds", "1", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "tuned.cfg").exists()
    assert main(["sweep", "--protocol", "s-broadcast", "--seeds", "2", "--diameters", "2,4,8",
                 "--parallel", "2", "--out-dir", str(tmp_path)]) == 0
    assert "fit sb" in capsys.readouterr().out
    assert (tmp_path / "sweep.csv").read_text().startswith("diameter,n,seed")


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "sinrcast.cli", "gen", "--family", "grid", "--n", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("#space=euclidean2")
