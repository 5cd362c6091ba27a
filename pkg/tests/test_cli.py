import json
import subprocess
import sys

import numpy as np

from dmkhyper.cli import main
from dmkhyper.image import GrayImage, write_pgm

from oracles import disk_frame

SMALL = ["--n-div", "8", "--n-sinks", "3", "--max-iter", "20", "--beta", "1.5"]


def tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_minimal_solve_layout(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--out", str(out), *SMALL]) == 0
    files = tree(out)
    for name in ("manifest.json", "problem.json", "cost.csv", "traces.csv", "convergence.json",
                 "snapshots/mu.f64", "hypergraphs/t0020.json"):
        assert name in files
    lines = files["cost.csv"].decode().splitlines()
    assert lines[0] == "t,L,E,M"
    assert len(lines) == 1 + 21
    manifest = json.loads(files["manifest.json"])
    assert manifest["config"]["solver"]["beta"] == 1.5
    assert manifest["n_states"] == 21


def test_beta_two_rejected(tmp_path, capsys):
    assert main(["solve", "--out", str(tmp_path / "x"), *SMALL[:-2], "--beta", "2.0"]) == 2
    assert "solver.beta" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_config_error_names_line(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n  "mesh": {"n_div": 8},\n  "solver": {\n    "beta": 2.5\n  }\n}\n')
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:4:" in err and "solver.beta" in err


def test_unknown_field_rejected(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"solver": {"betta": 1.5}}')
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    assert "solver.betta" in capsys.readouterr().err


def test_rerun_is_byte_identical(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["solve", "--out", str(a), *SMALL, "--hypergraphs", "all"]) == 0
    assert main(["solve", "--out", str(b), *SMALL, "--hypergraphs", "all"]) == 0
    assert tree(a) == tree(b)
    # the manifest alone is enough to reproduce the run
    assert main(["solve", "--config", str(a / "manifest.json"), "--out", str(c)]) == 0
    assert tree(c) == tree(a)


def test_props_regenerates_analytics(tmp_path):
    run = tmp_path / "run"
    assert main(["solve", "--out", str(run), *SMALL]) == 0
    before = tree(run)
    assert main(["props", str(run)]) == 0
    assert tree(run) == before
    assert main(["props", str(run), "--threshold-ratio", "0.2"]) == 0
    assert tree(run)["traces.csv"] != before["traces.csv"]


def test_gen_emits_problem(tmp_path, capsys):
    assert main(["gen", "--seed", "5", "--n-div", "16", "--n-sinks", "4"]) == 0
    spec = json.loads(capsys.readouterr().out)
    assert spec["seed"] == 5 and len(spec["sink_centers"]) == 4 and spec["source_center"] == [0.0, 0.0]
    out = tmp_path / "ens.json"
    assert main(["gen", "--ensemble", "--n-problems", "3", "--betas", "1.2,1.8", "--out", str(out)]) == 0
    assert len(json.loads(out.read_text())["jobs"]) == 6


def test_batch_independent_of_parallelism(tmp_path):
    args = ["--n-div", "8", "--n-sinks", "2", "--max-iter", "8", "--n-problems", "2", "--betas", "1.3,1.7"]
    one, two = tmp_path / "one", tmp_path / "two"
    assert main(["batch", "--out", str(one), "--parallelism", "1", *args]) == 0
    assert main(["batch", "--out", str(two), "--parallelism", "2", *args]) == 0
    assert sorted(p.name for p in (one / "jobs").iterdir()) == ["p000_b1.30", "p000_b1.70", "p001_b1.30", "p001_b1.70"]
    assert tree(one) == tree(two)
    agg = (one / "aggregate.csv").read_text().splitlines()
    assert agg[0] == "t,beta,property,s,mean,std,n"
    summary = (one / "summary.csv").read_text().splitlines()
    assert len(summary) == 5


def test_failed_job_recorded_and_exit_code(tmp_path):
    # sinks on a 7-division grid miss the 8-division mesh vertices at this radius
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": {"radius": 1e-4, "sample_grid_divisions": 7}}))
    out = tmp_path / "b"
    rc = main(["batch", "--config", str(cfg), "--out", str(out), "--parallelism", "1", "--n-div", "8",
               "--n-sinks", "2", "--n-problems", "1", "--betas", "1.5"])
    assert rc == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["jobs"][0]["status"] == "failed"


def _frames(tmp_path, radii, size=24):
    names = []
    for i, r in enumerate(radii):
        px = disk_frame(size if i != 99 else size + 1, r)
        write_pgm(tmp_path / f"f{i}.pgm", GrayImage.from_array(px))
        names.append(f"f{i}.pgm")
    return names


def test_image_shrinking_blob(tmp_path):
    names = _frames(tmp_path, (9, 7, 5))
    (tmp_path / "m.json").write_text(json.dumps({"frames": names}))
    out = tmp_path / "out"
    assert main(["image", str(tmp_path / "m.json"), "--out", str(out), "--intensity-threshold", "100"]) == 0
    rows = [r.split(",") for r in (out / "traces.csv").read_text().splitlines()[1:]]
    S = [float(r[-1]) for r in rows if r[3] == "S"]
    assert len(S) == 3 and S[0] > S[1] > S[2]
    assert sorted(p.name for p in (out / "hypergraphs").iterdir()) == ["frame0000.json", "frame0001.json",
                                                                        "frame0002.json"]
    assert "consolidation_window" in json.loads((out / "consolidation.json").read_text())


def test_image_empty_manifest_rejected(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"frames": []}))
    assert main(["image", str(tmp_path / "m.json"), "--out", str(tmp_path / "o")]) == 2


def test_image_mismatched_dimensions_named(tmp_path, capsys):
    names = _frames(tmp_path, (9, 7))
    write_pgm(tmp_path / "odd.pgm", GrayImage.from_array(np.zeros((10, 12), dtype=int)))
    (tmp_path / "m.json").write_text(json.dumps({"frames": names + ["odd.pgm"]}))
    assert main(["image", str(tmp_path / "m.json"), "--out", str(tmp_path / "o")]) == 2
    assert "frame 2" in capsys.readouterr().err


def test_image_corrupt_frame_exit_code(tmp_path):
    names = _frames(tmp_path, (9, 7))
    (tmp_path / "f1.pgm").write_bytes(b"P5\n24 24\n255\n")
    (tmp_path / "m.json").write_text(json.dumps({"frames": names}))
    assert main(["image", str(tmp_path / "m.json"), "--out", str(tmp_path / "o")]) == 4
    assert main(["image", str(tmp_path / "m.json"), "--out", str(tmp_path / "p"), "--permissive"]) == 0


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dmkhyper.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("gen", "solve", "batch", "props", "image"):
        assert cmd in proc.stdout
