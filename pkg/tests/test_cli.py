import hashlib
import json

import numpy as np
import pytest

from pstlguard.cli import main
from pstlguard.core import BoundingBox, Detection, GrayImage
from pstlguard.formats import frame_path, write_detections, write_frames
from pstlguard.pstl import load_axioms, parse_axioms

MINI = """
[scene]
frame_count = 5
rng_seed = 4
[detector]
base_fp_rate = 0.5
[train]
frame_count = 200
"""


def digests(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(directory.iterdir())}


@pytest.fixture
def mini_cfg(tmp_path):
    p = tmp_path / "mini.ini"
    p.write_text(MINI)
    return p


def test_simulate_writes_frames_and_logs(tmp_path, mini_cfg):
    out = tmp_path / "scene"
    assert main(["simulate", "--config", str(mini_cfg), "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert [n for n in names if n.endswith(".pgm")] == [f"frame_{i:06d}.pgm" for i in range(5)]
    assert {"gt.jsonl", "manifest.json", "detections.jsonl", "probes.jsonl"} <= set(names)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["frame_count"] == 5
    assert manifest["files"]["gt.jsonl"] == digests(out)["gt.jsonl"]
    assert len((out / "gt.jsonl").read_text().splitlines()) == 15


def test_simulate_is_deterministic(tmp_path, mini_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(mini_cfg), "--out", str(a)]) == 0
    assert main(["--config", str(mini_cfg), "--out", str(b), "simulate"]) == 0
    assert digests(a) == digests(b)
    c = tmp_path / "c"
    assert main(["simulate", "--config", str(mini_cfg), "--seed", "5", "--out", str(c)]) == 0
    assert digests(c)["gt.jsonl"] != digests(a)["gt.jsonl"]


def test_malformed_config_key(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scene]\nframes = 5\n")
    out = tmp_path / "x"
    assert main(["simulate", "--config", str(bad), "--out", str(out)]) == 2
    assert "scene.frames" in capsys.readouterr().err
    assert not out.exists()


def test_missing_out_is_usage_error(capsys):
    assert main(["simulate"]) == 2
    assert "--out" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("trained")
    cfg = root / "mini.ini"
    cfg.write_text(MINI)
    assert main(["simulate", "--split", "train", "--config", str(cfg),
                 "--out", str(root / "train")]) == 0
    assert main(["train", "--config", str(cfg), "--probes", str(root / "train" / "probes.jsonl"),
                 "--out", str(root / "ax")]) == 0
    return root


def test_train_output_reparses(trained):
    axioms = load_axioms(trained / "ax" / "axioms.txt")
    assert len(axioms) >= 1
    sidecar = json.loads((trained / "ax" / "axioms.json").read_text())
    assert {a.name for a in axioms} == {a["name"] for a in sidecar["axioms"]}
    assert 0 < sidecar["targets"]["c_D"] < 1


def test_train_empty_input(tmp_path):
    empty = tmp_path / "probes.jsonl"
    empty.write_text("")
    assert main(["train", "--probes", str(empty), "--out", str(tmp_path / "ax")]) == 1
    assert main(["train", "--probes", str(tmp_path / "nope.jsonl"),
                 "--out", str(tmp_path / "ax")]) == 1


def hand_stream(tmp_path, drop_track_2=True):
    """Two static objects; object 2's crop contrast collapses from frame 3."""
    n = 12
    frames, dets = [], []
    for t in range(n):
        px = np.full((40, 80), 100, dtype=np.uint8)
        px[12:18, 12:18] = 200
        px[12:18, 52:58] = 110 if (drop_track_2 and t >= 3) else 200
        frames.append(GrayImage(px))
        dets += [Detection(t, BoundingBox(10, 10, 10, 10), 0, 0.9, 1),
                 Detection(t, BoundingBox(50, 10, 10, 10), 0, 0.9, 2)]
    write_frames(tmp_path / "frames", frames)
    write_detections(tmp_path / "dets.jsonl", dets)
    (tmp_path / "ax.txt").write_text(
        "axiom floor: Pr(contrast >= 0.3, window=10) >= 0.8\n")
    (tmp_path / "one.ini").write_text("[monitor]\nk_min = 1\n")
    return tmp_path


def run_monitor(root, out="mon"):
    return main(["monitor", "--detections", str(root / "dets.jsonl"),
                 "--frames", str(root / "frames"), "--axioms", str(root / "ax.txt"),
                 "--config", str(root / "one.ini"), "--out", str(root / out)])


def verdicts(root, out="mon"):
    return [json.loads(l) for l in (root / out / "verdicts.jsonl").read_text().splitlines()]


def test_monitor_clean_stream(tmp_path):
    root = hand_stream(tmp_path, drop_track_2=False)
    assert run_monitor(root) == 0
    vs = verdicts(root)
    assert len(vs) == 24 and not any(v["erroneous"] for v in vs)


def test_monitor_flags_injected_track(tmp_path):
    root = hand_stream(tmp_path)
    assert run_monitor(root) == 0
    flagged = {(v["frame"], v["id"]) for v in verdicts(root) if v["erroneous"]}
    # in-bounds fraction for track 2 at frame t is 3 / (t + 1); below 0.8 from frame 3
    assert flagged == {(t, 2) for t in range(3, 12)}


def test_monitor_warns_when_k_min_unreachable(tmp_path, caplog):
    root = hand_stream(tmp_path)
    assert main(["monitor", "--detections", str(root / "dets.jsonl"),
                 "--frames", str(root / "frames"), "--axioms", str(root / "ax.txt"),
                 "--out", str(root / "mon")]) == 0
    assert "k_min=2" in caplog.text
    assert not any(v["erroneous"] for v in verdicts(root))


def test_monitor_missing_frame(tmp_path, capsys):
    root = hand_stream(tmp_path)
    frame_path(root / "frames", 7).unlink()
    assert run_monitor(root) == 1
    assert "frame 7" in capsys.readouterr().err
    assert not (root / "mon").exists()


def report_methods(directory):
    return sorted(json.loads((directory / "report.json").read_text())["per_method"])


def test_run_single_and_all_methods(tmp_path, mini_cfg, trained):
    ax = str(trained / "ax" / "axioms.txt")
    one = tmp_path / "one"
    assert main(["run", "--config", str(mini_cfg), "--axioms", ax, "--methods", "baseline",
                 "--out", str(one)]) == 0
    assert report_methods(one) == ["baseline"]
    assert (one / "curve_baseline.csv").read_text().startswith(
        "threshold,precision,recall,fp_rate,tp_rate\n")
    full, again = tmp_path / "all", tmp_path / "again"
    for d in (full, again):
        assert main(["run", "--config", str(mini_cfg), "--axioms", ax, "--out", str(d)]) == 0
    assert report_methods(full) == ["adaptive", "baseline", "hist_eq"]
    assert digests(full) == digests(again)


def test_run_trains_when_no_axioms_given(tmp_path, mini_cfg):
    out = tmp_path / "r"
    assert main(["run", "--config", str(mini_cfg), "--out", str(out)]) == 0
    assert parse_axioms((out / "axioms.txt").read_text())
    assert (out / "commands.jsonl").exists()


def test_run_without_sidecar(tmp_path, mini_cfg):
    ax = tmp_path / "lonely.txt"
    ax.write_text("axiom floor: Pr(contrast >= 0.3, window=10) >= 0.8\n")
    assert main(["run", "--config", str(mini_cfg), "--axioms", str(ax),
                 "--out", str(tmp_path / "r")]) == 1


def test_eval_scores_simulated_detections(tmp_path, mini_cfg):
    scene = tmp_path / "scene"
    assert main(["simulate", "--config", str(mini_cfg), "--out", str(scene)]) == 0
    out = tmp_path / "ev"
    assert main(["eval", "--gt", str(scene / "gt.jsonl"),
                 "--detections", str(scene / "detections.jsonl"), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["tp"] + rep["fn"] == 15 and rep["frames"] == 5
    assert (out / "report.txt").read_text().startswith("method")
