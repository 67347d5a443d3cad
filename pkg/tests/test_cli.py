import json

import numpy as np
import pytest

from trackkit import formats
from trackkit.cli import EXIT_CONFIG, EXIT_INPUT, EXIT_OK, EXIT_SEQUENCE, main
from trackkit.config import PipelineConfig
from trackkit.events import make_events


@pytest.fixture
def synth(tmp_path):
    gt, det = tmp_path / "gt.json", tmp_path / "det.json"
    assert main(["synth", "--gt", str(gt), "--detections", str(det), "--objects", "3",
                 "--sequences", "2", "--seed", "5"]) == EXIT_OK
    return gt, det


def test_track_and_evaluate(tmp_path, synth, capsys):
    gt, det = synth
    pred, rep = tmp_path / "pred.json", tmp_path / "rep.json"
    assert main(["track", "--detections", str(det), "--output", str(pred)]) == EXIT_OK
    assert main(["evaluate", "--gt", str(gt), "--pred", str(pred), "--output", str(rep)]) == EXIT_OK
    report = json.loads(rep.read_text())
    assert set(report["sequences"]) == {"synth0", "synth1"}
    assert report["combined"]["IDSW"] == 0
    assert "HOTA" in capsys.readouterr().out


def test_array_rle_output(tmp_path, synth):
    _, det = synth
    pred = tmp_path / "pred.json"
    assert main(["track", "--detections", str(det), "--output", str(pred), "--rle-format", "array"]) == 0
    seg = next(s for s in json.loads(pred.read_text())["sequences"][0]["instances"][0]["segmentations"] if s)
    assert isinstance(seg["counts"], list)


def test_jobs_same_output(tmp_path, synth):
    _, det = synth
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["track", "--detections", str(det), "--output", str(a)])
    main(["track", "--detections", str(det), "--output", str(b), "--jobs", "2"])
    assert a.read_bytes() == b.read_bytes()


def test_malformed_input_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"sequences": [{"id": "a", "detections": [{"frame": 0}]}]}')
    assert main(["track", "--detections", str(bad), "--output", str(tmp_path / "o.json")]) == EXIT_INPUT
    assert "bbox" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path):
    assert main(["track", "--detections", str(tmp_path / "nope.json"),
                 "--output", str(tmp_path / "o.json")]) == EXIT_INPUT


def test_bad_config_exit_code(tmp_path, synth):
    _, det = synth
    cfg = tmp_path / "c.json"
    cfg.write_text('{"tracker": {"track_bufer": 3}}')
    assert main(["track", "--config", str(cfg), "--detections", str(det),
                 "--output", str(tmp_path / "o.json")]) == EXIT_CONFIG


def test_sequence_mismatch_exit_code(tmp_path, synth):
    gt, _ = synth
    other = tmp_path / "other.json"
    other.write_text(json.dumps({"sequences": [{"id": "elsewhere", "length": 1, "instances": []}]}))
    assert main(["evaluate", "--gt", str(gt), "--pred", str(other)]) == EXIT_SEQUENCE


def test_print_config_round_trip(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"tracker": {"min_hits": 2}, "denoise": {"tau": 3.0}}')
    assert main(["track", "--config", str(cfg), "--print-config"]) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    assert PipelineConfig.from_dict(printed) == PipelineConfig.from_dict(json.loads(cfg.read_text()))
    assert printed["tracker"]["min_hits"] == 2


def test_enhance_modes(tmp_path, rng):
    frames = tmp_path / "frames"
    frames.mkdir()
    for k in range(2):
        formats.write_pgm(frames / f"{k:06d}.pgm", rng.integers(90, 120, (32, 40)).astype(np.uint8))
    cfg = tmp_path / "none.json"
    cfg.write_text('{"enhance": {"mode": "none"}}')
    assert main(["enhance", "--config", str(cfg), "--input", str(frames), "--output", str(tmp_path / "o1")]) == 0
    for k in range(2):
        name = f"{k:06d}.pgm"
        assert (tmp_path / "o1" / name).read_bytes() == (frames / name).read_bytes()
    assert main(["enhance", "--input", str(frames), "--output", str(tmp_path / "o2")]) == 0
    out = formats.read_pgm(tmp_path / "o2" / "000000.pgm")
    assert out.std() > formats.read_pgm(frames / "000000.pgm").std()


def test_denoise_and_voxelize(tmp_path, rng):
    xs = np.concatenate([np.repeat(np.arange(0, 20), 2), np.repeat(np.arange(20, 30), 50)])
    xs = rng.permutation(xs)
    n = len(xs)
    ev = make_events(xs, np.zeros(n), np.arange(n) * 10, rng.choice([-1, 1], n))
    src = tmp_path / "ev.bin"
    formats.write_events(src, ev, (4, 32))
    times = tmp_path / "times.txt"
    times.write_text(f"{n * 5}\n")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"denoise": {"window_size": n}}))
    out = tmp_path / "clean.bin"
    assert main(["denoise", "--config", str(cfg), "--events", str(src), "--frame-times", str(times),
                 "--output", str(out)]) == 0
    kept, shape = formats.read_events(out)
    assert shape == (4, 32) and set(np.unique(kept["x"])) == set(range(20))
    vox = tmp_path / "vox.bin"
    split = tmp_path / "split.json"
    split.write_text('{"voxel": {"polarity_mode": "split"}}')
    assert main(["voxelize", "--config", str(split), "--events", str(out), "--output", str(vox),
                 "--bins", "5"]) == 0
    grid = formats.read_voxel_grid(vox)
    assert grid.values.shape == (4, 32, 10)
    # split channels never cancel, so the grid carries one unit of mass per event
    assert grid.values.sum() == pytest.approx(len(kept))


def test_denoise_empty_stream(tmp_path):
    src = tmp_path / "ev.csv"
    src.write_text("x,y,t,p\n")
    times = tmp_path / "t.txt"
    times.write_text("0\n")
    assert main(["denoise", "--events", str(src), "--frame-times", str(times),
                 "--output", str(tmp_path / "o.csv")]) == EXIT_INPUT


def test_missing_required_argument():
    with pytest.raises(SystemExit) as e:
        main(["track"])
    assert e.value.code == 2
