import numpy as np
import pytest

from fcrn.cli import evaluate_dirs, main
from fcrn.io import save_depth_png, save_tensor


def _two_pixel(tmp_path):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    save_tensor(pred / "a.fcrnt", np.array([[1.2, 2.0]]))
    save_tensor(gt / "a.fcrnt", np.array([[1.0, 1.0]]))
    return pred, gt


def test_eval_two_pixel_case(tmp_path, capsys):
    pred, gt = _two_pixel(tmp_path)
    assert main(["eval", str(pred), str(gt), "--record"]) == 0
    fields = capsys.readouterr().out.splitlines()[0].split(",")
    assert float(fields[0]) == pytest.approx(0.6, abs=1e-6)
    assert float(fields[4]) == 0.5


def test_eval_mixed_formats(tmp_path):
    pred, gt = _two_pixel(tmp_path)
    save_depth_png(pred / "b.png", np.full((3, 4), 2.0))
    save_depth_png(gt / "b.png", np.full((3, 4), 2.0))
    report, errors = evaluate_dirs(pred, gt)
    assert not errors and report.n_pixels == 14


def test_eval_same_dir_is_perfect(tmp_path):
    _, gt = _two_pixel(tmp_path)
    report, errors = evaluate_dirs(gt, gt)
    assert not errors
    assert report.rel == 0.0 and report.rms == 0.0 and report.delta1 == 1.0


def test_eval_reports_file_errors_and_continues(tmp_path, capsys):
    pred, gt = _two_pixel(tmp_path)
    save_tensor(pred / "orphan.fcrnt", np.ones((2, 2)))
    save_tensor(pred / "small.fcrnt", np.ones((2, 2)))
    save_tensor(gt / "small.fcrnt", np.ones((3, 3)))
    (pred / "junk.fcrnt").write_bytes(b"not a tensor")
    save_tensor(gt / "junk.fcrnt", np.ones((2, 2)))
    code = main(["eval", str(pred), str(gt)])
    captured = capsys.readouterr()
    assert code != 0
    assert "orphan: missing ground truth" in captured.err
    assert "small:" in captured.err and "junk:" in captured.err
    assert "0.6000" in captured.out  # the good file was still evaluated


def test_analyze(capsys):
    assert main(["analyze", "resnet50-upproj"]) == 0
    out = capsys.readouterr().out
    assert "63,560,129" in out and "483x483" in out and "2048x8x10" in out and "3,355,443,200" in out
    assert main(["analyze", "resnet50-deconv"]) == 2


def test_bench(capsys):
    assert main(["bench", "--shape", "1,4,4,4,2", "--repetitions", "2", "--warmup", "0"]) == 0
    assert "4.00" in capsys.readouterr().out
    assert main(["bench", "--repetitions", "0", "--shape", "1,4,4,4,2"]) == 2


def test_train_predict_eval(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("epochs = 1\nbatch_size = 4\nn_train = 8\nn_val = 4\nheight = 32\nwidth = 32\n"
                   "augment = true\nrotation = -2,2\n")
    model = tmp_path / "m.npz"
    assert main(["train", "--config", str(cfg), "--seed", "3", "--out", str(model)]) == 0
    assert model.exists()

    from fcrn.data import synth_dataset
    s = synth_dataset(1, (40, 48), seed=0)[0]
    img = tmp_path / "img.fcrnt"
    save_tensor(img, s.rgb[None])
    (tmp_path / "pred").mkdir()
    assert main(["predict", str(model), str(img), "--out", str(tmp_path / "pred" / "img")]) == 0
    for name in ("img.fcrnt", "img.png", "img.png.scale"):
        assert (tmp_path / "pred" / name).exists()
    (tmp_path / "gt").mkdir()
    save_tensor(tmp_path / "gt" / "img.fcrnt", s.depth[None])
    capsys.readouterr()
    assert main(["eval", str(tmp_path / "pred"), str(tmp_path / "gt")]) == 0


def test_train_rejects_unknown_settings(tmp_path):
    assert main(["train", "--set", "learning_rate=1", "--out", str(tmp_path / "m.npz")]) == 2


def test_selftest_small(capsys):
    assert main(["selftest", "--configs", "5", "--cases", "1"]) == 0
    assert "FAIL" not in capsys.readouterr().out
