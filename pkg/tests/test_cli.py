import json

import numpy as np
import pytest

from dispfuse import cli, imgcore
from dispfuse.imgcore import DisparityMap


def _echoed(out: str) -> dict:
    line = next(l for l in out.splitlines() if l.startswith("config: "))
    return json.loads(line[len("config: "):])


@pytest.fixture
def bracket(tmp_path, rng):
    lefts, disps = [], []
    base = 10 + 20 * rng.random((24, 24))
    for k, level in enumerate((0.2, 0.5, 0.85)):
        img = np.clip(level + 0.1 * rng.standard_normal((24, 24, 3)), 0, 1)
        p = tmp_path / f"exp{k}.png"
        imgcore.write_image(p, img)
        lefts.append(str(p))
        d = tmp_path / f"disp{k}.pfm"
        imgcore.write_pfm(d, DisparityMap(base + rng.normal(0, 0.5, base.shape)))
        disps.append(str(d))
    return lefts, disps


def test_fuse_writes_outputs(tmp_path, bracket, capsys):
    lefts, disps = bracket
    out = tmp_path / "res" / "fused.pfm"
    code = cli.main(["fuse", "--left", *lefts, "--disp", *disps, "--out", str(out),
                     "--dump-pyramids", str(tmp_path / "pyr")])
    assert code == 0
    assert out.is_file() and (tmp_path / "res" / "fused_preview.png").is_file()
    for k in range(3):
        assert (tmp_path / "res" / f"fused_weight{k}.png").is_file()
    assert (tmp_path / "pyr" / "fused_laplacian_base.pfm").is_file()
    fused = imgcore.read_pfm(out)
    assert fused.shape == (24, 24) and fused.valid_mask.all()
    cfg = _echoed(capsys.readouterr().out)
    assert cfg["command"] == "fuse" and cfg["levels"] == "auto" and cfg["we"] == 1.0


def test_fuse_naive_routes_to_single_scale(tmp_path, bracket, capsys):
    lefts, disps = bracket
    cli.main(["fuse", "--left", *lefts, "--disp", *disps, "--out", str(tmp_path / "a.pfm")])
    cli.main(["fuse", "--left", *lefts, "--disp", *disps, "--out", str(tmp_path / "b.pfm"), "--naive"])
    assert "naive" in capsys.readouterr().out
    a = imgcore.read_pfm(tmp_path / "a.pfm").data
    b = imgcore.read_pfm(tmp_path / "b.pfm").data
    assert not np.array_equal(a, b)


def test_fuse_count_mismatch_exit_2(tmp_path, bracket, capsys):
    lefts, disps = bracket
    code = cli.main(["fuse", "--left", *lefts, "--disp", *disps[:2], "--out", str(tmp_path / "x.pfm")])
    assert code == 2
    assert "expected equal counts" in capsys.readouterr().err


def test_fuse_missing_file_exit_1(tmp_path, bracket, capsys):
    lefts, disps = bracket
    missing = str(tmp_path / "nope.pfm")
    code = cli.main(["fuse", "--left", *lefts, "--disp", disps[0], disps[1], missing,
                     "--out", str(tmp_path / "x.pfm")])
    assert code == 1
    assert "nope.pfm" in capsys.readouterr().err


def test_fuse_corrupt_file_exit_1(tmp_path, bracket, capsys):
    lefts, disps = bracket
    bad = tmp_path / "bad.pfm"
    bad.write_bytes(b"Pf\n4 4\n-1.0\n" + bytes(10))
    code = cli.main(["fuse", "--left", *lefts, "--disp", disps[0], disps[1], str(bad),
                     "--out", str(tmp_path / "x.pfm")])
    assert code == 1
    assert "bad.pfm" in capsys.readouterr().err


def test_invalid_parameter_exit_2(tmp_path, bracket):
    lefts, disps = bracket
    assert cli.main(["fuse", "--left", *lefts, "--disp", *disps, "--out", str(tmp_path / "x.pfm"),
                     "--sigma", "-1"]) == 2
    assert cli.main(["fuse", "--left", *lefts, "--disp", *disps, "--out", str(tmp_path / "x.pfm"),
                     "--levels", "40"]) == 2


def test_config_file_and_flag_precedence(tmp_path, bracket, capsys):
    lefts, disps = bracket
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"left": lefts, "disp": disps, "out": str(tmp_path / "c.pfm"),
                                "we": 3.0, "wc": 0.5}))
    assert cli.main(["fuse", "--config", str(conf), "--we", "2"]) == 0
    cfg = _echoed(capsys.readouterr().out)
    assert cfg["we"] == 2.0 and cfg["wc"] == 0.5


def test_echoed_config_reproduces_run(tmp_path, bracket, capsys):
    lefts, disps = bracket
    cli.main(["fuse", "--left", *lefts, "--disp", *disps, "--out", str(tmp_path / "a.pfm"), "--levels", "2"])
    cfg = _echoed(capsys.readouterr().out)
    cfg["out"] = str(tmp_path / "b.pfm")
    conf = tmp_path / "echo.json"
    conf.write_text(json.dumps(cfg))
    assert cli.main(["fuse", "--config", str(conf)]) == 0
    assert (tmp_path / "a.pfm").read_bytes() == (tmp_path / "b.pfm").read_bytes()


def test_config_errors(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text('{"bogus": 1}')
    assert cli.main(["convert", "--config", str(conf)]) == 2
    conf.write_text('{"command": "eval"}')
    assert cli.main(["convert", "--config", str(conf)]) == 2
    conf.write_text("{not json")
    assert cli.main(["convert", "--config", str(conf)]) == 1
    assert cli.main(["convert", "--config", str(tmp_path / "absent.json")]) == 1
    # required option missing
    assert cli.main(["convert", "--baseline", "1", "--focal", "1", "--out", "x.pfm"]) == 2


def test_eval_identity_and_depth_space(tmp_path, rng, capsys):
    gt = tmp_path / "gt.pfm"
    imgcore.write_pfm(gt, DisparityMap(5 + rng.random((16, 16))))
    out = tmp_path / "report.csv"
    assert cli.main(["eval", "--pred", str(gt), "--gt", str(gt), "--out", str(out)]) == 0
    header, row = out.read_text().splitlines()
    vals = dict(zip(header.split(","), row.split(",")))
    for k in ("abs_rel", "sq_rel", "rmse", "log_err"):
        assert float(vals[k]) == 0.0
    for k in ("sigma1", "sigma2", "sigma3", "ssim"):
        assert float(vals[k]) == 1.0
    assert vals["space"] == "disparity"
    assert "abs_rel" in capsys.readouterr().out

    assert cli.main(["eval", "--pred", str(gt), "--gt", str(gt), "--out", str(out),
                     "--baseline", "0.12", "--focal", "700"]) == 0
    assert "depth" in out.read_text()
    assert "depth space" in capsys.readouterr().out


def test_eval_errors(tmp_path, rng, capsys):
    gt = tmp_path / "gt.pfm"
    imgcore.write_pfm(gt, DisparityMap(5 + rng.random((8, 8))))
    out = str(tmp_path / "r.csv")
    assert cli.main(["eval", "--pred", str(gt), "--gt", str(tmp_path / "missing.pfm"), "--out", out]) == 1
    assert "missing.pfm" in capsys.readouterr().err
    assert cli.main(["eval", "--pred", str(gt), "--gt", str(gt), "--out", out, "--baseline", "0.1"]) == 2
    other = tmp_path / "o.pfm"
    imgcore.write_pfm(other, DisparityMap(np.ones((4, 8))))
    assert cli.main(["eval", "--pred", str(other), "--gt", str(gt), "--out", out]) == 2


def test_convert_arithmetic(tmp_path):
    d = tmp_path / "d.pfm"
    imgcore.write_pfm(d, DisparityMap(np.array([[84.0, 0.0], [42.0, 168.0]])))
    out = tmp_path / "depth.pfm"
    assert cli.main(["convert", "--disp", str(d), "--baseline", "0.12", "--focal", "700", "--out", str(out)]) == 0
    depth = imgcore.read_pfm(out)
    assert depth.data[0, 0] == pytest.approx(1.0, abs=1e-6)  # float32 storage
    assert depth.data[1, 0] == pytest.approx(2.0, abs=1e-6)
    assert not depth.valid_mask[0, 1]
    assert cli.main(["convert", "--disp", str(d), "--baseline", "0", "--focal", "700", "--out", str(out)]) == 2


def _train(tmp_path, tag, *extra):
    net, curve = tmp_path / f"{tag}.bin", tmp_path / f"{tag}.csv"
    code = cli.main(["toy-train", "--seed", "3", "--epochs", "2", "--samples", "6", "--size", "16",
                     "--shift", "2", "--out", str(net), "--curve", str(curve), *extra])
    assert code == 0
    return net, curve


def test_toy_train_deterministic(tmp_path, capsys):
    _, c1 = _train(tmp_path, "a")
    _, c2 = _train(tmp_path, "b")
    assert c1.read_text() == c2.read_text()
    assert len(c1.read_text().splitlines()) == 4  # header, initial, 2 epochs


def test_toy_train_zero_lr_flat(tmp_path):
    net, curve = _train(tmp_path, "z", "--lr", "0")
    losses = [float(r.split(",")[1]) for r in curve.read_text().splitlines()[1:]]
    np.testing.assert_allclose(losses, losses[0], rtol=1e-12)
    from dispfuse.duonet import DualNet, load_net

    loaded, header = load_net(net)
    assert header["config"]["lr"] == 0.0
    ref = DualNet.init(3)
    for k in ref.params:
        np.testing.assert_array_equal(loaded.params[k], ref.params[k])


def test_toy_train_bad_schedule(tmp_path):
    assert cli.main(["toy-train", "--epochs", "-1", "--out", str(tmp_path / "n"), "--curve", str(tmp_path / "c")]) == 2
    assert cli.main(["toy-train", "--shift", "9", "--size", "16",
                     "--out", str(tmp_path / "n"), "--curve", str(tmp_path / "c")]) == 2


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "dispfuse", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "toy-train" in r.stdout
