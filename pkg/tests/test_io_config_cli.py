import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from cddb import config as cfgmod
from cddb.cli import main
from cddb.errors import ConfigError
from cddb.io import FormatError, read_mask, read_pgm, read_tensor, write_pgm, write_tensor

finite = st.floats(allow_nan=False, allow_infinity=False)


@given(arrays(np.float64, array_shapes(min_dims=0, max_dims=3, max_side=5), elements=finite))
def test_tensor_round_trip_bit_exact(tmp_path_factory, x):
    path = tmp_path_factory.mktemp("t") / "x.ddbt"
    write_tensor(path, x)
    back = read_tensor(path)
    assert back.shape == x.shape
    assert back.tobytes() == np.ascontiguousarray(x).tobytes()


def test_tensor_header_layout(tmp_path):
    path = tmp_path / "x.ddbt"
    write_tensor(path, np.arange(6.0).reshape(2, 3))
    blob = path.read_bytes()
    assert blob.startswith(b"DDBT1 2 2 3\n")
    assert len(blob) == len(b"DDBT1 2 2 3\n") + 48
    assert blob[len(b"DDBT1 2 2 3\n"):][8:16] == np.float64(1.0).astype("<f8").tobytes()


@pytest.mark.parametrize("blob", [b"DDBT2 1 2\n" + b"\0" * 16, b"DDBT1 2 2\n" + b"\0" * 16,
                                  b"DDBT1 1 3\n" + b"\0" * 16, b"no header"])
def test_tensor_rejects_malformed(tmp_path, blob):
    path = tmp_path / "bad.ddbt"
    path.write_bytes(blob)
    with pytest.raises(FormatError):
        read_tensor(path)


def test_pgm_uniform_value(tmp_path):
    path = tmp_path / "u.pgm"
    path.write_bytes(b"P5\n4 3\n255\n" + bytes([128]) * 12)
    img = read_pgm(path)
    assert img.shape == (3, 4)
    assert np.all(img == 128 / 255)


@given(arrays(np.float64, (5, 7), elements=st.floats(0, 1)), st.booleans())
def test_pgm_round_trip_quantization_bound(tmp_path_factory, img, binary):
    path = tmp_path_factory.mktemp("p") / "i.pgm"
    write_pgm(path, img, binary=binary)
    assert np.max(np.abs(read_pgm(path) - img)) <= 1 / (2 * 255) + 1e-15


def test_pgm_p2_and_p5_agree(tmp_path):
    img = np.random.default_rng(0).uniform(size=(6, 5))
    write_pgm(tmp_path / "a.pgm", img, binary=True)
    write_pgm(tmp_path / "b.pgm", img, binary=False)
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), read_pgm(tmp_path / "b.pgm"))


def test_pgm_16bit_and_comments(tmp_path):
    img = np.random.default_rng(1).uniform(size=(3, 4))
    write_pgm(tmp_path / "w.pgm", img, maxval=65535)
    assert np.max(np.abs(read_pgm(tmp_path / "w.pgm") - img)) <= 1 / (2 * 65535)
    (tmp_path / "c.pgm").write_bytes(b"P2\n# comment\n2 1 # trailing\n10\n0 10\n")
    np.testing.assert_array_equal(read_pgm(tmp_path / "c.pgm"), [[0.0, 1.0]])


def test_pgm_round_half_even(tmp_path):
    write_pgm(tmp_path / "h.pgm", np.array([[0.5 / 255, 1.5 / 255, 2.5 / 255]]), binary=False)
    assert (tmp_path / "h.pgm").read_text().split()[-3:] == ["0", "2", "2"]


@pytest.mark.parametrize("blob", [b"P6\n1 1\n255\n\0", b"P5\n2 2\n255\n\0", b"P5\nx 2\n255\n", b"P2\n1 1\n10\n11\n"])
def test_pgm_rejects_malformed(tmp_path, blob):
    (tmp_path / "bad.pgm").write_bytes(blob)
    with pytest.raises(FormatError):
        read_pgm(tmp_path / "bad.pgm")


def test_mask_threshold(tmp_path):
    (tmp_path / "m.pgm").write_bytes(b"P2\n3 1\n255\n0 127 128\n")
    np.testing.assert_array_equal(read_mask(tmp_path / "m.pgm"), [[False, False, True]])


def test_empty_config_gives_defaults(tmp_path):
    (tmp_path / "c.cfg").write_text("# nothing set\n\n")
    cfg = cfgmod.parse_config(tmp_path / "c.cfg")
    assert cfg == cfgmod.RunConfig()
    assert cfg.schedule.kind == "i2sb"
    assert (cfg.schedule.beta_min, cfg.schedule.beta_max) == (1e-4, 2e-2)


@pytest.mark.parametrize("text, key", [
    ("guidance.c = -1", "guidance.c"),
    ("sampler.nfe = 2.5", "sampler.nfe"),
    ("sampler.nfe = 0", "sampler.nfe"),
    ("operator.kind = fog", "operator.kind"),
    ("sampler.colour = red", "sampler.colour"),
    ("guidance.replacement = maybe", "guidance.replacement"),
    ("sweep.nfe_list = 5, x", "sweep.nfe_list"),
    ("just words", "expected 'key = value'"),
])
def test_config_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        cfgmod.parse_text(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        cfgmod.parse_config(tmp_path / "absent.cfg")


@given(
    st.floats(0.0, 10.0),
    st.integers(1, 1000),
    st.sampled_from(["ddb", "cddb", "cddb_deep"]),
    st.lists(st.integers(1, 200), min_size=1, max_size=4),
    st.booleans(),
    st.floats(1e-6, 1e-3),
)
def test_config_round_trip(c, nfe, method, nfe_list, repl, bmin):
    cfg = cfgmod.RunConfig()
    cfg.guidance.c = c
    cfg.sampler.nfe = nfe
    cfg.sampler.method = method
    cfg.sweep.nfe_list = tuple(nfe_list)
    cfg.guidance.replacement = repl
    cfg.schedule.beta_min = bmin
    assert cfgmod.parse_text(cfgmod.serialize(cfg)) == cfg


def test_builders():
    cfg = cfgmod.parse_text("operator.kind = pool\noperator.pool_factor = 4\n")
    op = cfgmod.build_operator(cfg, (16, 16))
    assert op.output_shape == (4, 4)
    assert cfgmod.signal_shape(cfg, (4, 4)) == (16, 16)
    assert cfgmod.guidance_config(cfgmod.parse_text("sampler.method = cddb_deep")).precond == "pinv"
    assert cfgmod.build_schedule(cfgmod.parse_text("schedule.kind = indi\nschedule.eps = 0.2")).eps == 0.2
    with pytest.raises(ConfigError, match="theta_bar_file"):
        cfgmod.parse_text("schedule.kind = irsde")


def _demo(tmp_path, seed=7, extra=()):
    cfg = cfgmod.parse_text("\n".join(extra))
    x0, y = cfgmod.build_problem(cfg).measure(seed)
    write_tensor(tmp_path / "y.ddbt", y)
    write_tensor(tmp_path / "x0.ddbt", x0)
    return tmp_path / "y.ddbt", tmp_path / "x0.ddbt"


def test_cli_check(tmp_path, capsys):
    assert main(["check", "--out", str(tmp_path / "o")]) == 0
    assert "ALL PASSED" in capsys.readouterr().out
    assert (tmp_path / "o" / "report.txt").exists()
    meta = json.loads((tmp_path / "o" / "run_meta.json").read_text())
    assert meta["passed"] and meta["version"]


def test_cli_sample_deterministic(tmp_path):
    y, x0 = _demo(tmp_path)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        args = ["sample", "--input", str(y), "--truth", str(x0), "--method", "cddb", "--nfe", "20",
                "--seed", "7", "--out", str(out)]
        assert main(args) == 0
        outs.append(out)
    for f in ("x0_hat.ddbt", "x0_hat.pgm", "trajectory.csv"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    meta = json.loads((outs[0] / "run_meta.json").read_text())
    cfg = cfgmod.parse_text(meta["config"])
    assert cfg.seed == 7 and cfg.sampler.method == "cddb"
    with open(outs[0] / "result.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["method", "nfe", "seed"] and rows[1][:3] == ["cddb", "20", "7"]


def test_cli_refuses_nonempty_out(tmp_path, capsys):
    y, _ = _demo(tmp_path)
    out = tmp_path / "o"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    assert main(["sample", "--input", str(y), "--out", str(out), "--nfe", "2"]) == 2
    assert "--force" in capsys.readouterr().err
    assert main(["sample", "--input", str(y), "--out", str(out), "--nfe", "2", "--force"]) == 0
    assert (out / "keep.txt").exists()


def test_cli_flag_beats_file(tmp_path):
    y, _ = _demo(tmp_path)
    (tmp_path / "c.cfg").write_text("sampler.nfe = 50\nsampler.method = ddb\n")
    out = tmp_path / "o"
    assert main(["sample", "--config", str(tmp_path / "c.cfg"), "--nfe", "3", "--input", str(y),
                 "--out", str(out)]) == 0
    cfg = cfgmod.parse_text(json.loads((out / "run_meta.json").read_text())["config"])
    assert cfg.sampler.nfe == 3 and cfg.sampler.method == "ddb"
    assert len((out / "trajectory.csv").read_text().splitlines()) == 4


def test_cli_sweep_rows(tmp_path):
    out = tmp_path / "s"
    args = ["sweep", "--out", str(out), "--trials", "2", "--set", "sweep.nfe_list=2,3",
            "--set", "dataset.image_size=8", "--set", "dataset.size=8"]
    assert main(args) == 0
    with open(out / "result.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["method", "nfe", "seed", "psnr", "mse", "residual", "energy_distance", "runtime_s"]
    assert len(rows) == 1 + 2 * 2 * 2


def test_cli_noise_and_ablation(tmp_path):
    small = ["--set", "dataset.image_size=8", "--set", "dataset.size=8", "--trials", "2"]
    assert main(["noise", "--out", str(tmp_path / "n"), "--nfe", "2", "--set", "sweep.noise_stds=0,0.1"] + small) == 0
    assert main(["ablate-gd", "--out", str(tmp_path / "g"), "--set", "sweep.gd_steps_list=0,1,2",
                 "--set", "sweep.ablate_nfe=4"] + small) == 0
    rows = (tmp_path / "g" / "result.csv").read_text().splitlines()
    assert rows[0].startswith("gd_steps") and len(rows) == 4


def test_cli_errors(tmp_path, capsys):
    assert main(["sample", "--input", str(tmp_path / "missing.ddbt"), "--out", str(tmp_path / "o")]) == 2
    assert "missing.ddbt" in capsys.readouterr().err
    assert main(["check", "--set", "guidance.c=-1"]) == 2
    assert "guidance.c" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["frobnicate"])
