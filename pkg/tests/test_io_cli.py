import json

import numpy as np
import pytest

from thinstruct import cli, io
from thinstruct.errors import DataFormatError, NumericalError
from thinstruct.pipelines import VesselField
from thinstruct.synth import tube3d


class TestPgm:
    def test_p5_8bit_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        arr = rng.integers(0, 256, size=(11, 7), dtype=np.uint8)
        path = tmp_path / "a.pgm"
        io.write_pgm(path, arr)
        back = io.read_pgm(path)
        np.testing.assert_array_equal(back, arr)
        assert back.dtype == np.uint8

    def test_p5_16bit_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        arr = rng.integers(0, 65536, size=(5, 9), dtype=np.uint16)
        path = tmp_path / "b.pgm"
        io.write_pgm(path, arr, maxval=65535)
        back, maxval = io.read_pgm(path, return_maxval=True)
        np.testing.assert_array_equal(back, arr)
        assert maxval == 65535

    def test_p2_ascii_roundtrip(self, tmp_path):
        arr = np.array([[0, 128, 255], [5, 6, 7]], dtype=np.uint8)
        path = tmp_path / "c.pgm"
        io.write_pgm(path, arr, binary=False)
        assert path.read_bytes().startswith(b"P2")
        np.testing.assert_array_equal(io.read_pgm(path), arr)

    def test_rewrite_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(2)
        arr = rng.integers(0, 256, size=(6, 6), dtype=np.uint8)
        p1, p2 = tmp_path / "x1.pgm", tmp_path / "x2.pgm"
        io.write_pgm(p1, arr)
        io.write_pgm(p2, io.read_pgm(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_comments(self, tmp_path):
        path = tmp_path / "d.pgm"
        path.write_bytes(b"P2\n# a comment\n2 2\n255\n0 1\n2 3\n")
        np.testing.assert_array_equal(io.read_pgm(path), [[0, 1], [2, 3]])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "e.pgm"
        path.write_bytes(b"P7\n2 2\n255\n" + bytes(4))
        with pytest.raises(DataFormatError):
            io.read_pgm(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "f.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes(7))
        with pytest.raises(DataFormatError):
            io.read_pgm(path)

    def test_sample_above_maxval(self, tmp_path):
        path = tmp_path / "g.pgm"
        path.write_bytes(b"P2\n2 1\n10\n3 11\n")
        with pytest.raises(DataFormatError):
            io.read_pgm(path)

    def test_mask_quantization(self, tmp_path):
        q = np.array([[0.0, 0.25, 1.0], [0.8, 1e-6, 0.5]])
        path = tmp_path / "m.pgm"
        io.write_mask_pgm(path, q)
        back = io.read_mask_pgm(path)
        assert np.abs(back - q).max() <= 0.5 / 65535


class TestVfield:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        v = rng.uniform(0, 1, size=(3, 4, 5))
        d = rng.normal(size=(3, 4, 5, 3))
        s = rng.uniform(0.5, 2.0, size=(3, 4, 5))
        field = VesselField(v, d, s)
        path = tmp_path / "t.vfield"
        io.write_vfield(path, field)
        back = io.read_vfield(path)
        np.testing.assert_array_equal(back.v, v.astype(np.float32))
        np.testing.assert_array_equal(back.direction,
                                      d.astype(np.float32))
        np.testing.assert_array_equal(back.sigma, s.astype(np.float32))

    def test_header_is_json_line(self, tmp_path):
        field, _ = tube3d(size=16, radius=1.5)
        path = tmp_path / "h.vfield"
        io.write_vfield(path, field)
        header = json.loads(path.read_bytes().split(b"\n", 1)[0])
        assert header["magic"] == "vfield"
        assert header["dims"] == [16, 16, 16]
        assert header["fields"] == ["v", "gx", "gy", "gz", "sigma"]

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "w.vfield"
        io.write_container(path, (2, 2, 2), ["a"], [np.zeros((2, 2, 2))])
        raw = path.read_bytes().replace(b'"vfield"', b'"vvvvvv"', 1)
        path.write_bytes(raw)
        with pytest.raises(DataFormatError):
            io.read_vfield(path)

    def test_wrong_fields(self, tmp_path):
        path = tmp_path / "w2.vfield"
        io.write_container(path, (2, 2, 2), ["a", "b"],
                           [np.zeros((2, 2, 2))] * 2)
        with pytest.raises(DataFormatError):
            io.read_vfield(path)

    def test_payload_size_mismatch(self, tmp_path):
        path = tmp_path / "w3.vfield"
        field = VesselField(np.zeros((2, 2, 2)), np.zeros((2, 2, 2, 3)),
                            np.ones((2, 2, 2)))
        io.write_vfield(path, field)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(DataFormatError):
            io.read_vfield(path)

    def test_vmask_roundtrip(self, tmp_path):
        rng = np.random.default_rng(4)
        mask = rng.uniform(size=(3, 3, 3)) > 0.5
        path = tmp_path / "m.vmask"
        io.write_vmask(path, mask)
        back = io.read_vmask(path)
        assert back.dtype == bool
        np.testing.assert_array_equal(back, mask)


class TestCsv:
    def test_tangents_2d_bit_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        n = 7
        anchors = rng.normal(size=(n, 2))
        points = rng.normal(size=(n, 2))
        dirs = rng.normal(size=(n, 2))
        q = rng.uniform(size=n)
        path = tmp_path / "t.csv"
        io.write_tangents_csv_2d(path, np.arange(n), anchors, points, dirs, q)
        cols = io.read_csv_columns(path)
        np.testing.assert_array_equal(cols["px"], points[:, 0])
        np.testing.assert_array_equal(cols["dy"], dirs[:, 1])
        np.testing.assert_array_equal(cols["q"], q)

    def test_points_roundtrip_with_header(self, tmp_path):
        pts = np.array([[0.5, -1.25], [3.0, 4.75]])
        path = tmp_path / "p.csv"
        io.write_points_csv(path, pts)
        np.testing.assert_array_equal(io.read_points_csv(path), pts)

    def test_points_headerless(self, tmp_path):
        path = tmp_path / "p2.csv"
        path.write_text("1.5,2.5\n3.5,4.5\n")
        np.testing.assert_array_equal(io.read_points_csv(path),
                                      [[1.5, 2.5], [3.5, 4.5]])

    def test_points_3d(self, tmp_path):
        pts = np.arange(12, dtype=float).reshape(4, 3)
        path = tmp_path / "p3.csv"
        io.write_points_csv(path, pts)
        np.testing.assert_array_equal(io.read_points_csv(path), pts)

    def test_report_roundtrip(self, tmp_path):
        rep = {"best_f": 0.93, "n": 4, "nested": {"a": [1, 2]}}
        path = tmp_path / "r.json"
        io.write_report(path, rep)
        assert io.read_report(path) == rep


def _run(*argv):
    return cli.main([str(a) for a in argv])


def _write_mask(path, mask):
    io.write_pgm(path, mask.astype(np.uint8) * 255, maxval=255)


class TestCliEdges:
    def test_edges2d_writes_outputs(self, tmp_path):
        out = tmp_path / "synth"
        assert _run("synth", "step-edge", "--size", 16, "--out-dir", out) == 0
        run = tmp_path / "run"
        assert _run("edges2d", out / "image.pgm", "--out-dir", run,
                    "--max-outer", 2) == 0
        for name in ("tangents.csv", "subpixel.pgm", "report.json"):
            assert (run / name).exists()
        report = io.read_report(run / "report.json")
        assert report["n_sites"] == 256
        assert report["config"]["gamma"] == 0.25

    def test_missing_input_exit_2(self, tmp_path, capsys):
        assert _run("edges2d", tmp_path / "nope.pgm") == 2
        assert "error" in capsys.readouterr().err

    def test_config_file_and_flag_override(self, tmp_path):
        out = tmp_path / "synth"
        _run("synth", "step-edge", "--size", 16, "--out-dir", out)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"gamma": 0.1, "scale": 3}))
        run = tmp_path / "run"
        assert _run("edges2d", out / "image.pgm", "--config", cfg,
                    "--gamma", 0.2, "--out-dir", run, "--max-outer", 1) == 0
        echoed = io.read_report(run / "report.json")["config"]
        assert echoed["gamma"] == 0.2   # flag beats file
        assert echoed["scale"] == 3     # file beats default

    def test_unknown_config_key_exit_2(self, tmp_path, capsys):
        out = tmp_path / "synth"
        _run("synth", "step-edge", "--size", 16, "--out-dir", out)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"gamam": 0.1}))
        assert _run("edges2d", out / "image.pgm", "--config", cfg) == 2
        assert "gamam" in capsys.readouterr().err

    def test_numerical_error_exit_3(self, monkeypatch, tmp_path):
        def boom(cfg):
            raise NumericalError("synthetic failure")
        monkeypatch.setitem(cli.COMMANDS, "eval", boom)
        assert _run("eval", "a.pgm", "b.pgm") == 3


class TestCliSynth:
    def test_seed_determinism(self, tmp_path):
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        for out in (a, b):
            _run("synth", "circle", "--noise", 0.5, "--seed", 9,
                 "--out-dir", out)
        _run("synth", "circle", "--noise", 0.5, "--seed", 10, "--out-dir", c)
        pa = (a / "points.csv").read_bytes()
        assert pa == (b / "points.csv").read_bytes()
        assert pa != (c / "points.csv").read_bytes()

    def test_point_kinds_write_truth(self, tmp_path):
        for kind in ("circle", "line", "square", "rounded-corner"):
            out = tmp_path / kind
            assert _run("synth", kind, "--samples", 16, "--out-dir", out) == 0
            assert (out / "points.csv").exists()
            assert (out / "truth.csv").read_text().startswith("x,y,tx,ty")

    def test_image_kinds_write_mask(self, tmp_path):
        for kind in ("disk", "polygon", "gap-image"):
            out = tmp_path / kind
            assert _run("synth", kind, "--size", 24, "--length", 20,
                        "--out-dir", out) == 0
            img = io.read_pgm(out / "image.pgm")
            mask = io.read_pgm(out / "truth_mask.pgm")
            assert img.shape == mask.shape
            assert set(np.unique(mask)) <= {0, 255}

    def test_tube3d_writes_field_and_truth(self, tmp_path):
        out = tmp_path / "tube"
        assert _run("synth", "tube3d", "--size", 16, "--tube-radius", 1.5,
                    "--out-dir", out) == 0
        field = io.read_vfield(out / "field.vfield")
        assert field.shape == (16, 16, 16)
        planes = io.read_container(out / "truth.vfield",
                                   ["tx", "ty", "tz", "dist"])
        assert planes["dist"].shape == (16, 16, 16)


class TestCliFit:
    def test_fit_points_2d(self, tmp_path):
        out = tmp_path / "synth"
        _run("synth", "circle", "--samples", 24, "--out-dir", out)
        run = tmp_path / "fit"
        assert _run("fit-points", out / "points.csv", "--out-dir", run,
                    "--lm-iters", 10) == 0
        cols = io.read_csv_columns(run / "tangents.csv")
        assert len(cols["id"]) == 24

    def test_fit_ridges_requires_thresholds(self, tmp_path, capsys):
        out = tmp_path / "tube"
        _run("synth", "tube3d", "--size", 16, "--out-dir", out)
        assert _run("fit-ridges", out / "field.vfield") == 2
        assert "--low" in capsys.readouterr().err

    def test_fit_ridges_outputs(self, tmp_path):
        out = tmp_path / "tube"
        _run("synth", "tube3d", "--size", 16, "--tube-radius", 1.5,
             "--out-dir", out)
        run = tmp_path / "ridges"
        assert _run("fit-ridges", out / "field.vfield", "--low", 0.2,
                    "--high", 0.6, "--lm-iters", 5, "--out-dir", run) == 0
        mask = io.read_vmask(run / "ridges.vmask")
        report = io.read_report(run / "report.json")
        assert report["n_ridge"] == int(mask.sum()) > 0

    def test_vessels3d_outputs(self, tmp_path):
        out = tmp_path / "tube"
        _run("synth", "tube3d", "--size", 16, "--tube-radius", 1.5,
             "--out-dir", out)
        run = tmp_path / "v"
        assert _run("vessels3d", out / "field.vfield", "--keep", 0.1,
                    "--max-outer", 1, "--lm-iters", 3, "--out-dir", run) == 0
        cols = io.read_csv_columns(run / "tangents.csv")
        report = io.read_report(run / "report.json")
        assert len(cols["id"]) == report["n_sites"]


class TestCliEval:
    def test_identical_masks_perfect_f(self, tmp_path):
        mask = np.zeros((16, 16), dtype=bool)
        mask[4:12, 8] = True
        p, t = tmp_path / "p.pgm", tmp_path / "t.pgm"
        _write_mask(p, mask)
        _write_mask(t, mask)
        run = tmp_path / "e"
        assert _run("eval", p, t, "--out-dir", run) == 0
        assert io.read_report(run / "report.json")["best_f"] == 1.0

    def test_shifted_line_within_rho(self, tmp_path):
        truth = np.zeros((16, 16), dtype=bool)
        truth[2:14, 7] = True
        pred = np.zeros((16, 16), dtype=bool)
        pred[2:14, 8] = True  # one pixel to the side
        p, t = tmp_path / "p.pgm", tmp_path / "t.pgm"
        _write_mask(p, pred)
        _write_mask(t, truth)
        strict, loose = tmp_path / "s", tmp_path / "l"
        assert _run("eval", p, t, "--rho", 2.0, "--out-dir", loose) == 0
        assert _run("eval", p, t, "--rho", 0.0, "--out-dir", strict) == 0
        assert io.read_report(loose / "report.json")["best_f"] == 1.0
        assert io.read_report(strict / "report.json")["best_f"] == 0.0

    def test_empty_prediction_f_zero(self, tmp_path):
        truth = np.zeros((8, 8), dtype=bool)
        truth[3, 3] = True
        p, t = tmp_path / "p.pgm", tmp_path / "t.pgm"
        _write_mask(p, np.zeros((8, 8), dtype=bool))
        _write_mask(t, truth)
        run = tmp_path / "e"
        assert _run("eval", p, t, "--out-dir", run) == 0
        report = io.read_report(run / "report.json")
        assert report["best_f"] == 0.0
        assert report["best_precision"] == 1.0  # no predictions made

    def test_size_mismatch_exit_2(self, tmp_path, capsys):
        p, t = tmp_path / "p.pgm", tmp_path / "t.pgm"
        _write_mask(p, np.zeros((8, 8), dtype=bool))
        _write_mask(t, np.zeros((9, 8), dtype=bool))
        assert _run("eval", p, t) == 2
        capsys.readouterr()

    def test_pr_csv_has_64_thresholds(self, tmp_path):
        mask = np.zeros((8, 8), dtype=bool)
        mask[2, 2] = True
        p, t = tmp_path / "p.pgm", tmp_path / "t.pgm"
        _write_mask(p, mask)
        _write_mask(t, mask)
        run = tmp_path / "e"
        _run("eval", p, t, "--out-dir", run)
        cols = io.read_csv_columns(run / "pr.csv")
        assert len(cols["threshold"]) == 64
