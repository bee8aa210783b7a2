import os

import numpy as np
import pytest
from conftest import corridor_world, sample_frame

from gridforge import gsm
from gridforge.cli import main
from gridforge.gridimage import load_image, load_pgm, save_png
from gridforge.gsm import GeneratorModel, save_generator
from gridforge.pointcloud import PointCloud3D, save_pointcloud


@pytest.fixture(scope="module")
def sequence_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("frames")
    world = corridor_world()
    for i in range(6):
        cl = sample_frame(world, (i * 0.2, 0, 0.8), seed=700 + i, n_points=12000)
        save_pointcloud(PointCloud3D(cl.points, cl.intensity, timestamp=i * 0.1),
                        str(root / f"frame_{i:03d}.txt"))
    return str(root)


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "session.txt"
    p.write_text("z_band: -0.5 1.5\n")
    return str(p)


@pytest.fixture(scope="module")
def tiny_model(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("model") / "tiny.gsm")
    layers = gsm.tiny_preset_layers(base=4, res_blocks=1)
    model = GeneratorModel(layers, gsm.init_params(layers, np.random.default_rng(3)))
    save_generator(model, path)
    return path


class TestSlam:
    def test_no_clean_smoke(self, sequence_dir, config_file, tmp_path):
        prefix = str(tmp_path / "run")
        rc = main(["slam", sequence_dir, prefix, "--config", config_file, "--no-clean"])
        assert rc == 0
        assert os.path.isfile(prefix + "_raw.pgm")
        assert os.path.isfile(prefix + "_raw.meta")
        lines = open(prefix + "_trail.txt").read().splitlines()
        assert len(lines) == 6
        assert not os.path.exists(prefix + "_clean.png")

    def test_morph_clean_same_trail(self, sequence_dir, config_file, tmp_path):
        p1 = str(tmp_path / "a")
        p2 = str(tmp_path / "b")
        assert main(["slam", sequence_dir, p1, "--config", config_file, "--no-clean"]) == 0
        assert main(["slam", sequence_dir, p2, "--config", config_file, "--morph"]) == 0
        assert open(p1 + "_trail.txt").read() == open(p2 + "_trail.txt").read()
        assert os.path.isfile(p2 + "_clean.png")
        img = load_image(p2 + "_clean.png")
        raw = load_pgm(p2 + "_raw.pgm")
        assert img.pixels.shape == raw.pixels.shape

    def test_missing_model_exits_1(self, sequence_dir, tmp_path, capsys):
        rc = main(["slam", sequence_dir, str(tmp_path / "x"), "--model", "/nope/m.gsm"])
        assert rc == 1
        assert "/nope/m.gsm" in capsys.readouterr().err

    def test_missing_input_dir_exits_1(self, tmp_path):
        rc = main(["slam", str(tmp_path / "missing"), str(tmp_path / "y"), "--no-clean"])
        assert rc == 1

    def test_deterministic_outputs(self, sequence_dir, config_file, tmp_path):
        p1 = str(tmp_path / "r1")
        p2 = str(tmp_path / "r2")
        for p in (p1, p2):
            assert main(["slam", sequence_dir, p, "--config", config_file, "--morph"]) == 0
        for suffix in ("_raw.pgm", "_raw.meta", "_trail.txt", "_clean.png"):
            a = open(p1 + suffix, "rb").read()
            b = open(p2 + suffix, "rb").read()
            assert a == b, suffix


class TestClean:
    def test_trinary_passthrough_morph(self, tmp_path):
        from gridforge.gridimage import FREE, UNEXPLORED, GridImage, OCCUPIED

        px = np.full((64, 64), UNEXPLORED, np.uint8)
        px[10:40, 10:40] = FREE
        px[10, 5:40] = OCCUPIED
        src = str(tmp_path / "in.png")
        dst = str(tmp_path / "out.png")
        save_png(GridImage(px), src)
        assert main(["clean", src, dst, "--morph"]) == 0
        out = load_image(dst)
        assert out.pixels.shape == (64, 64)

    def test_dimension_preserved_through_roundtrip(self, tmp_path, tiny_model):
        from gridforge.gridimage import UNEXPLORED, GridImage

        rng = np.random.default_rng(5)
        px = rng.choice([0, 200, 255], size=(300, 500)).astype(np.uint8)
        src = str(tmp_path / "wide.png")
        dst = str(tmp_path / "wide_out.png")
        save_png(GridImage(px), src)
        assert main(["clean", src, dst, "--model", tiny_model]) == 0
        assert load_image(dst).pixels.shape == (300, 500)

    def test_requires_cleaner_flag(self, tmp_path, capsys):
        src = str(tmp_path / "img.png")
        save_png_dummy(src)
        rc = main(["clean", src, str(tmp_path / "o.png")])
        assert rc == 1

    def test_mutually_exclusive_flags(self, tmp_path):
        src = str(tmp_path / "img2.png")
        save_png_dummy(src)
        rc = main(["clean", src, str(tmp_path / "o.png"), "--morph", "--model", "x.gsm"])
        assert rc == 1


def save_png_dummy(path):
    from gridforge.gridimage import GridImage

    save_png(GridImage(np.full((16, 16), 255, np.uint8)), path)


class TestDataset:
    def test_generates_expected_files(self, tmp_path, capsys):
        out = str(tmp_path / "ds")
        rc = main(["dataset", "2", out, "--seed", "3", "--size", "128"])
        assert rc == 0
        names = sorted(os.listdir(out))
        assert names == ["000000_clean.png", "000000_err.png",
                         "000001_clean.png", "000001_err.png", "manifest.txt"]

    def test_byte_identical_reruns(self, tmp_path):
        o1, o2 = str(tmp_path / "d1"), str(tmp_path / "d2")
        main(["dataset", "2", o1, "--seed", "9", "--size", "128"])
        main(["dataset", "2", o2, "--seed", "9", "--size", "128"])
        for name in sorted(os.listdir(o1)):
            assert open(os.path.join(o1, name), "rb").read() == \
                open(os.path.join(o2, name), "rb").read()

    def test_unknown_flag_exits_1(self, tmp_path):
        rc = main(["dataset", "1", str(tmp_path / "x"), "--bogus"])
        assert rc == 1


class TestEval:
    def test_identical_files_all_ones(self, tmp_path, capsys):
        px = np.random.default_rng(0).choice([0, 200, 255], size=(40, 40)).astype(np.uint8)
        from gridforge.gridimage import GridImage

        a = str(tmp_path / "a.png")
        save_png(GridImage(px), a)
        rc = main(["eval", a, a])
        assert rc == 0
        out = capsys.readouterr().out
        assert "iou_occupied=1.0000" in out
        assert "pixel_accuracy=1.0000" in out

    def test_manifest_batch_mean(self, tmp_path, capsys):
        out = str(tmp_path / "ds")
        main(["dataset", "3", out, "--seed", "5", "--size", "128"])
        capsys.readouterr()  # discard the dataset command's output
        rc = main(["eval", "--manifest", os.path.join(out, "manifest.txt"), "--csv"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("id,")
        rows = [l.split(",") for l in lines[1:]]
        assert rows[-1][0] == "mean"
        for col in range(1, 5):
            vals = [float(r[col]) for r in rows[:-1]]
            assert float(rows[-1][col]) == pytest.approx(np.mean(vals), abs=1e-5)

    def test_missing_args_exit_1(self):
        assert main(["eval"]) == 1


class TestInfo:
    def test_model_info(self, tiny_model, capsys):
        assert main(["info", tiny_model]) == 0
        out = capsys.readouterr().out
        assert "generator model" in out and "conv" in out

    def test_image_info(self, tmp_path, capsys):
        src = str(tmp_path / "img.png")
        save_png_dummy(src)
        assert main(["info", src]) == 0
        assert "16x16" in capsys.readouterr().out

    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        for cmd in ("slam", "clean", "dataset", "eval", "info"):
            assert cmd in out
