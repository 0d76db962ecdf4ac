import json

import numpy as np
from PIL import Image as PILImage

from headcond.cli import main


def run(*argv):
    return main(list(argv))


def test_gen_assets_and_render_and_preview(tmp_path, capsys):
    assets = tmp_path / "a.fcnd"
    assert run("gen-assets", "--seed", "7", "--vertices", "300", "--tex-res", "32",
               "--out", str(assets)) == 0

    params = tmp_path / "p.json"
    assert run("sample-params", "--assets", str(assets), "--seed", "3",
               "--res", "64", "--out", str(params)) == 0
    assert json.loads(params.read_text())["resolution"] == 64

    stack = tmp_path / "s.cstk"
    png = tmp_path / "prev.png"
    assert run("render", "--params", str(params), "--assets", str(assets),
               "--out", str(stack), "--png", str(png)) == 0
    assert stack.exists()
    assert (tmp_path / "prev_normals.png").exists()
    assert (tmp_path / "prev_texture.png").exists()

    assert run("preview", "--stack", str(stack), "--out-prefix",
               str(tmp_path / "pv")) == 0
    assert (tmp_path / "pv_normals.png").exists()


def test_steal_and_consistency(tmp_path, capsys):
    assets = tmp_path / "a.fcnd"
    run("gen-assets", "--seed", "7", "--vertices", "300", "--tex-res", "32",
        "--out", str(assets))
    p1 = tmp_path / "p1.json"
    p2 = tmp_path / "p2.json"
    run("sample-params", "--assets", str(assets), "--seed", "1", "--res", "64",
        "--out", str(p1))
    run("sample-params", "--assets", str(assets), "--seed", "2", "--res", "64",
        "--out", str(p2))

    for p, name in ((p1, "i1"), (p2, "i2")):
        stack = tmp_path / f"{name}.cstk"
        png = tmp_path / f"{name}.png"
        run("render", "--params", str(p), "--assets", str(assets),
            "--out", str(stack), "--png", str(png))
        # steal from the textured preview itself
        t = tmp_path / f"{name}.ptex"
        assert run("steal", "--image", str(tmp_path / f"{name}_texture.png"),
                   "--params", str(p), "--assets", str(assets),
                   "--out", str(t), "--tex-res", "32") == 0

    capsys.readouterr()
    assert run("consistency", "--a", str(tmp_path / "i1.ptex"),
               "--b", str(tmp_path / "i2.ptex")) == 0
    out = capsys.readouterr().out
    assert "loss" in out and "overlap" in out
    loss = float(out.split()[1])
    assert loss >= 0.0


def test_dataset_command(tmp_path):
    out = tmp_path / "d"
    assert run("dataset", "--n", "64", "--res", "64", "--seed", "3",
               "--out", str(out), "--vertices", "150", "--tex-res", "32") == 0
    lines = (out / "manifest.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["record_count"] == 64
    assert len(lines) == 65
    # duplicate without --force fails with the I/O exit code
    assert run("dataset", "--n", "4", "--res", "64", "--seed", "3",
               "--out", str(out), "--vertices", "150", "--tex-res", "32") == 2


def test_validation_exit_code(tmp_path):
    bad = tmp_path / "nope.fcnd"
    bad.write_bytes(b"JUNKJUNKJUNK")
    assert run("sample-params", "--assets", str(bad), "--seed", "1",
               "--res", "64", "--out", str(tmp_path / "p.json")) == 1
    # bad resolution is validation too
    assets = tmp_path / "a.fcnd"
    run("gen-assets", "--seed", "1", "--vertices", "150", "--tex-res", "32",
        "--out", str(assets))
    assert run("sample-params", "--assets", str(assets), "--seed", "1",
               "--res", "63", "--out", str(tmp_path / "p.json")) == 1


def test_io_exit_code(tmp_path):
    assert run("consistency", "--a", str(tmp_path / "missing1.ptex"),
               "--b", str(tmp_path / "missing2.ptex")) == 2


def test_steal_then_preview_round_trip(tmp_path):
    assets = tmp_path / "a.fcnd"
    run("gen-assets", "--seed", "9", "--vertices", "300", "--tex-res", "32",
        "--out", str(assets))
    params = tmp_path / "p.json"
    run("sample-params", "--assets", str(assets), "--seed", "5", "--res", "64",
        "--out", str(params))
    stack = tmp_path / "s.cstk"
    png = tmp_path / "r.png"
    run("render", "--params", str(params), "--assets", str(assets),
        "--out", str(stack), "--png", str(png))
    ptex = tmp_path / "t.ptex"
    corr = tmp_path / "m.corr"
    assert run("steal", "--image", str(tmp_path / "r_texture.png"),
               "--params", str(params), "--assets", str(assets),
               "--out", str(ptex), "--tex-res", "32",
               "--corr-out", str(corr)) == 0
    assert corr.exists()
    assert run("preview", "--ptex", str(ptex), "--out-prefix",
               str(tmp_path / "pt")) == 0
    with PILImage.open(tmp_path / "pt_stolen.png") as im:
        arr = np.asarray(im)
    assert arr.shape == (32, 32, 3)
