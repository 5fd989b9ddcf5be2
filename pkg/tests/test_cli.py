import json

import numpy as np
import pytest
from PIL import Image

from aifrecon import cli, io
from aifrecon.metrics import SurfaceMask


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "phantom.json").write_text(
        json.dumps({"dims": [32, 32, 32], "shape": {"type": "twin_ridge", "center_x": 16, "apex_y": 10,
                    "base_y": 22, "half_width": 6, "gap": 5}})
    )
    (root / "sweep.json").write_text(
        json.dumps({"geometry": {"width": 64, "height": 64, "pixel_spacing": [0.5, 0.5], "probe_kind": "linear"},
                    "arc": {"center": [16, 18, 16], "radius": 18, "angle_range": 90, "n_frames": 20}})
    )
    r = str(root)
    steps = [
        ["phantom", "--config", f"{r}/phantom.json", "--out", f"{r}/label.vol"],
        ["prep-maps", "--label", f"{r}/label.vol", "--out-prob", f"{r}/prob.vol", "--out-dir", f"{r}/dir.vol"],
        ["simulate", "--spec", f"{r}/sweep.json", "--phantom", f"{r}/label.vol", "--seed", "3", "--out", f"{r}/bundle"],
    ]
    for name, extra in [("baseline", ["--method", "baseline", "--out-visited", f"{r}/visited.vol"]),
                        ("aif", []), ("aifc", ["--compensate"])]:
        steps.append(["reconstruct", "--bundle", f"{r}/bundle", "--prob", f"{r}/prob.vol", "--dir", f"{r}/dir.vol",
                      *extra, "--out", f"{r}/{name}.vol"])
    for argv in steps:
        assert cli.main(argv) == 0, argv
    return root


def test_missing_required_flag_names_it(capsys):
    assert cli.main(["reconstruct", "--prob", "p.vol", "--dir", "d.vol", "--out", "o.vol"]) == cli.EXIT_INVALID
    assert "--bundle" in capsys.readouterr().err


def test_unknown_flag_and_subcommand(capsys):
    assert cli.main(["export-slice", "--bogus"]) == cli.EXIT_INVALID
    assert cli.main(["frobnicate"]) == cli.EXIT_INVALID
    assert cli.main([]) == cli.EXIT_INVALID


def test_missing_input_file_is_io_error(tmp_path, capsys):
    code = cli.main(["export-slice", "--vol", str(tmp_path / "nope.vol"), "--axis", "z", "--index", "0",
                     "--out", str(tmp_path / "s.pgm")])
    assert code == cli.EXIT_IO
    assert "nope.vol" in capsys.readouterr().err


def test_help_shows_defaults(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["reconstruct", "--help"])
    assert exc.value.code == 0
    text = " ".join(capsys.readouterr().out.split())
    for default in ("(default: 0.1)", "(default: 3.0)", "(default: aif)"):
        assert default in text
    assert text.count("(default: 0.1)") == 2


def test_export_out_of_range_index(pipeline, capsys):
    code = cli.main(["export-slice", "--vol", str(pipeline / "aif.vol"), "--axis", "z", "--index", "32",
                     "--out", str(pipeline / "bad.pgm")])
    assert code == cli.EXIT_INVALID
    assert "index" in capsys.readouterr().err
    assert not (pipeline / "bad.pgm").exists()


def test_reconstruct_rejects_scalar_direction_volume(pipeline, capsys):
    r = str(pipeline)
    code = cli.main(["reconstruct", "--bundle", f"{r}/bundle", "--prob", f"{r}/prob.vol", "--dir", f"{r}/prob.vol",
                     "--out", f"{r}/x.vol"])
    assert code == cli.EXIT_INVALID
    assert "--dir" in capsys.readouterr().err


def test_metrics_table(pipeline, capsys):
    r = str(pipeline)
    code = cli.main(["metrics", "--mask", f"{r}/label.vol", "--from-label", "--visited", f"{r}/visited.vol",
                     f"baseline={r}/baseline.vol", f"aif={r}/aif.vol", f"aif+comp={r}/aifc.vol"])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("# threshold")
    assert "contrast_ratio" in lines[1] and "completeness" in lines[1]
    assert [ln.split()[0] for ln in lines[2:]] == ["baseline", "aif", "aif+comp"]


def test_metrics_json_and_fixed_threshold(pipeline, capsys):
    r = str(pipeline)
    code = cli.main(["metrics", "--mask", f"{r}/label.vol", "--from-label", "--threshold", "40", "--json",
                     f"{r}/baseline.vol", f"{r}/aif.vol"])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["threshold"] == 40.0
    assert [d["name"] for d in doc["reports"]] == ["baseline", "aif"]
    for d in doc["reports"]:
        assert 0 <= d["completeness"] <= 1 and d["contrast_ratio"] > 0


def test_metrics_bad_arguments(pipeline):
    r = str(pipeline)
    base = ["metrics", "--mask", f"{r}/label.vol", "--from-label"]
    assert cli.main(base + ["--threshold", "high", f"{r}/aif.vol"]) == cli.EXIT_INVALID
    assert cli.main(base + ["--threshold", "300", f"{r}/aif.vol"]) == cli.EXIT_INVALID
    assert cli.main(base + [f"a={r}/aif.vol", f"a={r}/aifc.vol"]) == cli.EXIT_INVALID


def test_exported_slice_shows_the_surface(pipeline):
    r = str(pipeline)
    assert cli.main(["export-slice", "--vol", f"{r}/baseline.vol", "--axis", "z", "--index", "16",
                     "--out", f"{r}/slice.pgm"]) == 0
    img = np.asarray(Image.open(f"{r}/slice.pgm")).astype(float)
    assert img.shape == (32, 32)  # rows are y, columns are x
    label = io.load_volume(f"{r}/label.vol")
    surface = SurfaceMask.from_label(label).mask[:, :, 16].T
    visited = io.load_volume(f"{r}/visited.vol").data[:, :, 16].T != 0
    tissue = (label.data[:, :, 16].T == 0) & ~surface & visited
    # echoes sit on the ridge faces and the plate under the gap, not in soft tissue
    assert img[surface & visited].mean() > 2 * img[tissue].mean()
    gap_col = 16
    plate_row = int(np.argmax(img[:, gap_col]))
    assert abs(plate_row - 22) <= 2
