import json

import numpy as np
import pytest

from fetv.cli import main
from fetv.images import Raster, load_pgm, save_pgm
from fetv.mesh import load_mesh

from conftest import smooth_disc


@pytest.fixture()
def disc_image(tmp_path):
    n = 16
    xs = (np.arange(n) + 0.5) / n
    xx, yy = np.meshgrid(xs, xs[::-1], indexing="xy")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    values = smooth_disc(pts).reshape(n, n)
    path = tmp_path / "disc.pgm"
    save_pgm(Raster(n, n, values), path)
    return path


def test_denoise_runs_and_reports(tmp_path, disc_image):
    out = tmp_path / "out.pgm"
    report = tmp_path / "report.json"
    code = main(["denoise", "--input", str(disc_image),
                 "--output", str(out), "--report", str(report),
                 "--algorithm", "split-bregman", "--degree", "0",
                 "--beta", "1e-3", "--lambda", "1e-3",
                 "--noise-sigma", "0.1", "--seed", "3"])
    assert code == 0
    data = json.loads(report.read_text())
    assert data["converged"] is True
    assert data["algorithm"] == "split-bregman"
    assert data["psnr"] > 20.0
    assert load_pgm(out).width == 16


def test_denoise_deterministic(tmp_path, disc_image):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / f"out_{tag}.pgm"
        report = tmp_path / f"rep_{tag}.json"
        code = main(["denoise", "--input", str(disc_image),
                     "--output", str(out), "--report", str(report),
                     "--algorithm", "split-bregman", "--degree", "0",
                     "--beta", "1e-3", "--lambda", "1e-3",
                     "--noise-sigma", "0.1", "--seed", "3"])
        assert code == 0
        outs.append((out.read_bytes(), report.read_text()))
    assert outs[0][0] == outs[1][0]
    assert json.loads(outs[0][1])["trace"] == json.loads(outs[1][1])["trace"]


def test_invalid_config_exit_code(tmp_path, disc_image):
    code = main(["denoise", "--input", str(disc_image),
                 "--fidelity", "l1", "--degree", "2",
                 "--algorithm", "cp-l1"])
    assert code == 1
    # unknown flag values are usage errors, still exit 1
    code = main(["denoise", "--input", str(disc_image), "--degree", "7"])
    assert code == 1
    code = main(["denoise", "--input", str(tmp_path / "missing.pgm")])
    assert code == 1


def test_non_convergence_exit_code(tmp_path, disc_image):
    out = tmp_path / "out.pgm"
    report = tmp_path / "rep.json"
    code = main(["denoise", "--input", str(disc_image),
                 "--output", str(out), "--report", str(report),
                 "--algorithm", "chambolle-pock", "--degree", "0",
                 "--beta", "1e-3", "--max-iter", "2",
                 "--noise-sigma", "0.1"])
    assert code == 2
    assert json.loads(report.read_text())["converged"] is False
    assert out.exists()


def test_inpaint_with_mask(tmp_path, disc_image):
    mask = tmp_path / "mask.txt"
    rng = np.random.default_rng(0)
    cells = rng.choice(4 * 16 * 16, size=300, replace=False)
    mask.write_text("".join(f"{c}\n" for c in sorted(cells)))
    report = tmp_path / "rep.json"
    code = main(["inpaint", "--input", str(disc_image),
                 "--mask", str(mask), "--report", str(report),
                 "--algorithm", "chambolle-pock", "--degree", "0",
                 "--beta", "1e-3", "--sigma-step", "0.7",
                 "--tau", "2e-4", "--scale", "1e-2",
                 "--max-iter", "20000"])
    assert code == 0
    data = json.loads(report.read_text())
    assert data["masked_cells"] == 300
    assert data["psnr"] > data["psnr_baseline"]


def test_dtv_command(tmp_path, disc_image, capsys):
    code = main(["dtv", "--input", str(disc_image), "--degree", "1",
                 "--s", "2"])
    assert code == 0
    out = dict(line.split("=") for line in
               capsys.readouterr().out.strip().splitlines())
    assert float(out["dtv"]) >= float(out["tv_exact"]) - 1e-12
    assert float(out["difference"]) >= -1e-12

    const = tmp_path / "const.pgm"
    save_pgm(Raster(4, 4, np.full((4, 4), 0.5)), const)
    code = main(["dtv", "--input", str(const), "--degree", "0"])
    assert code == 0
    out = dict(line.split("=") for line in
               capsys.readouterr().out.strip().splitlines())
    assert float(out["dtv"]) == 0.0


def test_dtv_command_mesh_coeffs(tmp_path, capsys):
    code = main(["make-mesh", "2", "2", "--output", str(tmp_path / "m.mesh")])
    assert code == 0
    mesh = load_mesh(tmp_path / "m.mesh")
    assert mesh.num_cells == 16
    coeffs = tmp_path / "c.txt"
    coeffs.write_text("".join(f"{v}\n" for v in np.arange(16) % 2))
    code = main(["dtv", "--mesh", str(tmp_path / "m.mesh"),
                 "--coeffs", str(coeffs), "--degree", "0"])
    assert code == 0
    out = dict(line.split("=") for line in
               capsys.readouterr().out.strip().splitlines())
    assert float(out["dtv"]) > 0

    assert main(["dtv"]) == 1  # neither image nor mesh+coeffs


def test_add_noise_command(tmp_path, disc_image):
    a = tmp_path / "noisy_a.pgm"
    b = tmp_path / "noisy_b.pgm"
    for path in (a, b):
        code = main(["add-noise", "--input", str(disc_image),
                     "--output", str(path), "--sigma", "0.1", "--seed", "7"])
        assert code == 0
    assert a.read_bytes() == b.read_bytes()

    ident = tmp_path / "ident.pgm"
    code = main(["add-noise", "--input", str(disc_image),
                 "--output", str(ident), "--sigma", "0"])
    assert code == 0
    assert ident.read_bytes() == disc_image.read_bytes()


def test_preset_loading(tmp_path, disc_image):
    preset = tmp_path / "preset.json"
    preset.write_text(json.dumps({
        "algorithm": "split-bregman", "degree": 0, "beta": 1e-3,
        "lambda": 1e-3, "s": 2}))
    report = tmp_path / "rep.json"
    code = main(["denoise", "--input", str(disc_image),
                 "--preset", str(preset), "--report", str(report),
                 "--noise-sigma", "0.1"])
    assert code == 0
    data = json.loads(report.read_text())
    assert data["algorithm"] == "split-bregman"
    assert data["params"]["beta"] == 1e-3


def test_shipped_presets_parse():
    import pathlib

    root = pathlib.Path(__file__).resolve().parents[1] / "presets"
    files = sorted(root.glob("*.json"))
    assert len(files) >= 12
    for f in files:
        data = json.loads(f.read_text())
        assert "algorithm" in data and "degree" in data and "beta" in data
