import subprocess
import sys

import numpy as np
import pytest

from cpcomplete.cp_model import CPModel, reconstruct
from cpcomplete.fileio import load_mask, load_matrix, load_model, load_tensor, save_ppm, save_tensor


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "cpcomplete", *map(str, args)],
        capture_output=True,
        text=True,
    )


def small_tensor(seed=0, dims=(8, 9, 3), r=3):
    rng = np.random.default_rng(seed)
    mats = [rng.normal(size=(d, r)) for d in dims]
    mats = [m / np.linalg.norm(m, axis=0) for m in mats]
    return reconstruct(CPModel(*mats, rng.uniform(1, 2, r)))


@pytest.fixture
def workspace(tmp_path):
    t = small_tensor()
    tpath = tmp_path / "data.tns3"
    save_tensor(t, tpath)
    mpath = tmp_path / "obs.msk3"
    res = run_cli("mask", "--dims", "8,9,3", "--fraction", "0.7", "--seed", "1", "--out", mpath)
    assert res.returncode == 0, res.stderr
    return tmp_path, tpath, mpath


class TestMaskCommand:
    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a.msk3"
        b = tmp_path / "b.msk3"
        for out in (a, b):
            res = run_cli("mask", "--dims", "10,10,10", "--fraction", "0.3", "--seed", "1", "--out", out)
            assert res.returncode == 0, res.stderr
        assert a.read_bytes() == b.read_bytes()

    def test_fraction_count(self, tmp_path):
        out = tmp_path / "m.msk3"
        run_cli("mask", "--dims", "10,10,10", "--fraction", "0.7", "--seed", "2", "--out", out)
        assert load_mask(out).count == 700

    def test_rect_mask(self, tmp_path):
        out = tmp_path / "m.msk3"
        res = run_cli("mask", "--dims", "6,7,3", "--rect", "1,2,3,4", "--out", out)
        assert res.returncode == 0, res.stderr
        mask = load_mask(out)
        # columns 1..3 of rows 2..4 hidden in every channel
        assert mask.count == 6 * 7 * 3 - 3 * 3 * 3
        assert not mask.where[2, 1, 0]
        assert mask.where[0, 0, 0]

    def test_like_dimensions(self, tmp_path):
        tpath = tmp_path / "t.tns3"
        save_tensor(np.zeros((4, 5, 3)), tpath)
        out = tmp_path / "m.msk3"
        res = run_cli("mask", "--like", tpath, "--fraction", "0.5", "--seed", "0", "--out", out)
        assert res.returncode == 0, res.stderr
        assert load_mask(out).dims == (4, 5, 3)

    def test_missing_dims_is_usage_error(self, tmp_path):
        res = run_cli("mask", "--fraction", "0.5", "--out", tmp_path / "m.msk3")
        assert res.returncode == 2


class TestCompleteCommand:
    def test_runs_and_writes_artifacts(self, workspace):
        tmp, tpath, mpath = workspace
        res = run_cli(
            "complete", "--input", tpath, "--mask", mpath,
            "--rank", "5", "--max-iter", "30", "--tol", "1e-3", "--seed", "3",
            "--out", tmp / "model.cpm1", "--trace", tmp / "trace.csv",
            "--recon", tmp / "recon.tns3",
        )
        assert res.returncode == 0, res.stderr
        model = load_model(tmp / "model.cpm1")
        assert model.dims == (8, 9, 3)
        recon = load_tensor(tmp / "recon.tns3")
        t = load_tensor(tpath)
        mask = load_mask(mpath)
        assert np.array_equal(recon[mask.where], t[mask.where])

    def test_byte_identical_across_runs(self, workspace):
        tmp, tpath, mpath = workspace
        outs = []
        for tag in ("one", "two"):
            res = run_cli(
                "complete", "--input", tpath, "--mask", mpath,
                "--rank", "5", "--max-iter", "25", "--seed", "7",
                "--out", tmp / f"{tag}.cpm1", "--trace", tmp / f"{tag}.csv",
            )
            assert res.returncode == 0, res.stderr
            outs.append((
                (tmp / f"{tag}.cpm1").read_bytes(),
                (tmp / f"{tag}.csv").read_bytes(),
            ))
        assert outs[0] == outs[1]

    def test_fixed_mode_parses(self, workspace):
        tmp, tpath, mpath = workspace
        res = run_cli(
            "complete", "--input", tpath, "--mask", mpath,
            "--rank", "4", "--mode", "fixed:35", "--max-iter", "5",
            "--out", tmp / "m.cpm1",
        )
        assert res.returncode == 0, res.stderr

    def test_bad_mode_is_usage_error(self, workspace):
        tmp, tpath, mpath = workspace
        res = run_cli("complete", "--input", tpath, "--mask", mpath, "--mode", "banana")
        assert res.returncode == 2

    def test_bad_magic_is_data_error(self, workspace):
        tmp, tpath, mpath = workspace
        bogus = tmp / "bogus.bin"
        bogus.write_bytes(b"JUNKJUNKJUNK")
        res = run_cli("complete", "--input", bogus, "--mask", mpath)
        assert res.returncode == 3

    def test_unknown_flag_exits_two(self, workspace):
        tmp, tpath, mpath = workspace
        res = run_cli("complete", "--input", tpath, "--mask", mpath, "--frobnicate")
        assert res.returncode == 2

    def test_ppm_input(self, tmp_path):
        rng = np.random.default_rng(5)
        img = rng.integers(0, 256, size=(6, 8, 3)) / 255.0
        ipath = tmp_path / "img.ppm"
        save_ppm(img, ipath)
        res = run_cli("mask", "--like", ipath, "--fraction", "0.8", "--seed", "2", "--out", tmp_path / "m.msk3")
        assert res.returncode == 0, res.stderr
        res = run_cli(
            "complete", "--input", ipath, "--mask", tmp_path / "m.msk3",
            "--rank", "4", "--max-iter", "10", "--recon", tmp_path / "rec.ppm",
        )
        assert res.returncode == 0, res.stderr
        assert (tmp_path / "rec.ppm").read_bytes()[:2] == b"P6"

    def test_config_file_precedence(self, workspace):
        tmp, tpath, mpath = workspace
        cfg = tmp / "run.cfg"
        cfg.write_text("max-iter = 3\nrank = 4\n")
        res = run_cli(
            "complete", "--input", tpath, "--mask", mpath,
            "--config", cfg, "--rank", "5",
            "--out", tmp / "m.cpm1", "--trace", tmp / "t.csv",
        )
        assert res.returncode == 0, res.stderr
        # flag wins for rank, config wins for max-iter
        assert load_model(tmp / "m.cpm1").A.shape[1] <= 5
        with open(tmp / "t.csv") as fh:
            rows = fh.read().strip().splitlines()
        assert len(rows) - 1 <= 3


class TestMorDemoCommand:
    def test_tiny_pipeline_writes_reports(self, tmp_path):
        res = run_cli(
            "mor-demo", "--nx", "12", "--grid", "2", "--rank0", "4",
            "--eps", "1e-2", "--tests", "2", "--pod-rank", "3",
            "--max-iter", "30", "--outdir", tmp_path,
        )
        assert res.returncode == 0, res.stderr
        cp_basis = load_matrix(tmp_path / "cp_basis.mat1")
        pod_basis = load_matrix(tmp_path / "pod_basis.mat1")
        assert cp_basis.shape[0] == 144 and pod_basis.shape == (144, 3)
        lines = (tmp_path / "errors.csv").read_text().strip().splitlines()
        assert lines[0] == "test,mu1,mu2,cp_error,pod_error"
        assert len(lines) == 3
        comp = (tmp_path / "compression.csv").read_text()
        assert comp.startswith("scheme,rank,ratio")


class TestPodCommand:
    def test_writes_orthonormal_basis(self, tmp_path):
        rng = np.random.default_rng(6)
        save_tensor(rng.normal(size=(6, 6, 5)), tmp_path / "s.tns3")
        res = run_cli("pod", "--input", tmp_path / "s.tns3", "--rank", "3", "--out", tmp_path / "b.mat1")
        assert res.returncode == 0, res.stderr
        phi = load_matrix(tmp_path / "b.mat1")
        assert phi.shape == (36, 3)
        assert np.abs(phi.T @ phi - np.eye(3)).max() <= 1e-10


class TestReportCommand:
    def test_renders_dat(self, tmp_path):
        src = tmp_path / "x.csv"
        src.write_text("a,b\n1,2\n3,4\n")
        res = run_cli("report", "--input", src, "--out", tmp_path / "x.dat")
        assert res.returncode == 0, res.stderr
        assert (tmp_path / "x.dat").read_text() == "# a b\n1 2\n3 4\n"

    def test_missing_file_is_data_error(self, tmp_path):
        res = run_cli("report", "--input", tmp_path / "nope.csv", "--out", tmp_path / "x.dat")
        assert res.returncode in (2, 3)
