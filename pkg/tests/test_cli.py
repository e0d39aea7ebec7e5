import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from bonsaigen.cli import main
from bonsaigen.formats import read_obj, read_pfm, read_ply_points, write_pgm8, write_png_gray
from bonsaigen.model import save_skeleton

from conftest import chain_skeleton

BASE_CONFIG = """\
seed = 42

[growth]
R = 1.0
n_attractors = 250
delta_l = 0.04
d_kill = 0.12
d_influence = 0.4
max_iterations = 120
stall_limit = 20

[sizing]
r_e = 0.015
i_g = 2.0
ring_segments = 6

[sampling]
density = 4000.0

[render]
views = 4
width = 64
height = 64

[fit]
budget = 3
views = 2
resolution = 48
"""


@pytest.fixture()
def config(tmp_path) -> Path:
    path = tmp_path / "config.toml"
    path.write_text(BASE_CONFIG)
    return path


def read_bytes_map(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


class TestGrowCommand:
    def test_deterministic_outputs(self, tmp_path, config, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["grow", "--config", str(config), "--out", str(a)]) == 0
        out = capsys.readouterr().out
        assert "nodes" in out and "attractors" in out
        assert main(["grow", "--config", str(config), "--out", str(b)]) == 0
        assert (a / "skeleton.json").read_bytes() == (b / "skeleton.json").read_bytes()
        assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()

    def test_seed_override_changes_output(self, tmp_path, config):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["grow", "--config", str(config), "--out", str(a)])
        main(["grow", "--config", str(config), "--seed", "7", "--out", str(b)])
        assert (a / "skeleton.json").read_bytes() != (b / "skeleton.json").read_bytes()

    def test_ordering_violation_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text(BASE_CONFIG.replace("d_kill = 0.12", "d_kill = 0.5"))
        rc = main(["grow", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "delta_l < d_kill < d_influence" in capsys.readouterr().err

    def test_missing_config_exit_1(self, tmp_path):
        rc = main(["grow", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)])
        assert rc == 1

    def test_unknown_config_key_exit_2(self, tmp_path, capsys):
        cfg = tmp_path / "typo.toml"
        cfg.write_text(BASE_CONFIG + "\n[growth2]\nfoo = 1\n")
        assert main(["grow", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "growth2" in capsys.readouterr().err

    def test_dump_attractors(self, tmp_path, config):
        out = tmp_path / "o"
        main(["grow", "--config", str(config), "--out", str(out), "--dump-attractors"])
        data = read_ply_points(out / "attractors.ply")
        assert len(data["x"]) >= 0


class TestMeshCommand:
    def test_counts_printed_and_match(self, tmp_path, config, capsys):
        skel_path = tmp_path / "skeleton.json"
        save_skeleton(chain_skeleton(11, delta_l=0.04), skel_path)
        out = tmp_path / "o"
        rc = main(["mesh", "--config", str(config), "--in", str(skel_path), "--out", str(out)])
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "vertices=66" in stdout and "faces=120" in stdout
        v, f = read_obj(out / "tree.obj")
        assert len(v) == 66 and len(f) == 120

    def test_missing_input_exit_1(self, tmp_path, config):
        rc = main(["mesh", "--config", str(config), "--in", str(tmp_path / "x.json"),
                   "--out", str(tmp_path)])
        assert rc == 1


class TestSampleCommand:
    def test_unsized_without_autosize_exit_2(self, tmp_path, config, capsys):
        skel_path = tmp_path / "s.json"
        save_skeleton(chain_skeleton(5, delta_l=0.04), skel_path)
        rc = main(["sample", "--config", str(config), "--in", str(skel_path),
                   "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "auto-size" in capsys.readouterr().err

    def test_exact_count_with_chosen_density(self, tmp_path, config):
        skel_path = tmp_path / "s.json"
        save_skeleton(chain_skeleton(5, delta_l=0.04), skel_path)
        out = tmp_path / "o"
        assert main(["mesh", "--config", str(config), "--in", str(skel_path),
                     "--out", str(out)]) == 0
        v, f = read_obj(out / "tree.obj")
        a = v[f[:, 0]]
        b = v[f[:, 1]]
        c = v[f[:, 2]]
        area = float(0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1).sum())
        density = 10_000 / area
        cfg2 = tmp_path / "cfg2.toml"
        cfg2.write_text(BASE_CONFIG.replace("density = 4000.0", f"density = {density!r}"))
        assert main(["sample", "--config", str(cfg2), "--in", str(skel_path),
                     "--auto-size", "--out", str(out)]) == 0
        cloud = read_ply_points(out / "cloud.ply")
        assert len(cloud["x"]) == 10_000


class TestGaussiansAndRender:
    @pytest.fixture()
    def artifacts(self, tmp_path, config):
        out = tmp_path / "o"
        skel_path = tmp_path / "s.json"
        save_skeleton(chain_skeleton(6, delta_l=0.04), skel_path)
        assert main(["sample", "--config", str(config), "--in", str(skel_path),
                     "--auto-size", "--out", str(out)]) == 0
        assert main(["gaussians", "--config", str(config), "--in", str(out / "cloud.ply"),
                     "--out", str(out)]) == 0
        return out

    def test_gaussians_ply_schema(self, artifacts):
        data = read_ply_points(artifacts / "gaussians.ply")
        for key in ("x", "y", "z", "sigma", "r", "g", "b", "opacity"):
            assert key in data
        assert (data["sigma"] > 0).all()

    def test_render_default_views_file_count(self, artifacts, config):
        out = artifacts / "views"
        rc = main(["render", "--config", str(config), "--in", str(artifacts / "gaussians.ply"),
                   "--out", str(out)])
        assert rc == 0
        files = sorted(p.name for p in out.iterdir())
        assert files == [
            "view0_color.ppm", "view0_depth.pfm",
            "view1_color.ppm", "view1_depth.pfm",
            "view2_color.ppm", "view2_depth.pfm",
            "view3_color.ppm", "view3_depth.pfm",
        ]

    def test_render_rerun_bit_identical(self, artifacts, config):
        out1, out2 = artifacts / "v1", artifacts / "v2"
        for out in (out1, out2):
            assert main(["render", "--config", str(config),
                         "--in", str(artifacts / "gaussians.ply"), "--out", str(out)]) == 0
        assert read_bytes_map(out1) == read_bytes_map(out2)

    def test_render_mesh_input(self, artifacts, tmp_path, config):
        skel_path = tmp_path / "s.json"
        out = artifacts / "meshviews"
        assert main(["mesh", "--config", str(config), "--in", str(skel_path),
                     "--out", str(artifacts)]) == 0
        rc = main(["render", "--config", str(config), "--in", str(artifacts / "tree.obj"),
                   "--views", "1", "--out", str(out)])
        assert rc == 0
        depth = read_pfm(out / "view0_depth.pfm")
        assert np.isfinite(depth).any()

    def test_render_empty_cloud_background(self, tmp_path, config):
        from bonsaigen.formats import write_ply_points

        empty = tmp_path / "empty.ply"
        cols = [(n, "float", np.empty(0)) for n in ("x", "y", "z", "sigma", "r", "g", "b", "opacity")]
        write_ply_points(empty, cols)
        out = tmp_path / "ev"
        rc = main(["render", "--config", str(config), "--in", str(empty),
                   "--views", "1", "--out", str(out)])
        assert rc == 0
        depth = read_pfm(out / "view0_depth.pfm")
        assert np.isinf(depth).all()


class TestFitCommand:
    def test_budget_one_returns_init_theta(self, tmp_path, config):
        masks = tmp_path / "masks"
        masks.mkdir()
        mask = np.zeros((48, 48), dtype=np.uint8)
        mask[8:40, 20:28] = 255
        write_pgm8(masks / "m0.pgm", mask)
        out = tmp_path / "fit"
        rc = main(["fit", "--config", str(config), "--masks", str(masks),
                   "--budget", "1", "--out", str(out)])
        assert rc == 0
        doc = json.loads((out / "theta_best.json").read_text())
        assert doc["theta"] == [1.0, 0.0, 0.0, 0.0]
        assert doc["loss_best"] == doc["loss_initial"]
        assert (out / "fit_trace.csv").exists()

    def test_corrupt_mask_skipped_with_warning(self, tmp_path, config, capsys):
        masks = tmp_path / "masks"
        masks.mkdir()
        mask = np.zeros((48, 48), dtype=np.uint8)
        mask[10:40, 22:26] = 255
        write_png_gray(masks / "good.png", mask)
        (masks / "bad.png").write_bytes(b"garbage bytes")
        out = tmp_path / "fit"
        rc = main(["fit", "--config", str(config), "--masks", str(masks),
                   "--budget", "1", "--out", str(out)])
        assert rc == 0
        err = capsys.readouterr().err
        assert "bad.png" in err and "skipping" in err

    def test_no_valid_masks_exit_2(self, tmp_path, config, capsys):
        masks = tmp_path / "masks"
        masks.mkdir()
        (masks / "junk.pgm").write_bytes(b"nope")
        rc = main(["fit", "--config", str(config), "--masks", str(masks),
                   "--out", str(tmp_path / "fit")])
        assert rc == 2
        assert "no valid masks" in capsys.readouterr().err

    def test_missing_masks_dir_exit_1(self, tmp_path, config):
        rc = main(["fit", "--config", str(config), "--masks", str(tmp_path / "nope"),
                   "--out", str(tmp_path / "fit")])
        assert rc == 1

    def test_bundled_recovery_fixture_regression(self, tmp_path, recovery_fixture):
        # end-to-end through mask files: the recorded single-seed regression
        # must at least halve the initial loss
        from bonsaigen.growth import grow
        from bonsaigen.meshing import build_mesh, compute_sizes
        from bonsaigen.render import default_camera_rig, render_silhouette, scene_bounds
        from bonsaigen import sample_attractors
        from bonsaigen.rng import stream_seed
        from conftest import recovery_setup

        base, sizing, fit_cfg = recovery_setup(recovery_fixture)
        seed = recovery_fixture["cli_regression_seed"]
        hidden = tuple(recovery_fixture["hidden_theta"])
        res = recovery_fixture["resolution"]
        masks = tmp_path / "masks"
        masks.mkdir()
        idx = 0
        for offset in recovery_fixture["target_seed_offsets"]:
            target_seed = seed + offset
            params = base.with_theta(hidden)
            field = sample_attractors(params.R, params.n_attractors,
                                      stream_seed(target_seed, "attractors"))
            skeleton, _ = grow(field, params)
            mesh = build_mesh(compute_sizes(skeleton, sizing), sizing)
            center, radius = scene_bounds(skeleton.positions())
            cams = default_camera_rig(
                center, radius, n_views=recovery_fixture["target_views"],
                seed=stream_seed(target_seed, "cameras"), width=res, height=res,
            )
            for cam in cams:
                sil = render_silhouette(mesh.vertices, mesh.faces, cam)
                write_pgm8(masks / f"mask{idx:03d}.pgm", sil.astype(np.uint8) * 255)
                idx += 1

        g = recovery_fixture["growth"]
        f = recovery_fixture["fit"]
        cfg_path = tmp_path / "recovery.toml"
        cfg_path.write_text(
            f"seed = {seed}\n\n[growth]\n"
            f"R = {g['R']}\nn_attractors = {g['n_attractors']}\n"
            f"delta_l = {g['delta_l']}\nd_kill = {g['d_kill']}\n"
            f"d_influence = {g['d_influence']}\n"
            f"max_iterations = {g['max_iterations']}\nstall_limit = {g['stall_limit']}\n\n"
            f"[sizing]\nr_e = {sizing.r_e}\ni_g = {sizing.i_g}\n"
            f"ring_segments = {sizing.ring_segments}\n\n"
            f"[fit]\ntheta_init = {list(fit_cfg.theta_init)}\n"
            f"theta_lo = {list(fit_cfg.theta_lo)}\ntheta_hi = {list(fit_cfg.theta_hi)}\n"
            f"step_sigma = {fit_cfg.step_sigma}\nbudget = {fit_cfg.budget}\n"
            f"views = {fit_cfg.views}\nresolution = {res}\n"
        )
        out = tmp_path / "fit"
        rc = main(["fit", "--config", str(cfg_path), "--masks", str(masks), "--out", str(out)])
        assert rc == 0
        doc = json.loads((out / "theta_best.json").read_text())
        assert doc["loss_best"] <= 0.5 * doc["loss_initial"]


class TestPipelineCommand:
    def test_artifacts_and_rerun_identical(self, tmp_path, config):
        out1, out2 = tmp_path / "p1", tmp_path / "p2"
        for out in (out1, out2):
            assert main(["pipeline", "--config", str(config), "--out", str(out)]) == 0
        expected = {
            "skeleton.json", "trace.csv", "tree.obj", "cloud.ply", "gaussians.ply",
            "view0_color.ppm", "view0_depth.pfm", "view1_color.ppm", "view1_depth.pfm",
            "view2_color.ppm", "view2_depth.pfm", "view3_color.ppm", "view3_depth.pfm",
        }
        assert {p.name for p in out1.iterdir()} == expected
        assert read_bytes_map(out1) == read_bytes_map(out2)

    def test_pipeline_with_masks_appends_fit(self, tmp_path, config):
        masks = tmp_path / "masks"
        masks.mkdir()
        mask = np.zeros((48, 48), dtype=np.uint8)
        mask[6:44, 18:30] = 255
        write_pgm8(masks / "m.pgm", mask)
        out = tmp_path / "p"
        rc = main(["pipeline", "--config", str(config), "--masks", str(masks),
                   "--out", str(out)])
        assert rc == 0
        assert (out / "theta_best.json").exists()
        assert (out / "fit_trace.csv").exists()


class TestEnvAndEntry:
    def test_bad_threads_env_exit_2(self, config, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("BONSAI_THREADS", "zero")
        rc = main(["grow", "--config", str(config), "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "BONSAI_THREADS" in capsys.readouterr().err

    def test_threads_env_does_not_change_bytes(self, tmp_path, config, monkeypatch):
        a, b = tmp_path / "a", tmp_path / "b"
        monkeypatch.setenv("BONSAI_THREADS", "1")
        main(["grow", "--config", str(config), "--out", str(a)])
        monkeypatch.setenv("BONSAI_THREADS", "8")
        main(["grow", "--config", str(config), "--out", str(b)])
        assert (a / "skeleton.json").read_bytes() == (b / "skeleton.json").read_bytes()

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "bonsaigen", "--version"],
            capture_output=True, text=True,
            env={"PYTHONPATH": str(Path(__file__).resolve().parents[1] / "src"), "PATH": "/usr/bin:/bin"},
        )
        assert proc.returncode == 0
        assert "bonsai" in proc.stdout
