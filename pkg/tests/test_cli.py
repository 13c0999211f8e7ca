"""End-to-end tests of the command-line interface."""

import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

import geocert.cli as cli
from geocert.cli import run_command
from geocert.envs import build_pendulum
from geocert.policy import load_controller
from geocert.reach import read_reach_json


@pytest.fixture(scope="module")
def controller_path(tmp_path_factory):
    out = tmp_path_factory.mktemp("ctl")
    code = run_command(
        [
            "distill",
            "--env",
            "pendulum",
            "--image-size",
            "10",
            "--samples",
            "60",
            "--epochs",
            "3",
            "--seed",
            "4",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    return out / "controller.json"


def verify_args(controller_path, out, extra=()):
    return [
        "verify",
        "--env",
        "pendulum",
        "--image-size",
        "10",
        "--controller",
        str(controller_path),
        "--timesteps",
        "2",
        "--cells",
        "4",
        "--check",
        "25",
        "--out",
        str(out),
        *extra,
    ]


class TestDistillCommand:
    def test_writes_valid_controller(self, controller_path):
        mlp, meta = load_controller(controller_path)
        assert mlp.input_dim == 10 * 10 * 3 + 1
        assert "weights_hash" in meta and "val_mse" in meta

    def test_unknown_env_exits_2(self, tmp_path):
        code = run_command(
            ["distill", "--env", "lander", "--out", str(tmp_path / "x"), "--samples", "5"]
        )
        assert code == 2


class TestVerifyCommand:
    def test_happy_path_artifacts(self, controller_path, tmp_path):
        out = tmp_path / "run"
        assert run_command(verify_args(controller_path, out)) == 0
        for name in (
            "reach.json",
            "slack.csv",
            "phase.svg",
            "runtime.csv",
            "violations.json",
            "run_config.json",
        ):
            assert (out / name).exists(), name
        result = read_reach_json(out / "reach.json")
        assert result.horizon == 2 and not result.partial
        svg = (out / "phase.svg").read_text()
        rects = list(ET.fromstring(svg).iter("{http://www.w3.org/2000/svg}rect"))
        assert len(rects) == 3
        report = json.loads((out / "violations.json").read_text())
        assert report["n_violations"] == 0
        cfgdoc = json.loads((out / "run_config.json").read_text())
        assert cfgdoc["command"] == "verify" and cfgdoc["timesteps"] == 2

    def test_zero_horizon(self, controller_path, tmp_path):
        out = tmp_path / "t0"
        args = verify_args(controller_path, out)
        args[args.index("--timesteps") + 1] = "0"
        assert run_command(args) == 0
        result = read_reach_json(out / "reach.json")
        assert len(result.boxes) == 1
        svg = (out / "phase.svg").read_text()
        assert len(list(ET.fromstring(svg).iter("{http://www.w3.org/2000/svg}rect"))) == 1

    def test_missing_controller_no_artifacts(self, tmp_path):
        out = tmp_path / "missing"
        assert run_command(verify_args(tmp_path / "nope.json", out)) == 2
        assert not out.exists()

    def test_controller_required(self, tmp_path):
        out = tmp_path / "noctl"
        args = [
            "verify", "--env", "pendulum", "--image-size", "10",
            "--timesteps", "1", "--out", str(out),
        ]
        assert run_command(args) == 2
        assert not out.exists()

    def test_bad_x0_exits_2(self, controller_path, tmp_path):
        out = tmp_path / "badx0"
        assert run_command(verify_args(controller_path, out, ("--x0", "[1,2"))) == 2
        assert not out.exists()

    def test_wrong_x0_dim_exits_2(self, controller_path, tmp_path):
        out = tmp_path / "badx0dim"
        assert run_command(verify_args(controller_path, out, ("--x0", "[[0],[1]]"))) == 2

    def test_controller_env_mismatch_exits_2(self, controller_path, tmp_path):
        out = tmp_path / "mismatch"
        args = verify_args(controller_path, out)
        args[args.index("--image-size") + 1] = "25"
        assert run_command(args) == 2
        assert not out.exists()

    def test_violations_exit_4(self, controller_path, tmp_path, monkeypatch):
        out = tmp_path / "faulty"

        def fake_check(*a, **k):
            return {
                "n_trajectories": 5,
                "horizon": 2,
                "seed": 0,
                "n_violations": 3,
                "per_step_violations": [0, 2, 1],
                "worst_margin": -0.25,
                "violating_trajectories": [1, 4],
            }

        monkeypatch.setattr(cli, "soundness_check", fake_check)
        assert run_command(verify_args(controller_path, out)) == 4
        assert (out / "violations.json").exists()

    def test_refinement_needed_exit_3(self, tmp_path):
        from geocert.bounds import Box, Interval, LinearMap
        from geocert.envs import DynamicsSpec, EnvConfig, ParamMapExpr, save_env
        from geocert.graph import GraphBuilder
        from geocert.policy import MLPSpec, save_controller
        from geocert.scene import SceneConfig, SceneEntity, Sprite, TransformSpec

        b = GraphBuilder()
        i = b.input(2)
        graph = b.build(b.reciprocal(b.select(i, [0])))
        n = 5
        sprite = Sprite(np.zeros((n, n, 3)), np.zeros((n, n)), (2.0, 2.0))
        pm = GraphBuilder()
        j = pm.input(1)
        entity = SceneEntity(
            sprite,
            TransformSpec("rotation", center=(2.0, 2.0)),
            ParamMapExpr(pm.build(pm.select(j, [0]))),
        )
        env = EnvConfig(
            name="inverse",
            state_dim=1,
            state_names=("x",),
            dynamics=DynamicsSpec(graph, 0.1),
            scene=SceneConfig(np.zeros((n, n, 3)), (entity,), (n, n)),
            init_set=Box([-1.0], [2.0]),
            control_interval=Interval(-1.0, 1.0),
        )
        manifest = save_env(env, tmp_path / "inverse.json")
        rng = np.random.default_rng(0)
        obs_dim = n * n * 3
        mlp = MLPSpec(
            ((LinearMap(rng.normal(0, 0.1, (1, obs_dim)), np.zeros(1)), "tanh"),),
            env.control_interval,
        )
        ctl = save_controller(mlp, tmp_path / "ctl.json")
        out = tmp_path / "refine"
        code = run_command(
            [
                "verify", "--env", str(manifest), "--controller", str(ctl),
                "--timesteps", "2", "--out", str(out),
            ]
        )
        assert code == 3
        assert (out / "reach.json").exists()
        assert read_reach_json(out / "reach.json").partial


class TestOtherCommands:
    def test_render_frames(self, controller_path, tmp_path):
        out = tmp_path / "frames"
        args = [
            "render", "--env", "pendulum", "--image-size", "10",
            "--controller", str(controller_path), "--timesteps", "3",
            "--out", str(out),
        ]
        assert run_command(args) == 0
        for t in range(4):
            assert (out / f"frame_{t:03d}.png").exists()

    def test_render_without_controller(self, tmp_path):
        out = tmp_path / "frames0"
        args = [
            "render", "--env", "pendulum", "--image-size", "10",
            "--timesteps", "1", "--out", str(out),
        ]
        assert run_command(args) == 0
        assert (out / "frame_001.png").exists()

    def test_pixel_bounds_artifacts(self, tmp_path):
        out = tmp_path / "pb"
        args = [
            "pixel-bounds", "--env", "pendulum", "--image-size", "10",
            "--cells", "4", "--out", str(out),
        ]
        assert run_command(args) == 0
        assert (out / "entity0_lower.png").exists()
        assert (out / "entity0_upper.png").exists()
        cache_files = list((out / "cache").glob("*.json"))
        assert len(cache_files) == 1
        from geocert.geobounds import load_pixel_bounds

        pbs = load_pixel_bounds(out / "cache", cache_files[0].stem)
        assert pbs is not None and pbs.image_shape == (10, 10, 3)

    def test_plot_regenerates(self, controller_path, tmp_path):
        out = tmp_path / "plotrun"
        assert run_command(verify_args(controller_path, out)) == 0
        (out / "phase.svg").unlink()
        assert run_command(["plot", "--out", str(out)]) == 0
        assert (out / "phase.svg").exists()

    def test_plot_without_reach_exits_2(self, tmp_path):
        assert run_command(["plot", "--out", str(tmp_path)]) == 2

    def test_soundcheck(self, controller_path, tmp_path):
        out = tmp_path / "sc"
        args = [
            "soundcheck", "--env", "pendulum", "--image-size", "10",
            "--controller", str(controller_path), "--timesteps", "1",
            "--cells", "4", "--samples", "40", "--out", str(out),
        ]
        assert run_command(args) == 0
        report = json.loads((out / "violations.json").read_text())
        assert report["n_trajectories"] == 40 and report["n_violations"] == 0
