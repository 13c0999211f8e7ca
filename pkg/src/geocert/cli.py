"""Command-line front end.

Subcommands: verify, pixel-bounds, render, soundcheck, distill, plot.
Exit codes: 0 success, 2 configuration error, 3 a step needs refinement,
4 soundness violations were found.  All inputs are validated before any
artifact is written, and the effective configuration is recorded into the
output directory for reproducibility.
"""

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .bounds import Box, concretize
from .envs import (
    ENV_BUILDERS,
    EnvConfig,
    get_env,
    latent_range,
    load_env,
    observe,
    step_exact,
)
from .fileio import write_json, write_png
from .geobounds import GeoBoundSettings, cache_key, pixel_bounds, save_pixel_bounds
from .plotting import write_phase_svg
from .policy import (
    DistillConfig,
    MLPSpec,
    distill,
    expert_controller,
    load_controller,
    save_controller,
)
from .reach import (
    reach_horizon,
    read_reach_json,
    simulate,
    slackness,
    soundness_check,
    write_reach_json,
    write_slack_csv,
    write_violations_json,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REFINE = 3
EXIT_VIOLATION = 4

_IMAGE_SIZES = (10, 25, 50, 100)


class ConfigError(Exception):
    """Invalid command configuration; maps to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    """Validated inputs shared by the verification subcommands."""

    env: EnvConfig
    env_ref: str
    controller: MLPSpec | None
    controller_ref: str | None
    x0: Box
    timesteps: int
    image_size: int
    settings: GeoBoundSettings
    out: Path
    seed: int
    check: int


def _resolve_env(ref: str, image_size: int) -> EnvConfig:
    path = Path(ref)
    if path.suffix == ".json":
        if not path.exists():
            raise ConfigError(f"environment manifest not found: {path}")
        return load_env(path)
    if ref not in ENV_BUILDERS:
        names = ", ".join(sorted(ENV_BUILDERS))
        raise ConfigError(f"unknown environment {ref!r} (expected one of {names} or a manifest path)")
    return get_env(ref, image_size)


def _resolve_controller(ref: str | None) -> MLPSpec | None:
    if ref is None:
        return None
    path = Path(ref)
    if not path.exists():
        raise ConfigError(f"controller file not found: {path}")
    try:
        mlp, _ = load_controller(path)
    except (KeyError, ValueError, json.JSONDecodeError) as err:
        raise ConfigError(f"malformed controller {path}: {err}") from err
    return mlp


def _parse_x0(raw: str | None, env: EnvConfig) -> Box:
    if raw is None:
        return env.init_set
    try:
        doc = json.loads(raw)
        box = Box(doc[0], doc[1])
    except (json.JSONDecodeError, ValueError, IndexError, TypeError) as err:
        raise ConfigError(f"bad --x0 (expected JSON [[lo...],[hi...]]): {err}") from err
    if box.dim != env.state_dim:
        raise ConfigError(f"--x0 has dim {box.dim}, environment state is {env.state_dim}")
    return box


def _build_config(args) -> RunConfig:
    if args.timesteps < 0:
        raise ConfigError("--timesteps must be nonnegative")
    env = _resolve_env(args.env, args.image_size)
    controller_ref = getattr(args, "controller", None)
    controller = _resolve_controller(controller_ref)
    if controller is not None and controller.input_dim != env.obs_dim:
        raise ConfigError(
            f"controller takes {controller.input_dim} inputs but the environment "
            f"observation has {env.obs_dim}"
        )
    settings = GeoBoundSettings(cells_per_dim=args.cells)
    return RunConfig(
        env=env,
        env_ref=args.env,
        controller=controller,
        controller_ref=controller_ref,
        x0=_parse_x0(args.x0, env),
        timesteps=args.timesteps,
        image_size=args.image_size,
        settings=settings,
        out=Path(args.out),
        seed=args.seed,
        check=args.check,
    )


def _record_config(cfg: RunConfig, command: str):
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_json(
        cfg.out / "run_config.json",
        {
            "command": command,
            "env": cfg.env_ref,
            "env_name": cfg.env.name,
            "controller": cfg.controller_ref,
            "x0": {"lo": cfg.x0.lo.tolist(), "hi": cfg.x0.hi.tolist()},
            "timesteps": cfg.timesteps,
            "image_size": cfg.image_size,
            "settings": asdict(cfg.settings),
            "seed": cfg.seed,
            "check": cfg.check,
        },
    )


def _write_runtime_csv(result, path):
    with open(path, "w") as fh:
        fh.write("t,seconds\n")
        for t, sec in enumerate(result.per_step_runtime):
            fh.write(f"{t + 1},{sec!r}\n")


def _sample_trajectories(env, mlp, x0: Box, T: int, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.stack([simulate(env, mlp, s, T)[0] for s in x0.sample(rng, n)])


def _cmd_verify(args) -> int:
    cfg = _build_config(args)
    if cfg.controller is None:
        raise ConfigError("verify needs --controller")
    _record_config(cfg, "verify")
    result = reach_horizon(cfg.env, cfg.controller, cfg.x0, cfg.timesteps, cfg.settings)
    write_reach_json(result, cfg.out / "reach.json")
    _write_runtime_csv(result, cfg.out / "runtime.csv")
    n_check = max(cfg.check, 1)
    samples = _sample_trajectories(
        cfg.env, cfg.controller, cfg.x0, result.horizon, n_check, cfg.seed
    )
    write_slack_csv(slackness(result, samples), cfg.out / "slack.csv")
    write_phase_svg(cfg.out / "phase.svg", result, samples, cfg.env.state_names)
    if result.partial:
        print(
            f"stopped early after {result.horizon} of {cfg.timesteps} steps: "
            "a dynamics denominator needs a tighter state box",
            file=sys.stderr,
        )
        return EXIT_REFINE
    report = soundness_check(
        cfg.env,
        cfg.controller,
        cfg.x0,
        result.horizon,
        cfg.check,
        cfg.seed,
        boxes=result.boxes,
    )
    write_violations_json(report, cfg.out / "violations.json")
    if report["n_violations"]:
        print(f"{report['n_violations']} containment violations", file=sys.stderr)
        return EXIT_VIOLATION
    print(f"verified {cfg.env.name} for {result.horizon} steps; artifacts in {cfg.out}")
    return EXIT_OK


def _cmd_pixel_bounds(args) -> int:
    cfg = _build_config(args)
    _record_config(cfg, "pixel-bounds")
    K, _ = latent_range(cfg.env, cfg.x0)
    dims = cfg.env.scene.param_dims
    offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    h, w = cfg.env.scene.image_size
    for i, e in enumerate(cfg.env.scene.entities):
        Ke = Box(K.lo[offsets[i] : offsets[i + 1]], K.hi[offsets[i] : offsets[i + 1]])
        pbs = pixel_bounds(e.sprite, e.transform, Ke, cfg.settings)
        save_pixel_bounds(cfg.out / "cache", cache_key(e.sprite, e.transform, Ke, cfg.settings), pbs)
        vals = concretize(pbs.value_bounds)
        write_png(cfg.out / f"entity{i}_lower.png", vals.lo.reshape(h, w, 3))
        write_png(cfg.out / f"entity{i}_upper.png", vals.hi.reshape(h, w, 3))
    print(f"pixel bounds for {len(cfg.env.scene.entities)} entities in {cfg.out}")
    return EXIT_OK


def _cmd_render(args) -> int:
    cfg = _build_config(args)
    _record_config(cfg, "render")
    env = cfg.env
    h, w = env.scene.image_size
    x = cfg.x0.center
    if cfg.controller is not None:
        states, _ = simulate(env, cfg.controller, x, cfg.timesteps)
    else:
        states = [x]
        for _ in range(cfg.timesteps):
            states.append(step_exact(env, states[-1], [0.0]))
        states = np.stack(states)
    for t, xt in enumerate(states):
        frame = observe(env, xt)[: h * w * 3].reshape(h, w, 3)
        write_png(cfg.out / f"frame_{t:03d}.png", frame)
    print(f"wrote {len(states)} frames to {cfg.out}")
    return EXIT_OK


def _cmd_soundcheck(args) -> int:
    cfg = _build_config(args)
    if cfg.controller is None:
        raise ConfigError("soundcheck needs --controller")
    _record_config(cfg, "soundcheck")
    result = reach_horizon(cfg.env, cfg.controller, cfg.x0, cfg.timesteps, cfg.settings)
    if result.partial:
        print("reachability stopped early; nothing to check", file=sys.stderr)
        return EXIT_REFINE
    report = soundness_check(
        cfg.env,
        cfg.controller,
        cfg.x0,
        cfg.timesteps,
        args.samples,
        cfg.seed,
        boxes=result.boxes,
    )
    write_violations_json(report, cfg.out / "violations.json")
    if report["n_violations"]:
        print(f"{report['n_violations']} containment violations", file=sys.stderr)
        return EXIT_VIOLATION
    print(f"{args.samples} trajectories contained; report in {cfg.out}")
    return EXIT_OK


def _cmd_distill(args) -> int:
    cfg = _build_config(args)
    _record_config(cfg, "distill")
    expert = expert_controller(cfg.env)
    dc = DistillConfig(expert, samples=args.samples, epochs=args.epochs, seed=cfg.seed)
    mlp, report = distill(cfg.env, dc)
    save_controller(mlp, cfg.out / "controller.json", report)
    print(
        f"distilled {cfg.env.name} controller (val mse {report['val_mse']:.2e}) "
        f"to {cfg.out / 'controller.json'}"
    )
    return EXIT_OK


def _cmd_plot(args) -> int:
    out = Path(args.out)
    reach_path = out / "reach.json"
    if not reach_path.exists():
        raise ConfigError(f"no reach.json in {out}; run verify first")
    result = read_reach_json(reach_path)
    write_phase_svg(out / "phase.svg", result)
    print(f"regenerated {out / 'phase.svg'}")
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, controller=True):
    p.add_argument("--env", required=True, help="environment name or manifest path")
    if controller:
        p.add_argument("--controller", help="controller.json path")
    p.add_argument("--timesteps", type=int, default=5)
    p.add_argument("--image-size", type=int, default=25, choices=_IMAGE_SIZES)
    p.add_argument("--cells", type=int, default=8, help="relaxation cells per parameter dim")
    p.add_argument("--x0", help="initial box override, JSON [[lo...],[hi...]]")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--check", type=int, default=100, help="trajectories for soundness checking")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="geocert",
        description="Sound reachable sets for image-based controllers under "
        "geometric scene perturbations.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("verify", help="compute reachable boxes and artifacts"))
    _add_common(sub.add_parser("pixel-bounds", help="per-entity pixel bound panels"), controller=False)
    _add_common(sub.add_parser("render", help="render closed-loop frames"))

    sc = sub.add_parser("soundcheck", help="Monte-Carlo containment check")
    _add_common(sc)
    sc.add_argument("--samples", type=int, default=1000, help="trajectory count")

    di = sub.add_parser("distill", help="train a controller from the built-in expert")
    _add_common(di, controller=False)
    di.add_argument("--samples", type=int, default=1500, help="training states")
    di.add_argument("--epochs", type=int, default=40)

    pl = sub.add_parser("plot", help="regenerate SVGs from an existing reach.json")
    pl.add_argument("--out", required=True, help="directory holding reach.json")
    return ap


_HANDLERS = {
    "verify": _cmd_verify,
    "pixel-bounds": _cmd_pixel_bounds,
    "render": _cmd_render,
    "soundcheck": _cmd_soundcheck,
    "distill": _cmd_distill,
    "plot": _cmd_plot,
}


def run_command(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
