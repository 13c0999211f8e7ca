"""Closed-loop reachable-set driver.

One verification step chains the stages end to end: latent parameter ranges
from the state box, per-entity pixel bounds over those ranges, composite
image bounds, control bounds through the network, and finally an interval
step of the dynamics.  Iterating the step yields T-step reachable boxes;
Monte-Carlo rollouts of the exact closed loop check them from the outside.
"""

import csv
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .blend import ObservationBounds, blend_bounds
from .bounds import Box, LinearBounds, LinearMap, compose_affine
from .envs import (
    EnvConfig,
    RefinementNeededError,
    latent_range,
    observe,
    step_bounds,
    step_exact,
)
from .fileio import read_json, write_json
from .geobounds import GeoBoundSettings, pixel_bounds
from .policy import MLPSpec, policy_bounds, policy_eval


def worker_count() -> int:
    """Worker cap for parallel sections; GEOCERT_THREADS overrides, 1 means
    run inline."""
    raw = os.environ.get("GEOCERT_THREADS", "").strip()
    if raw:
        return max(1, int(raw))
    return min(4, os.cpu_count() or 1)


def _map(fn, items):
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ReachResult:
    """boxes[t] over-approximates the states reachable at step t; boxes[0]
    is the initial set.  control_boxes[t] bounds the action applied between
    boxes[t] and boxes[t+1].  partial marks an early stop on a refinement
    request."""

    boxes: tuple[Box, ...]
    control_boxes: tuple[Box, ...]
    per_step_runtime: tuple[float, ...]
    settings: dict
    partial: bool = False

    def __post_init__(self):
        if not self.boxes:
            raise ValueError("need at least the initial box")
        n_steps = len(self.boxes) - 1
        if len(self.control_boxes) != n_steps or len(self.per_step_runtime) != n_steps:
            raise ValueError(
                f"{len(self.boxes)} boxes need {n_steps} control boxes and runtimes, "
                f"got {len(self.control_boxes)} and {len(self.per_step_runtime)}"
            )

    @property
    def horizon(self) -> int:
        return len(self.boxes) - 1


@dataclass(frozen=True)
class SlacknessRow:
    """Summed per-dimension gap between the tightest sample and each face."""

    t: int
    upper_slack: float
    lower_slack: float
    n_samples: int


def _aux_bounds(env: EnvConfig, X: Box) -> LinearBounds:
    sel = np.zeros((env.n_aux, X.dim))
    for r, i in enumerate(env.aux_indices):
        sel[r, i] = 1.0
    return LinearBounds.exact(LinearMap(sel, np.zeros(env.n_aux)), X)


def reach_step(
    env: EnvConfig,
    mlp: MLPSpec,
    X: Box,
    settings: GeoBoundSettings = GeoBoundSettings(),
) -> tuple[Box, Box]:
    """One sound step of the closed loop: returns (X', U)."""
    K, mu_bounds = latent_range(env, X)
    dims = env.scene.param_dims
    offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)

    def entity_pixel_bounds(i):
        e = env.scene.entities[i]
        lo, hi = offsets[i], offsets[i + 1]
        return pixel_bounds(e.sprite, e.transform, Box(K.lo[lo:hi], K.hi[lo:hi]), settings)

    per_entity = _map(entity_pixel_bounds, range(len(env.scene.entities)))
    ob = blend_bounds(env.scene, per_entity)
    # re-express the pixel planes over the state box so the control bounds
    # keep the correlation between entities that share state variables
    obs_over_x = ObservationBounds(compose_affine(ob.bounds, mu_bounds), ob.image_shape)
    U, _ = policy_bounds(mlp, obs_over_x, _aux_bounds(env, X))
    return step_bounds(env, X, U), U


def reach_horizon(
    env: EnvConfig,
    mlp: MLPSpec,
    X0: Box,
    T: int,
    settings: GeoBoundSettings = GeoBoundSettings(),
) -> ReachResult:
    """Iterate reach_step T times from X0; stops early (partial result) if a
    step needs refinement."""
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    boxes = [X0]
    controls: list[Box] = []
    runtimes: list[float] = []
    partial = False
    for _ in range(T):
        start = time.perf_counter()
        try:
            nxt, U = reach_step(env, mlp, boxes[-1], settings)
        except RefinementNeededError:
            partial = True
            break
        runtimes.append(time.perf_counter() - start)
        boxes.append(nxt)
        controls.append(U)
    return ReachResult(
        tuple(boxes), tuple(controls), tuple(runtimes), asdict(settings), partial
    )


def simulate(env: EnvConfig, mlp: MLPSpec, x0, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact closed-loop rollout: states (T+1, d) and controls (T, 1)."""
    x = np.asarray(x0, dtype=float)
    states = [x]
    controls = []
    for _ in range(T):
        u = policy_eval(mlp, observe(env, x))
        x = step_exact(env, x, u)
        states.append(x)
        controls.append(u)
    return np.stack(states), np.stack(controls) if controls else np.zeros((0, 1))


def slackness(result: ReachResult, trajectories) -> list[SlacknessRow]:
    """Per step, how far the tightest sample sits from each box face,
    summed over state dimensions."""
    traj = np.asarray(trajectories, dtype=float)
    if traj.ndim != 3 or traj.shape[0] == 0:
        raise ValueError("need a nonempty (n, T+1, d) trajectory array")
    if traj.shape[1] != len(result.boxes):
        raise ValueError(
            f"trajectories cover {traj.shape[1]} steps, result has {len(result.boxes)}"
        )
    rows = []
    for t, box in enumerate(result.boxes):
        pts = traj[:, t, :]
        upper = float(np.sum(np.min(box.hi[None, :] - pts, axis=0)))
        lower = float(np.sum(np.min(pts - box.lo[None, :], axis=0)))
        rows.append(SlacknessRow(t, upper, lower, traj.shape[0]))
    return rows


def soundness_check(
    env: EnvConfig,
    mlp: MLPSpec,
    X0: Box,
    T: int,
    N: int,
    seed: int,
    boxes=None,
    settings: GeoBoundSettings = GeoBoundSettings(),
) -> dict:
    """Monte-Carlo check of the reachable boxes from the outside.

    Simulates N exact closed-loop trajectories from X0 and counts, per step,
    states falling outside the corresponding box.  boxes defaults to a fresh
    reach_horizon run; passing a precomputed (possibly perturbed) sequence
    checks that sequence instead.  Each trajectory i is reproducible from
    rng seed (seed, i).  Returns a JSON-ready report.
    """
    if N < 0:
        raise ValueError("sample count must be nonnegative")
    if boxes is None:
        boxes = reach_horizon(env, mlp, X0, T, settings).boxes
    boxes = list(boxes)
    if len(boxes) != T + 1:
        raise ValueError(f"need {T + 1} boxes for horizon {T}, got {len(boxes)}")

    def rollout(i):
        x0 = X0.sample(np.random.default_rng((seed, i)), 1)[0]
        states, _ = simulate(env, mlp, x0, T)
        return states

    trajectories = _map(rollout, range(N))
    per_step = [0] * (T + 1)
    violating: list[int] = []
    worst = float("inf")
    for i, states in enumerate(trajectories):
        bad = False
        for t, box in enumerate(boxes):
            margin = float(
                np.min(np.minimum(states[t] - box.lo, box.hi - states[t]))
            )
            worst = min(worst, margin)
            if not box.contains(states[t]):
                per_step[t] += 1
                bad = True
        if bad:
            violating.append(i)
    return {
        "n_trajectories": N,
        "horizon": T,
        "seed": seed,
        "n_violations": int(sum(per_step)),
        "per_step_violations": per_step,
        "worst_margin": worst if N else None,
        "violating_trajectories": violating,
    }


# ---------------------------------------------------------------------------
# artifact files


def _box_doc(b: Box) -> dict:
    return {"lo": b.lo.tolist(), "hi": b.hi.tolist()}


def write_reach_json(result: ReachResult, path):
    write_json(
        path,
        {
            "boxes": [_box_doc(b) for b in result.boxes],
            "control_boxes": [_box_doc(b) for b in result.control_boxes],
            "per_step_runtime": list(result.per_step_runtime),
            "settings": result.settings,
            "partial": result.partial,
        },
    )
    return path


def read_reach_json(path) -> ReachResult:
    doc = read_json(path)
    return ReachResult(
        tuple(Box(b["lo"], b["hi"]) for b in doc["boxes"]),
        tuple(Box(b["lo"], b["hi"]) for b in doc["control_boxes"]),
        tuple(doc["per_step_runtime"]),
        doc["settings"],
        doc["partial"],
    )


def write_slack_csv(rows: list[SlacknessRow], path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "upper_slack", "lower_slack", "n_samples"])
        for r in rows:
            out.writerow([r.t, repr(r.upper_slack), repr(r.lower_slack), r.n_samples])
    return path


def read_slack_csv(path) -> list[SlacknessRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            SlacknessRow(
                int(r["t"]),
                float(r["upper_slack"]),
                float(r["lower_slack"]),
                int(r["n_samples"]),
            )
            for r in reader
        ]


def write_violations_json(report: dict, path):
    write_json(path, report)
    return path
