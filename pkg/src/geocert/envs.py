"""Built-in environments: dynamics graphs, scenes, and latent maps.

Each environment bundles a discrete-time dynamics graph f(x, u), a sprite
scene whose entities move under state-dependent transform parameters, an
initial state box, and a control interval. Dynamics use explicit Euler
updates (semi-implicit for the pendulum, where the angle update uses the
already-updated velocity) with the constants listed in each builder.

Velocity state components are appended to the flattened image as auxiliary
controller inputs, unscaled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from geocert.bounds import Box, Interval, IntervalDomainError, LinearBounds, concretize
from geocert.fileio import read_f32, read_json, write_f32, write_json
from geocert.graph import CompGraph, GraphBuilder, backward_bounds, concat_graphs, forward_eval
from geocert.scene import SceneConfig, SceneEntity, Sprite, TransformSpec, render

__all__ = [
    "DynamicsSpec",
    "EnvConfig",
    "ParamMapExpr",
    "RefinementNeededError",
    "ENV_BUILDERS",
    "build_acrobot",
    "build_cartpole",
    "build_pendulum",
    "get_env",
    "latent_range",
    "load_env",
    "observe",
    "entity_params",
    "save_env",
    "step_bounds",
    "step_exact",
    "assets_dir",
]


class RefinementNeededError(RuntimeError):
    """The state box is too wide for a sound step (a dynamics denominator's
    range touched zero); split the box and retry."""


@dataclass(frozen=True)
class DynamicsSpec:
    """Discrete-time update graph on the concatenated (state, control)."""

    graph: CompGraph
    dt: float
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class ParamMapExpr:
    """State -> transform-parameter graph for one scene entity."""

    graph: CompGraph


@dataclass(frozen=True)
class EnvConfig:
    name: str
    state_dim: int
    state_names: tuple[str, ...]
    dynamics: DynamicsSpec
    scene: SceneConfig
    init_set: Box
    control_interval: Interval
    aux_indices: tuple[int, ...] = ()
    aux_note: str = "velocity components appended to the flattened observation, unscaled"

    def __post_init__(self):
        if len(self.state_names) != self.state_dim:
            raise ValueError("state_names length != state_dim")
        if self.dynamics.graph.input_dim != self.state_dim + 1:
            raise ValueError("dynamics graph input must be (state, control)")
        if self.dynamics.graph.output_dim != self.state_dim:
            raise ValueError("dynamics graph output dim != state_dim")
        if self.init_set.dim != self.state_dim:
            raise ValueError("init_set dim != state_dim")
        for i, e in enumerate(self.scene.entities):
            pm = e.param_map
            if not isinstance(pm, ParamMapExpr):
                raise ValueError(f"entity {i} has no parameter map")
            if pm.graph.input_dim != self.state_dim:
                raise ValueError(f"entity {i} parameter map input dim != state_dim")
            if pm.graph.output_dim != e.transform.param_dim:
                raise ValueError(f"entity {i} parameter map output dim != param dim")

    @property
    def n_aux(self) -> int:
        return len(self.aux_indices)

    @property
    def obs_dim(self) -> int:
        h, w = self.scene.image_size
        return h * w * self.scene.channels + self.n_aux


# ---------------------------------------------------------------------------
# Exact semantics
# ---------------------------------------------------------------------------

def entity_params(env: EnvConfig, x) -> list[np.ndarray]:
    x = np.asarray(x, dtype=float)
    return [forward_eval(e.param_map.graph, x) for e in env.scene.entities]


def observe(env: EnvConfig, x) -> np.ndarray:
    """Flattened rendered image with auxiliary state components appended."""
    x = np.asarray(x, dtype=float)
    img = render(env.scene, entity_params(env, x))
    return np.concatenate([img.ravel(), x[list(env.aux_indices)]])


def step_exact(env: EnvConfig, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    u = np.clip(u, env.control_interval.lo, env.control_interval.hi)
    return forward_eval(env.dynamics.graph, np.concatenate([x, u]))


# ---------------------------------------------------------------------------
# Bounded semantics
# ---------------------------------------------------------------------------

def latent_range(env: EnvConfig, X: Box) -> tuple[Box, LinearBounds]:
    """Box and affine bounds on the concatenated transform parameters."""
    if X.dim != env.state_dim:
        raise ValueError(f"state box dim {X.dim} != state dim {env.state_dim}")
    merged = concat_graphs([e.param_map.graph for e in env.scene.entities])
    mu_bounds = backward_bounds(merged, X)
    return concretize(mu_bounds), mu_bounds


def step_bounds(env: EnvConfig, X: Box, U: Box) -> Box:
    if X.dim != env.state_dim or U.dim != 1:
        raise ValueError("state/control box dims do not match the environment")
    try:
        return concretize(backward_bounds(env.dynamics.graph, X.concat(U)))
    except IntervalDomainError as err:
        raise RefinementNeededError(
            f"{env.name}: state box too wide for a sound dynamics step ({err}); "
            "split the box and retry"
        ) from err


# ---------------------------------------------------------------------------
# Sprite painters (all values rounded through float32 so that built scenes
# and manifest-loaded scenes are bit-identical)
# ---------------------------------------------------------------------------

def _f32(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(float)


def _bar_sprite(n, pivot, length, half_w, color, direction, tip_color=None):
    """Bar of the given pixel length from the pivot along direction (+1 down,
    -1 up), with a slight lengthwise shade ramp."""
    canvas = np.zeros((n, n, 3))
    alpha = np.zeros((n, n))
    pr, pc = pivot
    color = np.asarray(color, dtype=float)
    for i in range(length + 1):
        r = pr + direction * i
        if not 0 <= r < n:
            continue
        shade = 0.75 + 0.25 * i / max(length, 1)
        canvas[r, pc - half_w : pc + half_w + 1] = color * shade
        alpha[r, pc - half_w : pc + half_w + 1] = 1.0
    if tip_color is not None:
        r = pr + direction * length
        if 0 <= r < n:
            canvas[r, pc - half_w : pc + half_w + 1] = tip_color
    return Sprite(_f32(canvas), _f32(alpha), (float(pr), float(pc)))


def _box_sprite(n, r0, r1, c0, c1, color, anchor):
    canvas = np.zeros((n, n, 3))
    alpha = np.zeros((n, n))
    canvas[r0:r1, c0:c1] = color
    alpha[r0:r1, c0:c1] = 1.0
    return Sprite(_f32(canvas), _f32(alpha), anchor)


def _flat_bg(n, level):
    return _f32(np.full((n, n, 3), level))


def _select_map(state_dim: int, index: int) -> ParamMapExpr:
    b = GraphBuilder()
    i = b.input(state_dim)
    return ParamMapExpr(b.build(b.select(i, [index])))


def _affine_map(state_dim: int, weights, bias) -> ParamMapExpr:
    b = GraphBuilder()
    i = b.input(state_dim)
    return ParamMapExpr(b.build(b.affine(i, weights, bias)))


# ---------------------------------------------------------------------------
# Pendulum: state (theta, omega), torque u in [-2, 2]
# ---------------------------------------------------------------------------

def _pendulum_dynamics(dt=0.05, g=10.0, m=1.0, l=1.0) -> DynamicsSpec:
    # omega' = omega + dt*(3g/(2l) sin(theta) + 3/(m l^2) u)
    # theta' = theta + dt*omega'   (semi-implicit: new omega drives the angle)
    k_s = 3.0 * g / (2.0 * l)
    k_u = 3.0 / (m * l * l)
    b = GraphBuilder()
    i = b.input(3)
    sth = b.nonlin("sin", b.select(i, [0]))
    omp = b.sum(
        b.affine(i, [[0.0, 1.0, dt * k_u]], [0.0]),
        b.affine(sth, [[dt * k_s]], [0.0]),
    )
    thp = b.sum(b.affine(i, [[1.0, 0.0, 0.0]], [0.0]), b.affine(omp, [[dt]], [0.0]))
    out = b.sum(b.embed(thp, 2, 0), b.embed(omp, 2, 1))
    return DynamicsSpec(
        b.build(out), dt, {"g": g, "m": m, "l": l, "torque_scale": k_u, "gravity_scale": k_s}
    )


def build_pendulum(image_size: int = 25) -> EnvConfig:
    n = image_size
    c = n // 2
    length = n // 2 - 2
    pole = _bar_sprite(
        n, (c, c), length, max(1, n // 16), [0.85, 0.25, 0.2], -1, tip_color=[1.0, 0.85, 0.3]
    )
    entity = SceneEntity(pole, TransformSpec("rotation", center=(float(c), float(c))), _select_map(2, 0))
    scene = SceneConfig(_flat_bg(n, 0.05), (entity,), (n, n))
    return EnvConfig(
        name="pendulum",
        state_dim=2,
        state_names=("theta", "omega"),
        dynamics=_pendulum_dynamics(),
        scene=scene,
        init_set=Box([np.deg2rad(40.0), 0.0], [np.deg2rad(45.0), 0.05]),
        control_interval=Interval(-2.0, 2.0),
        aux_indices=(1,),
    )


# ---------------------------------------------------------------------------
# CartPole: state (x, xdot, theta, omega), force u in [-10, 10]
# ---------------------------------------------------------------------------

def _cartpole_dynamics(dt=0.02, g=9.8, m_c=1.0, m_p=0.1, l=0.5) -> DynamicsSpec:
    # temp = (u + m_p l omega^2 sin(theta)) / (m_c + m_p)
    # thacc = (g sin - cos*temp) / (l (4/3 - m_p cos^2 / M));  xacc = temp - m_p l thacc cos / M
    M = m_c + m_p
    mpl = m_p * l
    b = GraphBuilder()
    i = b.input(5)
    sth = b.nonlin("sin", b.select(i, [2]))
    cth = b.nonlin("cos", b.select(i, [2]))
    om2_s = b.product(b.nonlin("square", b.select(i, [3])), sth)
    temp = b.sum(
        b.affine(i, [[0.0, 0.0, 0.0, 0.0, 1.0 / M]], [0.0]),
        b.affine(om2_s, [[mpl / M]], [0.0]),
    )
    denom = b.affine(b.nonlin("square", cth), [[-l * m_p / M]], [l * 4.0 / 3.0])
    thacc = b.product(
        b.sum(b.affine(sth, [[g]], [0.0]), b.affine(b.product(cth, temp), [[-1.0]], [0.0])),
        b.reciprocal(denom),
    )
    xacc = b.sum(temp, b.affine(b.product(thacc, cth), [[-mpl / M]], [0.0]))
    xp = b.affine(i, [[1.0, dt, 0.0, 0.0, 0.0]], [0.0])
    xdp = b.sum(b.affine(i, [[0.0, 1.0, 0.0, 0.0, 0.0]], [0.0]), b.affine(xacc, [[dt]], [0.0]))
    thp = b.affine(i, [[0.0, 0.0, 1.0, dt, 0.0]], [0.0])
    omp = b.sum(b.affine(i, [[0.0, 0.0, 0.0, 1.0, 0.0]], [0.0]), b.affine(thacc, [[dt]], [0.0]))
    out = b.sum(b.embed(xp, 4, 0), b.embed(xdp, 4, 1), b.embed(thp, 4, 2), b.embed(omp, 4, 3))
    return DynamicsSpec(b.build(out), dt, {"g": g, "m_cart": m_c, "m_pole": m_p, "l": l})


def build_cartpole(image_size: int = 25) -> EnvConfig:
    n = image_size
    c = n // 2
    px_per_unit = n / 12.0
    cart_h = max(2, n // 8)
    cart_half = max(2, n // 8)
    cart_top = n - 2 - cart_h
    cart = _box_sprite(
        n, cart_top, cart_top + cart_h, c - cart_half, c + cart_half + 1, [0.25, 0.45, 0.85],
        (float(cart_top), float(c)),
    )
    pole = _bar_sprite(
        n, (cart_top, c), n // 2 - 2, max(1, n // 20), [0.9, 0.6, 0.15], -1,
        tip_color=[0.95, 0.2, 0.2],
    )
    bg = np.full((n, n, 3), 0.08)
    bg[n - 2 :, :] = 0.25  # track under the cart
    cart_map = _affine_map(4, [[0.0] * 4, [px_per_unit, 0.0, 0.0, 0.0]], [0.0, 0.0])
    pole_map = _affine_map(
        4,
        [[0.0] * 4, [px_per_unit, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
        [0.0, 0.0, 0.0],
    )
    e_cart = SceneEntity(cart, TransformSpec("translation"), cart_map)
    e_pole = SceneEntity(
        pole,
        TransformSpec("rotation_then_translation", center=(float(cart_top), float(c))),
        pole_map,
    )
    scene = SceneConfig(_f32(bg), (e_cart, e_pole), (n, n))
    return EnvConfig(
        name="cartpole",
        state_dim=4,
        state_names=("x", "xdot", "theta", "omega"),
        dynamics=_cartpole_dynamics(),
        scene=scene,
        init_set=Box([-0.05, -0.02, -0.04, -0.02], [0.05, 0.02, 0.04, 0.02]),
        control_interval=Interval(-10.0, 10.0),
        aux_indices=(1, 3),
    )


# ---------------------------------------------------------------------------
# Acrobot: state (theta1, theta2, omega1, omega2), torque u in [-1, 1]
# ---------------------------------------------------------------------------

def _acrobot_dynamics(dt=0.2, g=9.8) -> DynamicsSpec:
    # two-link arm with m1 = m2 = 1, l1 = 1, lc1 = lc2 = 0.5, I1 = I2 = 1:
    #   d1 = 3.5 + cos(t2), d2 = 1.25 + 0.5 cos(t2)
    #   phi2 = 4.9 cos(t1 + t2 - pi/2)
    #   phi1 = -0.5 w2^2 sin(t2) - w1 w2 sin(t2) + 14.7 cos(t1 - pi/2) + phi2
    #   w2acc = (u + (d2/d1) phi1 - 0.5 w1^2 sin(t2) - phi2) / (1.25 - d2^2/d1)
    #   w1acc = -(d2 w2acc + phi1) / d1
    b = GraphBuilder()
    i = b.input(5)
    w1 = b.select(i, [2])
    w2 = b.select(i, [3])
    u = b.select(i, [4])
    s2 = b.nonlin("sin", b.select(i, [1]))
    c2 = b.nonlin("cos", b.select(i, [1]))
    d1 = b.affine(c2, [[1.0]], [3.5])
    d2 = b.affine(c2, [[0.5]], [1.25])
    phi2 = b.affine(
        b.nonlin("cos", b.affine(i, [[1.0, 1.0, 0.0, 0.0, 0.0]], [-math.pi / 2])),
        [[4.9]],
        [0.0],
    )
    ca1 = b.nonlin("cos", b.affine(i, [[1.0, 0.0, 0.0, 0.0, 0.0]], [-math.pi / 2]))
    phi1 = b.sum(
        b.affine(b.product(b.nonlin("square", w2), s2), [[-0.5]], [0.0]),
        b.affine(b.product(b.product(w1, w2), s2), [[-1.0]], [0.0]),
        b.affine(ca1, [[14.7]], [0.0]),
        phi2,
    )
    d1_inv = b.reciprocal(d1)
    denom2 = b.affine(b.product(b.nonlin("square", d2), d1_inv), [[-1.0]], [1.25])
    num2 = b.sum(
        u,
        b.product(b.product(d2, d1_inv), phi1),
        b.affine(b.product(b.nonlin("square", w1), s2), [[-0.5]], [0.0]),
        b.affine(phi2, [[-1.0]], [0.0]),
    )
    w2acc = b.product(num2, b.reciprocal(denom2))
    w1acc = b.product(
        b.affine(b.sum(b.product(d2, w2acc), phi1), [[-1.0]], [0.0]), d1_inv
    )
    t1p = b.affine(i, [[1.0, 0.0, dt, 0.0, 0.0]], [0.0])
    t2p = b.affine(i, [[0.0, 1.0, 0.0, dt, 0.0]], [0.0])
    w1p = b.sum(b.affine(i, [[0.0, 0.0, 1.0, 0.0, 0.0]], [0.0]), b.affine(w1acc, [[dt]], [0.0]))
    w2p = b.sum(b.affine(i, [[0.0, 0.0, 0.0, 1.0, 0.0]], [0.0]), b.affine(w2acc, [[dt]], [0.0]))
    out = b.sum(b.embed(t1p, 4, 0), b.embed(t2p, 4, 1), b.embed(w1p, 4, 2), b.embed(w2p, 4, 3))
    return DynamicsSpec(
        b.build(out), dt, {"g": g, "m1": 1.0, "m2": 1.0, "l1": 1.0, "lc1": 0.5, "lc2": 0.5}
    )


def build_acrobot(image_size: int = 25) -> EnvConfig:
    n = image_size
    c = n // 2
    r = n // 4
    arm1 = _bar_sprite(n, (c, c), r, max(1, n // 16), [0.3, 0.75, 0.35], +1)
    arm2 = _bar_sprite(n, (c, c), r, max(1, n // 20), [0.35, 0.45, 0.9], +1, tip_color=[0.9, 0.9, 0.3])
    arm1_map = _select_map(4, 0)
    b = GraphBuilder()
    i = b.input(4)
    t1 = b.select(i, [0])
    arm2_graph = b.build(
        b.sum(
            b.embed(b.nonlin("cos", t1), 3, 0, scale=float(r)),
            b.embed(b.nonlin("sin", t1), 3, 1, scale=float(r)),
            b.embed(b.select(i, [1]), 3, 2),
        )
    )
    cen = (float(c), float(c))
    e1 = SceneEntity(arm1, TransformSpec("rotation", center=cen), arm1_map)
    e2 = SceneEntity(
        arm2, TransformSpec("rotation_then_translation", center=cen), ParamMapExpr(arm2_graph)
    )
    scene = SceneConfig(_flat_bg(n, 0.05), (e1, e2), (n, n))
    return EnvConfig(
        name="acrobot",
        state_dim=4,
        state_names=("theta1", "theta2", "omega1", "omega2"),
        dynamics=_acrobot_dynamics(),
        scene=scene,
        init_set=Box(
            [np.deg2rad(45.0), np.deg2rad(10.0), -0.05, -0.05],
            [np.deg2rad(50.0), np.deg2rad(13.0), 0.05, 0.05],
        ),
        control_interval=Interval(-1.0, 1.0),
        aux_indices=(2, 3),
    )


ENV_BUILDERS = {
    "pendulum": build_pendulum,
    "cartpole": build_cartpole,
    "acrobot": build_acrobot,
}


# ---------------------------------------------------------------------------
# Manifests: JSON header + one float32 blob for all image arrays
# ---------------------------------------------------------------------------

def assets_dir() -> Path:
    return Path(__file__).parent / "assets"


def save_env(env: EnvConfig, json_path) -> Path:
    json_path = Path(json_path)
    blob_name = json_path.stem + ".bin"
    arrays = [env.scene.background]
    for e in env.scene.entities:
        arrays.extend([e.sprite.canvas, e.sprite.alpha])
    offsets = []
    off = 0
    for a in arrays:
        offsets.append(off)
        off += a.size
    flat = np.concatenate([a.ravel() for a in arrays])

    def arr_ref(idx):
        return {"shape": list(arrays[idx].shape), "offset": offsets[idx]}

    entities = []
    for j, e in enumerate(env.scene.entities):
        t = e.transform
        entities.append(
            {
                "transform": {
                    "kind": t.kind,
                    "center": None if t.center is None else list(t.center),
                    "intensity": None if t.intensity is None else list(t.intensity),
                },
                "param_map": e.param_map.graph.to_dict(),
                "anchor": list(e.sprite.anchor),
                "canvas": arr_ref(1 + 2 * j),
                "alpha": arr_ref(2 + 2 * j),
            }
        )
    manifest = {
        "name": env.name,
        "image_size": list(env.scene.image_size),
        "state_dim": env.state_dim,
        "state_names": list(env.state_names),
        "dt": env.dynamics.dt,
        "constants": env.dynamics.constants,
        "dynamics": env.dynamics.graph.to_dict(),
        "control_interval": [env.control_interval.lo, env.control_interval.hi],
        "init_set": {"lo": env.init_set.lo.tolist(), "hi": env.init_set.hi.tolist()},
        "aux_indices": list(env.aux_indices),
        "aux_note": env.aux_note,
        "background": arr_ref(0),
        "entities": entities,
        "blob": blob_name,
    }
    json_path.parent.mkdir(parents=True, exist_ok=True)
    write_f32(json_path.parent / blob_name, flat)
    write_json(json_path, manifest)
    return json_path


def load_env(json_path) -> EnvConfig:
    json_path = Path(json_path)
    m = read_json(json_path)
    blob_path = json_path.parent / m["blob"]
    refs = [m["background"]]
    for spec in m["entities"]:
        refs.extend([spec["canvas"], spec["alpha"]])
    total = sum(int(np.prod(r["shape"])) for r in refs)
    flat = read_f32(blob_path, (total,))

    def arr(ref):
        n = int(np.prod(ref["shape"]))
        return flat[ref["offset"] : ref["offset"] + n].reshape(ref["shape"])

    entities = []
    for spec in m["entities"]:
        t = spec["transform"]
        transform = TransformSpec(
            t["kind"],
            center=None if t["center"] is None else tuple(t["center"]),
            intensity=None if t["intensity"] is None else tuple(t["intensity"]),
        )
        sprite = Sprite(arr(spec["canvas"]), arr(spec["alpha"]), tuple(spec["anchor"]))
        entities.append(
            SceneEntity(sprite, transform, ParamMapExpr(CompGraph.from_dict(spec["param_map"])))
        )
    scene = SceneConfig(arr(m["background"]), tuple(entities), tuple(m["image_size"]))
    return EnvConfig(
        name=m["name"],
        state_dim=m["state_dim"],
        state_names=tuple(m["state_names"]),
        dynamics=DynamicsSpec(CompGraph.from_dict(m["dynamics"]), m["dt"], m["constants"]),
        scene=scene,
        init_set=Box(m["init_set"]["lo"], m["init_set"]["hi"]),
        control_interval=Interval(*m["control_interval"]),
        aux_indices=tuple(m["aux_indices"]),
        aux_note=m["aux_note"],
    )


def get_env(name: str, image_size: int = 25) -> EnvConfig:
    """Shipped manifest when one matches, otherwise the procedural builder."""
    if name not in ENV_BUILDERS:
        raise ValueError(f"unknown environment {name!r}; have {sorted(ENV_BUILDERS)}")
    manifest = assets_dir() / f"{name}_{image_size}.json"
    if manifest.exists():
        return load_env(manifest)
    return ENV_BUILDERS[name](image_size)
