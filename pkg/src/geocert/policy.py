"""Fully connected controllers over flattened image + auxiliary inputs.

An MLPSpec is a stack of affine layers with elementwise activations whose
final activation is always a tanh rescaled to the control interval, so the
emitted action can never leave that interval.  The module provides exact
evaluation, relaxation against injected pixel bounds, JSON serialization,
generic expert controllers, and a seeded behavior-cloning distiller that
produces the test controllers used throughout the suite.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blend import ObservationBounds
from .bounds import Box, Interval, LinearBounds, LinearMap, concretize
from .envs import EnvConfig, observe
from .fileio import digest, read_json, write_json
from .graph import (
    CompGraph,
    GraphBuilder,
    PrecomputedBound,
    backward_bounds,
    forward_eval,
)

_HIDDEN_ACTS = ("relu", "tanh", "identity")


class DistillDivergenceError(RuntimeError):
    """Training produced a non-finite loss or weight; carries the epoch."""

    def __init__(self, epoch: int):
        super().__init__(f"distillation diverged (non-finite loss) at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class MLPSpec:
    """Controller network.

    layers[i] = (LinearMap, activation).  Hidden activations come from
    {relu, tanh, identity}; the last activation must be "tanh", which acts
    as the output squash: u = center + radius * tanh(z) with center/radius
    taken from control_interval.
    """

    layers: tuple[tuple[LinearMap, str], ...]
    control_interval: Interval

    def __post_init__(self):
        layers = tuple((m, act) for m, act in self.layers)
        if not layers:
            raise ValueError("controller needs at least one layer")
        for _, act in layers[:-1]:
            if act not in _HIDDEN_ACTS:
                raise ValueError(f"unknown activation {act!r}")
        if layers[-1][1] != "tanh":
            raise ValueError("final activation must be the tanh output squash")
        for (a, _), (b, _) in zip(layers, layers[1:]):
            if b.in_dim != a.out_dim:
                raise ValueError(
                    f"layer shapes do not chain: {a.out_dim} -> {b.in_dim}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].out_dim


def _act(act: str, z: np.ndarray) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    return z


def policy_eval(mlp: MLPSpec, obs) -> np.ndarray:
    """Exact forward pass for one observation (d,) or a batch (n, d)."""
    h = np.asarray(obs, dtype=float)
    if h.shape[-1] != mlp.input_dim:
        raise ValueError(f"observation has dim {h.shape[-1]}, net takes {mlp.input_dim}")
    for m, act in mlp.layers:
        h = _act(act, h @ m.weights.T + m.bias)
    ci = mlp.control_interval
    return ci.center + ci.radius * h


def policy_graph(mlp: MLPSpec) -> CompGraph:
    """The controller as a CompGraph on the raw observation vector."""
    b = GraphBuilder()
    h = b.input(mlp.input_dim)
    for m, act in mlp.layers:
        z = b.affine(h, m.weights, m.bias)
        h = z if act == "identity" else b.nonlin(act, z)
    n_u = mlp.output_dim
    ci = mlp.control_interval
    squash = b.affine(h, np.eye(n_u) * ci.radius, np.full(n_u, ci.center))
    return b.build(squash)


def _standin_graph(mlp: MLPSpec, n_pix: int, domain_dim: int):
    """Controller graph whose pixel (and aux) inputs are opaque zero-affine
    nodes meant to carry injected bounds over a domain of dim domain_dim."""
    n_aux = mlp.input_dim - n_pix
    b = GraphBuilder()
    x = b.input(domain_dim)
    pix = b.affine(x, np.zeros((n_pix, domain_dim)), np.zeros(n_pix))
    aux = None
    h = None
    for i, (m, act) in enumerate(mlp.layers):
        if i == 0:
            z = b.affine(pix, m.weights[:, :n_pix], m.bias)
            if n_aux:
                aux = b.affine(x, np.zeros((n_aux, domain_dim)), np.zeros(n_aux))
                z = b.sum(z, b.affine(aux, m.weights[:, n_pix:], np.zeros(m.out_dim)))
        else:
            z = b.affine(h, m.weights, m.bias)
        h = z if act == "identity" else b.nonlin(act, z)
    n_u = mlp.output_dim
    ci = mlp.control_interval
    squash = b.affine(h, np.eye(n_u) * ci.radius, np.full(n_u, ci.center))
    return b.build(squash), pix, aux


def policy_bounds(
    mlp: MLPSpec, obs_bounds: ObservationBounds, aux_bounds: LinearBounds
) -> tuple[Box, LinearBounds]:
    """Sound control bounds from pixel and auxiliary-input bounds.

    Both bound sets must share one domain (the perturbation box, or the
    state box when composed through the latent maps).  Returns the
    concretized control box, clipped to the always-valid squash range, and
    the affine control bounds over that same domain.
    """
    ob = obs_bounds.bounds
    n_pix = ob.out_dim
    if n_pix + aux_bounds.out_dim != mlp.input_dim:
        raise ValueError(
            f"{n_pix} pixel rows + {aux_bounds.out_dim} aux rows "
            f"!= controller input {mlp.input_dim}"
        )
    if ob.domain != aux_bounds.domain:
        raise ValueError("pixel and aux bounds have different domains")
    graph, pix, aux = _standin_graph(mlp, n_pix, ob.domain.dim)
    injected = [PrecomputedBound(pix, ob)]
    if aux is not None:
        injected.append(PrecomputedBound(aux, aux_bounds))
    u_bounds = backward_bounds(graph, ob.domain, injected)
    raw = concretize(u_bounds)
    ci = mlp.control_interval
    U = Box(np.clip(raw.lo, ci.lo, ci.hi), np.clip(raw.hi, ci.lo, ci.hi))
    return U, u_bounds


# ---------------------------------------------------------------------------
# expert controllers (hand-written references the distiller imitates)


def expert_controller(env: EnvConfig) -> CompGraph:
    """A smooth state-feedback law for each built-in environment.

    These exist only to give the distiller a non-trivial target; nothing
    about verification soundness depends on how good they are.
    """
    if env.name == "pendulum":
        return _pendulum_expert()
    if env.name == "cartpole":
        return _cartpole_expert()
    if env.name == "acrobot":
        return _acrobot_expert()
    raise ValueError(f"no expert controller for environment {env.name!r}")


def _pendulum_expert() -> CompGraph:
    # energy pumping: u = 1.5 * tanh(k * (E_top - E) * omega) with
    # E = 0.5 w^2 + 15 cos(theta), E_top = 15
    b = GraphBuilder()
    x = b.input(2)
    theta = b.select(x, [0])
    omega = b.select(x, [1])
    gap = b.sum(
        b.affine(b.nonlin("cos", theta), np.array([[-15.0]]), np.array([15.0])),
        b.affine(b.nonlin("square", omega), np.array([[-0.5]]), np.array([0.0])),
    )
    drive = b.affine(b.product(gap, omega), np.array([[0.35]]), np.array([0.0]))
    return b.build(b.affine(b.nonlin("tanh", drive), np.array([[1.5]]), np.array([0.0])))


def _cartpole_expert() -> CompGraph:
    # LQR-style linear feedback toward the upright pole
    b = GraphBuilder()
    x = b.input(4)
    u = b.affine(x, np.array([[1.0, 2.2, 24.0, 3.6]]), np.array([0.0]))
    return b.build(u)


def _acrobot_expert() -> CompGraph:
    # PD on the link angles, saturated well inside the torque interval
    b = GraphBuilder()
    x = b.input(4)
    raw = b.affine(
        x,
        np.array([[-1.0, -1.2, -0.35, -0.45]]),
        np.array([1.0 * math.radians(47.5) + 1.2 * math.radians(11.5)]),
    )
    return b.build(b.affine(b.nonlin("tanh", raw), np.array([[0.9]]), np.array([0.0])))


# ---------------------------------------------------------------------------
# behavior-cloning distiller


@dataclass(frozen=True)
class DistillConfig:
    """Hyperparameters for behavior cloning against an expert CompGraph."""

    expert: CompGraph
    samples: int = 1500
    epochs: int = 40
    learning_rate: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")


def training_region(env: EnvConfig) -> Box:
    """States the distiller samples from: the initial set inflated so the
    imitation stays accurate on every state a short rollout can reach."""
    return env.init_set.inflate(2.0, 0.3)


def _init_layers(rng, dims: list[int]) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        scale = math.sqrt(1.0 / fan_in)
        layers.append((rng.normal(0.0, scale, size=(fan_out, fan_in)), np.zeros(fan_out)))
    return layers


def _dact(act: str, h: np.ndarray) -> np.ndarray:
    """Activation derivative, written in terms of the activation output."""
    if act == "relu":
        return (h > 0.0).astype(float)
    if act == "tanh":
        return 1.0 - h * h
    return np.ones_like(h)


def distill(env: EnvConfig, cfg: DistillConfig, arch=(64, 64, 64, 64, 64, 64), activation="tanh"):
    """Clone cfg.expert into a fresh network by gradient descent.

    Each epoch applies one gradient step over the full sampled training set,
    which keeps the recorded loss curve non-increasing at the stable default
    rate (0.01 for observations in [0, 1]).  arch gives the hidden widths and
    activation their shared nonlinearity; the output layer is always the tanh
    squash.  Deterministic for a fixed seed.  Returns (MLPSpec, report); the
    report records the architecture, per-epoch training MSE, and the final
    train/validation MSE.
    """
    expert = cfg.expert
    if expert.input_dim != env.state_dim:
        raise ValueError(
            f"expert takes {expert.input_dim} inputs, environment state is {env.state_dim}"
        )
    if expert.output_dim != 1:
        raise ValueError("expert must emit a single control")
    if activation not in _HIDDEN_ACTS:
        raise ValueError(f"unknown activation {activation!r}")

    rng = np.random.default_rng(cfg.seed)
    region = training_region(env)
    n_val = max(cfg.samples // 5, 1)
    states = region.sample(rng, cfg.samples + n_val)
    obs = np.stack([observe(env, x) for x in states])
    ci = env.control_interval
    targets = np.clip(forward_eval(expert, states), ci.lo, ci.hi)
    obs_tr, obs_va = obs[: cfg.samples], obs[cfg.samples :]
    y_tr, y_va = targets[: cfg.samples], targets[cfg.samples :]

    dims = [env.obs_dim, *arch, 1]
    params = _init_layers(rng, dims)
    acts_per_layer = [activation] * len(arch) + ["tanh"]
    n_layers = len(params)

    def full_mse(o, y):
        u = _eval_params(params, acts_per_layer, o, ci)
        return float(np.mean((u - y) ** 2))

    curve = []
    # overflow is the symptom divergence detection exists for, not a bug
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            acts = [obs_tr]
            h = obs_tr
            for (w, bb), a in zip(params, acts_per_layer):
                h = _act(a, h @ w.T + bb)
                acts.append(h)
            u = ci.center + ci.radius * h
            # d(mean sq err)/du, then back through the squash and each layer
            grad = (2.0 / (cfg.samples * u.shape[1])) * (u - y_tr) * ci.radius
            for i in range(n_layers - 1, -1, -1):
                dz = grad * _dact(acts_per_layer[i], acts[i + 1])
                w, bb = params[i]
                params[i] = (
                    w - cfg.learning_rate * dz.T @ acts[i],
                    bb - cfg.learning_rate * dz.sum(axis=0),
                )
                if i:
                    grad = dz @ w
            train_mse = full_mse(obs_tr, y_tr)
            if not math.isfinite(train_mse) or not all(
                np.isfinite(w).all() and np.isfinite(bb).all() for w, bb in params
            ):
                raise DistillDivergenceError(epoch)
            curve.append(train_mse)

    layers = tuple(
        (LinearMap(w, bb), a) for (w, bb), a in zip(params, acts_per_layer)
    )
    report = {
        "arch": list(arch),
        "activation": activation,
        "samples": cfg.samples,
        "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate,
        "seed": cfg.seed,
        "train_mse_curve": curve,
        "train_mse": curve[-1] if curve else full_mse(obs_tr, y_tr),
        "val_mse": full_mse(obs_va, y_va),
    }
    return MLPSpec(layers, ci), report


def _eval_params(params, acts_per_layer, obs: np.ndarray, ci: Interval) -> np.ndarray:
    h = obs
    for (w, bb), a in zip(params, acts_per_layer):
        h = _act(a, h @ w.T + bb)
    return ci.center + ci.radius * h


# ---------------------------------------------------------------------------
# serialization


def save_controller(mlp: MLPSpec, path, metadata: dict | None = None):
    """Write controller.json: architecture, weights as nested arrays, and a
    hash of the weight bytes alongside any training metadata."""
    meta = dict(metadata or {})
    meta["weights_hash"] = digest(*(m.weights for m, _ in mlp.layers))
    doc = {
        "arch": {
            "layer_sizes": [m.out_dim for m, _ in mlp.layers],
            "activations": [act for _, act in mlp.layers],
            "input_dim": mlp.input_dim,
        },
        "control_interval": [mlp.control_interval.lo, mlp.control_interval.hi],
        "layers": [
            {"weights": m.weights.tolist(), "bias": m.bias.tolist()}
            for m, _ in mlp.layers
        ],
        "metadata": meta,
    }
    write_json(path, doc)
    return Path(path)


def load_controller(path) -> tuple[MLPSpec, dict]:
    doc = read_json(path)
    acts = doc["arch"]["activations"]
    layers = tuple(
        (LinearMap(np.asarray(l["weights"]), np.asarray(l["bias"])), act)
        for l, act in zip(doc["layers"], acts)
    )
    ci = Interval(*doc["control_interval"])
    return MLPSpec(layers, ci), doc.get("metadata", {})
