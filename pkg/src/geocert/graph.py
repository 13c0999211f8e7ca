"""A small computation-graph language and backward linear-relaxation
propagation, including injection of precomputed affine bounds at interior
nodes.

Graphs are DAGs of vector-valued nodes (parents always precede children),
with a single input node. ``backward_bounds`` substitutes element-wise
affine relaxations backward from the output to the input, yielding
LinearBounds over the input box; intermediate concrete ranges are obtained
by recursive backward passes (memoized per query). A node carrying a
PrecomputedBound is treated as an opaque primitive: its affine bounds are
spliced in directly and its range is their concretization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from geocert.bounds import (
    Box,
    Interval,
    LinearBounds,
    LinearMap,
    affine_range,
    concretize,
    interval_cos,
    interval_mul,
    interval_sin,
    mccormick_select,
    relax_scalar,
)

__all__ = [
    "Node",
    "CompGraph",
    "GraphBuilder",
    "PrecomputedBound",
    "forward_eval",
    "backward_bounds",
    "node_range",
    "concat_graphs",
]

_NONLIN_KINDS = ("relu", "tanh", "sigmoid", "sin", "cos", "square")


@dataclass(frozen=True)
class Node:
    kind: str
    dim: int
    parents: tuple[int, ...] = ()
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    value: np.ndarray | None = None
    func: str | None = None


class CompGraph:
    """Immutable DAG; node ids are list positions, parents precede children."""

    def __init__(self, nodes: Sequence[Node], output: int):
        nodes = tuple(nodes)
        inputs = [i for i, n in enumerate(nodes) if n.kind == "input"]
        if len(inputs) != 1:
            raise ValueError(f"graph needs exactly one input node, found {len(inputs)}")
        if not 0 <= output < len(nodes):
            raise ValueError("output node id out of range")
        for i, n in enumerate(nodes):
            if any(p >= i or p < 0 for p in n.parents):
                raise ValueError(f"node {i} has a parent that does not precede it")
        self._check_shapes(nodes)
        self.nodes = nodes
        self.output = output
        self.input_id = inputs[0]

    @staticmethod
    def _check_shapes(nodes: Sequence[Node]):
        for i, n in enumerate(nodes):
            dims = [nodes[p].dim for p in n.parents]
            if n.kind == "affine":
                if n.weights.shape != (n.dim, dims[0]):
                    raise ValueError(f"affine node {i}: weight shape {n.weights.shape} != ({n.dim}, {dims[0]})")
            elif n.kind in ("nonlin", "reciprocal"):
                if dims[0] != n.dim:
                    raise ValueError(f"node {i}: elementwise op dim mismatch")
            elif n.kind == "product":
                if dims[0] != n.dim or dims[1] != n.dim:
                    raise ValueError(f"product node {i}: operand dims differ")
            elif n.kind == "sum":
                if any(d != n.dim for d in dims):
                    raise ValueError(f"sum node {i}: operand dims differ")

    @property
    def input_dim(self) -> int:
        return self.nodes[self.input_id].dim

    @property
    def output_dim(self) -> int:
        return self.nodes[self.output].dim

    def ancestors(self, target: int) -> set[int]:
        seen = {target}
        stack = [target]
        while stack:
            for p in self.nodes[stack.pop()].parents:
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    def to_dict(self) -> dict:
        out = []
        for n in self.nodes:
            d = {"kind": n.kind, "dim": n.dim, "parents": list(n.parents)}
            if n.weights is not None:
                d["weights"] = n.weights.tolist()
                d["bias"] = n.bias.tolist()
            if n.value is not None:
                d["value"] = n.value.tolist()
            if n.func is not None:
                d["func"] = n.func
            out.append(d)
        return {"nodes": out, "output": self.output}

    @classmethod
    def from_dict(cls, data: dict) -> "CompGraph":
        nodes = []
        for d in data["nodes"]:
            nodes.append(
                Node(
                    kind=d["kind"],
                    dim=d["dim"],
                    parents=tuple(d["parents"]),
                    weights=None if "weights" not in d else np.asarray(d["weights"], dtype=float),
                    bias=None if "bias" not in d else np.asarray(d["bias"], dtype=float),
                    value=None if "value" not in d else np.asarray(d["value"], dtype=float),
                    func=d.get("func"),
                )
            )
        return cls(nodes, data["output"])


class GraphBuilder:
    """Incremental construction; every method returns the new node's id."""

    def __init__(self):
        self._nodes: list[Node] = []
        self._has_input = False

    def input(self, dim: int) -> int:
        if self._has_input:
            raise ValueError("graph already has an input node")
        self._has_input = True
        self._nodes.append(Node("input", dim))
        return len(self._nodes) - 1

    def constant(self, value) -> int:
        v = np.atleast_1d(np.asarray(value, dtype=float))
        self._nodes.append(Node("constant", v.size, value=v))
        return len(self._nodes) - 1

    def affine(self, parent: int, weights, bias) -> int:
        w = np.asarray(weights, dtype=float)
        b = np.asarray(bias, dtype=float)
        self._nodes.append(Node("affine", b.size, (parent,), weights=w, bias=b))
        return len(self._nodes) - 1

    def nonlin(self, func: str, parent: int) -> int:
        if func not in _NONLIN_KINDS:
            raise ValueError(f"unsupported nonlinearity {func!r}")
        self._nodes.append(Node("nonlin", self._nodes[parent].dim, (parent,), func=func))
        return len(self._nodes) - 1

    def product(self, a: int, b: int) -> int:
        self._nodes.append(Node("product", self._nodes[a].dim, (a, b)))
        return len(self._nodes) - 1

    def sum(self, *parents: int) -> int:
        if not parents:
            raise ValueError("sum node needs at least one parent")
        self._nodes.append(Node("sum", self._nodes[parents[0]].dim, tuple(parents)))
        return len(self._nodes) - 1

    def reciprocal(self, parent: int) -> int:
        self._nodes.append(Node("reciprocal", self._nodes[parent].dim, (parent,)))
        return len(self._nodes) - 1

    def select(self, parent: int, indices: Sequence[int]) -> int:
        """Affine row-selection convenience."""
        d = self._nodes[parent].dim
        w = np.zeros((len(indices), d))
        for r, i in enumerate(indices):
            w[r, i] = 1.0
        return self.affine(parent, w, np.zeros(len(indices)))

    def embed(self, parent: int, total_dim: int, offset: int, scale: float = 1.0) -> int:
        """Lift a node into a larger zero vector at the given offset."""
        d = self._nodes[parent].dim
        w = np.zeros((total_dim, d))
        w[offset : offset + d, :] = np.eye(d) * scale
        return self.affine(parent, w, np.zeros(total_dim))

    def build(self, output: int) -> CompGraph:
        return CompGraph(self._nodes, output)


@dataclass(frozen=True)
class PrecomputedBound:
    """Affine bounds to inject at a node, valid over the query input box."""

    node: int
    bounds: LinearBounds


def forward_eval(graph: CompGraph, point) -> np.ndarray:
    """Exact evaluation at one input point (d,) or a batch (n, d)."""
    x = np.asarray(point, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != graph.input_dim:
        raise ValueError(f"point has dim {x.shape[-1]}, graph input is {graph.input_dim}")
    batch = x.ndim == 2
    vals: list[np.ndarray | None] = [None] * len(graph.nodes)
    for i, n in enumerate(graph.nodes):
        if n.kind == "input":
            vals[i] = x
        elif n.kind == "constant":
            vals[i] = np.broadcast_to(n.value, (x.shape[0], n.dim)) if batch else n.value
        elif n.kind == "affine":
            vals[i] = vals[n.parents[0]] @ n.weights.T + n.bias
        elif n.kind == "nonlin":
            p = vals[n.parents[0]]
            vals[i] = {
                "relu": lambda z: np.maximum(z, 0.0),
                "tanh": np.tanh,
                "sigmoid": lambda z: 1.0 / (1.0 + np.exp(-z)),
                "sin": np.sin,
                "cos": np.cos,
                "square": np.square,
            }[n.func](p)
        elif n.kind == "product":
            vals[i] = vals[n.parents[0]] * vals[n.parents[1]]
        elif n.kind == "sum":
            acc = vals[n.parents[0]]
            for p in n.parents[1:]:
                acc = acc + vals[p]
            vals[i] = acc
        elif n.kind == "reciprocal":
            p = vals[n.parents[0]]
            if np.any(p == 0.0):
                raise ZeroDivisionError(f"reciprocal of 0 at node {i}")
            vals[i] = 1.0 / p
        else:
            raise ValueError(f"unknown node kind {n.kind!r}")
    return vals[graph.output]


class _BackwardPass:
    """Shared state for one backward_bounds query (one graph, one box)."""

    def __init__(self, graph: CompGraph, box: Box, injected: dict[int, LinearBounds]):
        self.graph = graph
        self.box = box
        self.injected = injected
        self.ranges: dict[int, Box] = {}

    def node_range(self, v: int) -> Box:
        if v in self.ranges:
            return self.ranges[v]
        n = self.graph.nodes[v]
        if v in self.injected:
            r = concretize(self.injected[v])
        elif n.kind == "input":
            r = self.box
        elif n.kind == "constant":
            r = Box(n.value, n.value)
        else:
            r = concretize(self.bounds_for(v))
            fwd = self._interval_image(v)
            if fwd is not None:
                # both enclosures are sound, so their intersection is too;
                # the forward image trims relaxation overshoot (e.g. square
                # dipping negative), which keeps reciprocal chains viable
                lo = np.maximum(r.lo, fwd[0])
                hi = np.minimum(r.hi, fwd[1])
                r = Box(lo, np.maximum(hi, lo))
        self.ranges[v] = r
        return r

    def _interval_image(self, v: int) -> tuple[np.ndarray, np.ndarray] | None:
        """Exact interval image of node v given its parents' ranges."""
        n = self.graph.nodes[v]
        pr = [self.node_range(p) for p in n.parents]
        if n.kind == "affine":
            return affine_range(n.weights, n.bias, pr[0])
        if n.kind == "sum":
            return (
                np.sum([r.lo for r in pr], axis=0),
                np.sum([r.hi for r in pr], axis=0),
            )
        if n.kind == "product":
            return interval_mul(pr[0].lo, pr[0].hi, pr[1].lo, pr[1].hi)
        if n.kind == "reciprocal":
            lo, hi = pr[0].lo, pr[0].hi
            if np.any((lo <= 0.0) & (hi >= 0.0)):
                return None
            return np.minimum(1.0 / lo, 1.0 / hi), np.maximum(1.0 / lo, 1.0 / hi)
        if n.kind == "nonlin":
            lo, hi = pr[0].lo, pr[0].hi
            if n.func == "relu":
                return np.maximum(lo, 0.0), np.maximum(hi, 0.0)
            if n.func == "tanh":
                return np.tanh(lo), np.tanh(hi)
            if n.func == "sigmoid":
                return 1.0 / (1.0 + np.exp(-lo)), 1.0 / (1.0 + np.exp(-hi))
            if n.func == "sin":
                return interval_sin(lo, hi)
            if n.func == "cos":
                return interval_cos(lo, hi)
            if n.func == "square":
                out_lo = np.where((lo <= 0.0) & (hi >= 0.0), 0.0, np.minimum(lo * lo, hi * hi))
                return out_lo, np.maximum(lo * lo, hi * hi)
        return None

    def bounds_for(self, target: int) -> LinearBounds:
        graph, box = self.graph, self.box
        if target in self.injected:
            return self.injected[target]
        n_in = box.dim
        d = graph.nodes[target].dim
        eye = np.eye(d)
        acc_lo = {target: eye}
        acc_hi = {target: eye.copy()}
        bias_lo = np.zeros(d)
        bias_hi = np.zeros(d)
        w_in_lo = np.zeros((d, n_in))
        w_in_hi = np.zeros((d, n_in))

        def splice(A: np.ndarray, low: LinearMap, high: LinearMap):
            # exact injected bounds substitute directly: the sign-split form
            # is equal only up to rounding, and that jitter can flip discrete
            # plane selections downstream of the injection point
            if low is high or (
                np.array_equal(low.weights, high.weights)
                and np.array_equal(low.bias, high.bias)
            ):
                return A @ low.weights, A @ low.bias
            pos = np.clip(A, 0.0, None)
            neg = np.clip(A, None, 0.0)
            w = pos @ low.weights + neg @ high.weights
            b = pos @ low.bias + neg @ high.bias
            return w, b

        for v in range(target, -1, -1):
            A_lo = acc_lo.pop(v, None)
            A_hi = acc_hi.pop(v, None)
            if A_lo is None and A_hi is None:
                continue
            if A_lo is None:
                A_lo = np.zeros((d, graph.nodes[v].dim))
            if A_hi is None:
                A_hi = np.zeros((d, graph.nodes[v].dim))
            node = graph.nodes[v]

            if v in self.injected and v != target:
                inj = self.injected[v]
                w, b = splice(A_lo, inj.lower, inj.upper)
                w_in_lo += w
                bias_lo += b
                w, b = splice(A_hi, inj.upper, inj.lower)
                w_in_hi += w
                bias_hi += b
            elif node.kind == "input":
                w_in_lo += A_lo
                w_in_hi += A_hi
            elif node.kind == "constant":
                bias_lo += A_lo @ node.value
                bias_hi += A_hi @ node.value
            elif node.kind == "affine":
                p = node.parents[0]
                _push(acc_lo, p, A_lo @ node.weights)
                _push(acc_hi, p, A_hi @ node.weights)
                bias_lo += A_lo @ node.bias
                bias_hi += A_hi @ node.bias
            elif node.kind == "sum":
                for p in node.parents:
                    _push(acc_lo, p, A_lo)
                    _push(acc_hi, p, A_hi)
            elif node.kind in ("nonlin", "reciprocal"):
                p = node.parents[0]
                r = self.node_range(p)
                kind = node.func if node.kind == "nonlin" else "reciprocal"
                relax = [relax_scalar(kind, Interval(lo, hi)) for lo, hi in zip(r.lo, r.hi)]
                sl_lo = np.array([t.lower_slope for t in relax])
                ic_lo = np.array([t.lower_intercept for t in relax])
                sl_hi = np.array([t.upper_slope for t in relax])
                ic_hi = np.array([t.upper_intercept for t in relax])
                for A, acc, bias, s1, c1, s2, c2 in (
                    (A_lo, acc_lo, "lo", sl_lo, ic_lo, sl_hi, ic_hi),
                    (A_hi, acc_hi, "hi", sl_hi, ic_hi, sl_lo, ic_lo),
                ):
                    pos = np.clip(A, 0.0, None)
                    neg = np.clip(A, None, 0.0)
                    _push(acc, p, pos * s1[None, :] + neg * s2[None, :])
                    db = pos @ c1 + neg @ c2
                    if bias == "lo":
                        bias_lo += db
                    else:
                        bias_hi += db
            elif node.kind == "product":
                pa, pb = node.parents
                ra, rb = self.node_range(pa), self.node_range(pb)
                low, up = mccormick_select(ra.lo, ra.hi, rb.lo, rb.hi)
                for A, acc, which, p1, p2 in (
                    (A_lo, acc_lo, "lo", low, up),
                    (A_hi, acc_hi, "hi", up, low),
                ):
                    pos = np.clip(A, 0.0, None)
                    neg = np.clip(A, None, 0.0)
                    _push(acc, pa, pos * p1[:, 0][None, :] + neg * p2[:, 0][None, :])
                    _push(acc, pb, pos * p1[:, 1][None, :] + neg * p2[:, 1][None, :])
                    db = pos @ p1[:, 2] + neg @ p2[:, 2]
                    if which == "lo":
                        bias_lo += db
                    else:
                        bias_hi += db
            else:
                raise ValueError(f"unknown node kind {node.kind!r}")

        return LinearBounds(
            LinearMap(w_in_lo, bias_lo), LinearMap(w_in_hi, bias_hi), box
        )


def _push(acc: dict[int, np.ndarray], node: int, mat: np.ndarray):
    if node in acc:
        acc[node] = acc[node] + mat
    else:
        acc[node] = mat


def backward_bounds(
    graph: CompGraph,
    input_box: Box,
    precomputed: Iterable[PrecomputedBound] = (),
) -> LinearBounds:
    """Sound element-wise affine bounds of the graph output over input_box."""
    if input_box.dim != graph.input_dim:
        raise ValueError(
            f"box dim {input_box.dim} does not match graph input {graph.input_dim}"
        )
    injected: dict[int, LinearBounds] = {}
    reachable = graph.ancestors(graph.output)
    for pb in precomputed:
        if not 0 <= pb.node < len(graph.nodes):
            raise ValueError(f"precomputed bound on unknown node {pb.node}")
        if pb.node not in reachable:
            raise ValueError(f"precomputed bound on node {pb.node} unreachable from output")
        if pb.bounds.out_dim != graph.nodes[pb.node].dim:
            raise ValueError(f"precomputed bound dim mismatch at node {pb.node}")
        if not (
            np.array_equal(pb.bounds.domain.lo, input_box.lo)
            and np.array_equal(pb.bounds.domain.hi, input_box.hi)
        ):
            raise ValueError(f"precomputed bound at node {pb.node} has a different domain")
        injected[pb.node] = pb.bounds
    return _BackwardPass(graph, input_box, injected).bounds_for(graph.output)


def node_range(
    graph: CompGraph,
    node: int,
    input_box: Box,
    precomputed: Iterable[PrecomputedBound] = (),
) -> Box:
    """Concretized range of one node over input_box (same machinery as
    backward_bounds)."""
    injected = {pb.node: pb.bounds for pb in precomputed}
    return _BackwardPass(graph, input_box, injected).node_range(node)


def concat_graphs(graphs: Sequence[CompGraph]) -> CompGraph:
    """Merge graphs sharing one input into a graph whose output is the
    concatenation of their outputs."""
    if not graphs:
        raise ValueError("need at least one graph")
    in_dim = graphs[0].input_dim
    if any(g.input_dim != in_dim for g in graphs):
        raise ValueError("graphs have mismatched input dims")

    b = GraphBuilder()
    shared_in = b.input(in_dim)
    total = sum(g.output_dim for g in graphs)
    lifted = []
    offset = 0
    for g in graphs:
        mapping = {g.input_id: shared_in}
        for i, n in enumerate(g.nodes):
            if i == g.input_id:
                continue
            parents = tuple(mapping[p] for p in n.parents)
            if n.kind == "constant":
                mapping[i] = b.constant(n.value)
            elif n.kind == "affine":
                mapping[i] = b.affine(parents[0], n.weights, n.bias)
            elif n.kind == "nonlin":
                mapping[i] = b.nonlin(n.func, parents[0])
            elif n.kind == "product":
                mapping[i] = b.product(parents[0], parents[1])
            elif n.kind == "sum":
                mapping[i] = b.sum(*parents)
            elif n.kind == "reciprocal":
                mapping[i] = b.reciprocal(parents[0])
            else:
                raise ValueError(f"unknown node kind {n.kind!r}")
        lifted.append(b.embed(mapping[g.output], total, offset))
        offset += g.output_dim
    return b.build(b.sum(*lifted) if len(lifted) > 1 else lifted[0])
