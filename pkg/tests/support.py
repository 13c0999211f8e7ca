"""Shared test helpers: random relaxation-graph corpus generation."""

import numpy as np

from geocert.bounds import Box
from geocert.graph import CompGraph, GraphBuilder


def random_graph(rng: np.random.Generator, width: int | None = None) -> tuple[CompGraph, Box]:
    """A random bounded graph over a random input box.

    Node kinds drawn from affine / relu / tanh / sin / product / reciprocal.
    Reciprocal parents are constructed positive (a*square + c with c >= 1)
    so every graph is relaxable over its box.
    """
    d = int(rng.integers(2, 5))
    m = width or int(rng.integers(2, 4))
    lo = rng.uniform(-1.5, 0.5, d)
    box = Box(lo, lo + rng.uniform(0.2, 1.5, d))

    b = GraphBuilder()
    x = b.input(d)
    pool = [b.affine(x, rng.normal(size=(m, d)) * 0.8 / np.sqrt(d), rng.normal(size=m) * 0.3)]
    n_ops = int(rng.integers(2, 7))
    for _ in range(n_ops):
        op = rng.choice(["affine", "relu", "tanh", "sin", "product", "reciprocal"])
        if op == "affine":
            p = pool[int(rng.integers(len(pool)))]
            node = b.affine(p, rng.normal(size=(m, m)) * 0.8 / np.sqrt(m), rng.normal(size=m) * 0.3)
        elif op in ("relu", "tanh", "sin"):
            p = pool[int(rng.integers(len(pool)))]
            node = b.nonlin(op, p)
        elif op == "product":
            p = pool[int(rng.integers(len(pool)))]
            q = pool[int(rng.integers(len(pool)))]
            node = b.product(p, q)
        else:
            p = pool[int(rng.integers(len(pool)))]
            sq = b.nonlin("square", p)
            shifted = b.affine(
                sq,
                np.eye(m) * rng.uniform(0.1, 0.5),
                np.full(m, rng.uniform(1.0, 2.0)),
            )
            node = b.reciprocal(shifted)
        pool.append(node)
    n_out = int(rng.integers(1, 3))
    out = b.affine(pool[-1], rng.normal(size=(n_out, m)) * 0.5, rng.normal(size=n_out) * 0.2)
    return b.build(out), box
