"""Shared test networks and helpers."""

from __future__ import annotations

import numpy as np
import pytest

from pipeloc import (Node, NodeKind, Pipe, PipeNetwork, ReceiverSpec,
                     TransmitterSpec, solve_flow)

DIFFUSION = 0.2


def chain_network() -> PipeNetwork:
    """Two pipes in series: inlet -> a -> outlet."""
    nodes = [Node("in", NodeKind.INLET), Node("a", NodeKind.CONNECTING),
             Node("out", NodeKind.OUTLET)]
    pipes = [Pipe(1, "in", "a", 120.0, 0.055),
             Pipe(2, "a", "out", 200.0, 0.055)]
    return PipeNetwork(nodes, pipes, {"in": 5e-3})


def diamond_network() -> PipeNetwork:
    """Four pipes: inlet -> split -> (short | long) -> merge -> outlet."""
    nodes = [Node("in", NodeKind.INLET), Node("s", NodeKind.CONNECTING),
             Node("m", NodeKind.CONNECTING), Node("out", NodeKind.OUTLET)]
    pipes = [Pipe(1, "in", "s", 100.0, 0.055),
             Pipe(2, "s", "m", 150.0, 0.055),
             Pipe(3, "s", "m", 300.0, 0.055),
             Pipe(4, "m", "out", 80.0, 0.055)]
    return PipeNetwork(nodes, pipes, {"in": 6e-3})


def chain_sensors() -> tuple[TransmitterSpec, ReceiverSpec]:
    return TransmitterSpec(1, 1, 20.0), ReceiverSpec(2, 150.0, 0.5)


def diamond_sensors() -> tuple[TransmitterSpec, ReceiverSpec]:
    return TransmitterSpec(1, 1, 0.0), ReceiverSpec(4, 40.0, 0.5)


def random_dag_network(rng: np.random.Generator,
                       max_pipes: int = 20) -> PipeNetwork:
    """Random layered DAG with one inlet, >= 1 outlets, and random widths."""
    n_layers = int(rng.integers(2, 5))
    layers = [["n0"]]
    count = 1
    for _ in range(n_layers):
        width = int(rng.integers(1, 4))
        layers.append([f"n{count + i}" for i in range(width)])
        count += width
    pipes = []
    pid = 0
    for upper, lower in zip(layers[:-1], layers[1:]):
        upper = [u for u in upper if any(p.destination == u for p in pipes)
                 or u == "n0"]
        if not upper:
            break
        for dst in lower:
            # every node gets at least one parent from the previous layer
            srcs = {str(rng.choice(upper))}
            for src in upper:
                if rng.random() < 0.4:
                    srcs.add(src)
            if pid + len(srcs) > max_pipes:
                continue
            for src in sorted(srcs):
                pid += 1
                pipes.append(Pipe(pid, src, dst,
                                  float(rng.uniform(50.0, 400.0)),
                                  float(rng.uniform(0.03, 0.08))))
    used = {p.source for p in pipes} | {p.destination for p in pipes}
    has_out = {p.source for p in pipes}
    nodes = []
    for nid in sorted(used, key=lambda s: int(s[1:])):
        if nid == "n0":
            nodes.append(Node(nid, NodeKind.INLET))
        elif nid in has_out:
            nodes.append(Node(nid, NodeKind.CONNECTING))
        else:
            nodes.append(Node(nid, NodeKind.OUTLET))
    return PipeNetwork(nodes, pipes, {"n0": float(rng.uniform(1e-3, 1e-2))})


@pytest.fixture(scope="session")
def chain_flow():
    net = chain_network()
    return solve_flow(net, DIFFUSION)


@pytest.fixture(scope="session")
def diamond_flow():
    net = diamond_network()
    return solve_flow(net, DIFFUSION)
