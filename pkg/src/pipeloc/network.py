"""Pipe network topology, steady-state flow solving, and path enumeration.

A network is a directed multigraph of cylindrical pipes joined at inlet,
connecting, and outlet nodes.  Steady-state flow is obtained from the
electrical-circuit analogy: every pipe acts as a Hagen-Poiseuille resistance,
inlets as fixed current sources, and outlets as the common zero-pressure
reference.  All quantities are SI (m, s, m^3/s, Pa s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

# Dynamic viscosity of water at 20 degC, Pa s.
WATER_VISCOSITY_20C = 1.0016e-3

# Relative tolerance for per-node flow conservation checks.
FLOW_CONSERVATION_RTOL = 1e-9


class TopologyError(ValueError):
    """Malformed or physically inconsistent network definition."""


class FlowSolveError(RuntimeError):
    """The hydraulic system is singular or its solution is inconsistent."""


class NodeKind(Enum):
    INLET = "inlet"
    OUTLET = "outlet"
    CONNECTING = "connecting"


@dataclass(frozen=True)
class Node:
    """A connection point of the network.

    ``position`` is an optional 2-D coordinate in meters, used for display
    and for distance baselines only; it has no effect on the physics.
    """

    id: str
    kind: NodeKind
    position: Optional[Tuple[float, float]] = None


@dataclass(frozen=True)
class Pipe:
    """A cylindrical conduit, directed from ``source`` to ``destination``."""

    id: int
    source: str
    destination: str
    length: float
    radius: float

    @property
    def area(self) -> float:
        return math.pi * self.radius ** 2


class PipeNetwork:
    """Directed multigraph of pipes.  Immutable after construction.

    Parallel pipes between the same node pair are permitted.  The graph must
    be weakly connected and acyclic; both are enforced at construction time.
    """

    def __init__(self, nodes: Iterable[Node], pipes: Iterable[Pipe],
                 inlet_flows: Dict[str, float]):
        node_list = list(nodes)
        pipe_list = list(pipes)
        self.nodes: Dict[str, Node] = {n.id: n for n in node_list}
        if len(self.nodes) != len(node_list):
            raise TopologyError("duplicate node id")
        self.pipes: Dict[int, Pipe] = {p.id: p for p in pipe_list}
        if len(self.pipes) != len(pipe_list):
            raise TopologyError("duplicate pipe id")
        self.inlet_flows: Dict[str, float] = dict(inlet_flows)

        self.outgoing: Dict[str, List[int]] = {nid: [] for nid in self.nodes}
        self.incoming: Dict[str, List[int]] = {nid: [] for nid in self.nodes}
        for p in pipe_list:
            if p.source not in self.nodes:
                raise TopologyError(f"pipe {p.id} references unknown node {p.source!r}")
            if p.destination not in self.nodes:
                raise TopologyError(
                    f"pipe {p.id} references unknown node {p.destination!r}")
            self.outgoing[p.source].append(p.id)
            self.incoming[p.destination].append(p.id)
        for adj in (self.outgoing, self.incoming):
            for lst in adj.values():
                lst.sort()

        self._topo_order = self._validate()

    # -- validation ---------------------------------------------------------

    def _validate(self) -> List[str]:
        if not self.pipes:
            raise TopologyError("network has no pipes")
        for p in self.pipes.values():
            if p.length <= 0.0:
                raise TopologyError(f"pipe {p.id}: length must be positive")
            if p.radius <= 0.0:
                raise TopologyError(f"pipe {p.id}: radius must be positive")
        for n in self.nodes.values():
            n_in = len(self.incoming[n.id])
            n_out = len(self.outgoing[n.id])
            if n.kind is NodeKind.INLET and (n_in != 0 or n_out < 1):
                raise TopologyError(
                    f"inlet node {n.id!r} must have no incoming and >=1 outgoing pipe")
            if n.kind is NodeKind.OUTLET and (n_out != 0 or n_in < 1):
                raise TopologyError(
                    f"outlet node {n.id!r} must have no outgoing and >=1 incoming pipe")
            if n.kind is NodeKind.CONNECTING and (n_in < 1 or n_out < 1):
                raise TopologyError(
                    f"connecting node {n.id!r} must have incoming and outgoing pipes")
        for nid, q in self.inlet_flows.items():
            if nid not in self.nodes:
                raise TopologyError(f"inlet flow references unknown node {nid!r}")
            if self.nodes[nid].kind is not NodeKind.INLET:
                raise TopologyError(f"inlet flow assigned to non-inlet node {nid!r}")
            if q <= 0.0:
                raise TopologyError(f"inlet flow at {nid!r} must be positive")
        for n in self.nodes.values():
            if n.kind is NodeKind.INLET and n.id not in self.inlet_flows:
                raise TopologyError(f"inlet node {n.id!r} has no inflow rate")
        self._check_weakly_connected()
        return self._topological_sort()

    def _check_weakly_connected(self) -> None:
        seen = set()
        stack = [next(iter(self.nodes))]
        while stack:
            nid = stack.pop()
            if nid in seen:
                continue
            seen.add(nid)
            for pid in self.outgoing[nid]:
                stack.append(self.pipes[pid].destination)
            for pid in self.incoming[nid]:
                stack.append(self.pipes[pid].source)
        if len(seen) != len(self.nodes):
            raise TopologyError("network is not weakly connected")

    def _topological_sort(self) -> List[str]:
        indeg = {nid: len(self.incoming[nid]) for nid in self.nodes}
        ready = sorted(nid for nid, d in indeg.items() if d == 0)
        order: List[str] = []
        while ready:
            nid = ready.pop(0)
            order.append(nid)
            for pid in self.outgoing[nid]:
                dst = self.pipes[pid].destination
                indeg[dst] -= 1
                if indeg[dst] == 0:
                    ready.append(dst)
            ready.sort()
        if len(order) != len(self.nodes):
            raise TopologyError("network contains a cycle")
        return order

    # -- queries ------------------------------------------------------------

    def topological_order(self) -> List[str]:
        return list(self._topo_order)

    def inlet_nodes(self) -> List[str]:
        return sorted(n.id for n in self.nodes.values() if n.kind is NodeKind.INLET)

    def outlet_nodes(self) -> List[str]:
        return sorted(n.id for n in self.nodes.values() if n.kind is NodeKind.OUTLET)

    def bifurcations(self) -> List[str]:
        """Nodes with at least two outgoing pipes."""
        return sorted(nid for nid, out in self.outgoing.items() if len(out) >= 2)

    def reoriented(self, flipped_pipe_ids: Iterable[int]) -> "PipeNetwork":
        """Copy of the network with the given pipes reversed."""
        flips = set(flipped_pipe_ids)
        pipes = []
        for p in self.pipes.values():
            if p.id in flips:
                pipes.append(Pipe(p.id, p.destination, p.source, p.length, p.radius))
            else:
                pipes.append(p)
        return PipeNetwork(self.nodes.values(), pipes, self.inlet_flows)


@dataclass(frozen=True)
class FlowField:
    """Per-pipe steady-state flow solution.

    ``network`` is the (possibly re-oriented) network the rates refer to;
    every stored flow rate is non-negative along the stored pipe direction.
    """

    network: PipeNetwork
    diffusion: float
    flow_rate: Dict[int, float]
    velocity: Dict[int, float]
    dispersion: Dict[int, float]

    def conservation_residual(self) -> float:
        """Largest relative flow imbalance over all connecting nodes."""
        net = self.network
        scale = max(self.flow_rate.values()) or 1.0
        worst = 0.0
        for n in net.nodes.values():
            if n.kind is not NodeKind.CONNECTING:
                continue
            q_in = sum(self.flow_rate[pid] for pid in net.incoming[n.id])
            q_out = sum(self.flow_rate[pid] for pid in net.outgoing[n.id])
            worst = max(worst, abs(q_in - q_out) / scale)
        return worst


def solve_flow(net: PipeNetwork, diffusion: float,
               viscosity: float = WATER_VISCOSITY_20C) -> FlowField:
    """Solve for steady-state flow rates, velocities, and dispersion.

    Pipes are modeled as Hagen-Poiseuille resistances, inlet flows as current
    sources, and outlets as a shared zero-pressure reference.  If the solve
    produces negative rates, the affected pipes are flipped and the returned
    :class:`FlowField` references the re-oriented network.

    The effective axial dispersion per pipe combines shear-flow spreading with
    molecular diffusion: ``r^2 u^2 / (48 D) + D``.
    """
    if diffusion <= 0.0:
        raise ValueError("diffusion coefficient must be positive")

    unknown = [nid for nid in net.nodes
               if net.nodes[nid].kind is not NodeKind.OUTLET]
    index = {nid: i for i, nid in enumerate(unknown)}
    n = len(unknown)
    if n == 0:
        raise FlowSolveError("network has no non-outlet nodes")

    a = np.zeros((n, n))
    b = np.zeros(n)
    conductance = {}
    for p in net.pipes.values():
        g = math.pi * p.radius ** 4 / (8.0 * viscosity * p.length)
        conductance[p.id] = g
        i = index.get(p.source)
        j = index.get(p.destination)
        if i is not None:
            a[i, i] += g
        if j is not None:
            a[j, j] += g
        if i is not None and j is not None:
            a[i, j] -= g
            a[j, i] -= g
    for nid, q in net.inlet_flows.items():
        b[index[nid]] += q

    try:
        pressure = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise FlowSolveError("singular hydraulic system") from exc
    if not np.all(np.isfinite(pressure)):
        raise FlowSolveError("hydraulic solve produced non-finite pressures")

    def node_pressure(nid: str) -> float:
        i = index.get(nid)
        return 0.0 if i is None else float(pressure[i])

    rates = {}
    for p in net.pipes.values():
        rates[p.id] = conductance[p.id] * (
            node_pressure(p.source) - node_pressure(p.destination))

    scale = max(abs(q) for q in rates.values()) or 1.0
    flipped = [pid for pid, q in rates.items() if q < -1e-12 * scale]
    if flipped:
        net = net.reoriented(flipped)
        for pid in flipped:
            rates[pid] = -rates[pid]
    # Clamp numerical noise so stored rates are non-negative.
    rates = {pid: (q if q > 0.0 else 0.0) for pid, q in rates.items()}

    velocity = {pid: rates[pid] / net.pipes[pid].area for pid in rates}
    dispersion = {
        pid: net.pipes[pid].radius ** 2 * velocity[pid] ** 2 / (48.0 * diffusion)
        + diffusion
        for pid in rates
    }
    field = FlowField(net, diffusion, rates, velocity, dispersion)
    if field.conservation_residual() > FLOW_CONSERVATION_RTOL:
        raise FlowSolveError("flow conservation violated after solve")
    return field


@dataclass(frozen=True)
class Path:
    """A directed pipe sequence with the molecule fraction routed through it.

    ``bifurcations`` holds the ids of bifurcation nodes traversed strictly
    inside the path; bifurcations at the path endpoints carry no routing
    choice for molecules traveling this path and are excluded.
    """

    pipes: Tuple[int, ...]
    bifurcations: frozenset
    weight: float

    def __len__(self) -> int:
        return len(self.pipes)


def enumerate_paths(net: PipeNetwork, flow: FlowField, source: str,
                    target: str) -> List[Path]:
    """All distinct directed paths from ``source`` to ``target``.

    Each path carries the fraction of molecules routed through it: the
    product, over internal bifurcations, of the chosen pipe's flow rate over
    the total outflow rate of that bifurcation.  Paths with fewer than two
    pipes are not physical transport paths and are omitted.  Output order is
    lexicographic in the pipe id sequence.
    """
    if source not in net.nodes or target not in net.nodes:
        raise TopologyError("unknown path endpoint")

    bifs = set(net.bifurcations())
    out_total = {
        nid: sum(flow.flow_rate[pid] for pid in net.outgoing[nid])
        for nid in bifs
    }
    results: List[Path] = []

    def walk(nid: str, pipes: List[int], internal: List[str], weight: float):
        if nid == target:
            if len(pipes) > 1:
                # internal[-1] is the target itself; endpoints are excluded.
                results.append(Path(tuple(pipes), frozenset(
                    b for b in internal[:-1] if b in bifs), weight))
            return
        for pid in net.outgoing[nid]:
            p = net.pipes[pid]
            w = weight
            if nid in bifs and nid != source:
                total = out_total[nid]
                w *= flow.flow_rate[pid] / total if total > 0.0 else 0.0
            pipes.append(pid)
            internal.append(p.destination)
            walk(p.destination, pipes, internal, w)
            internal.pop()
            pipes.pop()

    walk(source, [], [], 1.0)
    return results
