"""Line-oriented topology file parsing.

File format (``#`` starts a comment, blank lines are ignored)::

    [nodes]
    # id kind [x y]           kind in {inlet, outlet, connecting}
    n1 inlet 0.0 0.0
    [pipes]
    # id source destination length_m radius_m
    1 n1 n2 100.0 0.055
    [inlets]
    # node_id flow_m3_s
    n1 5e-3
    [transmitters]
    # tx_id pipe_id position_m
    1 1 0.0
    [receiver]
    # pipe_id center_m length_m
    2 195.0 0.5

The ``transmitters`` and ``receiver`` sections are optional; release-count
models are attached by the scenario configuration, not by the file.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

from .channel import ReceiverSpec, TransmitterSpec
from .network import Node, NodeKind, Pipe, PipeNetwork, TopologyError

_SECTIONS = ("nodes", "pipes", "inlets", "transmitters", "receiver")


@dataclass(frozen=True)
class TopologyDocument:
    """Parsed topology file: the network plus sensor placement."""

    network: PipeNetwork
    transmitters: List[TransmitterSpec]
    receiver: Optional[ReceiverSpec]


def parse_topology(text: str) -> TopologyDocument:
    """Parse and validate a topology document."""
    sections = {name: [] for name in _SECTIONS}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in sections:
                raise TopologyError(f"line {lineno}: unknown section [{current}]")
            continue
        if current is None:
            raise TopologyError(f"line {lineno}: data before any section header")
        sections[current].append((lineno, line.split()))

    nodes = []
    for lineno, tok in sections["nodes"]:
        if len(tok) not in (2, 4):
            raise TopologyError(f"line {lineno}: expected 'id kind [x y]'")
        try:
            kind = NodeKind(tok[1].lower())
        except ValueError:
            raise TopologyError(f"line {lineno}: unknown node kind {tok[1]!r}")
        pos = (_num(tok[2], lineno), _num(tok[3], lineno)) if len(tok) == 4 else None
        nodes.append(Node(tok[0], kind, pos))

    pipes = []
    for lineno, tok in sections["pipes"]:
        if len(tok) != 5:
            raise TopologyError(
                f"line {lineno}: expected 'id source destination length radius'")
        pipes.append(Pipe(_int(tok[0], lineno), tok[1], tok[2],
                          _num(tok[3], lineno), _num(tok[4], lineno)))

    inlet_flows = {}
    for lineno, tok in sections["inlets"]:
        if len(tok) != 2:
            raise TopologyError(f"line {lineno}: expected 'node_id flow'")
        if tok[0] in inlet_flows:
            raise TopologyError(f"line {lineno}: duplicate inlet flow for {tok[0]!r}")
        inlet_flows[tok[0]] = _num(tok[1], lineno)

    network = PipeNetwork(nodes, pipes, inlet_flows)

    transmitters = []
    seen = set()
    for lineno, tok in sections["transmitters"]:
        if len(tok) != 3:
            raise TopologyError(f"line {lineno}: expected 'tx_id pipe_id position'")
        tx = TransmitterSpec(_int(tok[0], lineno), _int(tok[1], lineno),
                             _num(tok[2], lineno))
        if tx.id in seen:
            raise TopologyError(f"line {lineno}: duplicate transmitter id {tx.id}")
        seen.add(tx.id)
        tx.validate(network)
        transmitters.append(tx)
    transmitters.sort(key=lambda t: t.id)

    receiver = None
    if sections["receiver"]:
        if len(sections["receiver"]) > 1:
            raise TopologyError("multiple receiver lines")
        lineno, tok = sections["receiver"][0]
        if len(tok) != 3:
            raise TopologyError(f"line {lineno}: expected 'pipe_id center length'")
        receiver = ReceiverSpec(_int(tok[0], lineno), _num(tok[1], lineno),
                                _num(tok[2], lineno))
        receiver.validate(network)

    return TopologyDocument(network, transmitters, receiver)


def load_network(text: str) -> PipeNetwork:
    """Parse a topology document and return the validated network."""
    return parse_topology(text).network


def _num(token: str, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise TopologyError(f"line {lineno}: expected a number, got {token!r}")


def _int(token: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise TopologyError(f"line {lineno}: expected an integer, got {token!r}")
