"""Closed-form channel model for molecule transport through a pipe network.

The first-passage time through an advective-diffusive pipe segment follows an
inverse-Gaussian law, and a full transmitter-to-receiver path accumulates the
per-pipe means and variances.  The channel impulse response between a
transmitter and the receiver is the mixture of the per-path inverse-Gaussian
flux densities, weighted by the molecule fraction routed through each path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy import stats

from .network import FlowField, Path, PipeNetwork, enumerate_paths

# exp() underflows below this; smaller exponents are flushed to zero
_EXP_UNDERFLOW = -745.0
_FLUSH = 1e-300


class ChannelError(ValueError):
    """Invalid transmitter/receiver placement or degenerate channel."""


# -- release models ----------------------------------------------------------

@dataclass(frozen=True)
class FixedRelease:
    """Deterministic molecule count per release."""

    count: float = 1.0

    @property
    def mean(self) -> float:
        return self.count

    def draw(self, rng: np.random.Generator) -> float:
        return self.count


@dataclass(frozen=True)
class LogNormalRelease:
    """Log-normally distributed molecule count: ln(M) ~ N(log_mean, log_var)."""

    log_mean: float
    log_var: float

    @property
    def mean(self) -> float:
        return math.exp(self.log_mean + self.log_var / 2.0)

    def draw(self, rng: np.random.Generator) -> float:
        if self.log_var == 0.0:
            return math.exp(self.log_mean)
        return math.exp(rng.normal(self.log_mean, math.sqrt(self.log_var)))


ReleaseModel = Union[FixedRelease, LogNormalRelease]


@dataclass(frozen=True)
class TransmitterSpec:
    """A point molecule source at longitudinal position ``position`` in a pipe."""

    id: int
    pipe: int
    position: float
    release: ReleaseModel = FixedRelease(1.0)

    def validate(self, net: PipeNetwork) -> None:
        if self.pipe not in net.pipes:
            raise ChannelError(f"transmitter {self.id}: unknown pipe {self.pipe}")
        length = net.pipes[self.pipe].length
        if not 0.0 <= self.position <= length:
            raise ChannelError(
                f"transmitter {self.id}: position {self.position} outside pipe")


@dataclass(frozen=True)
class ReceiverSpec:
    """A transparent counting sensor spanning ``length`` meters of one pipe."""

    pipe: int
    position: float   # center of the sensed span
    length: float

    def validate(self, net: PipeNetwork) -> None:
        if self.pipe not in net.pipes:
            raise ChannelError(f"receiver: unknown pipe {self.pipe}")
        pipe_len = net.pipes[self.pipe].length
        if not 0.0 < self.length <= pipe_len:
            raise ChannelError("receiver length outside (0, pipe length]")
        lo, hi = self.length / 2.0, pipe_len - self.length / 2.0
        if not lo <= self.position <= hi:
            raise ChannelError("receiver center too close to a pipe end")


# -- inverse-Gaussian components --------------------------------------------

@dataclass(frozen=True)
class IGComponent:
    """One path's first-passage-time density: weight * IG(mean, variance)."""

    weight: float
    mean: float
    variance: float

    def __post_init__(self):
        if self.mean <= 0.0 or self.variance <= 0.0:
            raise ChannelError("component mean and variance must be positive")
        if not 0.0 < self.weight <= 1.0:
            raise ChannelError("component weight must be in (0, 1]")

    @property
    def scale(self) -> float:
        return self.variance / self.mean

    @property
    def shape(self) -> float:
        # standard IG shape parameter lambda = mean^2 / scale
        return self.mean ** 3 / self.variance

    def quantile(self, p: float) -> float:
        lam = self.shape
        return float(stats.invgauss.ppf(p, mu=self.mean / lam, scale=lam))


def pipe_moments(flow: FlowField, pipe_id: int, z: float) -> Tuple[float, float]:
    """First-passage mean and variance over distance ``z`` in one pipe."""
    pipe = flow.network.pipes[pipe_id]
    if not 0.0 <= z <= pipe.length:
        raise ChannelError(f"position {z} outside pipe {pipe_id}")
    u = flow.velocity[pipe_id]
    if u <= 0.0:
        raise ChannelError(f"pipe {pipe_id} carries no flow")
    mean = z / u
    variance = 2.0 * flow.dispersion[pipe_id] * z / u ** 3
    return mean, variance


def path_moments(flow: FlowField, path: Path, tx: TransmitterSpec,
                 rx: ReceiverSpec) -> IGComponent:
    """Accumulate per-pipe moments along a transmitter-to-receiver path.

    The first pipe contributes the stretch downstream of the transmitter, the
    receiver pipe the stretch up to the sensing position, and every pipe in
    between its full length.
    """
    if tx.pipe not in path.pipes or rx.pipe not in path.pipes:
        raise ChannelError("path does not contain both transmitter and receiver pipes")
    net = flow.network
    mean, var = pipe_moments(flow, tx.pipe, net.pipes[tx.pipe].length - tx.position)
    m, v = pipe_moments(flow, rx.pipe, rx.position)
    mean += m
    var += v
    for pid in path.pipes:
        if pid in (tx.pipe, rx.pipe):
            continue
        m, v = pipe_moments(flow, pid, net.pipes[pid].length)
        mean += m
        var += v
    return IGComponent(weight=path.weight, mean=mean, variance=var)


def ig_flux(component: IGComponent, t) -> np.ndarray:
    """Inverse-Gaussian flux density at time(s) ``t``; zero for t <= 0.

    The component weight is *not* applied here.
    """
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    pos = t > 0.0
    tp = t[pos]
    mu = component.mean
    theta = component.scale
    log_pdf = (math.log(mu) - 0.5 * np.log(2.0 * math.pi * theta * tp ** 3)
               - (tp - mu) ** 2 / (2.0 * theta * tp))
    vals = np.where(log_pdf > _EXP_UNDERFLOW, np.exp(
        np.clip(log_pdf, _EXP_UNDERFLOW, None)), 0.0)
    vals[vals < _FLUSH] = 0.0
    out[pos] = vals
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class ChannelResponse:
    """Mixture of weighted inverse-Gaussian path fluxes for one transmitter."""

    tx_id: int
    components: Tuple[IGComponent, ...]

    @property
    def weight_total(self) -> float:
        return sum(c.weight for c in self.components)

    def evaluate(self, t) -> np.ndarray:
        """Impulse response h(t) in 1/s at time(s) ``t``."""
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t)
        for c in self.components:
            out += c.weight * ig_flux(c, t)
        return float(out[0]) if scalar else out

    def time_horizon(self, mass: float = 0.9999) -> float:
        """Time by which every component has accumulated ``mass`` of its density."""
        if not self.components:
            return 0.0
        return max(c.quantile(mass) for c in self.components)


def channel_response(net: PipeNetwork, flow: FlowField, tx: TransmitterSpec,
                     rx: ReceiverSpec) -> ChannelResponse:
    """Build the impulse response from every path linking ``tx`` to ``rx``.

    Qualifying paths run from the source node of the transmitter pipe to the
    destination node of the receiver pipe and traverse both pipes.  An empty
    component list means the receiver is unreachable from the transmitter.
    """
    tx.validate(net)
    rx.validate(net)
    if tx.pipe == rx.pipe:
        raise ChannelError("transmitter and receiver in the same pipe "
                           "is not supported")
    start = net.pipes[tx.pipe].source
    end = net.pipes[rx.pipe].destination
    components = []
    for path in enumerate_paths(net, flow, start, end):
        if tx.pipe not in path.pipes or rx.pipe not in path.pipes:
            continue
        if path.weight <= 0.0:
            continue
        components.append(path_moments(flow, path, tx, rx))
    return ChannelResponse(tx_id=tx.id, components=tuple(components))


def expected_observation(resp: ChannelResponse, flow: FlowField,
                         rx: ReceiverSpec, count: float, t,
                         exact: bool = False, quad_points: int = 21):
    """Expected molecule count at the sensor at time(s) ``t``.

    The default treats the response as uniform over the sensor span
    (``count * length / velocity * h(t)``).  With ``exact=True`` the spatial
    integral over the span is evaluated by Gauss-Legendre quadrature, with
    each component's moments shifted to the quadrature positions.
    """
    u = flow.velocity[rx.pipe]
    if u <= 0.0:
        raise ChannelError("receiver pipe carries no flow")
    if not exact:
        return count * rx.length / u * resp.evaluate(t)

    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    disp = flow.dispersion[rx.pipe]
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    half = rx.length / 2.0
    out = np.zeros_like(t)
    for x, w in zip(nodes, weights):
        dz = x * half
        acc = np.zeros_like(t)
        for c in resp.components:
            mean = c.mean + dz / u
            var = c.variance + 2.0 * disp * dz / u ** 3
            acc += c.weight * ig_flux(IGComponent(c.weight, mean, var), t)
        out += w * half * acc
    out = count / u * out
    return float(out[0]) if scalar else out
