"""Monte Carlo particle transport as an independent channel-model oracle."""

import numpy as np
import pytest

from pipeloc import (ChannelError, ChannelResponse, Node, NodeKind,
                     ParticleConfig, Pipe, PipeNetwork, ReceiverSpec,
                     TransmitterSpec, arrival_l1, channel_response,
                     enumerate_paths, path_moments, simulate_particles,
                     solve_flow)
from pipeloc.particles import ParticleResult

from conftest import DIFFUSION, chain_network, chain_sensors


def y_network() -> PipeNetwork:
    """One split whose branches end in two different outlets."""
    nodes = [Node("in", NodeKind.INLET), Node("s", NodeKind.CONNECTING),
             Node("o1", NodeKind.OUTLET), Node("o2", NodeKind.OUTLET)]
    pipes = [Pipe(1, "in", "s", 90.0, 0.055),
             Pipe(2, "s", "o1", 140.0, 0.050),
             Pipe(3, "s", "o2", 180.0, 0.070)]
    return PipeNetwork(nodes, pipes, {"in": 5e-3})


class TestConfig:
    def test_rejects_nonpositive_count(self):
        with pytest.raises(ValueError):
            ParticleConfig(count=0, seed=1)

    def test_rejects_unknown_sampler(self):
        with pytest.raises(ValueError):
            ParticleConfig(count=10, seed=1, method="exact")

    def test_euler_requires_dt(self):
        with pytest.raises(ValueError):
            ParticleConfig(count=10, seed=1, method="euler")


class TestSimulation:
    def test_reproducible(self, chain_flow):
        net = chain_network()
        tx, rx = chain_sensors()
        cfg = ParticleConfig(count=5000, seed=7)
        a = simulate_particles(net, chain_flow, tx, rx, cfg)
        b = simulate_particles(net, chain_flow, tx, rx, cfg)
        np.testing.assert_array_equal(a.arrivals, b.arrivals)
        assert a.lost == b.lost

    def test_same_pipe_rejected(self, chain_flow):
        net = chain_network()
        tx = TransmitterSpec(1, 2, 20.0)
        rx = ReceiverSpec(2, 150.0, 0.5)
        with pytest.raises(ChannelError):
            simulate_particles(net, chain_flow, tx, rx,
                               ParticleConfig(count=10, seed=0))

    def test_chain_moments_match_path_moments(self, chain_flow):
        # [DERIVED] on a single path the empirical arrival mean and variance
        # must match the accumulated per-pipe first-passage moments
        net = chain_network()
        tx, rx = chain_sensors()
        path = enumerate_paths(net, chain_flow, "in", "out")[0]
        comp = path_moments(chain_flow, path, tx, rx)
        n = 40000
        res = simulate_particles(net, chain_flow, tx, rx,
                                 ParticleConfig(count=n, seed=3))
        assert res.arrived == n and res.lost == 0
        sd_mean = np.sqrt(comp.variance / n)
        assert res.arrivals.mean() == pytest.approx(comp.mean, abs=4 * sd_mean)
        assert res.arrivals.var() == pytest.approx(comp.variance, rel=0.05)

    def test_branch_split_follows_flow_rates(self):
        # [DERIVED] the fraction reaching the sensed branch is binomial with
        # success probability equal to that branch's flow-rate share
        net = y_network()
        flow = solve_flow(net, DIFFUSION)
        tx = TransmitterSpec(1, 1, 10.0)
        rx = ReceiverSpec(2, 100.0, 0.5)
        gamma = flow.flow_rate[2] / (flow.flow_rate[2] + flow.flow_rate[3])
        n = 30000
        res = simulate_particles(net, flow, tx, rx,
                                 ParticleConfig(count=n, seed=11))
        assert res.arrived + res.lost == n
        sigma = np.sqrt(gamma * (1.0 - gamma) / n)
        assert res.arrived / n == pytest.approx(gamma, abs=3 * sigma)

    def test_euler_sampler_matches_ig_mean(self, chain_flow):
        # [DERIVED] the drift-diffusion stepper and the closed-form draw
        # sample the same first-passage law (compared through the mean)
        net = chain_network()
        tx, rx = chain_sensors()
        path = enumerate_paths(net, chain_flow, "in", "out")[0]
        comp = path_moments(chain_flow, path, tx, rx)
        res = simulate_particles(net, chain_flow, tx, rx,
                                 ParticleConfig(count=2000, seed=5,
                                                method="euler", dt=0.25))
        assert res.arrived == 2000
        assert res.arrivals.mean() == pytest.approx(comp.mean, rel=0.03)


class TestArrivalDistance:
    def test_l1_small_for_matching_model(self, chain_flow):
        net = chain_network()
        tx, rx = chain_sensors()
        resp = channel_response(net, chain_flow, tx, rx)
        res = simulate_particles(net, chain_flow, tx, rx,
                                 ParticleConfig(count=100000, seed=2))
        assert arrival_l1(res, resp) < 0.05

    def test_l1_large_for_wrong_model(self, chain_flow, diamond_flow):
        from conftest import diamond_network, diamond_sensors
        net = chain_network()
        tx, rx = chain_sensors()
        res = simulate_particles(net, chain_flow, tx, rx,
                                 ParticleConfig(count=20000, seed=2))
        other = channel_response(diamond_network(), diamond_flow,
                                 *diamond_sensors())
        assert arrival_l1(res, other) > 0.5

    def test_counts_missing_mass(self, chain_flow):
        # an empirical result with no arrivals is maximally far from a model
        # that delivers (nearly) all its mass
        net = chain_network()
        tx, rx = chain_sensors()
        resp = channel_response(net, chain_flow, tx, rx)
        empty = ParticleResult(np.empty(0), lost=1000)
        assert arrival_l1(empty, resp) == pytest.approx(2.0, abs=0.01)

    def test_rejects_empty_inputs(self):
        resp = ChannelResponse(tx_id=1, components=[])
        with pytest.raises(ChannelError):
            arrival_l1(ParticleResult(np.empty(0), 10), resp)
