"""Molecule source localization in advection-diffusion-driven pipe networks."""

__version__ = "0.1.0"

from .channel import (ChannelError, ChannelResponse, FixedRelease,
                      IGComponent, LogNormalRelease, ReceiverSpec,
                      TransmitterSpec, channel_response, expected_observation,
                      ig_flux, path_moments, pipe_moments)
from .clustering import (ConfusionMatrix, Partition, adjusted_rand_index,
                         binarize_cm, binarize_csm, build_confusion_matrix,
                         build_csm, kmeans_baseline, louvain_partition,
                         silhouette)
from .experiments import (Scenario, ScenarioEngine, SweepPoint, SweepResult,
                          draw_release_count, run_study, run_sweep)
from .matched_filter import (LocalizationResult, MatchedFilterBank,
                             NoiseCovariance, build_bank, localize)
from .network import (FlowField, FlowSolveError, Node, NodeKind, Path, Pipe,
                      PipeNetwork, TopologyError, enumerate_paths, solve_flow)
from .particles import (ParticleConfig, ParticleResult, arrival_l1,
                        simulate_particles)
from .sensing import (DegenerateSignalError, LowPassFilter, SampledSignal,
                      SensorConfig, design_lowpass, lp_filter, normalize_max,
                      sample_received)
from .topology import TopologyDocument, load_network, parse_topology


def load_surrogate_text() -> str:
    """Topology document text of the bundled 33-transmitter surrogate network."""
    from importlib.resources import files
    return files("pipeloc").joinpath("data/surrogate_sewage.txt").read_text()
