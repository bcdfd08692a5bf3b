"""Command-line interface.

Subcommands cover the full pipeline: topology validation, flow solving, CIR
dumps, particle-based validation of the channel model, single-signal
localization, confusion/similarity matrices, clustering, accuracy sweeps, and
the full study bundle.  Every file-producing command writes plain CSV plus a
``manifest.txt`` recording the parameters and code version; identical
invocations produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .clustering import (binarize_cm, binarize_csm,
                         build_csm, kmeans_baseline, louvain_partition,
                         silhouette)
from .experiments import (Scenario, ScenarioEngine, run_study, run_sweep,
                          write_csv, write_matrix_csv, _fmt)
from .matched_filter import localize as mf_localize
from .particles import ParticleConfig, arrival_l1, simulate_particles
from .sensing import SampledSignal
from .topology import parse_topology


def _bundled_network() -> str:
    from importlib.resources import files
    return str(files("pipeloc").joinpath("data/surrogate_sewage.txt"))


def _scenario(args) -> Scenario:
    kwargs = {"seed": args.seed}
    if getattr(args, "fs", None) is not None:
        kwargs["sampling_rate"] = float(args.fs)
    if getattr(args, "noise_var", None) is not None:
        kwargs["noise_variance"] = args.noise_var
    return Scenario.from_file(args.network, **kwargs)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(outdir: Path, command: str, params: Dict) -> None:
    lines = [f"pipeloc version: {__version__}", f"command: {command}"]
    lines += [f"{k}: {_fmt(v)}" for k, v in params.items()]
    (outdir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _common_params(args) -> Dict:
    return {"network": args.network, "seed": args.seed}


# -- subcommands -------------------------------------------------------------

def cmd_validate(args) -> int:
    doc = parse_topology(Path(args.network).read_text())
    net = doc.network
    print(f"nodes: {len(net.nodes)} "
          f"(inlets {len(net.inlet_nodes())}, outlets {len(net.outlet_nodes())})")
    print(f"pipes: {len(net.pipes)}")
    print(f"transmitters: {len(doc.transmitters)}")
    print(f"receiver: {'yes' if doc.receiver is not None else 'no'}")
    print("topology OK")
    return 0


def cmd_flow(args) -> int:
    from .network import solve_flow
    scenario = _scenario(args)
    flow = solve_flow(scenario.document.network, scenario.diffusion,
                      scenario.viscosity)
    net = flow.network
    out = _outdir(args)
    rows = [[pid, p.source, p.destination, p.length, p.radius,
             flow.flow_rate[pid], flow.velocity[pid], flow.dispersion[pid]]
            for pid, p in sorted(net.pipes.items())]
    write_csv(out / "flow.csv",
              ["pipe", "source", "destination", "length_m", "radius_m",
               "flow_m3_s", "velocity_m_s", "dispersion_m2_s"], rows)
    _manifest(out, "flow", _common_params(args))
    print(f"wrote {out / 'flow.csv'}")
    return 0


def cmd_cir(args) -> int:
    scenario = _scenario(args)
    engine = ScenarioEngine(scenario)
    out = _outdir(args)
    ids = engine.tx_ids()
    rows = [[float(t)] + [float(v) for v in engine.cir_samples[:, k]]
            for k, t in enumerate(engine.times)]
    write_csv(out / "cir_bank.csv",
              ["t_s"] + [f"h_tx{i}_per_s" for i in ids], rows)
    _manifest(out, "cir", {**_common_params(args),
                           "sampling_rate_hz": engine.sensor.sampling_rate})
    print(f"wrote {out / 'cir_bank.csv'}")
    return 0


def cmd_oracle(args) -> int:
    scenario = _scenario(args)
    engine = ScenarioEngine(scenario)
    out = _outdir(args)
    rows = []
    for tx, resp in zip(engine.transmitters, engine.responses):
        cfg = ParticleConfig(count=args.trials, seed=args.seed)
        result = simulate_particles(engine.network, engine.flow, tx,
                                    engine.receiver, cfg)
        l1 = arrival_l1(result, resp)
        rows.append([tx.id, args.trials, result.arrived, result.lost, l1])
        print(f"tx {tx.id}: arrived {result.arrived}/{args.trials}, "
              f"L1 {l1:.4f}")
    write_csv(out / "oracle.csv",
              ["tx", "particles", "arrived", "lost", "l1_distance"], rows)
    _manifest(out, "oracle", {**_common_params(args),
                              "particles": args.trials})
    print(f"wrote {out / 'oracle.csv'}")
    return 0


def cmd_localize(args) -> int:
    scenario = _scenario(args)
    engine = ScenarioEngine(scenario)
    data = np.loadtxt(args.signal, delimiter=",", ndmin=2)
    if data.shape[1] >= 2:
        samples = data[:, 1]
        dt = float(data[1, 0] - data[0, 0])
    else:
        samples = data[:, 0]
        dt = engine.sensor.dt
    result = mf_localize(SampledSignal(samples, dt), engine.bank, engine.filt)
    if result.missed:
        print("decision: missed detection")
    else:
        print(f"decision: transmitter {result.tx_id}")
    if result.candidate is not None:
        print(f"candidate: {result.candidate}")
        print(f"peak-to-noise ratio: {result.peak_to_noise:.3f}")
    return 0


def cmd_cm(args) -> int:
    scenario = _scenario(args)
    engine = ScenarioEngine(scenario)
    out = _outdir(args)
    cm = engine.confusion_matrix(args.trials, args.seed)
    ids = engine.tx_ids()
    write_matrix_csv(out / "cm.csv", cm.matrix, ids)
    write_matrix_csv(out / "cm_binary.csv", binarize_cm(cm), ids)
    _manifest(out, "cm", {**_common_params(args), "trials": args.trials,
                          "noise_variance": engine.sensor.noise_variance,
                          "sampling_rate_hz": engine.sensor.sampling_rate})
    print(f"wrote {out / 'cm.csv'}")
    return 0


def cmd_csm(args) -> int:
    scenario = _scenario(args)
    engine = ScenarioEngine(scenario)
    out = _outdir(args)
    csm = build_csm(list(engine.cir_samples))
    ids = engine.tx_ids()
    write_matrix_csv(out / "csm.csv", csm, ids)
    write_matrix_csv(out / "csm_binary.csv", binarize_csm(csm), ids)
    _manifest(out, "csm", {**_common_params(args),
                           "sampling_rate_hz": engine.sensor.sampling_rate})
    print(f"wrote {out / 'csm.csv'}")
    return 0


def cmd_cluster(args) -> int:
    scenario = _scenario(args)
    engine = ScenarioEngine(scenario)
    out = _outdir(args)
    csm = build_csm(list(engine.cir_samples))
    csm_part = louvain_partition(binarize_csm(csm), directed=False,
                                 seed=args.seed)
    km_part = kmeans_baseline(engine.weighted_mean_arrivals(),
                              max(csm_part.n_clusters, 1), seed=args.seed)
    ids = engine.tx_ids()
    write_csv(out / "partitions.csv", ["tx", "csm_cluster", "kmeans_cluster"],
              [[ids[i], int(csm_part.labels[i]), int(km_part.labels[i])]
               for i in range(engine.n_tx)])
    templates = list(engine.cir_samples)
    write_csv(out / "metrics.csv", ["clustering", "n_clusters", "silhouette"],
              [["csm_binary", csm_part.n_clusters,
                silhouette(csm_part, templates)],
               ["kmeans", km_part.n_clusters, silhouette(km_part, templates)]])
    _manifest(out, "cluster", _common_params(args))
    print(f"wrote {out / 'partitions.csv'}")
    return 0


def cmd_sweep(args) -> int:
    scenario = _scenario(args)
    out = _outdir(args)
    snr_grid = [float(s) for s in args.snr_grid.split(",")]
    fs_grid = [float(f) for f in str(args.fs or "2.0").split(",")]
    sweep = run_sweep(scenario, snr_grid, fs_grid, args.trials, args.seed)
    write_csv(out / "sweep.csv",
              ["fs_hz", "snr_db", "noise_variance", "trials",
               "exact_accuracy", "cluster_accuracy_csm",
               "cluster_accuracy_kmeans", "missed_detection"],
              [[p.sampling_rate, p.snr_db, p.noise_variance, p.trials,
                p.exact_accuracy, p.cluster_accuracy_csm,
                p.cluster_accuracy_kmeans, p.missed_detection]
               for p in sweep.points])
    _manifest(out, "sweep", {**_common_params(args), "trials": args.trials,
                             "snr_grid_db": args.snr_grid,
                             "fs_grid_hz": ",".join(_fmt(f) for f in fs_grid)})
    print(f"wrote {out / 'sweep.csv'}")
    return 0


def cmd_study(args) -> int:
    scenario = _scenario(args)
    out = _outdir(args)
    kwargs = {"trials": args.trials, "seed": args.seed}
    if args.snr_grid is not None:
        kwargs["snr_grid_db"] = [float(s) for s in args.snr_grid.split(",")]
    artifacts = run_study(scenario, out, **kwargs)
    for name in sorted(artifacts):
        print(f"wrote {artifacts[name]}")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pipeloc",
        description="Molecule source localization in pipe networks.")
    parser.add_argument("--version", action="version",
                        version=f"pipeloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, signal=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--network", default=_bundled_network(),
                       help="topology file (default: bundled surrogate)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--fs", default=None,
                       help="sampling rate in Hz (sweep: comma list)")
        p.add_argument("--noise-var", type=float, default=None,
                       help="sensor noise variance")
        p.add_argument("--trials", type=int, default=100)
        p.add_argument("--snr-grid", default=None,
                       help="comma-separated SNR grid in dB")
        p.add_argument("--out", default="out", help="output directory")
        if signal:
            p.add_argument("signal", help="received-signal CSV "
                           "(one value per line, or t,value rows)")
        p.set_defaults(func=func)
        return p

    add("validate", cmd_validate, "parse and validate a topology file")
    add("flow", cmd_flow, "solve steady-state flow and dump per-pipe rates")
    add("cir", cmd_cir, "dump the channel impulse response bank")
    p = add("oracle", cmd_oracle,
            "particle-transport validation of the channel model")
    p.set_defaults(trials=100000)
    add("localize", cmd_localize, "localize the source of one signal CSV",
        signal=True)
    add("cm", cmd_cm, "empirical confusion matrix from noisy trials")
    add("csm", cmd_csm, "cosine similarity matrix of the CIR shapes")
    add("cluster", cmd_cluster, "cluster transmitters and score partitions")
    p = add("sweep", cmd_sweep, "accuracy sweep over an SNR grid")
    p.set_defaults(snr_grid="-40,-30,-20,-10,0,10,20,30", trials=200)
    add("study", cmd_study, "full study data bundle")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
