"""Scenario runner and CSV/trace emission.

``abrsim run scenario.scn [--alg A1..A7] [--alpha F] [--horizon S] [--out DIR]``

Per run the following files are written into the output directory, each with
a ``#`` comment header carrying the fully resolved parameter set:

    acr_<source>.csv    t_s,acr_mbps         allowed-rate trace per source
    queue_<port>.csv    t_s,cells            queue length per output port
    rm_summary.csv      per-VC RM-cell counts and BRM:FRM ratios
    noise.csv           per-source noise index (sources with a reference)
    convergence.csv     per-source convergence time (ditto)
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import metrics as m
from .consolidation import AlgorithmId
from .engine import run
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario

__all__ = ["main", "run_and_emit", "parse_scenario", "load_scenario"]

NOISE_EPS = 0.05
NOISE_WINDOW_S = 0.05
CONVERGENCE_TOL = 0.1


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _safe(name: str) -> str:
    return name.replace("->", "__").replace("/", "_")


def _header(params: dict) -> str:
    pairs = " ".join(f"{k}={_fmt(v)}" for k, v in sorted(params.items()))
    return f"# {pairs}\n"


def run_and_emit(scenario: Scenario, out_dir) -> list[Path]:
    """Run one scenario and write all trace/summary CSVs.

    Returns the list of files written.  On any I/O failure partial files are
    removed and the error re-raised.
    """
    bundle = run(scenario)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = _header(bundle.params)
    written: list[Path] = []
    try:
        for source, trace in bundle.acr_traces.items():
            path = out / f"acr_{_safe(source)}.csv"
            with path.open("w") as fh:
                fh.write(header)
                fh.write("t_s,acr_mbps\n")
                for t, v in trace:
                    fh.write(f"{_fmt(t)},{_fmt(v)}\n")
            written.append(path)
        for port, trace in bundle.queue_traces.items():
            path = out / f"queue_{_safe(port)}.csv"
            with path.open("w") as fh:
                fh.write(header)
                fh.write("t_s,cells\n")
                for t, qlen in trace:
                    fh.write(f"{_fmt(t)},{qlen}\n")
            written.append(path)

        path = out / "rm_summary.csv"
        with path.open("w") as fh:
            fh.write(header)
            fh.write("vc,frm_sent,brm_received_at_source,brm_in_network,"
                     "at_root_ratio,in_network_ratio\n")
            for vc_id, counts in bundle.rm_counts.items():
                if counts.frm_sent_by_source > 0:
                    ratios = m.brm_frm_ratio(counts)
                    fh.write(f"{vc_id},{counts.frm_sent_by_source},"
                             f"{counts.brm_received_by_source},"
                             f"{counts.brm_in_network},"
                             f"{_fmt(ratios['at_root'])},"
                             f"{_fmt(ratios['in_network'])}\n")
        written.append(path)

        path = out / "noise.csv"
        with path.open("w") as fh:
            fh.write(header)
            fh.write("# noise index: fraction of delivered BRM explicit "
                     "rates above reference*(1+eps) in the trailing window\n")
            fh.write("source,reference_mbps,eps,window_s,noise_index\n")
            for source, reference in bundle.references.items():
                trace = bundle.er_traces.get(source, [])
                if not trace:
                    continue
                idx = m.noise_index(trace, reference, NOISE_EPS,
                                    NOISE_WINDOW_S, bundle.horizon_s)
                fh.write(f"{source},{_fmt(reference)},{_fmt(NOISE_EPS)},"
                         f"{_fmt(NOISE_WINDOW_S)},{_fmt(idx)}\n")
        written.append(path)

        path = out / "convergence.csv"
        with path.open("w") as fh:
            fh.write(header)
            fh.write("source,reference_mbps,tol,time_s\n")
            for source, reference in bundle.references.items():
                trace = bundle.acr_traces.get(source, [])
                if not trace:
                    continue
                when = m.convergence_time(trace, reference, CONVERGENCE_TOL)
                fh.write(f"{source},{_fmt(reference)},{_fmt(CONVERGENCE_TOL)},"
                         f"{_fmt(when)}\n")
        written.append(path)
    except OSError:
        for path in written:
            path.unlink(missing_ok=True)
        raise

    _print_summary(bundle)
    return written


def _print_summary(bundle: m.MetricsBundle) -> None:
    for source, trace in bundle.acr_traces.items():
        final = trace[-1][1] if trace else float("nan")
        print(f"acr {source}: final={final:.3f} Mbps ({len(trace)} samples)")
    for port, stats in bundle.port_stats.items():
        if stats.max_queue > 0:
            print(f"queue {port}: max={stats.max_queue} cells")
    for vc_id, counts in bundle.rm_counts.items():
        if counts.frm_sent_by_source > 0:
            ratios = m.brm_frm_ratio(counts)
            print(f"rm {vc_id}: frm={counts.frm_sent_by_source} "
                  f"at_root={ratios['at_root']:.4f} "
                  f"in_network={ratios['in_network']:.4f}")
    for source, reference in bundle.references.items():
        trace = bundle.er_traces.get(source, [])
        if trace:
            idx = m.noise_index(trace, reference, NOISE_EPS, NOISE_WINDOW_S,
                                bundle.horizon_s)
            print(f"noise {source}: {idx:.4f} (ref={reference} Mbps)")
        acr = bundle.acr_traces.get(source, [])
        if acr:
            when = m.convergence_time(acr, reference, CONVERGENCE_TOL)
            print(f"convergence {source}: {when:.6f} s (ref={reference} Mbps)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="abrsim",
        description="Cell-level ABR point-to-multipoint simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run one scenario and emit CSV traces")
    runp.add_argument("scenario", help="path to a .scn scenario file")
    runp.add_argument("--alg", choices=[a.value for a in AlgorithmId],
                      help="override the scenario's consolidation algorithm")
    runp.add_argument("--alpha", type=float,
                      help="override the overload-detection factor")
    runp.add_argument("--horizon", type=float,
                      help="override the simulation horizon in seconds")
    runp.add_argument("--out", default="out", help="output directory")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        if args.alg:
            scenario.algorithm = AlgorithmId(args.alg)
        if args.alpha is not None:
            scenario.alpha = args.alpha
        if args.horizon is not None:
            scenario.horizon_s = args.horizon
        scenario.validate()
        files = run_and_emit(scenario, args.out)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(files)} files to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
