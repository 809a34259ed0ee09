"""Trace recording containers and post-processing.

Includes a deliberately naive re-implementation of the seven consolidation
algorithms (``oracle_replay``) that re-executes a branch point's recorded
input events as a straight-line interpreter.  Equality between the
simulator's emitted backward-RM stream and the oracle's output is the main
end-to-end correctness check for the consolidation layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .consolidation import AlgorithmId

NOT_CONVERGED = math.inf


@dataclass(slots=True)
class RmCounts:
    """Per-VC RM-cell accounting.

    ``brm_in_network`` counts backward RM cells created by branch points
    (cells the network itself injected); turnarounds at destinations are
    unavoidable and not counted.
    """

    frm_sent_by_source: int = 0
    brm_received_by_source: int = 0
    brm_in_network: int = 0


@dataclass(slots=True)
class BranchLog:
    """Recorded event stream of one (branch point, VC) pair.

    ``events`` holds, in processing order:
      ("frm", er, ci, ni)
      ("brm", branch, er, ci, ni)            for A1-A6
      ("brm", branch, er, ci, ni, local_er)  for A7
      ("sched", erica_er)                    when a passed cell hits the link
    ``outputs`` holds the final (er, ci, ni) of every backward RM cell this
    branch point actually put on the reverse link, in link order.
    """

    number_of_branches: int
    events: list[tuple] = field(default_factory=list)
    outputs: list[tuple] = field(default_factory=list)
    frm_events: int = 0
    emitted_total: int = 0
    emitted_incomplete: int = 0        # sends while the round was incomplete
    emitted_before_any_brm: int = 0    # sends before the first branch BRM ever
    early_sends: list[tuple[float, float]] = field(default_factory=list)
    max_skip_increase: int = 0
    final_skip_increase: int = 0
    final_frm_minus_brm: int = 0


@dataclass(slots=True)
class PortStats:
    enqueued: int = 0
    transmitted: int = 0
    residual: int = 0
    max_queue: int = 0
    clamped_intervals: int = 0


@dataclass(slots=True)
class MetricsBundle:
    horizon_s: float = 0.0
    params: dict = field(default_factory=dict)
    acr_traces: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    er_traces: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    queue_traces: dict[str, list[tuple[float, int]]] = field(default_factory=dict)
    rm_counts: dict[str, RmCounts] = field(default_factory=dict)
    frm_times: dict[str, list[float]] = field(default_factory=dict)
    brm_times: dict[str, list[float]] = field(default_factory=dict)
    branch_logs: dict[tuple[str, str], BranchLog] = field(default_factory=dict)
    port_stats: dict[str, PortStats] = field(default_factory=dict)
    deliveries: dict[tuple[str, str], int] = field(default_factory=dict)
    references: dict[str, float] = field(default_factory=dict)

    def max_queue(self) -> int:
        return max((s.max_queue for s in self.port_stats.values()), default=0)


def noise_index(er_trace: list[tuple[float, float]], oracle_bottleneck: float,
                eps: float = 0.05, window: float = 0.05,
                horizon: float | None = None) -> float:
    """Fraction of feedback values in the trailing window that overshoot.

    A delivered backward-RM explicit rate above ``oracle_bottleneck*(1+eps)``
    is consolidation noise: feedback that cannot be sustained once every
    branch has answered.
    """
    if horizon is None:
        horizon = er_trace[-1][0] if er_trace else 0.0
    start = horizon - window
    in_window = [er for t, er in er_trace if t >= start]
    if not in_window:
        return 0.0
    bad = sum(1 for er in in_window if er > oracle_bottleneck * (1.0 + eps))
    return bad / len(in_window)


def brm_frm_ratio(counts: RmCounts) -> dict[str, float]:
    if counts.frm_sent_by_source <= 0:
        raise ValueError("no forward RM cells sent")
    return {
        "at_root": counts.brm_received_by_source / counts.frm_sent_by_source,
        "in_network": counts.brm_in_network / counts.frm_sent_by_source,
    }


def windowed_at_root_ratio(frm_times: list[float], brm_times: list[float],
                           window: float) -> float:
    """Largest BRM:FRM count ratio over any window (t-window, t] of the run."""
    from bisect import bisect_right

    best = 0.0
    for t in brm_times:
        start = t - window
        frm_in = bisect_right(frm_times, t) - bisect_right(frm_times, start)
        brm_in = bisect_right(brm_times, t) - bisect_right(brm_times, start)
        if frm_in > 0 and brm_in / frm_in > best:
            best = brm_in / frm_in
    return best


def convergence_time(acr_trace: list[tuple[float, float]], reference: float,
                     tol: float = 0.1) -> float:
    """First time after which the trace stays within +-tol*reference.

    Returns ``NOT_CONVERGED`` (inf) when the final sample is out of band or
    the trace is empty.
    """
    if reference <= 0:
        raise ValueError("reference rate must be positive")
    if not acr_trace:
        return NOT_CONVERGED
    lo = reference * (1.0 - tol)
    hi = reference * (1.0 + tol)
    last_bad = -1
    for i, (_t, v) in enumerate(acr_trace):
        if not lo <= v <= hi:
            last_bad = i
    if last_bad == len(acr_trace) - 1:
        return NOT_CONVERGED
    if last_bad < 0:
        return acr_trace[0][0]
    return acr_trace[last_bad + 1][0]


def trace_time_mean(trace: list[tuple[float, float]], t0: float,
                    t1: float) -> float:
    """Time-weighted mean of a step-function trace over [t0, t1]."""
    if t1 <= t0:
        raise ValueError("empty averaging window")
    if not trace:
        return 0.0
    total = 0.0
    # value in effect at t0
    current = trace[0][1]
    for t, v in trace:
        if t > t0:
            break
        current = v
    prev_t = t0
    for t, v in trace:
        if t <= t0:
            current = v
            continue
        if t >= t1:
            break
        total += current * (t - prev_t)
        prev_t = t
        current = v
    total += current * (t1 - prev_t)
    return total / (t1 - t0)


def trace_peak_to_peak(trace: list[tuple[float, float]], t0: float,
                       t1: float) -> float:
    values = [v for t, v in trace if t0 <= t <= t1]
    if not values:
        return 0.0
    return max(values) - min(values)


# ---------------------------------------------------------------------------
# independent replay oracle


def oracle_replay(events: list[tuple], alg: AlgorithmId, pcr: float,
                  icr: float, alpha: float,
                  number_of_branches: int) -> list[tuple]:
    """Re-run a branch point's recorded inputs through naive pseudocode.

    Returns the stream of (er, ci, ni) values put on the reverse link, to be
    compared field-for-field with the simulator's recorded outputs.  Written
    independently of the production consolidation module on purpose.
    """
    mer = pcr
    mci = False
    mni = False
    at_least_one_brm = False
    at_least_one_frm = False
    n_received = 0
    received = [False] * number_of_branches
    last_er = icr
    skip = 0
    pending: list[list] = []   # cells passed but not yet scheduled
    out: list[tuple] = []
    a = alg.value

    for ev in events:
        kind = ev[0]
        if kind == "sched":
            erica_er = ev[1]
            cell = pending.pop(0)
            er = cell[0]
            if erica_er < er:
                er = erica_er
            out.append((er, cell[1], cell[2]))
            if a in ("A5", "A6", "A7"):
                last_er = er
            continue

        if kind == "frm":
            er, ci, ni = ev[1], ev[2], ev[3]
            if a == "A1":
                pending.append([mer, mci, mni])
                mer, mci, mni = er, ci, ni
            elif a == "A2":
                if at_least_one_brm:
                    pending.append([mer, mci, mni])
                    mer, mci, mni = er, ci, ni
                    at_least_one_brm = False
            elif a == "A3":
                at_least_one_frm = True
            continue

        # backward RM cell
        branch, er, ci, ni = ev[1], ev[2], ev[3], ev[4]
        if a == "A1":
            mer = min(mer, er)
            mci = mci or ci
            mni = mni or ni
        elif a == "A2":
            at_least_one_brm = True
            mer = min(mer, er)
            mci = mci or ci
            mni = mni or ni
        elif a == "A3":
            mer = min(mer, er)
            mci = mci or ci
            mni = mni or ni
            if at_least_one_frm:
                pending.append([mer, mci, mni])
                mer, mci, mni = pcr, False, False
                at_least_one_frm = False
        elif a == "A4":
            if not received[branch]:
                received[branch] = True
                n_received += 1
            mer = min(mer, er)
            mci = mci or ci
            mni = mni or ni
            if n_received == number_of_branches:
                pending.append([mer, mci, mni])
                mer, mci, mni = pcr, False, False
                n_received = 0
                received = [False] * number_of_branches
        else:
            # A5, A6, A7
            send = False
            reset = True
            if not received[branch]:
                received[branch] = True
                n_received += 1
            mer = min(mer, er)
            mci = mci or ci
            mni = mni or ni
            if a == "A7":
                mer = min(mer, ev[5])
            if (a in ("A6", "A7") and mer >= last_er and skip > 0
                    and n_received == number_of_branches):
                skip -= 1
                n_received = 0
                received = [False] * number_of_branches
            elif mer < alpha * last_er:
                if n_received < number_of_branches:
                    reset = False
                    if a in ("A6", "A7"):
                        skip += 1
                send = True
            elif n_received == number_of_branches:
                send = True
            if send:
                pending.append([mer, mci, mni])
                if reset:
                    mer, mci, mni = pcr, False, False
                    n_received = 0
                    received = [False] * number_of_branches
    return out
