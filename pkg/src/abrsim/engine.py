"""Deterministic cell-level discrete-event core.

Nodes are sources, switches and destinations connected by full-duplex
links (one FIFO output port per direction).  Cells occupy a link for their
serialization time and arrive at the peer after the propagation delay.
Events are dispatched in (time, push-order) order, so two runs of the same
scenario are bit-identical.

Forward cells of a point-to-multipoint VC are duplicated onto every branch
at branch points; backward RM cells are folded into the branch point's
consolidation state, and whatever the consolidation decides to pass is
rate-stamped at the moment it is about to leave on the reverse link.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from heapq import heappop, heappush

from . import consolidation as cons
from .cells import CellKind, DataCell, RMCell
from .endpoints import (Bursty, Persistent, SourceState, VbrBackground,
                        destination_turnaround, intercell_gap_s,
                        new_source_state, source_next_emission, source_on_brm,
                        vbr_instantaneous_rate, vbr_next_on)
from .erica import (EricaPortState, erica_close_interval, erica_compute_er,
                    erica_record_arrival, erica_vc_ccr)
from .metrics import BranchLog, MetricsBundle, PortStats, RmCounts
from .scenario import Scenario

QUEUE_SAMPLE_S = 1e-4  # queue-trace decimation for CSV output

EV_EMIT = 0
EV_ARRIVE = 1
EV_TXDONE = 2
EV_TIMER = 3
EV_REQUEST = 4


@dataclass(slots=True)
class Port:
    name: str
    owner: str
    peer: str
    owner_is_switch: bool
    ser_s: float
    prop_s: float
    erica: EricaPortState | None
    queue: deque = field(default_factory=deque)
    busy: bool = False
    timer_gen: int = 0
    stats: PortStats = field(default_factory=PortStats)
    samples: list = field(default_factory=list)
    _bucket: int = -1
    _last: tuple | None = None

    def sample(self, now: float) -> None:
        qlen = len(self.queue)
        if qlen > self.stats.max_queue:
            self.stats.max_queue = qlen
        b = int(now / QUEUE_SAMPLE_S)
        if b != self._bucket and self._last is not None:
            self.samples.append(self._last)
        self._bucket = b
        self._last = (now, qlen)

    def flush_samples(self) -> None:
        if self._last is not None:
            self.samples.append(self._last)
            self._last = None


@dataclass(slots=True)
class _VcRuntime:
    spec: object
    sstate: SourceState | None
    src_port: Port | None
    fwd_ports: dict[str, list[Port]]
    rev_port: dict[str, Port]
    branch_states: dict[str, cons.ConsolidationState]
    branch_index: dict[str, dict[str, int]]
    vbr_tag: int = 0


class Simulator:
    """One scenario run.  Build, call :meth:`run`, read the bundle."""

    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.scenario = scenario
        self.alg = scenario.algorithm
        self._heap: list = []
        self._seq = 0
        self._now = 0.0
        self._build()

    # -- construction -------------------------------------------------------

    def _build(self) -> None:
        sc = self.scenario
        self.node_kind = {name: spec.kind for name, spec in sc.nodes.items()}
        self._log_saw_brm: dict[tuple[str, str], bool] = {}
        self.ports: dict[tuple[str, str], Port] = {}
        for link in sc.links:
            for a, b in ((link.a, link.b), (link.b, link.a)):
                is_switch = self.node_kind[a] == "switch"
                erica = None
                if is_switch:
                    erica = EricaPortState(
                        link_rate_mbps=link.rate_mbps,
                        target_utilization=sc.target_utilization,
                        measure_cells=sc.interval_cells,
                        measure_interval_s=sc.interval_s)
                self.ports[(a, b)] = Port(
                    name=f"{a}->{b}", owner=a, peer=b,
                    owner_is_switch=is_switch,
                    ser_s=intercell_gap_s(link.rate_mbps),
                    prop_s=link.prop_delay_s, erica=erica)

        self.vcs: dict[str, _VcRuntime] = {}
        self.bundle = MetricsBundle(horizon_s=sc.horizon_s)
        self.bundle.params = {
            "scenario": sc.name,
            "algorithm": sc.algorithm.value,
            "alpha": sc.alpha,
            "target_utilization": sc.target_utilization,
            "interval_cells": sc.interval_cells,
            "interval_s": sc.interval_s,
            "horizon_s": sc.horizon_s,
        }
        for vc in sc.vcs:
            fwd: dict[str, list[Port]] = {}
            rev: dict[str, Port] = {}
            branch_states: dict[str, cons.ConsolidationState] = {}
            branch_index: dict[str, dict[str, int]] = {}
            for node, kids in vc.children.items():
                fwd[node] = [self.ports[(node, kid)] for kid in kids]
            for child, parent in vc.parent.items():
                rev[child] = self.ports[(child, parent)]
            if not vc.is_vbr:
                for node, kids in vc.children.items():
                    if len(kids) >= 2:
                        branch_states[node] = cons.new_state(
                            vc.params.pcr, vc.params.icr, len(kids), sc.alpha)
                        branch_index[node] = {k: i for i, k in enumerate(kids)}
                        self.bundle.branch_logs[(node, vc.vc_id)] = BranchLog(
                            number_of_branches=len(kids))
            sstate = None
            src_port = None
            if not vc.is_vbr:
                sstate = new_source_state(vc.params)
            src_port = fwd[vc.source][0]
            self.vcs[vc.vc_id] = _VcRuntime(
                spec=vc, sstate=sstate, src_port=src_port, fwd_ports=fwd,
                rev_port=rev, branch_states=branch_states,
                branch_index=branch_index)
            if not vc.is_vbr:
                self.bundle.rm_counts[vc.vc_id] = RmCounts()
                self.bundle.frm_times[vc.vc_id] = []
                self.bundle.brm_times[vc.vc_id] = []
                if vc.reference_mbps is not None:
                    self.bundle.references[vc.source] = vc.reference_mbps
                for leaf in vc.leaves:
                    self.bundle.deliveries[(vc.vc_id, leaf)] = 0

    # -- event plumbing -----------------------------------------------------

    def _push(self, t: float, code: int, a=None, b=None) -> None:
        heappush(self._heap, (t, self._seq, code, a, b))
        self._seq += 1

    # -- run ----------------------------------------------------------------

    def run(self) -> MetricsBundle:
        sc = self.scenario
        horizon = sc.horizon_s
        if horizon > 0:
            for vc_id, rt in self.vcs.items():
                vc = rt.spec
                if vc.is_vbr:
                    self._push(vbr_next_on(vc.traffic, 0.0), EV_EMIT, vc_id)
                elif isinstance(vc.traffic, Bursty):
                    self._push(vc.traffic.request_latency_s, EV_REQUEST, vc_id)
                else:
                    rt.sstate.emitting = True
                    self._push(0.0, EV_EMIT, vc_id)
                if not vc.is_vbr:
                    self.bundle.acr_traces[vc.source] = [(0.0, rt.sstate.acr)]
                    self.bundle.er_traces[vc.source] = []
            for port in self.ports.values():
                if port.erica is not None:
                    self._push(sc.interval_s, EV_TIMER, port, port.timer_gen)

        heap = self._heap
        while heap and heap[0][0] < horizon:
            t, _seq, code, a, b = heappop(heap)
            self._now = t
            if code == EV_ARRIVE:
                self._arrive(t, a, b)
            elif code == EV_TXDONE:
                self._txdone(t, a, b)
            elif code == EV_EMIT:
                self._emit(t, a)
            elif code == EV_TIMER:
                self._timer(t, a, b)
            else:
                self._request(t, a)

        self._finalize()
        return self.bundle

    def _finalize(self) -> None:
        for port in self.ports.values():
            port.flush_samples()
            port.stats.residual = len(port.queue)
            if port.erica is not None:
                port.stats.clamped_intervals = port.erica.clamped_intervals
            self.bundle.port_stats[port.name] = port.stats
            self.bundle.queue_traces[port.name] = port.samples
        for (node, vc_id), log in self.bundle.branch_logs.items():
            st = self.vcs[vc_id].branch_states[node]
            log.final_skip_increase = st.skip_increase
            log.final_frm_minus_brm = st.frm_minus_brm

    # -- handlers -----------------------------------------------------------

    def _emit(self, t: float, vc_id: str) -> None:
        rt = self.vcs[vc_id]
        vc = rt.spec
        if vc.is_vbr:
            model = vc.traffic
            cell = DataCell(vc_id=vc_id, emit_time=t, payload_tag=rt.vbr_tag)
            rt.vbr_tag += 1
            self._enqueue(rt.src_port, cell, t, background=True)
            nxt = t + intercell_gap_s(model.rate_mbps)
            if vbr_instantaneous_rate(model, nxt) <= 0.0:
                nxt = vbr_next_on(model, nxt)
            self._push(nxt, EV_EMIT, vc_id)
            return
        st = rt.sstate
        if st.acr <= 0.0:
            st.emitting = False
            return
        bursty = isinstance(vc.traffic, Bursty)
        if bursty and st.pending_cells <= 0:
            st.emitting = False
            return
        cell, nxt = source_next_emission(st, vc.params, vc_id, t)
        if isinstance(cell, RMCell):
            self.bundle.rm_counts[vc_id].frm_sent_by_source += 1
            self.bundle.frm_times[vc_id].append(t)
        self._enqueue(rt.src_port, cell, t, background=False)
        if bursty:
            st.pending_cells -= 1
            if st.pending_cells <= 0:
                st.emitting = False
                gap = 2.0 * vc.traffic.request_latency_s + vc.traffic.think_time_s
                self._push(t + gap, EV_REQUEST, vc_id)
                return
        self._push(nxt, EV_EMIT, vc_id)

    def _request(self, t: float, vc_id: str) -> None:
        rt = self.vcs[vc_id]
        st = rt.sstate
        st.pending_cells += rt.spec.traffic.burst_size_cells
        if not st.emitting and st.acr > 0.0:
            st.emitting = True
            self._push(t, EV_EMIT, vc_id)

    def _timer(self, t: float, port: Port, gen: int) -> None:
        if gen != port.timer_gen:
            return
        erica_close_interval(port.erica, t)
        port.timer_gen += 1
        self._push(t + self.scenario.interval_s, EV_TIMER, port, port.timer_gen)

    def _enqueue(self, port: Port, cell, now: float, background: bool) -> None:
        if port.erica is not None:
            if erica_record_arrival(port.erica, cell, now, background):
                port.timer_gen += 1
                self._push(now + self.scenario.interval_s, EV_TIMER, port,
                           port.timer_gen)
        port.stats.enqueued += 1
        port.queue.append(cell)
        port.sample(now)
        if not port.busy:
            self._start_tx(port, now)

    def _start_tx(self, port: Port, now: float) -> None:
        cell = port.queue.popleft()
        port.sample(now)
        if (port.owner_is_switch and cell.kind is CellKind.BACKWARD_RM):
            cell = self._stamp_brm(port.owner, cell)
        port.busy = True
        port.stats.transmitted += 1
        self._push(now + port.ser_s, EV_TXDONE, port, cell)

    def _stamp_brm(self, node: str, cell: RMCell) -> RMCell:
        rt = self.vcs[cell.vc_id]
        er_local = min(erica_compute_er(p.erica, erica_vc_ccr(p.erica, cell))
                       for p in rt.fwd_ports[node])
        st = rt.branch_states.get(node)
        if st is None:
            if er_local < cell.er:
                cell = RMCell(vc_id=cell.vc_id, kind=cell.kind, er=er_local,
                              ci=cell.ci, ni=cell.ni, ccr=cell.ccr,
                              seq=cell.seq)
            return cell
        log = self.bundle.branch_logs[(node, cell.vc_id)]
        log.events.append(("sched", er_local))
        st, cell = cons.on_brm_scheduled(self.alg, st, cell, er_local)
        log.outputs.append((cell.er, cell.ci, cell.ni))
        return cell

    def _txdone(self, t: float, port: Port, cell) -> None:
        self._push(t + port.prop_s, EV_ARRIVE, cell, port)
        if port.queue:
            self._start_tx(port, t)
        else:
            port.busy = False

    def _arrive(self, t: float, cell, via: Port) -> None:
        node = via.peer
        from_name = via.owner
        kind = self.node_kind[node]
        if kind == "switch":
            self._arrive_switch(t, node, from_name, cell)
        elif kind == "destination":
            self._arrive_destination(t, node, cell)
        else:
            self._arrive_source(t, node, cell)

    def _arrive_switch(self, t: float, node: str, from_name: str, cell) -> None:
        rt = self.vcs[cell.vc_id]
        if cell.kind is not CellKind.BACKWARD_RM:
            fports = rt.fwd_ports[node]
            background = rt.spec.is_vbr
            st = rt.branch_states.get(node)
            if cell.kind is CellKind.FORWARD_RM and st is not None:
                log = self.bundle.branch_logs[(node, cell.vc_id)]
                log.events.append(("frm", cell.er, cell.ci, cell.ni))
                log.frm_events += 1
                st, actions = cons.on_frm(self.alg, st, cell)
                for p in fports:
                    self._enqueue(p, cell, t, background)
                if actions.return_brm is not None:
                    brm = actions.return_brm
                    log.emitted_total += 1
                    if not self._log_saw_brm.get((node, cell.vc_id), False):
                        log.emitted_before_any_brm += 1
                    self.bundle.rm_counts[cell.vc_id].brm_in_network += 1
                    self._enqueue(rt.rev_port[node], brm, t, background)
                return
            for p in fports:
                self._enqueue(p, cell, t, background)
            return
        # backward RM cell heading for the root
        st = rt.branch_states.get(node)
        if st is None:
            self._enqueue(rt.rev_port[node], cell, t, rt.spec.is_vbr)
            return
        branch = rt.branch_index[node][from_name]
        local_er = None
        if self.alg is cons.AlgorithmId.A7:
            local_er = min(erica_compute_er(p.erica, erica_vc_ccr(p.erica, cell))
                           for p in rt.fwd_ports[node])
        log = self.bundle.branch_logs[(node, cell.vc_id)]
        self._log_saw_brm[(node, cell.vc_id)] = True
        if local_er is None:
            log.events.append(("brm", branch, cell.er, cell.ci, cell.ni))
        else:
            log.events.append(("brm", branch, cell.er, cell.ci, cell.ni,
                               local_er))
        prev_last_er = st.last_er
        st, actions = cons.on_brm(self.alg, st, branch, cell, local_er)
        if st.skip_increase > log.max_skip_increase:
            log.max_skip_increase = st.skip_increase
        if actions.return_brm is not None:
            log.emitted_total += 1
            if st.number_of_brms_received != 0:
                # marks persisted, so this was a fast-path (no reset) send
                log.emitted_incomplete += 1
                log.early_sends.append((actions.return_brm.er, prev_last_er))
            self._enqueue(rt.rev_port[node], actions.return_brm, t,
                          rt.spec.is_vbr)

    def _arrive_destination(self, t: float, node: str, cell) -> None:
        rt = self.vcs[cell.vc_id]
        if cell.kind is CellKind.DATA:
            key = (cell.vc_id, node)
            if key in self.bundle.deliveries:
                self.bundle.deliveries[key] += 1
            return
        if cell.kind is CellKind.FORWARD_RM:
            brm = destination_turnaround(cell)
            self._enqueue(rt.rev_port[node], brm, t, rt.spec.is_vbr)

    def _arrive_source(self, t: float, node: str, cell) -> None:
        rt = self.vcs[cell.vc_id]
        if not isinstance(cell, RMCell) or cell.kind is not CellKind.BACKWARD_RM:
            return
        st = rt.sstate
        source_on_brm(st, rt.spec.params, cell)
        self.bundle.acr_traces[node].append((t, st.acr))
        self.bundle.er_traces[node].append((t, cell.er))
        self.bundle.rm_counts[cell.vc_id].brm_received_by_source += 1
        self.bundle.brm_times[cell.vc_id].append(t)
        if not st.emitting and st.acr > 0.0:
            traffic = rt.spec.traffic
            if isinstance(traffic, Persistent) or st.pending_cells > 0:
                st.emitting = True
                self._push(t, EV_EMIT, cell.vc_id)


def run(scenario: Scenario) -> MetricsBundle:
    """Simulate the scenario from t=0 to its horizon and collect all traces."""
    sim = Simulator(scenario)
    return sim.run()
