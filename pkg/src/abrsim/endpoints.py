"""ABR endpoints: source rate control, destination turnaround, traffic models.

Sources pace cells at their allowed cell rate (ACR) and emit one in-band
forward RM cell per ``nrm`` cells.  Three traffic models are supported:
persistent (always has cells to send), bursty request/response (the source
sends a fixed-size burst each time a client request arrives), and an on/off
VBR background flow that bypasses ABR control entirely and only consumes
link capacity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .cells import CELL_BITS, CellKind, DataCell, RMCell, make_initial_frm


@dataclass(frozen=True, slots=True)
class Persistent:
    pass


@dataclass(frozen=True, slots=True)
class Bursty:
    """Request/response source.

    A client request reaches the source ``request_latency_s`` after it is
    issued; the source then queues ``burst_size_cells`` for paced emission.
    The next request is issued one delivery delay plus ``think_time_s``
    after the burst finishes, i.e. it arrives at
    burst_end + 2 * request_latency_s + think_time_s.
    """

    burst_size_cells: int = 3000
    request_latency_s: float = 0.005
    think_time_s: float = 0.0


@dataclass(frozen=True, slots=True)
class VbrBackground:
    """On/off constant-rate background flow, active first, starting at t=0."""

    rate_mbps: float
    on_s: float = 0.02
    off_s: float = 0.02


TrafficModel = Union[Persistent, Bursty, VbrBackground]


@dataclass(frozen=True, slots=True)
class SourceParams:
    pcr: float
    icr: float
    rif: float = 1.0
    rdf: float = 1.0 / 16.0
    mcr: float = 0.0
    nrm: int = 32
    tbe: int = 16_777_215  # configuration only; open-loop decrease not modeled

    def __post_init__(self) -> None:
        if not 0.0 <= self.mcr <= self.icr <= self.pcr:
            raise ValueError(
                f"need mcr <= icr <= pcr, got {self.mcr}/{self.icr}/{self.pcr}")
        if not 0.0 < self.rif <= 1.0:
            raise ValueError(f"rif must be in (0,1], got {self.rif}")
        if not 0.0 < self.rdf <= 1.0:
            raise ValueError(f"rdf must be in (0,1], got {self.rdf}")
        if self.nrm < 2:
            raise ValueError(f"nrm must be >= 2, got {self.nrm}")


@dataclass(slots=True)
class SourceState:
    acr: float
    cells_since_frm: int
    next_seq: int = 0
    next_tag: int = 0
    pending_cells: int = 0   # bursty only
    emitting: bool = False   # an emission event is scheduled


def new_source_state(params: SourceParams) -> SourceState:
    # Counter starts one short of the cadence so the very first cell is a
    # forward RM cell and the feedback loop starts immediately.
    return SourceState(acr=params.icr, cells_since_frm=params.nrm - 1)


def source_on_brm(state: SourceState, params: SourceParams,
                  cell: RMCell) -> SourceState:
    """Standard ABR source rule subset applied on a backward RM cell."""
    if cell.kind is not CellKind.BACKWARD_RM:
        raise ValueError("source_on_brm expects a backward RM cell")
    acr = state.acr
    if cell.ci:
        acr = acr - acr * params.rdf
    elif not cell.ni:
        acr = acr + params.rif * params.pcr
    acr = min(acr, cell.er, params.pcr)
    acr = max(acr, params.mcr)
    state.acr = acr
    return state


def intercell_gap_s(acr_mbps: float) -> float:
    """Pacing gap between consecutive cells at the given rate."""
    if acr_mbps <= 0.0:
        raise ValueError("no pacing gap at a non-positive rate")
    return CELL_BITS / (acr_mbps * 1e6)


def source_next_emission(state: SourceState, params: SourceParams, vc_id: str,
                         now: float) -> tuple[DataCell | RMCell, float]:
    """Emit the next cell of the stream and return it with the next emit time.

    Every ``nrm``-th cell is a forward RM cell stamped with the current ACR.
    The caller owns traffic-model gating (burst budget, idling at acr=0).
    """
    if state.cells_since_frm >= params.nrm - 1:
        cell: DataCell | RMCell = make_initial_frm(vc_id, params.pcr,
                                                   state.acr, seq=state.next_seq)
        state.next_seq += 1
        state.cells_since_frm = 0
    else:
        cell = DataCell(vc_id=vc_id, emit_time=now, payload_tag=state.next_tag)
        state.next_tag += 1
        state.cells_since_frm += 1
    return cell, now + intercell_gap_s(state.acr)


def destination_turnaround(cell: RMCell) -> RMCell:
    """Leaf behavior: send the forward RM cell back unchanged as a backward one."""
    if cell.kind is not CellKind.FORWARD_RM:
        raise ValueError("only forward RM cells are turned around")
    return RMCell(vc_id=cell.vc_id, kind=CellKind.BACKWARD_RM, er=cell.er,
                  ci=cell.ci, ni=cell.ni, ccr=cell.ccr, seq=cell.seq)


def vbr_instantaneous_rate(model: VbrBackground, now: float) -> float:
    """Rate of the background flow at time ``now`` (active phase first)."""
    phase = now % (model.on_s + model.off_s)
    return model.rate_mbps if phase < model.on_s else 0.0


def vbr_next_on(model: VbrBackground, t: float) -> float:
    """Earliest time >= t that falls in an active phase."""
    cycle = model.on_s + model.off_s
    phase = t % cycle
    if phase < model.on_s:
        return t
    return t - phase + cycle
