"""Per-output-port ERICA measurement and explicit-rate calculation.

Each output port periodically measures its load and computes, per VC, the
explicit rate to stamp into backward RM cells.  The measurement interval
closes on whichever fires first: a fixed cell count or a fixed timer
(defaults 100 cells / 1 ms).  At close the port derives

    abr_capacity = target_utilization * link_rate - measured VBR/CBR rate
    z            = measured ABR input rate / abr_capacity
    fair_share   = abr_capacity / number of VCs seen in the interval

and a backward RM cell for a VC with current rate ``ccr`` is then allowed

    min(abr_capacity, max(fair_share, ccr / z, max ER of previous interval))

where the previous-interval maximum participates only while the port is not
overloaded (z <= 1 + delta).  Without that condition the term ratchets: every
computed rate feeds the next interval's maximum, so a transient overshoot
(e.g. from stale CCR snapshots while a queue drains) locks allocations above
the fair share permanently.  The cap at ``abr_capacity`` similarly keeps the
maximum from feeding rates above the link back into the allocation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cells import CELL_BITS, CellKind, RMCell

#: load factor floor for empty or near-empty intervals (avoids ccr/0)
Z_FLOOR = 0.01
#: capacity floor in Mbps when background traffic saturates the link
CAPACITY_FLOOR_MBPS = 0.001
#: overload band above which the previous-interval maximum is ignored.
#: Keep this below the 5% noise tolerance: allocations can park anywhere in
#: [fair_share, (1+delta)/2 * capacity] via the in-band maximum, so delta
#: bounds the steady-state creep above fair share.
Z_OVERLOAD_DELTA = 0.02


@dataclass(slots=True)
class EricaPortState:
    link_rate_mbps: float
    target_utilization: float = 0.9
    measure_cells: int = 100
    measure_interval_s: float = 0.001

    interval_cell_count: int = 0
    interval_start: float = 0.0
    abr_input_bits: int = 0
    vbr_cbr_bits: int = 0
    active_vcs: set = field(default_factory=set)
    ccr_seen: dict = field(default_factory=dict)

    z: float = 1.0
    fair_share: float = 0.0
    abr_capacity: float = 0.0
    max_er_prev: float = 0.0
    max_er_cur: float = 0.0
    closed_once: bool = False
    clamped_intervals: int = 0

    def __post_init__(self) -> None:
        self.abr_capacity = self.target_utilization * self.link_rate_mbps
        self.fair_share = self.abr_capacity


def erica_record_arrival(port: EricaPortState, cell, now: float,
                         background: bool = False) -> bool:
    """Account one cell arriving for this output port.

    Background (VBR/CBR) cells only consume capacity; ABR cells also mark
    their VC active, and a forward RM cell refreshes the port's view of the
    VC's current rate.  Returns True when the cell-count trigger closed the
    interval, so the caller can re-arm its timer.
    """
    port.interval_cell_count += 1
    if background:
        port.vbr_cbr_bits += CELL_BITS
    else:
        port.abr_input_bits += CELL_BITS
        port.active_vcs.add(cell.vc_id)
        if cell.kind is CellKind.FORWARD_RM:
            port.ccr_seen[cell.vc_id] = cell.ccr
    if port.interval_cell_count >= port.measure_cells:
        erica_close_interval(port, now)
        return True
    return False


def erica_close_interval(port: EricaPortState, now: float) -> None:
    """Close the measurement interval and refresh the allocation inputs."""
    length = now - port.interval_start
    if length <= 0.0:
        length = 1e-12
    vbr_mbps = port.vbr_cbr_bits / length / 1e6
    capacity = port.target_utilization * port.link_rate_mbps - vbr_mbps
    if capacity <= CAPACITY_FLOOR_MBPS:
        capacity = CAPACITY_FLOOR_MBPS
        port.clamped_intervals += 1
    input_mbps = port.abr_input_bits / length / 1e6
    port.z = max(input_mbps / capacity, Z_FLOOR)
    port.abr_capacity = capacity
    port.fair_share = capacity / max(1, len(port.active_vcs))
    port.max_er_prev = port.max_er_cur
    port.max_er_cur = 0.0
    port.abr_input_bits = 0
    port.vbr_cbr_bits = 0
    port.active_vcs.clear()
    port.interval_cell_count = 0
    port.interval_start = now
    port.closed_once = True


def erica_compute_er(port: EricaPortState, vc_ccr: float) -> float:
    """Explicit rate this port grants a VC whose forward cells carry vc_ccr."""
    if not port.closed_once:
        # No measurement yet: neutral allocation, not recorded as a grant.
        return port.abr_capacity
    er = max(port.fair_share, vc_ccr / port.z)
    if port.z <= 1.0 + Z_OVERLOAD_DELTA and port.max_er_prev > er:
        er = port.max_er_prev
    if er > port.abr_capacity:
        er = port.abr_capacity
    if er > port.max_er_cur:
        port.max_er_cur = er
    return er


def erica_vc_ccr(port: EricaPortState, cell: RMCell) -> float:
    """Current rate of the cell's VC as this port knows it.

    Prefers the CCR most recently carried by a forward RM cell through the
    port: the backward cell's own CCR field is a full round trip old and
    dividing it by a fresher load factor makes the allocation ring.
    """
    return port.ccr_seen.get(cell.vc_id, cell.ccr)


def erica_stamp_brm(port: EricaPortState, cell: RMCell) -> RMCell:
    """Reduce (never raise) the ER of a backward RM cell leaving this switch."""
    er = erica_compute_er(port, erica_vc_ccr(port, cell))
    if er < cell.er:
        return RMCell(vc_id=cell.vc_id, kind=cell.kind, er=er, ci=cell.ci,
                      ni=cell.ni, ccr=cell.ccr, seq=cell.seq)
    return cell
