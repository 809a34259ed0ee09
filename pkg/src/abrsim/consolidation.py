"""Branch-point feedback consolidation.

A branch point is a switch where a point-to-multipoint VC fans out.  It
duplicates forward cells to every branch and merges the backward RM cells
coming up from the branches into (ideally) a single stream toward the root.
Seven algorithms are implemented behind one event interface:

* ``on_frm``   -- a forward RM cell arrives from the root side
* ``on_brm``   -- a backward RM cell arrives from one branch
* ``on_brm_scheduled`` -- a backward RM cell the branch point decided to
  pass upstream is about to be serialized on the reverse link

A1 turns every forward cell around with the running minimum.  A2 is A1
gated on having heard from at least one branch.  A3 never turns forward
cells around; it passes the first backward cell that follows a forward one.
A4 waits for feedback from every branch.  A5 adds a fast path to A4: when
the consolidated rate drops well below the last value sent, the cell is
passed immediately without resetting the round.  A6 adds a counter so the
extra fast-path cells are later compensated by swallowing one
all-branches-underloaded round per extra cell.  A7 is A6 plus an immediate
rate calculation: the branch point's own per-port explicit rate is folded
into the minimum on every backward-cell receipt, so congestion at the
branch point itself is indicated without waiting for downstream feedback.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .cells import CellKind, RMCell


class AlgorithmId(enum.Enum):
    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    A4 = "A4"
    A5 = "A5"
    A6 = "A6"
    A7 = "A7"


#: algorithms that keep per-branch round state
ROUND_BASED = (AlgorithmId.A4, AlgorithmId.A5, AlgorithmId.A6, AlgorithmId.A7)
#: algorithms with the fast overload path
OVERLOAD_CAPABLE = (AlgorithmId.A5, AlgorithmId.A6, AlgorithmId.A7)
#: algorithms that keep the skip counter for RM-ratio control
RATIO_CONTROLLED = (AlgorithmId.A6, AlgorithmId.A7)

DEFAULT_ALPHA = 0.95


@dataclass(slots=True)
class ConsolidationState:
    """Per-VC registers at one branch point (superset over all algorithms)."""

    pcr: float
    icr: float
    number_of_branches: int
    alpha: float = DEFAULT_ALPHA

    mer: float = 0.0
    mci: bool = False
    mni: bool = False
    at_least_one_brm: bool = False      # A2
    at_least_one_frm: bool = False      # A3
    number_of_brms_received: int = 0    # A4-A7
    brm_received: list[bool] = field(default_factory=list)  # A4-A7
    last_er: float = 0.0                # A5-A7
    skip_increase: int = 0              # A6-A7
    frm_minus_brm: int = 0              # A5-A7, accounting only

    def clone(self) -> "ConsolidationState":
        c = ConsolidationState(self.pcr, self.icr, self.number_of_branches,
                               self.alpha)
        c.mer, c.mci, c.mni = self.mer, self.mci, self.mni
        c.at_least_one_brm = self.at_least_one_brm
        c.at_least_one_frm = self.at_least_one_frm
        c.number_of_brms_received = self.number_of_brms_received
        c.brm_received = list(self.brm_received)
        c.last_er = self.last_er
        c.skip_increase = self.skip_increase
        c.frm_minus_brm = self.frm_minus_brm
        return c


@dataclass(slots=True)
class ConsolidationActions:
    """What the branch point should do with the triggering cell."""

    multicast_frm: bool = False
    return_brm: RMCell | None = None
    discard: bool = False


def new_state(pcr: float, icr: float, number_of_branches: int,
              alpha: float = DEFAULT_ALPHA) -> ConsolidationState:
    if number_of_branches < 1:
        raise ValueError("branch point needs at least one branch")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0,1), got {alpha}")
    st = ConsolidationState(pcr=pcr, icr=icr,
                            number_of_branches=number_of_branches, alpha=alpha)
    st.mer = pcr
    st.brm_received = [False] * number_of_branches
    st.last_er = icr
    return st


def overload_test(mer: float, last_er: float, alpha: float) -> bool:
    """'Much less' test: the consolidated rate dropped below alpha * last_er."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0,1), got {alpha}")
    return mer < alpha * last_er


def _fold(st: ConsolidationState, cell: RMCell) -> None:
    if cell.er < st.mer:
        st.mer = cell.er
    st.mci = st.mci or cell.ci
    st.mni = st.mni or cell.ni


def _emit(st: ConsolidationState, cell: RMCell) -> RMCell:
    return RMCell(vc_id=cell.vc_id, kind=CellKind.BACKWARD_RM, er=st.mer,
                  ci=st.mci, ni=st.mni, ccr=cell.ccr, seq=cell.seq)


def _full_reset(st: ConsolidationState) -> None:
    st.mer = st.pcr
    st.mci = False
    st.mni = False
    st.number_of_brms_received = 0
    for i in range(st.number_of_branches):
        st.brm_received[i] = False


def on_frm(alg: AlgorithmId, st: ConsolidationState,
           cell: RMCell) -> tuple[ConsolidationState, ConsolidationActions]:
    """Forward RM cell from the root side; always multicast to the branches."""
    if cell.kind is not CellKind.FORWARD_RM:
        raise ValueError("on_frm expects a forward RM cell")
    actions = ConsolidationActions(multicast_frm=True)

    if alg is AlgorithmId.A1 or (alg is AlgorithmId.A2 and st.at_least_one_brm):
        # Turn the cell around with the consolidated values, then restart
        # consolidation from the forward cell's own fields (not PCR).
        mxer, mxci, mxni = cell.er, cell.ci, cell.ni
        actions.return_brm = _emit(st, cell)
        st.mer, st.mci, st.mni = mxer, mxci, mxni
        if alg is AlgorithmId.A2:
            st.at_least_one_brm = False
    elif alg is AlgorithmId.A3:
        st.at_least_one_frm = True
    elif alg in OVERLOAD_CAPABLE:
        st.frm_minus_brm += 1
    return st, actions


def on_brm(alg: AlgorithmId, st: ConsolidationState, branch: int, cell: RMCell,
           local_er: float | None = None,
           ) -> tuple[ConsolidationState, ConsolidationActions]:
    """Backward RM cell from branch ``branch``.

    For A7 the caller must pass ``local_er``, the minimum explicit rate the
    switch's own rate calculation currently allows over all branch ports.
    """
    if cell.kind is not CellKind.BACKWARD_RM:
        raise ValueError("on_brm expects a backward RM cell")
    if not 0 <= branch < st.number_of_branches:
        raise ValueError(f"branch {branch} out of range "
                         f"(0..{st.number_of_branches - 1})")
    if alg is AlgorithmId.A7 and local_er is None:
        raise ValueError("A7 requires local_er on every backward RM cell")

    if alg is AlgorithmId.A1:
        _fold(st, cell)
        return st, ConsolidationActions(discard=True)

    if alg is AlgorithmId.A2:
        st.at_least_one_brm = True
        _fold(st, cell)
        return st, ConsolidationActions(discard=True)

    if alg is AlgorithmId.A3:
        _fold(st, cell)
        if st.at_least_one_frm:
            out = _emit(st, cell)
            st.mer, st.mci, st.mni = st.pcr, False, False
            st.at_least_one_frm = False
            return st, ConsolidationActions(return_brm=out)
        return st, ConsolidationActions(discard=True)

    # A4-A7: mark the branch, fold, then decide.
    if not st.brm_received[branch]:
        st.brm_received[branch] = True
        st.number_of_brms_received += 1
    _fold(st, cell)
    if alg is AlgorithmId.A7:
        if local_er < st.mer:
            st.mer = local_er
    complete = st.number_of_brms_received == st.number_of_branches

    if alg is AlgorithmId.A4:
        if complete:
            out = _emit(st, cell)
            _full_reset(st)
            return st, ConsolidationActions(return_brm=out)
        return st, ConsolidationActions(discard=True)

    # A5-A7
    send = False
    reset = True
    if (alg in RATIO_CONTROLLED and st.mer >= st.last_er
            and st.skip_increase > 0 and complete):
        # Underload round compensating an earlier fast-path cell: swallow it.
        # Only the round counters restart; mer/mci/mni persist.
        st.skip_increase -= 1
        st.number_of_brms_received = 0
        for i in range(st.number_of_branches):
            st.brm_received[i] = False
        return st, ConsolidationActions(discard=True)
    if overload_test(st.mer, st.last_er, st.alpha):
        if not complete:
            reset = False
            if alg in RATIO_CONTROLLED:
                st.skip_increase += 1
        send = True
    elif complete:
        send = True

    if send:
        out = _emit(st, cell)
        if reset:
            _full_reset(st)
        st.frm_minus_brm -= 1
        return st, ConsolidationActions(return_brm=out)
    return st, ConsolidationActions(discard=True)


def on_brm_scheduled(alg: AlgorithmId, st: ConsolidationState, cell: RMCell,
                     erica_er: float) -> tuple[ConsolidationState, RMCell]:
    """Final step before a passed BRM hits the reverse link.

    The explicit rate is clamped by the switch's own calculated rate over
    all branch ports so the freshest local information is sent; A5-A7 then
    remember the value actually sent.
    """
    er = cell.er if cell.er < erica_er else erica_er
    if er != cell.er:
        cell = RMCell(vc_id=cell.vc_id, kind=cell.kind, er=er, ci=cell.ci,
                      ni=cell.ni, ccr=cell.ccr, seq=cell.seq)
    if alg in OVERLOAD_CAPABLE:
        st.last_er = er
    return st, cell
