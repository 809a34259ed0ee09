"""Cell data model shared by every other module.

Everything on the wire is a 53-byte ATM cell.  Payload content is never
modeled; cells only matter for their transmission time and, in the case of
resource-management (RM) cells, their feedback fields.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import ClassVar

CELL_BYTES = 53
CELL_BITS = CELL_BYTES * 8  # 424 bits per cell on the wire


class CellKind(enum.Enum):
    DATA = "data"
    FORWARD_RM = "frm"
    BACKWARD_RM = "brm"


@dataclass(frozen=True, slots=True)
class DataCell:
    vc_id: str
    emit_time: float
    payload_tag: int = 0

    kind: ClassVar[CellKind] = CellKind.DATA


@dataclass(frozen=True, slots=True)
class RMCell:
    """Resource-management cell.

    ``er`` (explicit rate, Mbps), ``ci`` (congestion indication) and ``ni``
    (no increase) carry the feedback; ``ccr`` snapshots the source rate at
    the moment the forward cell was emitted.  ``seq`` is simulator
    bookkeeping, not a wire field.
    """

    vc_id: str
    kind: CellKind
    er: float
    ci: bool
    ni: bool
    ccr: float
    seq: int = 0


def make_initial_frm(vc_id: str, pcr: float, acr: float, seq: int = 0) -> RMCell:
    """Build a forward RM cell the way a source stamps it.

    ER starts at the peak cell rate, both flags clear, CCR records the
    current allowed rate.
    """
    if pcr <= 0.0 or acr <= 0.0:
        raise ValueError(f"rates must be positive (pcr={pcr}, acr={acr})")
    if acr > pcr:
        raise ValueError(f"acr {acr} exceeds pcr {pcr}")
    return RMCell(vc_id=vc_id, kind=CellKind.FORWARD_RM, er=pcr, ci=False,
                  ni=False, ccr=acr, seq=seq)
