"""Scenario model: topology, VC trees, traffic, parameters, plus the parser.

The file format is line-oriented key/value with repeatable sections:

    scenario   ::= { section }
    section    ::= header { entry }
    header     ::= "[" word { word } "]"
    entry      ::= key "=" value
    comment    ::= "#" ... (to end of line, anywhere)

Section kinds: ``[scenario]`` (run parameters, at most once),
``[node NAME]``, ``[link A B]``, ``[vc NAME]``.  A VC's ``edges`` value is a
space-separated list of directed edges ``parent>child`` that must form a
tree rooted at the VC's source.  See the README for the full key tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .consolidation import DEFAULT_ALPHA, AlgorithmId
from .endpoints import Bursty, Persistent, SourceParams, TrafficModel, VbrBackground

DEFAULT_LINK_RATE_MBPS = 149.76  # 155.52 Mbps minus SONET overhead
PROP_DELAY_S_PER_KM = 5e-6


class ScenarioError(ValueError):
    """Parse or validation failure, pointing at the offending element."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(slots=True)
class NodeSpec:
    name: str
    kind: str  # "source" | "switch" | "destination"


@dataclass(slots=True)
class LinkSpec:
    a: str
    b: str
    rate_mbps: float = DEFAULT_LINK_RATE_MBPS
    length_km: float = 1.0

    @property
    def prop_delay_s(self) -> float:
        return self.length_km * PROP_DELAY_S_PER_KM


@dataclass(slots=True)
class VcSpec:
    vc_id: str
    source: str
    edges: list[tuple[str, str]]
    traffic: TrafficModel
    params: SourceParams | None  # None for VBR background flows
    reference_mbps: float | None = None

    # filled in by Scenario.validate()
    children: dict[str, list[str]] = field(default_factory=dict)
    parent: dict[str, str] = field(default_factory=dict)
    leaves: list[str] = field(default_factory=list)

    @property
    def is_vbr(self) -> bool:
        return isinstance(self.traffic, VbrBackground)


@dataclass(slots=True)
class Scenario:
    name: str = "scenario"
    horizon_s: float = 0.1
    algorithm: AlgorithmId = AlgorithmId.A4
    alpha: float = DEFAULT_ALPHA
    target_utilization: float = 0.9
    interval_cells: int = 100
    interval_s: float = 0.001
    nodes: dict[str, NodeSpec] = field(default_factory=dict)
    links: list[LinkSpec] = field(default_factory=list)
    vcs: list[VcSpec] = field(default_factory=list)

    def link_between(self, a: str, b: str) -> LinkSpec | None:
        for ln in self.links:
            if {ln.a, ln.b} == {a, b}:
                return ln
        return None

    def validate(self) -> None:
        if self.horizon_s < 0:
            raise ScenarioError("horizon_s must be >= 0")
        if not 0.0 < self.target_utilization <= 1.0:
            raise ScenarioError("target_utilization must be in (0,1]")
        if self.interval_cells < 1 or self.interval_s <= 0:
            raise ScenarioError("measurement interval triggers must be positive")
        seen_links: set[frozenset] = set()
        for ln in self.links:
            if ln.rate_mbps <= 0:
                raise ScenarioError(
                    f"link {ln.a}-{ln.b}: rate must be positive")
            if ln.length_km < 0:
                raise ScenarioError(
                    f"link {ln.a}-{ln.b}: length must be >= 0")
            for end in (ln.a, ln.b):
                if end not in self.nodes:
                    raise ScenarioError(f"link {ln.a}-{ln.b}: unknown node {end}")
            key = frozenset((ln.a, ln.b))
            if ln.a == ln.b or key in seen_links:
                raise ScenarioError(f"link {ln.a}-{ln.b}: duplicate or self link")
            seen_links.add(key)
        ids = set()
        for vc in self.vcs:
            self._validate_vc(vc)
            if vc.vc_id in ids:
                raise ScenarioError(f"vc {vc.vc_id}: duplicate id")
            ids.add(vc.vc_id)

    def _validate_vc(self, vc: VcSpec) -> None:
        where = f"vc {vc.vc_id}"
        if vc.source not in self.nodes:
            raise ScenarioError(f"{where}: unknown source node {vc.source}")
        if self.nodes[vc.source].kind != "source":
            raise ScenarioError(f"{where}: {vc.source} is not a source node")
        if not vc.edges:
            raise ScenarioError(f"{where}: no edges")
        vc.children = {}
        vc.parent = {}
        for a, b in vc.edges:
            for end in (a, b):
                if end not in self.nodes:
                    raise ScenarioError(f"{where}: unknown node {end} in edges")
            if self.link_between(a, b) is None:
                raise ScenarioError(f"{where}: no link between {a} and {b}")
            if b in vc.parent:
                raise ScenarioError(
                    f"{where}: not a tree ({b} has two parents)")
            vc.parent[b] = a
            vc.children.setdefault(a, []).append(b)
        if vc.source in vc.parent:
            raise ScenarioError(f"{where}: not a tree (source has a parent)")
        # reachability from the source covers connectivity and cycles
        reached = {vc.source}
        frontier = [vc.source]
        while frontier:
            node = frontier.pop()
            for child in vc.children.get(node, ()):
                if child in reached:
                    raise ScenarioError(f"{where}: not a tree (cycle at {child})")
                reached.add(child)
                frontier.append(child)
        touched = {vc.source} | set(vc.parent)
        if touched - reached:
            bad = sorted(touched - reached)[0]
            raise ScenarioError(f"{where}: not a tree ({bad} unreachable "
                                f"from {vc.source})")
        vc.leaves = sorted(n for n in touched
                           if n != vc.source and not vc.children.get(n))
        for leaf in vc.leaves:
            if self.nodes[leaf].kind != "destination":
                raise ScenarioError(f"{where}: leaf {leaf} is not a destination")
        if len(vc.children.get(vc.source, ())) != 1:
            raise ScenarioError(
                f"{where}: source must have exactly one outgoing edge")
        for node in vc.children:
            if node != vc.source and self.nodes[node].kind != "switch":
                raise ScenarioError(
                    f"{where}: interior node {node} is not a switch")
        if vc.is_vbr:
            for node, kids in vc.children.items():
                if len(kids) > 1:
                    raise ScenarioError(
                        f"{where}: background flows cannot branch (at {node})")


# ---------------------------------------------------------------------------
# parser

_SCENARIO_KEYS = {"name", "horizon_s", "algorithm", "alpha",
                  "target_utilization", "interval_cells", "interval_s"}
_NODE_KEYS = {"kind"}
_LINK_KEYS = {"rate_mbps", "length_km"}
_VC_KEYS = {"source", "edges", "traffic", "pcr_mbps", "icr_mbps", "rif", "rdf",
            "mcr_mbps", "nrm", "tbe", "reference_mbps", "burst_cells",
            "request_latency_s", "think_s", "vbr_rate_mbps", "vbr_on_s",
            "vbr_off_s"}
_NODE_KINDS = {"source", "switch", "destination"}


def _parse_float(raw: str, key: str, line: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ScenarioError(f"{key}: not a number: {raw!r}", line) from None


def _parse_int(raw: str, key: str, line: int) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ScenarioError(f"{key}: not an integer: {raw!r}", line) from None


def _split_sections(text: str):
    sections = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioError("unterminated section header", lineno)
            words = line[1:-1].split()
            if not words:
                raise ScenarioError("empty section header", lineno)
            current = (words, lineno, [])
            sections.append(current)
            continue
        if "=" not in line:
            raise ScenarioError(f"expected key = value, got {line!r}", lineno)
        if current is None:
            raise ScenarioError("entry before any section header", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        current[2].append((key, value, lineno))
    return sections


def _check_keys(entries, allowed, where):
    for key, _value, lineno in entries:
        if key not in allowed:
            raise ScenarioError(f"{where}: unknown key {key!r}", lineno)


def _kv_float(kv, key, default):
    if key not in kv:
        return default
    value, lineno = kv[key]
    return _parse_float(value, key, lineno)


def _kv_int(kv, key, default):
    if key not in kv:
        return default
    value, lineno = kv[key]
    return _parse_int(value, key, lineno)


def _build_traffic(kv: dict[str, tuple[str, int]], vc_id: str,
                   header_line: int) -> TrafficModel:
    kind, line = kv.get("traffic", ("persistent", header_line))
    if kind == "persistent":
        return Persistent()
    if kind == "bursty":
        return Bursty(
            burst_size_cells=_kv_int(kv, "burst_cells", 3000),
            request_latency_s=_kv_float(kv, "request_latency_s", 0.005),
            think_time_s=_kv_float(kv, "think_s", 0.0),
        )
    if kind == "vbr":
        if "vbr_rate_mbps" not in kv:
            raise ScenarioError(f"vc {vc_id}: vbr traffic needs vbr_rate_mbps",
                                header_line)
        return VbrBackground(
            rate_mbps=_kv_float(kv, "vbr_rate_mbps", 0.0),
            on_s=_kv_float(kv, "vbr_on_s", 0.02),
            off_s=_kv_float(kv, "vbr_off_s", 0.02),
        )
    raise ScenarioError(f"vc {vc_id}: unknown traffic model {kind!r}", line)


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    """Parse and validate scenario text; raises ScenarioError with a line."""
    scenario = Scenario(name=name)
    saw_scenario_section = False
    for words, header_line, entries in _split_sections(text):
        kind = words[0]
        if kind == "scenario":
            if len(words) != 1:
                raise ScenarioError("[scenario] takes no arguments", header_line)
            if saw_scenario_section:
                raise ScenarioError("duplicate [scenario] section", header_line)
            saw_scenario_section = True
            _check_keys(entries, _SCENARIO_KEYS, "[scenario]")
            for key, value, lineno in entries:
                if key == "name":
                    scenario.name = value
                elif key == "horizon_s":
                    scenario.horizon_s = _parse_float(value, key, lineno)
                elif key == "algorithm":
                    try:
                        scenario.algorithm = AlgorithmId(value)
                    except ValueError:
                        raise ScenarioError(
                            f"algorithm: expected A1..A7, got {value!r}",
                            lineno) from None
                elif key == "alpha":
                    scenario.alpha = _parse_float(value, key, lineno)
                elif key == "target_utilization":
                    scenario.target_utilization = _parse_float(value, key, lineno)
                elif key == "interval_cells":
                    scenario.interval_cells = _parse_int(value, key, lineno)
                elif key == "interval_s":
                    scenario.interval_s = _parse_float(value, key, lineno)
        elif kind == "node":
            if len(words) != 2:
                raise ScenarioError("[node NAME] takes one argument", header_line)
            node_name = words[1]
            if node_name in scenario.nodes:
                raise ScenarioError(f"duplicate node {node_name}", header_line)
            _check_keys(entries, _NODE_KEYS, f"node {node_name}")
            node_kind = "switch"
            for key, value, lineno in entries:
                if value not in _NODE_KINDS:
                    raise ScenarioError(
                        f"node {node_name}: kind must be one of "
                        f"{sorted(_NODE_KINDS)}", lineno)
                node_kind = value
            scenario.nodes[node_name] = NodeSpec(node_name, node_kind)
        elif kind == "link":
            if len(words) != 3:
                raise ScenarioError("[link A B] takes two arguments", header_line)
            _check_keys(entries, _LINK_KEYS, f"link {words[1]}-{words[2]}")
            link = LinkSpec(a=words[1], b=words[2])
            for key, value, lineno in entries:
                if key == "rate_mbps":
                    link.rate_mbps = _parse_float(value, key, lineno)
                elif key == "length_km":
                    link.length_km = _parse_float(value, key, lineno)
            scenario.links.append(link)
        elif kind == "vc":
            if len(words) != 2:
                raise ScenarioError("[vc NAME] takes one argument", header_line)
            vc_id = words[1]
            _check_keys(entries, _VC_KEYS, f"vc {vc_id}")
            kv = {key: (value, lineno) for key, value, lineno in entries}
            if "source" not in kv:
                raise ScenarioError(f"vc {vc_id}: missing source", header_line)
            if "edges" not in kv:
                raise ScenarioError(f"vc {vc_id}: missing edges", header_line)
            edges = []
            for token in kv["edges"][0].split():
                if ">" not in token:
                    raise ScenarioError(
                        f"vc {vc_id}: edge {token!r} must be parent>child",
                        kv["edges"][1])
                a, b = token.split(">", 1)
                edges.append((a, b))
            traffic = _build_traffic(kv, vc_id, header_line)
            params = None
            if not isinstance(traffic, VbrBackground):
                pcr = _kv_float(kv, "pcr_mbps", DEFAULT_LINK_RATE_MBPS)
                try:
                    params = SourceParams(
                        pcr=pcr,
                        icr=_kv_float(kv, "icr_mbps", pcr),
                        rif=_kv_float(kv, "rif", 1.0),
                        rdf=_kv_float(kv, "rdf", 1.0 / 16.0),
                        mcr=_kv_float(kv, "mcr_mbps", 0.0),
                        nrm=_kv_int(kv, "nrm", 32),
                        tbe=_kv_int(kv, "tbe", 16_777_215),
                    )
                except ValueError as exc:
                    raise ScenarioError(f"vc {vc_id}: {exc}", header_line) from None
            reference = _kv_float(kv, "reference_mbps", None)
            scenario.vcs.append(VcSpec(vc_id=vc_id, source=kv["source"][0],
                                       edges=edges, traffic=traffic,
                                       params=params, reference_mbps=reference))
        else:
            raise ScenarioError(f"unknown section kind {kind!r}", header_line)
    scenario.validate()
    return scenario


def load_scenario(path) -> Scenario:
    from pathlib import Path

    p = Path(path)
    return parse_scenario(p.read_text(), name=p.stem)
