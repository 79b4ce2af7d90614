"""Parsers for the plain-text transportation-network file family.

A dataset is three files: `<name>_net.tntp` (topology and link attributes),
`<name>_flow.tntp` (observed volume per link), `<name>_node.tntp` (junction
coordinates). Node ids are 1-based in the files and converted to 0-based when
a Graph is assembled.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graphs import Graph


class TntpError(ValueError):
    """Malformed network/flow/node file; the message names the offending line."""


@dataclass
class LinkRecord:
    init_node: int          # 1-based, as in the file
    term_node: int          # 1-based, as in the file
    capacity: float
    length: float
    free_flow_time: float
    b: float
    power: float
    speed: float
    toll: float
    link_type: int


@dataclass
class RawNetwork:
    """Parsed network file: header metadata plus link records in file order."""

    metadata: dict[str, int]
    links: list[LinkRecord]

    @property
    def num_nodes(self) -> int:
        return self.metadata["NUMBER OF NODES"]

    @property
    def num_links(self) -> int:
        return self.metadata["NUMBER OF LINKS"]


@dataclass(frozen=True)
class FlowRecord:
    src: int                # 0-based
    tgt: int                # 0-based
    volume: float
    cost: float


_HEADER_RE = re.compile(r"^<(?P<key>[^<>]+)>\s*(?P<value>\S*)\s*$")


def _fail(line_no: int, msg: str):
    raise TntpError(f"line {line_no}: {msg}")


def parse_net(text: str) -> RawNetwork:
    """Parse a network file: `<KEY> value` headers, `~` comments, link rows.

    A link row has at least 10 whitespace-separated numeric fields and is
    terminated by `;`. The declared link count must match the rows found.
    """
    lines = text.splitlines()
    metadata: dict[str, int] = {}
    links: list[LinkRecord] = []
    in_body = False
    saw_end = False

    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("~"):
            continue
        if not in_body:
            m = _HEADER_RE.match(line)
            if m:
                key = m.group("key").strip()
                if key == "END OF METADATA":
                    in_body = True
                    saw_end = True
                    continue
                value = m.group("value")
                try:
                    metadata[key] = int(float(value)) if value else 0
                except ValueError:
                    _fail(line_no, f"non-numeric header value for <{key}>: {value!r}")
                continue
            if len(line.rstrip(";").split()) >= 10:
                raise TntpError(f"line {line_no}: link row before <END OF METADATA>; "
                                "marker is missing")
            _fail(line_no, f"expected metadata header, got {line!r}")
        else:
            fields = line.rstrip(";").split()
            if len(fields) < 10:
                _fail(line_no, f"link row has {len(fields)} fields, need at least 10")
            try:
                vals = [float(f) for f in fields[:10]]
            except ValueError as exc:
                _fail(line_no, f"non-numeric link field ({exc})")
            links.append(LinkRecord(
                init_node=int(vals[0]), term_node=int(vals[1]),
                capacity=vals[2], length=vals[3], free_flow_time=vals[4],
                b=vals[5], power=vals[6], speed=vals[7], toll=vals[8],
                link_type=int(vals[9]),
            ))

    if not saw_end:
        raise TntpError("missing <END OF METADATA> marker")
    declared = metadata.get("NUMBER OF LINKS")
    if declared is not None and declared != len(links):
        raise TntpError(f"declared {declared} links but parsed {len(links)}")
    return RawNetwork(metadata=metadata, links=links)


def serialize_net(net: RawNetwork) -> str:
    """Network file text that parses back to an identical record list."""
    out = [f"<{key}> {value}" for key, value in net.metadata.items()]
    out.append("<END OF METADATA>")
    out.append("~ init term capacity length fftime b power speed toll type ;")
    for lk in net.links:
        out.append(
            f"{lk.init_node}\t{lk.term_node}\t{lk.capacity:.10g}\t{lk.length:.10g}"
            f"\t{lk.free_flow_time:.10g}\t{lk.b:.10g}\t{lk.power:.10g}"
            f"\t{lk.speed:.10g}\t{lk.toll:.10g}\t{lk.link_type}\t;"
        )
    return "\n".join(out) + "\n"


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def parse_flow(text: str) -> list[FlowRecord]:
    """Parse a flow file: rows of `from to volume cost`, optional header row."""
    records: list[FlowRecord] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip().rstrip(";").strip()
        if not line or line.startswith("~"):
            continue
        fields = line.split()
        if not _is_number(fields[0]):
            if records:
                _fail(line_no, f"unexpected non-numeric row {line!r}")
            continue  # header row
        if len(fields) != 4:
            _fail(line_no, f"flow row has {len(fields)} fields, expected 4")
        try:
            src, tgt = int(float(fields[0])), int(float(fields[1]))
            volume, cost = float(fields[2]), float(fields[3])
        except ValueError as exc:
            _fail(line_no, f"non-numeric flow field ({exc})")
        if volume < 0:
            _fail(line_no, f"negative volume {volume}")
        records.append(FlowRecord(src=src - 1, tgt=tgt - 1, volume=volume, cost=cost))
    return records


def parse_nodes(text: str) -> np.ndarray:
    """Parse a node-coordinate file into an (n, 2) matrix ordered by node id.

    Ids must cover 1..n with no gaps or duplicates.
    """
    coords: dict[int, tuple[float, float]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip().rstrip(";").strip()
        if not line or line.startswith("~"):
            continue
        fields = line.split()
        if not _is_number(fields[0]):
            if coords:
                _fail(line_no, f"unexpected non-numeric row {line!r}")
            continue  # header row
        if len(fields) < 3:
            _fail(line_no, f"node row has {len(fields)} fields, expected 3")
        try:
            node = int(float(fields[0]))
            x, y = float(fields[1]), float(fields[2])
        except ValueError as exc:
            _fail(line_no, f"non-numeric node field ({exc})")
        if node in coords:
            _fail(line_no, f"duplicate node id {node}")
        coords[node] = (x, y)

    if not coords:
        raise TntpError("node file contains no coordinate rows")
    n = max(coords)
    missing = set(range(1, n + 1)) - set(coords)
    if missing:
        raise TntpError(f"missing node ids: {sorted(missing)[:10]}")
    return np.array([coords[i] for i in range(1, n + 1)], dtype=np.float64)


@dataclass(frozen=True)
class AssembleOptions:
    """Filtering applied when turning parsed files into a Graph.

    With filtering on, links with zero or missing flow are dropped, then
    nodes left without any incident edge are removed and the rest re-indexed
    densely. Self-loop links are always discarded.
    """

    drop_zero_flow: bool = True
    zscore_coordinates: bool = True


@dataclass
class AssemblyReport:
    dropped_zero_flow: int = 0
    dropped_self_loops: int = 0
    dropped_isolated_nodes: int = 0
    kept_nodes: int = 0
    kept_edges: int = 0
    duplicates: int = 0
    node_index: dict[int, int] = field(default_factory=dict)


def assemble_graph(net: RawNetwork, flows: list[FlowRecord], coords: np.ndarray,
                   options: AssembleOptions = AssembleOptions(),
                   report: AssemblyReport | None = None) -> Graph:
    """Join network links with flow volumes and coordinates into a Graph."""
    n_raw = net.num_nodes
    if coords.shape[0] != n_raw:
        raise TntpError(f"node file has {coords.shape[0]} rows, network declares {n_raw}")

    link_pairs = {(lk.init_node - 1, lk.term_node - 1) for lk in net.links}
    flow_by_edge: dict[tuple[int, int], float] = {}
    for rec in flows:
        key = (rec.src, rec.tgt)
        if key not in link_pairs:
            raise TntpError(f"flow references unknown link {rec.src + 1}->{rec.tgt + 1}")
        flow_by_edge[key] = rec.volume

    rep = report if report is not None else AssemblyReport()
    edges: list[tuple[int, int]] = []
    weights: list[float] = []
    seen: set[tuple[int, int]] = set()
    for lk in net.links:
        s, t = lk.init_node - 1, lk.term_node - 1
        if not (0 <= s < n_raw and 0 <= t < n_raw):
            raise TntpError(f"link {lk.init_node}->{lk.term_node} outside declared node range")
        if s == t:
            rep.dropped_self_loops += 1
            continue
        if (s, t) in seen:
            rep.duplicates += 1
            continue
        seen.add((s, t))
        vol = flow_by_edge.get((s, t))
        if vol is None or vol <= 0.0:
            if options.drop_zero_flow:
                rep.dropped_zero_flow += 1
                continue
            if vol is None:
                raise TntpError(f"link {lk.init_node}->{lk.term_node} has no flow record")
            vol = 0.0
        edges.append((s, t))
        weights.append(vol)

    if options.drop_zero_flow:
        used = sorted({n for e in edges for n in e})
        index = {old: new for new, old in enumerate(used)}
        rep.dropped_isolated_nodes = n_raw - len(used)
        edges = [(index[s], index[t]) for s, t in edges]
        coords = coords[used]
        rep.node_index = index
        n_nodes = len(used)
    else:
        rep.node_index = {i: i for i in range(n_raw)}
        n_nodes = n_raw

    feats = coords.astype(np.float64)
    if options.zscore_coordinates:
        mean = feats.mean(axis=0)
        std = feats.std(axis=0)
        std[std == 0] = 1.0
        feats = (feats - mean) / std

    rep.kept_nodes = n_nodes
    rep.kept_edges = len(edges)
    return Graph(num_nodes=n_nodes, edges=tuple(edges),
                 weights=np.array(weights), node_features=feats)


def load_dataset(dataset_dir) -> tuple[str, Graph, AssemblyReport]:
    """Load `<name>_{net,flow,node}.tntp` from a directory and assemble a Graph."""
    dataset_dir = Path(dataset_dir)
    nets = sorted(dataset_dir.glob("*_net.tntp"))
    if not nets:
        raise FileNotFoundError(f"no *_net.tntp file in {dataset_dir}")
    net_path = nets[0]
    name = net_path.name[: -len("_net.tntp")]
    flow_path = dataset_dir / f"{name}_flow.tntp"
    node_path = dataset_dir / f"{name}_node.tntp"
    for p in (flow_path, node_path):
        if not p.exists():
            raise FileNotFoundError(f"missing companion file {p}")

    net = parse_net(net_path.read_text(encoding="utf-8"))
    flows = parse_flow(flow_path.read_text(encoding="utf-8"))
    coords = parse_nodes(node_path.read_text(encoding="utf-8"))
    report = AssemblyReport()
    graph = assemble_graph(net, flows, coords, report=report)
    return name, graph, report
