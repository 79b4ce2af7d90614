"""Deterministic synthetic road-network datasets in the TNTP file family.

The bundled profiles mirror the shape of the public Anaheim and Chicago-sketch
benchmarks after flow filtering (413 nodes / 858 edges and 541 nodes / 2150
edges respectively): junctions on a jittered planar grid, road segments mostly
paired with their reverse, traffic volumes from a low-rank log-bilinear field
over junction coordinates, and region-dependent noise so that predictive
difficulty varies across the map. A few zero-flow links and junctions are
included so ingestion filtering has something to do.

Use `python -m conformal_load.synthetic --profile anaheim --out <dir>` to
regenerate the files shipped under data/.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Profile:
    name: str
    n_nodes: int            # junctions kept after filtering
    n_edges: int            # positive-flow segments kept after filtering
    n_ghost_nodes: int      # junctions touched only by zero-flow links
    n_zero_links: int       # zero-flow links between kept junctions
    latent_rank: int = 8
    feature_scale: float = 7.0      # spatial frequency of the latent field
    bilinear_scale: float = 0.7     # spread of log-volume from the latent field
    struct_share: float = 0.3       # weight of the feeder-structure factor
    struct_scale: float = 9.0       # spatial frequency of the feeder factor
    node_effect: float = 0.45       # scale of per-junction log-volume offsets
    log_cap: float = 1.2            # bound on the systematic log-volume range
    noise_lo: float = 0.1           # log-volume noise floor (quiet region)
    noise_hi: float = 0.6           # log-volume noise ceiling (busy region)
    direction_noise: float = 0.35   # share of noise independent per direction
    base_volume: float = 2400.0
    seed: int = 20240301


PROFILES = {
    "anaheim": Profile(name="anaheim", n_nodes=413, n_edges=858,
                       n_ghost_nodes=3, n_zero_links=50, seed=11),
    "chicago": Profile(name="chicago", n_nodes=541, n_edges=2150,
                       n_ghost_nodes=5, n_zero_links=120, seed=23),
}


def _node_positions(n: int, rng: np.random.Generator) -> np.ndarray:
    side = int(np.ceil(np.sqrt(n)))
    cells = [(i, j) for i in range(side) for j in range(side)]
    rng.shuffle(cells)
    pts = np.array(cells[:n], dtype=np.float64)
    pts += rng.uniform(0.25, 0.75, size=pts.shape)
    return pts / side       # unit square


def _road_edges(pos: np.ndarray, n_edges: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Spanning tree plus nearest-neighbour pairs, both directions per road."""
    n = pos.shape[0]
    edges: list[tuple[int, int]] = []
    used: set[tuple[int, int]] = set()

    def add(a: int, b: int) -> bool:
        if a == b or (a, b) in used:
            return False
        used.add((a, b))
        edges.append((a, b))
        return True

    order = rng.permutation(n)
    placed = [int(order[0])]
    for raw in order[1:]:
        i = int(raw)
        dists = np.linalg.norm(pos[placed] - pos[i], axis=1)
        near = [placed[j] for j in np.argsort(dists)[:3]]
        j = int(rng.choice(near))
        add(i, j)
        add(j, i)
        placed.append(i)

    # candidate extra roads: nearest neighbours, closest first
    d2 = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    k = min(10, n - 1)
    cand: list[tuple[float, int, int]] = []
    for i in range(n):
        for j in np.argpartition(d2[i], k)[:k]:
            j = int(j)
            if i < j:
                cand.append((d2[i, j], i, j))
    cand.sort()
    for _, i, j in cand:
        if len(edges) >= n_edges:
            break
        if (i, j) not in used and len(edges) + 2 <= n_edges:
            add(i, j)
            add(j, i)
        elif len(edges) + 1 == n_edges and (i, j) not in used:
            add(i, j)
    if len(edges) != n_edges:
        raise RuntimeError(f"could only place {len(edges)} of {n_edges} edges")
    return edges


def _volumes(pos: np.ndarray, edges: list[tuple[int, int]], prof: Profile,
             rng: np.random.Generator) -> np.ndarray:
    """Log-bilinear volume field with region-dependent multiplicative noise.

    The field is symmetric in the endpoints (volume is a product of per-node
    factors) and the noise is mostly shared between a road and its reverse,
    which is how real traffic volumes behave. Each junction's factor mixes
    its own position with the centroid of its incident roads: traffic on a
    segment is fed by the geometry of the roads around its endpoints. The
    noise scale grows towards the busy (east) side of the map, so predictive
    difficulty varies across the feature space.
    """
    k = prof.latent_rank
    omega = rng.normal(scale=prof.feature_scale, size=(k, 2))
    phase = rng.uniform(0, 2 * np.pi, size=k)
    feats = np.cos(pos @ omega.T + phase)           # (n, k)

    # feeder-structure factor: high-frequency function of the neighbour centroid
    n = pos.shape[0]
    nbr_sum = np.zeros_like(pos)
    nbr_cnt = np.zeros(n)
    for s, t in edges:
        nbr_sum[s] += pos[t]
        nbr_cnt[s] += 1
        nbr_sum[t] += pos[s]
        nbr_cnt[t] += 1
    nbr_mean = nbr_sum / np.maximum(nbr_cnt, 1)[:, None]
    omega_s = rng.normal(scale=prof.struct_scale, size=(k, 2))
    phase_s = rng.uniform(0, 2 * np.pi, size=k)
    struct = np.cos(nbr_mean @ omega_s.T + phase_s)
    mix = prof.struct_share
    factors = np.sqrt(1.0 - mix ** 2) * feats + mix * struct

    u = factors @ rng.normal(scale=1.0, size=(k, k)) / np.sqrt(k)

    src = np.array([e[0] for e in edges])
    tgt = np.array([e[1] for e in edges])
    bilinear = (u[src] * u[tgt]).sum(axis=1)
    bilinear = prof.bilinear_scale * bilinear / max(bilinear.std(), 1e-9)

    # per-junction attractiveness not explained by position: observable only
    # through the volumes themselves (a gravity-model mass term)
    mass = prof.node_effect * rng.normal(size=n)
    bilinear = bilinear + mass[src] + mass[tgt]
    # cap the systematic log-range: road capacity bounds how extreme the
    # deterministic part of a volume can get
    cap = prof.log_cap
    bilinear = cap * np.tanh(bilinear / cap)

    mid = 0.5 * (pos[src] + pos[tgt])
    busy = 1.0 / (1.0 + np.exp(-6.0 * (mid[:, 0] - 0.55)))   # west quiet, east busy
    sigma = prof.noise_lo + (prof.noise_hi - prof.noise_lo) * busy

    pair_key = {}
    pair_draw = np.empty(len(edges))
    for e, (s, t) in enumerate(edges):
        key = (min(s, t), max(s, t))
        if key not in pair_key:
            pair_key[key] = rng.normal()
        pair_draw[e] = pair_key[key]
    mix = prof.direction_noise
    noise = sigma * (np.sqrt(1.0 - mix ** 2) * pair_draw + mix * rng.normal(size=len(edges)))
    return prof.base_volume * np.exp(bilinear + noise)


def generate_dataset(profile: Profile | str, out_dir) -> dict:
    """Write `<name>_{net,flow,node}.tntp` for a profile; returns summary counts."""
    prof = PROFILES[profile] if isinstance(profile, str) else profile
    rng = np.random.default_rng(np.random.SeedSequence([prof.seed, 0x7417]))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    pos = _node_positions(prof.n_nodes, rng)
    edges = _road_edges(pos, prof.n_edges, rng)
    volumes = _volumes(pos, edges, prof, rng)

    # ghost junctions and zero-flow links, dropped by ingestion filtering
    ghost_pos = rng.uniform(0, 1, size=(prof.n_ghost_nodes, 2))
    all_pos = np.vstack([pos, ghost_pos])
    n_all = all_pos.shape[0]
    used = set(edges)
    zero_links: list[tuple[int, int]] = []
    for g in range(prof.n_nodes, n_all):
        j = int(rng.integers(0, prof.n_nodes))
        zero_links += [(g, j), (j, g)]
        used.update({(g, j), (j, g)})
    while len(zero_links) < prof.n_zero_links + 2 * prof.n_ghost_nodes:
        i, j = (int(x) for x in rng.integers(0, prof.n_nodes, size=2))
        if i != j and (i, j) not in used:
            used.add((i, j))
            zero_links.append((i, j))

    all_links = [(s, t, v) for (s, t), v in zip(edges, volumes)]
    all_links += [(s, t, 0.0) for s, t in zero_links]
    rng.shuffle(all_links)

    coords = np.round(all_pos * 40000.0 + 300000.0, 2)      # planar-projection look
    net_lines = [
        f"<NUMBER OF NODES> {n_all}",
        f"<NUMBER OF LINKS> {len(all_links)}",
        "<FIRST THRU NODE> 1",
        "<END OF METADATA>",
        "~ \tinit\tterm\tcapacity\tlength\tfftime\tb\tpower\tspeed\ttoll\ttype\t;",
    ]
    flow_lines = ["From \tTo \tVolume \tCost"]
    for s, t, vol in all_links:
        dist = float(np.linalg.norm(all_pos[s] - all_pos[t]) * 40000.0)
        cap = max(1000.0, np.ceil(vol / 500.0) * 500.0 * 1.5)
        fftime = dist / 8000.0
        net_lines.append(
            f"{s + 1}\t{t + 1}\t{cap:.1f}\t{dist:.2f}\t{fftime:.4f}"
            f"\t0.15\t4\t48.0\t0\t1\t;"
        )
        flow_lines.append(f"{s + 1}\t{t + 1}\t{vol:.4f}\t{fftime:.4f}")
    node_lines = ["node\tx\ty\t;"]
    for i, (x, y) in enumerate(coords, start=1):
        node_lines.append(f"{i}\t{x:.2f}\t{y:.2f}\t;")

    name = prof.name
    (out_dir / f"{name}_net.tntp").write_text("\n".join(net_lines) + "\n", encoding="utf-8")
    (out_dir / f"{name}_flow.tntp").write_text("\n".join(flow_lines) + "\n", encoding="utf-8")
    (out_dir / f"{name}_node.tntp").write_text("\n".join(node_lines) + "\n", encoding="utf-8")
    return {
        "name": name,
        "nodes_declared": n_all,
        "links_declared": len(all_links),
        "positive_flow_links": len(edges),
        "junctions_with_flow": prof.n_nodes,
    }


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description="generate a synthetic TNTP dataset")
    parser.add_argument("--profile", choices=sorted(PROFILES), required=True)
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    summary = generate_dataset(args.profile, args.out)
    print(summary)


if __name__ == "__main__":
    main()
