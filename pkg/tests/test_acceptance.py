"""Acceptance suite: one test per release criterion, each printing a verdict line.

Criteria that need the full run/resplit protocol share cached sweeps over the
bundled datasets. The bundled files are synthetic stand-ins statistically
shaped like the public Anaheim / Chicago-sketch benchmarks; to run the
real-data checks, download the public files and point CONFORMAL_LOAD_REAL_DATA
at a directory containing `anaheim/` and `chicago/` subdirectories.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from conformal_load import conformal as cf
from conformal_load.experiment import ExperimentConfig, run_experiment
from conformal_load.graphs import Graph, line_graph
from conformal_load.tntp import load_dataset, parse_flow, parse_net, parse_nodes, serialize_net

DATA = Path(__file__).resolve().parents[1] / "data"
ANAHEIM = DATA / "anaheim-synthetic"
CHICAGO = DATA / "chicago-synthetic"

SWEEP = dict(n_runs=10, n_resplits=100, alpha=0.05, layer="graphconv",
             fill_mode="mean", lr=0.003, max_epochs=4000, patience=300,
             mc_samples=1000, calib_ratio=0.5, seed=0,
             save_checkpoints=False, save_plot_data=False)

_CACHE: dict = {}


def verdict(num: int, ok: bool, desc: str) -> None:
    print(f"\nACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {desc}")
    assert ok, f"criterion {num} failed: {desc}"


def sweep(dataset_dir: Path, model: str, tmp_root, methods=("cp", "cqr", "cp-erc", "cqr-erc", "qr"),
          wsc=False, fill="mean"):
    key = (str(dataset_dir), model, methods, wsc, fill)
    if key not in _CACHE:
        out = tmp_root / f"sweep_{dataset_dir.name}_{model}_{fill}_{int(wsc)}"
        cfg = ExperimentConfig(dataset_dir=str(dataset_dir), out_dir=str(out),
                               methods=methods, model=model, compute_wsc=wsc,
                               wsc_vectors=1000, **{k: v for k, v in SWEEP.items()
                                                    if k != "fill_mode"},
                               fill_mode=fill)
        _CACHE[key] = run_experiment(cfg)
    return _CACHE[key]


@pytest.fixture(scope="session")
def sweep_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def test_criterion_1_exchangeability_suite():
    """Mean coverage of each method near k/(n+1) on i.i.d. synthetic data."""
    t0 = time.time()
    rng = np.random.default_rng(202401)
    n_cal = n_test = 100
    trials = 10_000
    alpha = 0.05
    k = int(np.ceil((n_cal + 1) * (1 - alpha)))
    target = k / (n_cal + 1)
    total = {m: 0.0 for m in ("cp", "cqr", "cp-erc", "cqr-erc")}

    for _ in range(trials):
        mu = rng.normal(size=n_cal + n_test)
        sigma = 0.3 + np.abs(rng.normal(size=n_cal + n_test))
        truth = mu + sigma * rng.normal(size=n_cal + n_test)
        band = sigma * np.abs(1.0 + 0.2 * rng.normal(size=n_cal + n_test))
        s_mc = 0.5 * sigma + 0.05
        c, t = slice(0, n_cal), slice(n_cal, None)

        cal = cf.conformal_quantile(cf.cp_scores(mu[c], truth[c]), alpha)
        covered = np.abs(mu[t] - truth[t]) <= cal.d
        total["cp"] += covered.mean()

        cal = cf.conformal_quantile(cf.cqr_scores(mu[c] - band[c], mu[c] + band[c], truth[c]), alpha)
        covered = np.maximum((mu[t] - band[t]) - truth[t],
                             truth[t] - (mu[t] + band[t])) <= cal.d
        total["cqr"] += covered.mean()

        cal = cf.conformal_quantile(cf.cp_erc_scores(mu[c], truth[c], s_mc[c], 0.1), alpha)
        covered = np.abs(mu[t] - truth[t]) / (s_mc[t] + 0.1) <= cal.d
        total["cp-erc"] += covered.mean()

        cal = cf.conformal_quantile(cf.cqr_erc_scores(mu[c] - band[c], mu[c] + band[c], truth[c]), alpha)
        denom = cf.band_denominator(mu[t] - band[t], mu[t] + band[t])
        covered = np.maximum(((mu[t] - band[t]) - truth[t]) / denom,
                             (truth[t] - (mu[t] + band[t])) / denom) <= cal.d
        total["cqr-erc"] += covered.mean()

    means = {m: v / trials for m, v in total.items()}
    elapsed = time.time() - t0
    ok = all(target - 0.01 <= v <= target + 0.02 for v in means.values()) and elapsed < 120
    verdict(1, ok, f"mean coverage per method {dict((m, round(v, 4)) for m, v in means.items())} "
                   f"target {target:.4f} (+0.02/-0.01), elapsed {elapsed:.0f}s")


def test_criterion_2_marginal_validity_anaheim(sweep_root):
    """Every calibrated method's mean coverage on the Anaheim-shaped data in [0.94, 0.97]."""
    covs = {}
    for model in ("gae", "lgnn"):
        res = sweep(ANAHEIM, model, sweep_root)
        for method in ("cp", "cqr", "cp-erc", "cqr-erc"):
            covs[f"{method}-{model}"] = res.table.lookup(method).coverage_mean
    ok = all(0.94 <= v <= 0.97 for v in covs.values())
    verdict(2, ok, f"coverages {dict((k, round(v, 4)) for k, v in covs.items())}")


def test_criterion_3_qr_baseline_undercoverage(sweep_root):
    """Raw quantile bands undercover relative to calibrated intervals."""
    rows = {}
    for d, name in ((ANAHEIM, "anaheim"), (CHICAGO, "chicago")):
        res = sweep(d, "gae", sweep_root, wsc=(name == "chicago"))
        rows[name] = {m: res.table.lookup(m) for m in ("cp", "qr")}
    below = all(rows[n]["qr"].coverage_mean < rows[n]["cp"].coverage_mean
                for n in rows)
    under95 = any(rows[n]["qr"].coverage_mean < 0.95 for n in rows)
    ok = below and under95
    verdict(3, ok, "QR vs CP coverage " + str({
        n: (round(rows[n]["qr"].coverage_mean, 4), round(rows[n]["cp"].coverage_mean, 4))
        for n in rows}))


def test_criterion_4_efficiency_ordering(sweep_root):
    """Quantile calibration narrows intervals; the autoencoder beats the line graph."""
    ineff = {}
    for d, name in ((ANAHEIM, "anaheim"), (CHICAGO, "chicago")):
        for model in ("gae", "lgnn"):
            res = sweep(d, model, sweep_root, wsc=(name == "chicago" and model == "gae"))
            for method in ("cp", "cqr"):
                ineff[(name, model, method)] = res.table.lookup(method).inefficiency_mean
    cqr_better = all(ineff[(n, m, "cqr")] < ineff[(n, m, "cp")]
                     for n in ("anaheim", "chicago") for m in ("gae", "lgnn"))
    gae_better = all(ineff[(n, "lgnn", "cp")] > ineff[(n, "gae", "cp")]
                     for n in ("anaheim", "chicago"))
    ok = cqr_better and gae_better
    detail = {f"{n[:3]}-{m}-{me}": round(v, 3) for (n, m, me), v in ineff.items()}
    verdict(4, ok, f"inefficiencies {detail}")


def test_criterion_5_fill_ablation(sweep_root):
    """Mean fill beats zero fill for the directed model on the Chicago-shaped data."""
    rows = {}
    for fill in ("zero", "mean"):
        res = sweep(CHICAGO, "digae", sweep_root, methods=("cp",), fill=fill)
        rows[fill] = res.table.lookup("cp")
    matched = all(0.94 <= rows[f].coverage_mean <= 0.97 for f in rows)
    ok = rows["mean"].inefficiency_mean < rows["zero"].inefficiency_mean and matched
    verdict(5, ok, f"ineff mean-fill {rows['mean'].inefficiency_mean:.4f} "
                   f"< zero-fill {rows['zero'].inefficiency_mean:.4f}; "
                   f"coverages {[round(rows[f].coverage_mean, 4) for f in rows]}")


def test_criterion_6_conditional_coverage(sweep_root):
    """Quantile calibration improves worst-slice coverage; WSC never exceeds
    the marginal coverage of its own evaluation subset."""
    res = sweep(CHICAGO, "gae", sweep_root, wsc=True)
    wsc_cp = res.table.lookup("cp").wsc_mean
    wsc_cqr = res.table.lookup("cqr").wsc_mean
    bounded = all(r.wsc <= r.wsc_eval_marginal + 1e-12
                  for r in res.rows if r.wsc is not None)
    ok = (wsc_cqr > wsc_cp) and bounded
    verdict(6, ok, f"WSC cqr {wsc_cqr:.4f} > cp {wsc_cp:.4f}; per-report bound holds: {bounded}")


def test_criterion_7_gradient_suite():
    """Finite-difference agreement for every differentiable op, 100 instances."""
    from conformal_load import autodiff as ad
    from conformal_load.autodiff import Param

    t0 = time.time()
    rng = np.random.default_rng(7)
    failures = 0
    checked = 0

    def check(loss_fn, param, rtol=1e-4):
        nonlocal failures, checked
        checked += 1
        param.zero_grad()
        loss_fn().backward()
        ana = param.grad.copy()
        num = np.zeros_like(ana)
        arr = param.tensor.data
        h = 1e-5
        for idx in np.ndindex(*arr.shape):
            orig = arr[idx]
            arr[idx] = orig + h
            up = loss_fn().item()
            arr[idx] = orig - h
            dn = loss_fn().item()
            arr[idx] = orig
            num[idx] = (up - dn) / (2 * h)
        if np.max(np.abs(num - ana) / np.maximum(np.abs(num), 1.0)) >= rtol:
            failures += 1

    for i in range(20):
        a = Param("a", rng.normal(size=(3, 4)))
        b = Param("b", np.abs(rng.normal(size=(3, 4))) + 0.5)
        w = Param("w", rng.normal(size=(4, 2)))
        prop = rng.random((3, 3)) * (rng.random((3, 3)) < 0.5)
        idx = rng.integers(0, 3, size=5)
        kink_safe = Param("k", np.where(np.abs(rng.normal(size=(3, 4))) < 0.2, 0.5,
                                        rng.normal(size=(3, 4))))
        check(lambda: ad.tsum(ad.mul(a.tensor, b.tensor)), a)
        check(lambda: ad.tmean(ad.sub(a.tensor, b.tensor)), b)
        check(lambda: ad.tsum(a.tensor @ w.tensor), w)
        check(lambda: ad.tsum(ad.sigmoid(a.tensor)), a)
        check(lambda: ad.tsum(ad.sqrt(b.tensor)), b)
        check(lambda: ad.tsum(ad.relu(kink_safe.tensor)), kink_safe)
        check(lambda: ad.tsum(ad.propagate(prop, a.tensor @ w.tensor)), w)
        check(lambda: ad.tsum(ad.gather_rows(a.tensor, idx)), a)
        if i < 10:
            check(lambda: ad.tsum(ad.maximum(a.tensor, ad.transpose(b.tensor).T)), a)
            check(lambda: ad.sqrt(ad.tsum(ad.mul(a.tensor @ w.tensor, a.tensor @ w.tensor)) + 1.0), a)

    elapsed = time.time() - t0
    ok = failures == 0 and checked >= 100 and elapsed < 60
    verdict(7, ok, f"{checked} gradient checks, {failures} failures, {elapsed:.0f}s")


def test_criterion_8_line_graph_oracle():
    """500 random digraphs match the all-pairs brute-force construction."""
    rng = np.random.default_rng(99)
    bad = 0
    for _ in range(500):
        n = int(rng.integers(2, 9))
        pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
        k = int(rng.integers(1, len(pairs) + 1))
        chosen = [pairs[i] for i in rng.choice(len(pairs), size=k, replace=False)]
        g = Graph(n, tuple(chosen), np.ones(k), rng.normal(size=(n, 2)))
        lg, origin = line_graph(g)
        expected = {(a, b) for a, e1 in enumerate(g.edges)
                    for b, e2 in enumerate(g.edges) if e1[1] == e2[0]}
        if set(lg.edges) != expected or origin != g.edges or lg.num_nodes != k:
            bad += 1
    verdict(8, bad == 0, f"500 digraphs checked, {bad} mismatches")


def test_criterion_9_parser_suite():
    """Golden files round-trip; dataset files are self-consistent and the
    assembled graphs match the reference shapes within 5%."""
    golden = ("<NUMBER OF NODES> 3\n<NUMBER OF LINKS> 2\n<FIRST THRU NODE> 1\n"
              "<END OF METADATA>\n~ comment\n"
              "1 2 900 1.5 0.02 0.15 4 30 0 1 ;\n"
              "2 3 750 2.5 0.03 0.15 4 30 0 1 ;\n")
    net = parse_net(golden)
    round_trip = parse_net(serialize_net(net)).links == net.links

    shapes_ok = True
    details = []
    targets = {"anaheim": (413, 858), "chicago": (541, 2150)}
    dirs = {"anaheim": ANAHEIM, "chicago": CHICAGO}
    real_root = os.environ.get("CONFORMAL_LOAD_REAL_DATA")
    if real_root:
        for name in targets:
            cand = Path(real_root) / name
            if cand.exists():
                dirs[name] = cand
    for name, (ref_nodes, ref_edges) in targets.items():
        d = dirs[name]
        stem = sorted(d.glob("*_net.tntp"))[0].name[:-len("_net.tntp")]
        net = parse_net((d / f"{stem}_net.tntp").read_text())
        flows = parse_flow((d / f"{stem}_flow.tntp").read_text())
        coords = parse_nodes((d / f"{stem}_node.tntp").read_text())
        headers_ok = (len(net.links) == net.num_links
                      and len(flows) == net.num_links
                      and coords.shape[0] == net.num_nodes)
        _, g, _ = load_dataset(d)
        near = (abs(g.num_nodes - ref_nodes) / ref_nodes <= 0.05
                and abs(g.num_edges - ref_edges) / ref_edges <= 0.05)
        shapes_ok = shapes_ok and headers_ok and near
        details.append(f"{name}({d.name}): {g.num_nodes}/{g.num_edges} vs {ref_nodes}/{ref_edges}")
    ok = round_trip and shapes_ok
    verdict(9, ok, f"round-trip {round_trip}; " + "; ".join(details)
            + ("" if real_root else " [real files absent: bundled stand-ins used]"))


def test_criterion_10_membership_equivalence():
    """Truth in interval <=> score <= threshold; zero violations off the floor."""
    rng = np.random.default_rng(1010)
    violations = {m: 0 for m in ("cp", "cqr", "cp-erc", "cqr-erc")}
    n_instances = {m: 0 for m in violations}
    for _ in range(200):
        n_cal, n_test = 60, 50
        mu_c, mu_t = rng.normal(size=n_cal), rng.normal(size=n_test)
        w_c, w_t = rng.normal(size=n_cal), rng.normal(size=n_test)
        s_c, s_t = np.abs(rng.normal(size=n_cal)), np.abs(rng.normal(size=n_test))
        band_c = rng.uniform(0.05, 2.0, size=n_cal)
        band_t = rng.uniform(0.05, 2.0, size=n_test)   # floor 1e-3 never active
        eps = 0.2

        cal = cf.conformal_quantile(cf.cp_scores(mu_c, w_c), 0.1)
        for iv, w, s in zip(cf.cp_intervals(mu_t, cal), w_t,
                            cf.cp_scores(mu_t, w_t).scores):
            n_instances["cp"] += 1
            violations["cp"] += iv.contains(w) != (s <= cal.d)

        cal = cf.conformal_quantile(cf.cqr_scores(mu_c - band_c, mu_c + band_c, w_c), 0.1)
        scores_t = cf.cqr_scores(mu_t - band_t, mu_t + band_t, w_t).scores
        for iv, w, s in zip(cf.cqr_intervals(mu_t - band_t, mu_t + band_t, cal),
                            w_t, scores_t):
            n_instances["cqr"] += 1
            violations["cqr"] += iv.contains(w) != (s <= cal.d)

        cal = cf.conformal_quantile(cf.cp_erc_scores(mu_c, w_c, s_c, eps), 0.1)
        scores_t = cf.cp_erc_scores(mu_t, w_t, s_t, eps).scores
        for iv, w, s in zip(cf.cp_erc_intervals(mu_t, s_t, eps, cal), w_t, scores_t):
            n_instances["cp-erc"] += 1
            violations["cp-erc"] += iv.contains(w) != (s <= cal.d)

        cal = cf.conformal_quantile(cf.cqr_erc_scores(mu_c - band_c, mu_c + band_c, w_c), 0.1)
        scores_t = cf.cqr_erc_scores(mu_t - band_t, mu_t + band_t, w_t).scores
        for iv, w, s in zip(cf.cqr_erc_intervals(mu_t - band_t, mu_t + band_t, cal),
                            w_t, scores_t):
            n_instances["cqr-erc"] += 1
            violations["cqr-erc"] += iv.contains(w) != (s <= cal.d)

    ok = all(v == 0 for v in violations.values()) and all(
        n >= 10_000 for n in n_instances.values())
    verdict(10, ok, f"instances {n_instances}, violations {violations}")
