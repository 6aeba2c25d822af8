"""
Acceptance suite. Every criterion records a one-line PASS/FAIL verdict that
is printed in the ``acceptance`` section of the pytest summary.

The end-to-end runs (criteria 5, 6 and 7) are marked ``slow``; deselect them
with ``-m "not slow"``. Criterion 6 needs IHDP replication files in the
directory named by ``CGCNET_IHDP_DIR`` (``ihdp_npci_1.csv`` ...).
"""

import csv
import itertools
import os
import time
from pathlib import Path

import numpy as np
import pytest

from cgcnet import bench, discovery, experiment, graph, metrics, models, nn
from cgcnet.graph import VariableGrouping

from conftest import brute_groups, random_dag, record


def finish(criterion, passed, detail, started, limit_s):
    elapsed = time.perf_counter() - started
    ok = record(criterion, passed and elapsed < limit_s, f"{detail}; {elapsed:.0f}s (limit {limit_s:.0f}s)")
    assert ok, detail


# 1. gradient correctness ---------------------------------------------------------------

def _stack_loss(stack, x, target):
    out, _ = nn.forward(stack, x)
    return 0.5 * float(np.sum((out - target) ** 2))


def test_c1_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    seen = set()
    h = 1e-6
    for _ in range(100):
        depth = int(rng.integers(1, 4))
        sizes = [int(v) for v in rng.integers(1, 17, size=depth + 1)]
        acts = list(rng.choice(nn.ACTIVATIONS, size=depth))
        seen.update(acts)
        stack = nn.init_stack(sizes, acts, rng)
        for l in stack:
            l.bias[:] = rng.normal(scale=0.1, size=l.bias.shape)
        x = rng.normal(size=(5, sizes[0]))
        target = rng.normal(size=(5, sizes[-1]))
        out, cache = nn.forward(stack, x)
        grads, _ = nn.backward(stack, cache, out - target)
        analytic, numeric = [], []
        for layer, pair in zip(stack, grads):
            for p, g in zip(layer.params(), pair):
                for idx in np.ndindex(p.shape):
                    old = p[idx]
                    p[idx] = old + h
                    up = _stack_loss(stack, x, target)
                    p[idx] = old - h
                    down = _stack_loss(stack, x, target)
                    p[idx] = old
                    analytic.append(g[idx])
                    numeric.append((up - down) / (2 * h))
        a, f = np.array(analytic), np.array(numeric)
        # norm-wise relative error per net
        rel = np.linalg.norm(a - f) / max(np.linalg.norm(a), np.linalg.norm(f), 1e-12)
        worst = max(worst, rel)
    assert seen == set(nn.ACTIVATIONS)
    finish(1, worst <= 1e-5, f"max relative gradient error {worst:.2e} (tol 1e-5)", start, 60)


# 2. interaction-freeness -------------------------------------------------------------------

def _mixed(net, x, i, j, delta=0.1):
    ei, ej = np.zeros_like(x), np.zeros_like(x)
    ei[:, i] = delta
    ej[:, j] = delta
    z = lambda v: models.representation(net, v)
    z0 = z(x)
    return z(x + ei + ej) - z(x + ei) - z(x + ej) + z0, z0


def _random_grouping(rng, cols):
    while True:
        k = int(rng.integers(2, 5))
        groups = []
        for _ in range(k):
            size = int(rng.integers(1, max(2, len(cols) // 2) + 1))
            groups.append(tuple(sorted(rng.choice(cols, size=size, replace=False), key=cols.index)))
        covered = set().union(*groups)
        left = tuple(c for c in cols if c not in covered)
        if left:
            groups.append(left)
        if len(set(groups)) == len(groups):
            grouping = VariableGrouping(tuple(groups))
            cross = [p for p in itertools.combinations(cols, 2) if frozenset(p) not in grouping.interaction_pairs()]
            if cross:
                return grouping, cross


def test_c2_interaction_freeness():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    hits = total = 0
    for net_i in range(20):
        d = int(rng.integers(5, 11))
        cols = [f"x{i + 1}" for i in range(d)]
        grouping, cross = _random_grouping(rng, cols)
        # default widths and depths, as trained everywhere else
        cgc = models.build_model(models.ModelSpec(mode="cgc", grouping=grouping, seed=net_i), cols)
        unc = models.build_model(models.ModelSpec(seed=net_i), cols)
        for _ in range(50):
            a, b = cross[int(rng.integers(len(cross)))]
            i, j = cols.index(a), cols.index(b)
            x = rng.normal(size=(1, d))
            mixed, z = _mixed(cgc, x, i, j)
            worst = max(worst, float(np.max(np.abs(mixed) / (1 + np.abs(z)))))
            mixed_u, _ = _mixed(unc, x, i, j)
            hits += float(np.max(np.abs(mixed_u))) > 1e-4
            total += 1
    frac = hits / total
    ok = worst <= 1e-8 and frac >= 0.9
    finish(2, ok, f"cgc max |mixed|/(1+|z|) {worst:.1e} (tol 1e-8); unconstrained > 1e-4 in {frac:.0%} (need 90%)",
           start, 60)


# 3. group-construction oracle -------------------------------------------------------------

def test_c3_group_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    mismatches = degenerate = 0
    for _ in range(500):
        g = random_dag(rng, max_nodes=8)
        expected = brute_groups(g)
        try:
            got = graph.build_groups(g).groups
        except graph.DegenerateGroupingError:
            got = None
        degenerate += expected is None
        mismatches += got != expected
    finish(3, mismatches == 0, f"{mismatches}/500 mismatches ({degenerate} degenerate DAGs)", start, 60)


# 4. LiNGAM recovery --------------------------------------------------------------------------

def _uniform(rng, n):
    return rng.uniform(-np.sqrt(3), np.sqrt(3), size=n)


def _f1(true_edges, found_edges):
    tp = len(true_edges & found_edges)
    if tp == 0:
        return 0.0
    prec, rec = tp / len(found_edges), tp / len(true_edges)
    return 2 * prec * rec / (prec + rec)


def _sem(rng, order, edges, coef, n):
    data = {}
    for v in order:
        data[v] = _uniform(rng, n) + sum(coef[(a, b)] * data[a] for a, b in edges if b == v)
    return np.column_stack([data[v] for v in order])


def test_c4_lingam_recovery():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    names = ("a", "b", "c")
    exact = 0
    for s in range(20):
        edges = {("a", "b"), ("b", "c")}
        coef = {e: float(rng.uniform(1, 2) * rng.choice([-1, 1])) for e in edges}
        data = _sem(rng, names, edges, coef, 5000)
        g = discovery.ica_lingam(data, names, "a", "c", seed=s)
        exact += isinstance(g, graph.CausalGraph) and g.edges == edges

    f1s = []
    nodes = ("v1", "v2", "v3", "v4", "v5")
    for s in range(20):
        while True:
            edges = {(nodes[i], nodes[j]) for i in range(5) for j in range(i + 1, 5) if rng.uniform() < 0.4}
            if edges:
                break
        coef = {e: float(rng.uniform(1, 2) * rng.choice([-1, 1])) for e in edges}
        perm = [nodes[i] for i in rng.permutation(5)]
        data = _sem(rng, nodes, edges, coef, 5000)[:, [nodes.index(v) for v in perm]]
        g = discovery.ica_lingam(data, perm, "v1", "v5", seed=s)
        f1s.append(_f1(edges, g.edges) if isinstance(g, graph.CausalGraph) else 0.0)
    f1 = float(np.mean(f1s))
    finish(4, exact >= 18 and f1 >= 0.8, f"chains exact {exact}/20 (need 18); 5-node mean F1 {f1:.3f} (need 0.8)",
           start, 300)


# 5 and 7. synthetic paired comparison -------------------------------------------------------

def _synthetic_config(tmp, scenario, kind, reps=20):
    raw = {
        "name": f"synth_{scenario}",
        "seed": 2024,
        "replications": reps,
        "data": {"source": "synthetic", "scenario": scenario, "n": 1000, "d": 6, "sigma": 0.5},
        "graph": {"source": "discover", "attempts": 5},
        "models": [{"kind": kind, "mode": "unconstrained"}, {"kind": kind, "mode": "cgc"}],
    }
    return experiment.parse_config(raw, tmp)


def _test_pehe(raw_path, kind):
    with open(raw_path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["split"] == "test" and r["model"] == kind]
    by_mode = {m: [float(r["sqrt_pehe"]) for r in rows if r["mode"] == m] for m in models.MODES}
    return by_mode


@pytest.fixture(scope="module")
def scenario_c_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenario_c")
    start = time.perf_counter()
    raw = experiment.run_experiment(_synthetic_config(out, "C", "dragonnet"), out / "run")
    return out / "run", raw, time.perf_counter() - start


@pytest.mark.slow
def test_c5_scenario_c_dragonnet_ratio(scenario_c_run):
    _, raw, elapsed = scenario_c_run
    pehe = _test_pehe(raw, "dragonnet")
    n = len(pehe["cgc"])
    ratio = np.mean(pehe["cgc"]) / np.mean(pehe["unconstrained"])
    ok = record("5a", ratio <= 0.9 and n == 20 and elapsed < 3600,
                f"(scenario C) Dragonnet+CGC / Dragonnet test sqrt-PEHE ratio {ratio:.3f} over {n} pairs "
                f"(need <= 0.9); cgc {np.mean(pehe['cgc']):.3f}, unconstrained {np.mean(pehe['unconstrained']):.3f}; "
                f"{elapsed:.0f}s")
    assert ok, f"ratio {ratio:.3f} > 0.9"


@pytest.mark.slow
def test_c5_scenario_b_bcauss_ratio(tmp_path):
    start = time.perf_counter()
    raw = experiment.run_experiment(_synthetic_config(tmp_path, "B", "bcauss"), tmp_path / "run")
    elapsed = time.perf_counter() - start
    pehe = _test_pehe(raw, "bcauss")
    n = len(pehe["cgc"])
    ratio = np.mean(pehe["cgc"]) / np.mean(pehe["unconstrained"])
    ok = record("5b", ratio <= 0.95 and n == 20 and elapsed < 3600,
                f"(scenario B) BCAUSS+CGC / BCAUSS test sqrt-PEHE ratio {ratio:.3f} over {n} pairs "
                f"(need <= 0.95); cgc {np.mean(pehe['cgc']):.3f}, unconstrained {np.mean(pehe['unconstrained']):.3f}; "
                f"{elapsed:.0f}s")
    assert ok, f"ratio {ratio:.3f} > 0.95"


@pytest.mark.slow
def test_c7_scenario_c_effect_sanity(scenario_c_run):
    out, _, elapsed = scenario_c_run
    means = []
    for k in range(20):
        path = out / experiment.rep_dir(out, k).name / "pred_dragonnet_cgc_r0_test.csv"
        if path.exists():
            means.append(float(experiment.read_predictions(path).mean()))
    worst = max(abs(m - 1.0) for m in means)
    overall = float(np.mean(means))
    # the shared run trains 40 models; one replication is a small fraction of it
    per_rep = elapsed / 40
    ok = record(7, abs(overall - 1.0) <= 0.25 and per_rep < 600,
                f"Dragonnet+CGC mean predicted ITE {overall:.3f} (true 1, tol 0.25); worst replication "
                f"{worst:.3f} off; about {per_rep:.0f}s per model")
    assert ok


# 6. IHDP ---------------------------------------------------------------------------------------

IHDP_REPS = 50


@pytest.mark.slow
def test_c6_ihdp_bcauss(tmp_path):
    src = os.environ.get("CGCNET_IHDP_DIR")
    files = [Path(src) / f"ihdp_npci_{i}.csv" for i in range(1, IHDP_REPS + 1)] if src else []
    if not files or not all(f.exists() for f in files):
        record(6, False, "IHDP replication files not available; set CGCNET_IHDP_DIR to a directory holding "
                         "ihdp_npci_1.csv .. ihdp_npci_50.csv")
        pytest.fail("IHDP data not available")
    start = time.perf_counter()
    for i, f in enumerate(files, start=1):
        bench.write_csv(bench.load_ihdp_csv(f), tmp_path / f"ihdp_{i}.csv")
    raw = {
        "name": "ihdp",
        "seed": 7,
        "replications": IHDP_REPS,
        "data": {"source": "csv", "path": "ihdp_{rep1}.csv", "ratios": [0.7, 0.2, 0.1],
                 "schema": {"mu0": "mu0", "mu1": "mu1"}},
        "graph": {"source": "discover", "attempts": 5},
        "models": [{"kind": "bcauss", "mode": "unconstrained"}, {"kind": "bcauss", "mode": "cgc"}],
    }
    report = experiment.run_experiment(experiment.parse_config(raw, tmp_path), tmp_path / "run")
    pehe = _test_pehe(report, "bcauss")
    mean_c = float(np.mean(pehe["cgc"]))
    ratio = mean_c / float(np.mean(pehe["unconstrained"]))
    elapsed = time.perf_counter() - start
    ok = 0.5 <= mean_c <= 1.2 and ratio <= 0.95 and elapsed < 4 * 3600
    finish(6, ok, f"BCAUSS+CGC test sqrt-PEHE {mean_c:.3f} (need [0.5, 1.2]); ratio {ratio:.3f} (need <= 0.95)",
           start, 4 * 3600)


# 8. metrics oracle --------------------------------------------------------------------------------

def test_c8_metrics_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 15))
        ite, mu1, mu0, y = rng.normal(size=(4, n))
        # the first two rows guarantee an experimental treated and control row
        t = np.r_[1.0, 0.0, rng.integers(0, 2, n - 2)]
        exp = np.r_[1.0, 1.0, rng.integers(0, 2, n - 2)]
        pehe = (sum((ite[i] - (mu1[i] - mu0[i])) ** 2 for i in range(n)) / n) ** 0.5
        ate = abs(sum(ite) / n - sum(mu1[i] - mu0[i] for i in range(n)) / n)
        tr = [i for i in range(n) if exp[i] and t[i] == 1]
        co = [i for i in range(n) if exp[i] and t[i] == 0]
        att = abs(sum(y[i] for i in tr) / len(tr) - sum(y[i] for i in co) / len(co) - sum(ite[i] for i in tr) / len(tr))
        ds = bench.Dataset(np.zeros((n, 1)), t, y, exp=exp)
        worst = max(
            worst,
            abs(metrics.sqrt_pehe(ite, mu1, mu0) - pehe),
            abs(metrics.ate_error(ite, mu1, mu0) - ate),
            abs(metrics.att_error(ds, ite) - att),
        )
    finish(8, worst <= 1e-12, f"max deviation from brute force {worst:.1e} (tol 1e-12)", start, 60)


# 9. determinism --------------------------------------------------------------------------------------

def test_c9_determinism(tmp_path):
    start = time.perf_counter()
    raw = {
        "name": "det",
        "seed": 99,
        "replications": 2,
        "data": {"source": "synthetic", "scenario": "C", "n": 500, "d": 6, "sigma": 0.5},
        "graph": {"source": "discover"},
        "models": [{"kind": "dragonnet", "mode": "unconstrained"}, {"kind": "dragonnet", "mode": "cgc"}],
        "training": {"trunk_width": 32, "head_width": 16, "max_epochs": 10},
    }
    cfg = experiment.parse_config(raw, tmp_path)
    a = experiment.run_experiment(cfg, tmp_path / "a").read_bytes()
    b = experiment.run_experiment(cfg, tmp_path / "b").read_bytes()
    finish(9, a == b and len(a.splitlines()) == 9, "raw reports byte-identical" if a == b else "raw reports differ",
           start, 600)
