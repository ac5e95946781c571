"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines and measured values.
"""

import itertools
import time

import numpy as np
import pytest

from mcpool import (
    CutModelConfig,
    GeneratorSpec,
    Tape,
    bipartition_oracle,
    brute_force_maxcut,
    constant,
    cut_loss,
    cut_metrics,
    generate,
    generate_multipartite_dataset,
    gw_partition,
    levs_partition,
    train_cut_model,
)
from mcpool.cli import main
from mcpool.gradcheck import composite_gradchecks, primitive_gradchecks
from mcpool.pipelines import TaskConfig, train_graph_classifier
from mcpool.pool import MaxCutPoolLayer, assign_supernodes
from tests.test_datasets import is_complete_multipartite
from tests.test_pool import multi_source_bfs_distances


def report(num: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {num:2d}] {status}  {name}  {detail}")
    assert ok, f"criterion {num} failed: {name} {detail}"


class TestAcceptance:
    def test_01_bipartite_optimality(self):
        seeds = range(5)
        config = CutModelConfig()  # stated defaults: 2000 epochs, lr 8e-4
        details = []
        ok = True
        for spec in (GeneratorSpec.ring(32), GeneratorSpec.grid2d(8, 8)):
            g = generate(spec)
            oracle = cut_metrics(g, bipartition_oracle(g))
            assert oracle.cut_fraction == 1.0
            fractions = []
            for seed in seeds:
                result, history = train_cut_model(g, config, seed)
                fractions.append(result.cut_fraction)
                if history["wall_time_s"] >= 120.0:
                    ok = False
                    details.append(f"{spec.label} seed {seed} overran budget")
            med = float(np.median(fractions))
            details.append(f"{spec.label} median={med:.4f}")
            ok = ok and med >= 0.98
        report(1, "bipartite optimality (trained cut model)", ok,
               "; ".join(details))

    def test_02_oracle_dominance_and_gw_guarantee(self):
        small_config = CutModelConfig(gin_width=8, hetmp_sizes=(8, 8),
                                      mlp_sizes=(8,), epochs=60, lr=5e-3)
        dominance_ok = True
        gw_hits = 0
        for seed in range(20):
            g = generate(GeneratorSpec.erdos_renyi(14, 0.4), seed=seed)
            opt = brute_force_maxcut(g).cut_value
            neural, _ = train_cut_model(g, small_config, seed)
            levs = levs_partition(g, seed=seed)
            gw = gw_partition(g, rounding_trials=64, seed=seed)
            for res in (neural, levs, gw):
                if res.cut_value > opt + 1e-9:
                    dominance_ok = False
            gw_hits += gw.cut_value >= 0.868 * opt
        report(2, "oracle dominance and 0.868 guarantee",
               dominance_ok and gw_hits >= 18,
               f"gw hits {gw_hits}/20")

    def test_03_loss_identity_and_bounds(self):
        rng = np.random.default_rng(0)
        graphs = [generate(GeneratorSpec.ring(9)),
                  generate(GeneratorSpec.grid2d(4, 5)),
                  generate(GeneratorSpec.complete(7)),
                  generate(GeneratorSpec.complete_bipartite(4, 6)),
                  generate(GeneratorSpec.erdos_renyi(15, 0.3), seed=1)]

        def soft_loss(g, s):
            tape = Tape()
            return cut_loss(tape, constant(s.astype(float)), g).item()

        worst_identity = 0.0
        for i in range(1000):
            g = graphs[i % len(graphs)]
            z = rng.choice([-1, 1], g.n)
            gap = abs(soft_loss(g, z) -
                      (1.0 - 2.0 * cut_metrics(g, z).cut_fraction))
            worst_identity = max(worst_identity, gap)
        bounds_ok = True
        for i in range(1000):
            g = graphs[i % len(graphs)]
            s = rng.uniform(-1, 1, g.n)
            value = soft_loss(g, s)
            bounds_ok = bounds_ok and -1.0 <= value <= 1.0
        report(3, "loss identity (1e-12) and [-1, 1] bounds",
               worst_identity <= 1e-12 and bounds_ok,
               f"worst identity gap {worst_identity:.2e}")

    def test_04_gradient_correctness(self):
        worst_prim = 0.0
        worst_comp = 0.0
        for seed in range(5):
            for err in primitive_gradchecks(seed=seed, eps=1e-5).values():
                worst_prim = max(worst_prim, err)
            for err in composite_gradchecks(seed=seed, eps=1e-5).values():
                worst_comp = max(worst_comp, err)
        report(4, "gradient correctness (primitives 1e-5, composed 1e-4)",
               worst_prim <= 1e-5 and worst_comp <= 1e-4,
               f"primitives {worst_prim:.2e}, composed {worst_comp:.2e}")

    def test_05_assignment_matches_bfs_oracle(self):
        rng = np.random.default_rng(7)
        ok = True
        max_iter = 3
        for trial in range(100):
            n = int(rng.integers(4, 61))
            g = generate(GeneratorSpec.erdos_renyi(n, 0.08), seed=trial)
            k = int(rng.integers(1, max(2, n // 2)))
            supers = np.sort(rng.choice(n, size=k, replace=False))
            a = assign_supernodes(g, supers, max_iter=max_iter, seed=trial)
            dist = multi_source_bfs_distances(g, supers)
            reachable = (dist >= 0) & (dist <= max_iter)
            if not np.array_equal(a.hops[reachable], dist[reachable]):
                ok = False
            if a.random_fallback_count != int((~reachable).sum()):
                ok = False
            row_sums = np.asarray(a.matrix.sum(axis=1)).ravel()
            if not np.all(row_sums == 1.0):
                ok = False
            for i in np.flatnonzero(reachable):
                target = supers[a.node_to_super[i]]
                if multi_source_bfs_distances(g, [target])[i] != dist[i]:
                    ok = False
        report(5, "assignment equals multi-source BFS (100 graphs)", ok)

    def test_06_connect_matches_dense_triple_product(self):
        import scipy.sparse as sp

        from mcpool.pool import Assignment, connect

        rng = np.random.default_rng(13)
        ok = True
        for trial in range(50):
            n = int(rng.integers(2, 13))
            g = generate(GeneratorSpec.erdos_renyi(n, 0.5), seed=trial)
            k = int(rng.integers(1, n + 1))
            cols = rng.integers(0, k, n)
            cols[rng.choice(n, size=k, replace=False)] = np.arange(k)
            s = sp.csr_matrix((np.ones(n), (np.arange(n), cols)), shape=(n, k))
            a = Assignment(s, cols, np.zeros(n, dtype=np.int64), 0)
            dense = s.toarray().T @ g.adjacency.toarray() @ s.toarray()
            got = connect(g, a, remove_self_loops=False).adjacency.toarray()
            if not np.allclose(got + np.diag(dense.diagonal()), dense):
                ok = False
        report(6, "connect equals dense S^T A S (50 assignments)", ok)

    def test_07_multipartite_structure(self):
        ok = True
        for c in (2, 3, 5):
            ds = generate_multipartite_dataset(c, 2, 5, seed=c)
            for g in ds.graphs:
                if not is_complete_multipartite(g, g.labels):
                    ok = False
        big = generate_multipartite_dataset(10, 500, 20, seed=0)
        count_ok = len(big) == 5000
        report(7, "multipartite structure and paper-scale count",
               ok and count_ok, f"paper-scale graphs: {len(big)}")

    def test_08_desk_scale_classification(self):
        dataset = generate_multipartite_dataset(3, 60, 6, seed=0)
        config = TaskConfig(epochs=300, patience=60, lr=1e-3)
        rep = train_graph_classifier(dataset, config, seed=0)
        acc_ok = rep.final_metric is not None and rep.final_metric >= 0.8
        ablation = TaskConfig(epochs=300, patience=300, lr=1e-3, no_loss=True)
        rep_nl = train_graph_classifier(dataset, ablation, seed=0)
        ce_drop = rep_nl.task_losses[-1] <= 0.5 * rep_nl.task_losses[0]
        report(8, "heterophilic classification and -NL gradient flow",
               acc_ok and ce_drop,
               f"acc={rep.final_metric:.3f}, "
               f"NL cross-entropy {rep_nl.task_losses[0]:.3f} -> "
               f"{rep_nl.task_losses[-1]:.3f}")

    def test_09_scaling_smoke(self):
        layer = MaxCutPoolLayer(8, seed=0, ratio=0.5)

        def best_time(n: int) -> float:
            g = generate(GeneratorSpec.erdos_renyi(n, 8.0 / (n - 1)), seed=0)
            x = np.random.default_rng(0).standard_normal((n, 8))
            best = np.inf
            for _ in range(3):
                start = time.perf_counter()
                tape = Tape()
                out = layer.forward(tape, g, constant(x), seed=0)
                total = tape.add(tape.reduce_sum(out.pooled_features),
                                 out.aux_loss)
                for p in layer.parameters():
                    p.zero_grad()
                tape.backward(total)
                best = min(best, time.perf_counter() - start)
            return best

        t1, t2, t4 = best_time(1000), best_time(2000), best_time(4000)
        r21, r42 = t2 / t1, t4 / t2
        report(9, "near-linear scaling of pooling forward+backward",
               r21 <= 3.0 and r42 <= 3.0,
               f"times {t1*1e3:.0f}/{t2*1e3:.0f}/{t4*1e3:.0f} ms, "
               f"ratios {r21:.2f}, {r42:.2f}")

    def test_10_cli_determinism(self, tmp_path):
        args = ["maxcut", "--graph", "er:16:0.3", "--graph-seed", "3",
                "--method", "maxcutpool,levs,gw", "--seeds", "1,2",
                "--epochs", "25", "--scorenet", "8,8", "--format", "csv"]
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        code1 = main(args + ["--out", str(out1)])
        code2 = main(args + ["--out", str(out2)])
        identical = out1.read_bytes() == out2.read_bytes()
        report(10, "byte-identical CSV reports for identical invocations",
               code1 == 0 and code2 == 0 and identical)
