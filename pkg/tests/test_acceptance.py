"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import time
from pathlib import Path

import numpy as np
import pytest

from rankshap.axioms import SHAPLEY_AXIOMS, check_grem_axioms, compliance_table
from rankshap.cli import main
from rankshap.evaluation import kendall_tau, weighted_kendall_tau
from rankshap.experiments import Arm, run_fidelity_suite
from rankshap.grem import Grem, RelevanceAssignment
from rankshap.rankers import Ranking
from rankshap.shapley import SamplerConfig, exact_rankshap, kernel_rankshap, permutation_rankshap
from rankshap.synthetic import random_game

import oracles


@pytest.fixture
def verdict(capsys):
    def report(criterion: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[acceptance {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return report


def r(*ids):
    return Ranking(tuple(ids), tuple(float(-j) for j in range(len(ids))))


def test_1_kernel_full_enumeration_matches_exact(verdict):
    start = time.perf_counter()
    worst = 0.0
    for g_id in range(200):
        rng = np.random.default_rng([1, g_id])
        game = random_game(rng, m=int(rng.integers(2, 11)))
        oracle = game.problem().oracle()
        diff = kernel_rankshap(oracle, SamplerConfig(n_samples=2 ** game.instance.m)).phi - exact_rankshap(oracle).phi
        worst = max(worst, float(np.max(np.abs(diff))))
    elapsed = time.perf_counter() - start
    verdict(1, worst <= 1e-6 and elapsed < 60, f"200 games, max L_inf {worst:.2e}, {elapsed:.1f}s")


def test_2_sampling_consistency(verdict):
    kernel_hits, perm_hits = 0, 0
    for g_id in range(50):
        oracle = random_game(np.random.default_rng([2, g_id]), m=15).problem().oracle()
        est = kernel_rankshap(oracle, SamplerConfig(n_samples=5000, seed=g_id)).phi
        kernel_hits += np.max(np.abs(est - exact_rankshap(oracle).phi)) <= 0.05
        # 5000 proper-coalition evaluations buy 5000 // (m - 1) permutations
        oracle = random_game(np.random.default_rng([3, g_id]), m=8).problem().oracle()
        est = permutation_rankshap(oracle, SamplerConfig(n_samples=5000 // 7, seed=g_id)).phi
        perm_hits += np.max(np.abs(est - exact_rankshap(oracle).phi)) <= 0.05
    verdict(2, kernel_hits >= 45 and perm_hits >= 45,
            f"kernel m=15 within 0.05 on {kernel_hits}/50, permutation m=8 on {perm_hits}/50")


def test_3_axiom_compliance(verdict):
    table = compliance_table(["rankshap", "rankshap-exact", "rankingshap", "random", "exs"], trials=1000, seed=0)
    rankshap_ok = all(table[m].passed(a) for m in ("rankshap", "rankshap-exact") for a in SHAPLEY_AXIOMS)
    eff = table["rankingshap"].results["efficiency"]
    ce = eff.counterexample or {}
    concrete = eff.status == "violated" and ce.get("gap", 0) > 1e-6 and "game" in ce
    baselines_fail = all(not all(table[m].passed(a) for a in SHAPLEY_AXIOMS) for m in ("random", "exs"))
    verdict(3, rankshap_ok and concrete and baselines_fail,
            f"rankshap all pass={rankshap_ok}, rankingshap efficiency gap {ce.get('gap', 0):.3f}, "
            f"random/exs fail somewhere={baselines_fail}")


def test_4_grem_position_sensitivity(verdict):
    counts = {}
    for name, fn in (("cg", Grem("linear", "none")), ("dcg", Grem("linear", "log")),
                     ("ndcg", Grem("linear", "log", True))):
        counts[name] = check_grem_axioms(fn, trials=10_000, seed=0).results["position_sensitivity"].violations
    broken = check_grem_axioms(Grem("linear", lambda j: float(j)), trials=100, seed=0)
    found = broken.results["position_sensitivity"].status == "violated"
    verdict(4, all(v == 0 for v in counts.values()) and found,
            f"violations {counts} over 10^4 swaps, increasing discount counterexample found={found}")


def test_5_tau_exactness(verdict):
    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        a = [f"d{k}" for k in rng.permutation(n)]
        b = [f"d{k}" for k in rng.permutation(n)]
        mismatches += kendall_tau(r(*a), r(*b)) != float(oracles.tau_pairs(a, b))
        mismatches += weighted_kendall_tau(r(*a), r(*b)) != float(oracles.weighted_tau_pairs(a, b))
    hand = (kendall_tau(r("1", "2", "3"), r("1", "2", "3")) == 1.0
            and kendall_tau(r("1", "2", "3"), r("3", "2", "1")) == -1.0
            and kendall_tau(r("1", "2", "3"), r("1", "3", "2")) == 1 / 3
            and weighted_kendall_tau(r("1", "2", "3"), r("1", "3", "2")) == 0.5)
    verdict(5, mismatches == 0 and hand, f"{mismatches} mismatches on 10^3 pairs, hand values exact={hand}")


def test_6_ndcg_exactness(verdict):
    ndcg = Grem("linear", "log", True)
    rels = RelevanceAssignment({"a": 3.0, "b": 2.0, "c": 1.0})
    worst = ndcg(r("c", "b", "a"), rels)
    rng = np.random.default_rng(6)
    ideal_ok = True
    for _ in range(200):
        n = int(rng.integers(1, 11))
        labels = {f"d{k}": float(rng.integers(0, 5)) for k in range(n)}
        labels["d0"] = max(labels["d0"], 1.0)
        ideal = sorted(labels, key=lambda d: (-labels[d], d))
        ideal_ok &= ndcg(r(*ideal), RelevanceAssignment(labels)) == 1.0
    verdict(6, abs(worst - 0.78999) <= 1e-5 and ideal_ok, f"worst order {worst:.6f}, ideal orders exactly 1.0={ideal_ok}")


@pytest.fixture(scope="module")
def fidelity_run():
    arms = (Arm("random", "random"), Arm("rankshap-ndcg", "rankshap", "ndcg"), Arm("rankshap-cg", "rankshap", "cg"),
            Arm("explicit", "rankshap", "ndcg", "qrels"), Arm("bm25-heuristic", "rankshap", "ndcg", "bm25"))
    start = time.perf_counter()
    result = run_fidelity_suite(arms, n_queries=100, top_n=10, n_samples=5000, seed=0)
    return result, time.perf_counter() - start


def test_7_fidelity_ordering(verdict, fidelity_run):
    result, elapsed = fidelity_run
    ndcg, rand, cg = (result.mean(k)[0] for k in ("rankshap-ndcg", "random", "rankshap-cg"))
    verdict(7, ndcg - rand >= 0.3 and ndcg >= cg and elapsed < 600,
            f"fidelity ndcg {ndcg:.3f}, random {rand:.3f}, cg {cg:.3f}, {elapsed:.0f}s")


def test_8_heuristic_relevance_drop(verdict, fidelity_run):
    result, _ = fidelity_run
    explicit, heuristic = result.mean("explicit")[0], result.mean("bm25-heuristic")[0]
    verdict(8, explicit - heuristic <= 0.15, f"explicit {explicit:.3f}, bm25-inferred {heuristic:.3f}")


def _tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _session(data: Path, out: Path, jobs: str) -> None:
    inputs = ["--corpus", str(data / "corpus.jsonl"), "--queries", str(data / "queries.jsonl"),
              "--stemming", "none", "--seed", "7"]
    assert main(["rank", *inputs, "--out", str(out / "rank")]) == 0
    for method in ("rankshap", "permutation", "exs", "rankingshap", "random"):
        assert main(["attribute", *inputs, "--method", method, "--n-samples", "600", "--jobs", jobs,
                     "--out", str(out / method)]) == 0
    assert main(["evaluate", *(str(out / m) for m in ("rankshap", "exs", "random")),
                 "--out", str(out / "eval.json")]) == 0
    assert main(["report", str(out / "rankshap"), "--out", str(out / "charts")]) == 0
    assert main(["axioms", "--methods", "rankshap,random", "--trials", "20", "--seed", "7",
                 "--out", str(out / "axioms.json")]) == 0
    assert main(["experiment", "--n-queries", "3", "--n-samples", "300", "--seed", "7",
                 "--out", str(out / "experiment.json")]) == 0


def test_9_determinism(verdict, tmp_path, capsys):
    assert main(["synth", "--n-queries", "4", "--seed", "7", "--out", str(tmp_path / "data")]) == 0
    _session(tmp_path / "data", tmp_path / "a", "1")
    _session(tmp_path / "data", tmp_path / "b", "3")
    capsys.readouterr()
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    same = a == b and len(a) > 10
    verdict(9, same, f"{len(a)} output files, byte-identical across reruns={same}")
