"""Acceptance gate: eight criteria, one test (and one printed verdict
line) each. Tolerances and runtime budgets are pinned in the asserts.

Run with `pytest tests/test_acceptance.py -v` (add -s to see the verdict
lines on passing runs).
"""

import json
import time

import numpy as np
import pytest

from meganet.checks import (
    complexity_suite,
    equivariance_suite,
    expressivity_suite,
    gradient_suite,
    node_id_suite,
    planted_separation_suite,
    port_witness_suite,
)
from meganet.cli import main as cli_main


def verdict(num, name, passed, detail=""):
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {num}: {name} {detail}")


def test_criterion_1_equivariance():
    """100 random multigraphs, all 25 EdgeAgg x AGG combinations from
    {sum,mean,max,min,pna}, bidirectional on and off, 1e-5 relative."""
    report = equivariance_suite(num_graphs=100, rtol=1e-5)
    detail = (f"({report['combinations_checked']} graph/combo checks, "
              f"{report['seconds']:.1f}s)")
    verdict(1, "permutation equivariance", report["passed"], detail)
    assert report["passed"], report["failures"][:5]
    assert report["seconds"] < 60.0


def test_criterion_2_node_id_uniqueness():
    """200 random connected multigraphs (n <= 30, m <= 120): ids unique,
    id length = BFS distance + 1."""
    report = node_id_suite(num_graphs=200)
    verdict(2, "unique node ids + digit law", report["passed"],
            f"({report['seconds']:.1f}s)")
    assert report["passed"], report["failures"][:5]
    assert report["seconds"] < 30.0


def test_criterion_3_port_witness():
    """Port-numbering non-equivariance witness on stars n in 4..10,
    10 seeds each."""
    report = port_witness_suite(n_values=tuple(range(4, 11)), trials=10)
    verdict(3, "port-numbering witness", report["passed"],
            f"({report['seconds']:.1f}s)")
    assert report["passed"], report["witnesses"]
    assert report["seconds"] < 5.0


def test_criterion_4_expressivity_separation():
    """Grouped payments {{5,1},{3,4}} vs {{5,3},{1,4}}: single-stage sum
    and max agree (13, 5); max-of-sums differs (7 vs 8). Exact integers."""
    report = expressivity_suite()
    v = report["values"]
    verdict(4, "two-stage expressivity separation", report["passed"],
            f"(sum={v['single_stage_sum']}, max={v['single_stage_max']}, "
            f"max-of-sums={v['two_stage_max_of_sums_g1']} vs "
            f"{v['two_stage_max_of_sums_g2']})")
    assert v["single_stage_sum"] == 13.0
    assert v["single_stage_max"] == 5.0
    assert v["two_stage_max_of_sums_g1"] == 7.0
    assert v["two_stage_max_of_sums_g2"] == 8.0
    assert report["passed"]


def test_criterion_5_gradients():
    """Full-model analytic vs central finite-difference gradients
    (eps=1e-5, float64) within 1e-4 relative on 20 small graphs,
    covering both aggregation stages and the reverse paths."""
    report = gradient_suite(num_graphs=20, eps=1e-5, rtol=1e-4)
    verdict(5, "full-model gradient check", report["passed"],
            f"(max rel err {report['max_rel_error']:.2e}, "
            f"{report['seconds']:.1f}s)")
    assert report["passed"], report["failures"][:5]
    assert report["seconds"] < 120.0


def test_criterion_6_planted_separation():
    """Across 5 seeds on 500-node planted tasks: two-stage beats
    single-stage by >= 0.10 mean minority-F1 on max_of_sums, and
    bidirectional beats unidirectional by >= 0.10 on out_neighbor_count."""
    report = planted_separation_suite(num_nodes=500, seeds=(0, 1, 2, 3, 4),
                                      min_gap=0.10)
    ms, oc = report["max_of_sums"], report["out_neighbor_count"]
    verdict(6, "planted-task separation", report["passed"],
            f"(max_of_sums {ms['two_stage_f1']:.3f} vs "
            f"{ms['single_stage_f1']:.3f}; out_neighbor_count "
            f"{oc['bidirectional_f1']:.3f} vs {oc['unidirectional_f1']:.3f}; "
            f"{report['seconds']:.0f}s)")
    assert ms["two_stage_f1"] >= ms["single_stage_f1"] + 0.10
    assert oc["bidirectional_f1"] >= oc["unidirectional_f1"] + 0.10
    assert report["seconds"] < 600.0


def test_criterion_7_training_determinism(tmp_path):
    """Two cmd_train invocations with the same seed produce identical
    experiment records except wall-clock."""
    tx = tmp_path / "tx.csv"
    rc = cli_main(["gen", "--task", "max_of_sums", "--num-nodes", "80",
                   "--seed", "2", "--out", str(tx)])
    assert rc == 0
    records = []
    for run_dir in ("a", "b"):
        rc = cli_main(["train", "--data", str(tx),
                       "--node-labels", str(tx) + ".labels.csv",
                       "--out-dir", str(tmp_path / run_dir),
                       "--seeds", "0", "--epochs", "6", "--hidden", "8",
                       "--mlp-hidden", "8", "--num-layers", "1",
                       "--dropout", "0.1", "--no-bidirectional"])
        assert rc == 0
        rec = json.loads((tmp_path / run_dir / "record_seed0.json").read_text())
        rec.pop("wall_clock")
        records.append(rec)
    same = records[0] == records[1]
    verdict(7, "training determinism", same)
    assert same


def test_criterion_8_linear_complexity():
    """Reduction-row counters scale linearly over |E| in {1e3, 1e4, 1e5}:
    count ratios within 5% of size ratios."""
    report = complexity_suite(sizes=(1_000, 10_000, 100_000), tolerance=0.05)
    devs = ", ".join(f"{r['rel_dev']:.4f}" for r in report["ratios"])
    verdict(8, "linear reduction complexity", report["passed"],
            f"(rel devs {devs})")
    for r in report["ratios"]:
        assert r["rel_dev"] <= 0.05, r
    assert report["passed"]
