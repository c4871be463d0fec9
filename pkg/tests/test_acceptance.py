"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test appends one PASS/FAIL line to the summary printed at the end of
the pytest run (and prints it immediately, visible with ``-s``).
"""
import json
import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from nearcrit import experiments as ex
from nearcrit.cli import run
from nearcrit.suite import exact_suite, extremal_suite, sampler_suite


def report(number, title, ok, detail, seconds):
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail} ({seconds:.0f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ex.FitQualityWarning)
        out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_criterion_1_exact_identity_suite():
    rep, secs = timed(exact_suite, max_edges=12, seed=0)
    d = rep.to_dict()
    ok = (rep.passed and rep.n_instances >= 30 and d["counts"].get("markov", 0) >= 50
          and all(d["counts"].get(k, 0) > 0 for k in d["tolerances"]) and secs <= 120)
    worst = ", ".join(f"{k}={v:.1e}" for k, v in sorted(d["worst"].items()))
    report(1, "exact identities", ok,
           f"{rep.n_instances} instances, {d['counts'].get('markov', 0)} Markov sets, worst {worst}",
           secs)
    assert ok, d["failures"]


def test_criterion_2_sampler_validation():
    rep, secs = timed(sampler_suite, n_samples=100_000, seed=0, tol=0.01)
    ok = rep["passed"] and secs <= 300
    report(2, "sampler marginals", ok, f"worst TV {rep['worst_tv']:.4f} < 0.01", secs)
    assert ok


def test_criterion_3_one_arm_exponent():
    res, secs = timed(ex.one_arm_scan, a_grid=(1, "1/2", "1/4", "1/8"), seed=0)
    probs = [r.mean for r in res.records]
    ok = abs(res.fit.exponent - 0.125) <= 0.03 and secs <= 600
    report(3, "one-arm exponent", ok,
           f"{res.fit.exponent:.4f} +- {res.fit.stderr:.4f} (target 0.125 +- 0.03), "
           f"probabilities {np.round(probs, 4).tolist()}", secs)
    assert ok
    assert all(b < a for a, b in zip(probs, probs[1:]))


def test_criterion_4_critical_two_point_exponent():
    res, secs = timed(ex.critical_twopoint_scan, r_grid=(4, 6, 8, 12, 16, 24, 32, 40, 48),
                      L=128, seed=0)
    ok = abs(res.fit.exponent - 0.25) <= 0.05 and secs <= 600
    report(4, "critical two-point exponent", ok,
           f"{res.fit.exponent:.4f} +- {res.fit.stderr:.4f} (target 0.25 +- 0.05); "
           + "; ".join(res.notes), secs)
    assert ok
    assert all(r.mean <= 1 for r in res.records)


def test_criterion_5_mass_exponent():
    res, secs = timed(ex.mass_scan, h_grid=(0.05, 0.1, 0.2, 0.3, 0.4), seed=0)
    masses = [r.mean for r in res.records if r.observable == "mass"]
    ok = (len(masses) == 5 and abs(res.fit.exponent - 8 / 15) <= 0.10 and secs <= 2700)
    report(5, "mass exponent", ok,
           f"slope {res.fit.exponent:.4f} +- {res.fit.stderr:.4f} (target 0.5333 +- 0.10), "
           f"masses {np.round(masses, 3).tolist()}", secs)
    assert ok
    assert res.summary["monotone"]


def test_criterion_6_backbone_survival():
    res, secs = timed(ex.backbone_survival, h=0.2, seed=0)
    s = res.summary
    ok = s["r2"] >= 0.9 and s["hit_rate_spread"] <= 3 and s["min_hit_rate"] > 0 and secs <= 1200
    report(6, "backbone survival", ok,
           f"R^2 {s['r2']:.4f} >= 0.9, hit-rate spread (indices 2..6) "
           f"{s['hit_rate_spread']:.2f} <= 3", secs)
    assert ok


def test_criterion_7_extremal_length():
    rep, secs = timed(extremal_suite, seed=0, n_quads=50)
    w = rep["worst"]
    report(7, "extremal length", rep["passed"],
           f"oracle {w['oracle']:.1e} on {rep['counts']['oracle']} quads, closed forms "
           f"{w['closed_form']:.1e}, Rayleigh {w['rayleigh']:.1e}, duality {w['duality']:.1e}",
           secs)
    assert rep["passed"] and rep["counts"]["oracle"] >= 50


def test_criterion_8_near_critical_rsw_ratio():
    res, secs = timed(ex.near_critical_rsw_ratio, seed=0)
    ratios = [r for r in res.records if r.observable == "rsw_ratio"]
    low = [r for r in ratios if r.mean < 1 - 3 * r.stderr]
    high = [r for r in ratios if r.mean > 4]
    ok = bool(ratios) and not low and not high and secs <= 900
    report(8, "near-critical RSW ratio", ok,
           f"{len(ratios)} admissible points, ratios in "
           f"[{min(r.mean for r in ratios):.4f}, {max(r.mean for r in ratios):.4f}], "
           f"min z {res.summary['min_z']:.2f}", secs)
    assert ok


def test_criterion_9_determinism(tmp_path):
    t0 = time.perf_counter()
    commands = {
        "scan-one-arm.csv": ["scan", "one-arm", "--a", "1,1/2", "--budget", "2000", "--seed", "7"],
        "scan-mixing.csv": ["scan", "mixing", "--budget", "2000", "--seed", "3"],
        "sample-fk.csv": ["sample-fk", "--box", "4", "--h", "0.2", "--budget", "2000"],
        "verify-exact.json": ["verify", "--suite", "exact", "--max-edges", "8"],
    }
    same = []
    for name, argv in commands.items():
        blobs = []
        for _ in range(2):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                code = run(argv + ["--output-dir", str(tmp_path)])
            assert code == 0
            blobs.append((tmp_path / name).read_bytes())
            json_name = name.replace(".csv", "-fit.json")
            if name.startswith("scan") and (tmp_path / json_name).exists():
                blobs[-1] += (tmp_path / json_name).read_bytes()
        same.append(blobs[0] == blobs[1])
    ok = all(same)
    report(9, "determinism", ok, f"{sum(same)}/{len(same)} outputs byte-identical on rerun",
           time.perf_counter() - t0)
    assert ok
