"""Release gate: ten end-to-end checks at reference scale, one test line each.

Every check drives the public API the way a user would and asserts the
documented tolerance, so `pytest -v tests/test_acceptance.py` prints one
pass/fail line per check.  The campaign-backed checks share a single serial
baseline run (module fixture, with per-campaign wall times); the determinism
check compares an independently threaded re-run against that baseline byte
for byte.
"""

import time

import numpy as np
import pytest

from kpzlab.control import value_from_feedback
from kpzlab.experiments import (
    EXPERIMENT_NAMES,
    ExperimentConfig,
    run_campaign,
    run_experiment,
    verdict_csv_text,
)
from kpzlab.fields import Grid, bump_field
from kpzlab.rates import quadratic_rate, regularize
from kpzlab.solver import CutoffParams, cole_hopf_solve, solve_kpz

CFG = ExperimentConfig()  # reference scale: d=1, N=128, seed=1, slack 1.5


@pytest.fixture(scope="module")
def baseline():
    """Serial reference run of every campaign, with per-campaign wall times."""
    results, times = {}, {}
    for name in EXPERIMENT_NAMES:
        t0 = time.perf_counter()
        results[name] = run_experiment(name, CFG)
        times[name] = time.perf_counter() - t0
    return results, times


def test_criterion_01_cole_hopf_triple_agreement():
    # V(y) = y^2, eps = 0, lam = 1, d = 1, N = 256, T = 0.25, Gaussian bump
    t0 = time.perf_counter()
    grid = Grid(1, 256, CFG.length)
    h0 = bump_field(grid, amplitude=1.0, width=0.9)
    rate = regularize(quadratic_rate(), 0.5)
    params = CutoffParams(None, 1.0, 0.25, 1.0 / 512.0)

    march = solve_kpz(h0, None, rate, params)
    exact = cole_hopf_solve(h0, None, 1.0, params, rate=rate)
    gap = float(np.max(np.abs(march.h.frames - exact.h.frames)))
    assert gap <= 1e-3

    k = grid.n // 2  # box center is a grid node, so the reference is exact
    x = (float(grid.coords()[k]),)
    h_ref = float(exact.h.frames[-1][k])
    est = value_from_feedback(exact, x, rate, params, 100_000, CFG.seed + 100)
    coarse = value_from_feedback(
        exact, x, rate, params, 50_000, CFG.seed + 101, dt=2.0 * params.dt
    )
    # weak error is O(dt): the doubled-dt bias, noise-padded then halved,
    # is a fitted allowance for the bias at dt
    fitted_bias = 0.5 * (abs(coarse.mean - h_ref) + 3.0 * coarse.stderr)
    assert abs(est.mean - h_ref) <= 3.0 * est.stderr + fitted_bias
    assert time.perf_counter() - t0 <= 120.0


def test_criterion_02_hjb_sup_representation(baseline):
    results, _ = baseline
    hjb = results["hjb_suite"]
    battery = [r for r in hjb.rows if r.instance.startswith("battery")]
    assert {r.instance.split("/")[0] for r in battery} == {
        f"battery{i}" for i in range(5)
    }
    assert any("/power:3/" in r.instance for r in battery)  # beta = 3 instance
    suboptimal = [r for r in battery if "/suboptimal/" in r.instance]
    assert len(suboptimal) == 20  # 5 instances x 4 strategies
    assert all(r.passed for r in suboptimal)
    attains = [r for r in battery if r.instance.endswith("/feedback_attains")]
    assert len(attains) == 5 and all(r.passed for r in attains)
    halving = [r for r in hjb.rows if r.instance == "bias/halving"]
    assert len(halving) == 1 and halving[0].passed


def test_criterion_03_maximum_principle_envelopes(baseline):
    results, _ = baseline
    assert CFG.n_envelope == 100
    row = next(
        r for r in results["hjb_suite"].rows if r.instance == "envelopes/100_instances"
    )
    assert row.lhs <= 1e-6 and row.passed


def test_criterion_04_solution_norm_two_phase(baseline):
    results, times = baseline
    res = results["theorem2"]
    assert times["theorem2"] <= 600.0
    # exponential pair at d' = d and polynomial pair at the default
    # d_minus = 2, d_plus = 2 + ceil((beta-1) d / beta) + 1 hypothesis gap
    assert CFG.poly_d_minus == 2.0 and CFG.poly_d_plus is None
    assert CFG.slack == 1.5
    groups = {
        f"{pair}/{rate}"
        for pair in ("exp", "poly")
        for rate in ("quadratic", "kpz_sqrt", "power:3")
    }
    assert groups <= set(res.constants)
    assert len(res.rows) == 360  # 2 pairs x 3 rates x (10 cal + 10 fresh) x 3 slices
    assert len({r.instance.rsplit("/t", 1)[1] for r in res.rows}) == 3
    fresh = [r for r in res.rows if "/fresh" in r.instance]
    assert len(fresh) == 180
    for r in fresh:
        key = "/".join(r.instance.split("/")[:2])
        assert r.ratio <= CFG.slack * res.constants[key] * (1.0 + 1e-12)
    assert res.passed


def test_criterion_05_gradient_bound_two_phase(baseline):
    results, _ = baseline
    res = results["gradient_bound"]
    assert len(res.rows) == 360
    fresh = [r for r in res.rows if "/fresh" in r.instance]
    assert len(fresh) == 180
    assert sum(not r.passed for r in fresh) == 0
    assert res.passed


def test_criterion_06_cutoff_convergence(baseline):
    results, _ = baseline
    res = results["convergence"]
    assert CFG.cutoff_levels == (4.0, 16.0, 64.0, 256.0)
    monotone = [r for r in res.rows if r.instance.startswith("monotone/")]
    assert len(monotone) == 2 and all(r.passed for r in monotone)
    # the row bounds the limit gap by 1x scheme error, inside the 2x allowance
    final = next(r for r in res.rows if r.instance.startswith("final_gap/"))
    assert final.passed and final.rhs <= 2.0 * res.constants["scheme_error"]
    assert res.passed


def test_criterion_07_controlled_endpoint_tails(baseline):
    results, _ = baseline
    hjb = results["hjb_suite"]
    for beta in ("2", "3"):
        nonincreasing = [
            r
            for r in hjb.rows
            if r.instance.startswith(f"tails/beta{beta}/nonincreasing/")
        ]
        envelope = [
            r for r in hjb.rows if r.instance.startswith(f"tails/beta{beta}/envelope/")
        ]
        assert len(nonincreasing) == 4 and len(envelope) == 4
        assert all(r.passed for r in nonincreasing)
        assert all(r.passed for r in envelope)


def test_criterion_08_kernel_and_expectation_lemmas(baseline):
    results, _ = baseline
    res = results["norm_lemmas"]
    assert set(res.constants) == {
        "kernel_domination",
        "truncated_tail",
        "growth",
        "mc_plain",
        "mc_weighted",
    }
    fresh_fields = {
        seg
        for r in res.rows
        for seg in r.instance.split("/")
        if seg.startswith("fresh")
    }
    assert len(fresh_fields) == 10
    betas = {
        seg for r in res.rows for seg in r.instance.split("/") if seg.startswith("beta")
    }
    assert betas == {"beta2", "beta3", "beta4"}
    assert res.passed


def test_criterion_09_norm_toolkit_consistency(baseline):
    results, _ = baseline
    res = results["norm_consistency"]
    assert len({r.instance.split("/")[0] for r in res.rows}) == 20
    assert set(res.constants) == {"star_over_sharp", "sharp_over_star", "parabolic"}
    for check in (
        "semigroup_contraction",
        "profile_monotonicity",
        "weighted_subadditivity",
        "locsup_star_domination",
    ):
        rows = [r for r in res.rows if r.instance.endswith("/" + check)]
        assert len(rows) == 20 and all(r.passed for r in rows)
    drift = [r for r in res.rows if r.instance.endswith("/tau_refinement_drift")]
    assert len(drift) == 20
    assert max(r.lhs for r in drift) < 0.01
    assert res.passed


def test_criterion_10_determinism_across_threads(baseline):
    results, _ = baseline
    rerun = run_campaign(CFG, names=list(EXPERIMENT_NAMES), threads=4)
    assert [r.name for r in rerun] == list(EXPERIMENT_NAMES)
    for res in rerun:
        serial = verdict_csv_text(results[res.name].rows).encode()
        threaded = verdict_csv_text(res.rows).encode()
        assert serial == threaded, f"{res.name} verdicts differ across thread counts"
