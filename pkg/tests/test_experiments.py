"""Tests for the verification campaigns and the verdict protocol.

Oracles: closed-form ratio scaling for constant-profile pairs (exponential
profiles make the fitted constant exactly linear in the profile ratio c),
zero data collapsing every ratio to zero, the tanh clip's strictly positive
cutoff differences, and hand-built calibration/fresh records for the
two-phase rule itself.
"""

import json
import math

import numpy as np
import pytest

from kpzlab.experiments import (
    ConfigError,
    ExperimentConfig,
    EXPERIMENT_NAMES,
    VERDICT_HEADER,
    run_campaign,
    run_convergence,
    run_experiment,
    run_hjb_suite,
    run_norm_consistency,
    run_norm_lemmas,
    run_theorem2,
    summary_dict,
    verdict_csv_text,
    write_results,
)
from kpzlab.fields import Grid, constant_field
from kpzlab.norms import StarConfig, exponential_pair, w_norm
from kpzlab.rates import quadratic_rate
from kpzlab.solver import CutoffParams, solve_kpz


def tiny_config(**overrides):
    base = dict(
        n=64,
        horizon=0.25,
        dt=1.0 / 256.0,
        j_levels=(2,),
        lams=(1.0,),
        rates=("quadratic",),
        pair_kinds=("exp",),
        n_calibration=2,
        n_fresh=2,
        n_paths=400,
        n_paths_bias=800,
        n_envelope=3,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# ------------------------------------------------------------ configuration


def test_config_rejects_unknown_experiment():
    with pytest.raises(ConfigError):
        ExperimentConfig(experiment="nope")


def test_config_rejects_bad_dim_and_slack():
    with pytest.raises(ConfigError):
        ExperimentConfig(dim=3)
    with pytest.raises(ConfigError):
        ExperimentConfig(slack=0.5)
    with pytest.raises(ConfigError):
        ExperimentConfig(n_calibration=0)


def test_from_mapping_rejects_unknown_key():
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_mapping({"no_such_knob": 1})


def test_from_mapping_converts_lists():
    cfg = ExperimentConfig.from_mapping({"j_levels": [0, 2], "lams": [1.0]})
    assert cfg.j_levels == (0, 2)
    assert cfg.lams == (1.0,)


def test_exp_pair_hypothesis_gate():
    cfg = tiny_config(exp_c=1.5)
    with pytest.raises(ConfigError, match="profile ratio"):
        run_theorem2(cfg)


def test_poly_pair_hypothesis_gate():
    # beta = 2, d = 1 needs d_plus - d_minus > 0.5; 0.1 must be refused
    cfg = tiny_config(pair_kinds=("poly",), poly_d_minus=2.0, poly_d_plus=2.1)
    with pytest.raises(ConfigError, match="d_plus - d_minus"):
        run_theorem2(cfg)


# -------------------------------------------------------- verdict protocol


def split_groups(rows):
    groups = {}
    for r in rows:
        head, _, rest = r.instance.partition("/")
        rate, _, rest = rest.partition("/")
        phase = "cal" if rest.startswith("cal") else "fresh"
        groups.setdefault((head, rate), {"cal": [], "fresh": []})[phase].append(r)
    return groups


def test_two_phase_constant_comes_from_calibration_only():
    res = run_theorem2(tiny_config())
    for (head, rate), phases in split_groups(res.rows).items():
        assert phases["cal"] and phases["fresh"]
        constant = max(r.ratio for r in phases["cal"])
        for r in phases["cal"] + phases["fresh"]:
            assert r.constant == constant
            assert r.passed == (r.ratio <= 1.5 * constant)


def test_zero_amplitude_data_gives_zero_ratios():
    res = run_theorem2(tiny_config(noise_amp=0.0))
    assert res.passed
    assert all(r.lhs == 0.0 and r.ratio == 0.0 for r in res.rows)


def test_fitted_constant_linear_in_exponential_c():
    # exp-pair RHS scales as 1/c exactly, so the fitted constant is linear in c
    res = run_theorem2(tiny_config(exp_c=0.5, exp_c_scan=(0.25,)))
    base = res.constants["exp/quadratic"]
    quarter = res.constants["exp(c=0.25)/quadratic"]
    assert quarter == pytest.approx(0.5 * base, rel=1e-9)
    # the default c participates in the scan verdicts and passes too
    assert res.constants["largest_passing_exp_c"] == 0.5


def test_constant_data_ratio_equals_c():
    # h0 = const k, g = 0: h_t = k e^{-eps t}, every norm of a constant is the
    # constant, and P_-^{-1}(P_+(z)) = z / c, so LHS/RHS = c identically
    grid = Grid(dim=1, n=32, length=8.0)
    k, lam, j, t, c = 0.7, 1.0, 2, 0.25, 0.4
    params = CutoffParams(j=j, lam=lam, horizon=t, dt=1.0 / 128.0)
    rate = quadratic_rate()
    sol = solve_kpz(constant_field(grid, k), None, rate, params)
    pair = exponential_pair(lam, rate.beta, grid.dim, c)
    star_cfg = StarConfig.for_grid(grid)
    lhs = w_norm(sol.h.frame(sol.h.n_frames - 1), pair.minus, j, star_cfg).values
    eps = 2.0 ** (-j)
    rhs = math.exp(-eps * t) * pair.compose_up(
        w_norm(sol.h.frame(0), pair.plus, j, star_cfg).values
    )
    assert np.allclose(lhs / rhs, c, rtol=1e-6)


# ------------------------------------------------------------- campaigns


def test_convergence_differences_small_but_nonzero():
    # soft clip makes consecutive differences tiny but strictly positive;
    # the Richardson-summed limit gap must sit below the scheme error
    res = run_convergence(tiny_config(horizon=1.0))
    assert res.passed
    diffs = [r.lhs for r in res.rows if r.instance.startswith("monotone")]
    assert all(d > 0.0 for d in diffs)
    assert diffs == sorted(diffs, reverse=True)


def test_hjb_suite_robust_rows():
    res = run_hjb_suite(
        tiny_config(
            rates=("quadratic", "kpz_sqrt", "power:beta=3"),
            n_paths=2000,
            n_paths_bias=4000,
        )
    )
    by_name = {r.instance: r for r in res.rows}
    assert by_name["triple/march_vs_closed_form"].passed
    assert by_name["triple/mc_vs_closed_form"].passed
    assert by_name["bias/halving"].passed
    assert by_name["envelopes/3_instances"].passed
    assert by_name["envelopes/3_instances"].lhs == 0.0
    for r in res.rows:
        if "/suboptimal/" in r.instance or "feedback_attains" in r.instance:
            assert r.passed, r.instance
        if "nonincreasing" in r.instance:
            assert r.passed, r.instance
    term_rows = [r for r in res.rows if r.instance.startswith("terms/") and "identity" not in r.instance]
    cal_max = max(r.ratio for r in term_rows if "/cal" in r.instance)
    for r in term_rows:
        assert r.constant == cal_max
        assert r.passed == (r.ratio <= 1.5 * cal_max)


def test_norm_lemma_groups_pass_at_small_scale():
    res = run_norm_lemmas(tiny_config())
    assert res.passed
    assert set(res.constants) == {
        "kernel_domination",
        "truncated_tail",
        "growth",
        "mc_plain",
        "mc_weighted",
    }
    assert res.constants["kernel_domination"] <= 1.0 + 1e-12


def test_norm_lemmas_reject_unresolvable_kernel_grid():
    # 32 points on length 8 cannot resolve a beta = 4 kernel that also has
    # box-negligible tail mass; the kernel constructor must refuse
    with pytest.raises(ValueError, match="box-resolved"):
        run_norm_lemmas(tiny_config(n=32))


def test_norm_consistency_passes_and_reports_drift():
    res = run_norm_consistency(tiny_config())
    assert res.passed
    header, rows = res.tables["refinement"]
    assert header == ("field", "drift")
    assert all(0.0 <= d < 0.01 for _, d in rows)


def test_tail_rows_require_both_betas():
    cfg = tiny_config(rates=("quadratic",))
    with pytest.raises(ConfigError, match="beta = 3"):
        run_hjb_suite(cfg)


# ---------------------------------------------------- determinism and output


def test_campaign_rows_deterministic_and_thread_invariant():
    cfg = tiny_config()
    names = ["theorem2", "convergence", "norm_consistency"]
    a = run_campaign(cfg, names=names)
    b = run_campaign(cfg, names=names)
    c = run_campaign(cfg, names=names, threads=3)
    texts = [tuple(verdict_csv_text(r.rows) for r in run) for run in (a, b, c)]
    assert texts[0] == texts[1] == texts[2]
    assert [r.name for r in a] == names


def test_run_campaign_uses_configured_experiment():
    cfg = tiny_config(experiment="convergence")
    results = run_campaign(cfg)
    assert [r.name for r in results] == ["convergence"]


def test_run_experiment_rejects_unknown_name():
    with pytest.raises(ConfigError):
        run_experiment("not_an_experiment", tiny_config())


def test_experiment_registry_is_complete():
    assert EXPERIMENT_NAMES == (
        "theorem2",
        "gradient_bound",
        "convergence",
        "hjb_suite",
        "norm_lemmas",
        "norm_consistency",
        "smoke2d",
    )


def test_verdict_csv_shape():
    res = run_convergence(tiny_config())
    text = verdict_csv_text(res.rows)
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(VERDICT_HEADER)
    assert len(lines) == len(res.rows) + 1
    first = lines[1].split(",")
    assert first[0] == "convergence"
    assert first[-1] in ("true", "false")
    # repr-format floats round-trip exactly
    assert float(first[2]) == res.rows[0].lhs


def test_write_results_files_and_summary(tmp_path):
    cfg = tiny_config(horizon=1.0)
    results = run_campaign(cfg, names=["convergence", "norm_consistency"])
    summary = write_results(tmp_path, cfg, results)
    assert (tmp_path / "convergence_verdicts.csv").exists()
    assert (tmp_path / "norm_consistency_verdicts.csv").exists()
    assert (tmp_path / "convergence_levels.csv").exists()
    assert (tmp_path / "norm_consistency_refinement.csv").exists()
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["passed"] == summary["passed"]
    assert on_disk["experiments"]["convergence"]["failed_rows"] == []
    assert on_disk["config"]["n"] == cfg.n


def test_summary_dict_reports_failed_rows():
    res = run_convergence(tiny_config(horizon=1.0))
    bad = res.rows[0].__class__(
        experiment="convergence",
        instance="synthetic/fail",
        lhs=2.0,
        rhs=1.0,
        ratio=2.0,
        constant=1.0 / 1.5,
        passed=False,
    )
    patched = res.__class__(res.name, res.rows + (bad,), res.constants, res.tables)
    summary = summary_dict(tiny_config(), [patched])
    assert summary["passed"] is False
    assert summary["experiments"]["convergence"]["failed_rows"] == ["synthetic/fail"]
