import json
import math

import numpy as np
import pytest

from gf2minor import harness
from gf2minor.harness import (
    ExperimentReport,
    ExperimentSpec,
    IOFailure,
    emit_report,
    load_profiles,
    read_csv_records,
    run_experiment,
    spec_from_profile,
    splitmix64,
    subset_sum_counts,
    trial_seed,
    wilson_interval,
)
from oracles import naive_subset_sums


def test_splitmix_reference_values():
    # first outputs of the reference splitmix64 generator seeded with 0
    state, out = 0, []
    for _ in range(3):
        out.append(splitmix64(state))
        state = (state + 0x9E3779B97F4A7C15) & ((1 << 64) - 1)
    assert out == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_trial_seeds_deterministic_and_distinct():
    a = [trial_seed(7, i) for i in range(1000)]
    assert a == [trial_seed(7, i) for i in range(1000)]
    assert len(set(a)) == 1000
    assert all(0 <= s < 2**63 for s in a)
    assert a[:5] != [trial_seed(8, i) for i in range(5)]


def test_wilson_interval():
    lo, hi = wilson_interval(18, 20)
    assert lo == pytest.approx(0.6990, abs=1e-4) and hi == pytest.approx(0.9721, abs=1e-4)
    assert wilson_interval(0, 0) == (0.0, 1.0)
    lo, hi = wilson_interval(0, 10)
    assert lo == 0.0 and 0 < hi < 0.35


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec("nope", {})
    with pytest.raises(ValueError):
        ExperimentSpec("core_size", {}, trials=0)


@pytest.mark.parametrize("alpha", [0, 1, 0b1011])
def test_subset_sum_counts_against_naive(alpha):
    rng = np.random.default_rng(alpha)
    rows = [int(x) for x in rng.integers(0, 1 << 12, 11)]
    assert subset_sum_counts(rows, alpha).tolist() == naive_subset_sums(rows, alpha)


def test_subset_sums_exhaustive_matches_oracle():
    p = {"n": 10, "m": 14, "k": 3, "alpha": "e1", "mode": "exhaustive"}
    seed = trial_seed(3, 0)
    rec = harness._subset_sums(p, seed)
    A, _ = harness._subset_rows(p, seed)
    dense = A.to_dense()
    rows = [sum(int(b) << j for j, b in enumerate(dense[i])) for i in range(10)]
    assert rec["counts_by_size"] == naive_subset_sums(rows, 1)


def test_subset_sums_exhaustive_vs_sampled_n12():
    # same rows, both modes; sampled counts per size must sit within 4 sd of the exact count
    base = {"n": 12, "m": 8, "k": 2, "alpha": "zero"}
    seed = 12345
    ex = harness._subset_sums({**base, "mode": "exhaustive"}, seed)
    sa = harness._subset_sums({**base, "mode": "sampled", "s0": 6, "samples_per_size": 40_000}, seed)
    for s in range(1, 7):
        exact = ex["counts_by_size"][s]
        est, sd = sa["estimate_by_size"][s - 1], sa["sd_by_size"][s - 1]
        frac = exact / math.comb(12, s)
        sd_true = math.comb(12, s) * math.sqrt(frac * (1 - frac) / 40_000)
        assert abs(est - exact) <= 4 * sd_true + 1e-9, (s, est, exact, sd)


def test_alpha_forms():
    assert harness._alpha({}, 5) == 0
    assert harness._alpha({"alpha": "e1"}, 5) == 1
    assert harness._alpha({"alpha": "ones"}, 5) == 31
    assert harness._alpha({"alpha": [0, 3]}, 5) == 9


SMALL = {
    "core_size": {"n": 3000, "k": 3, "c": 2.0, "d": 2, "tolerance": {"relative": 0.15}},
    "column_independence": {"n": 400, "k": 3, "m1": 100},
    "subset_sums": {"n": 8, "m": 10, "k": 3, "mode": "exhaustive"},
    "inverse_row_weights": {"n": 600, "k": 9, "m": 7200, "pipeline": {"L": 3.0, "zeta": 0.5}},
    "candidate_probability": {"atom_sizes": [10, 10, 10, 10, 10, 10, 10, 10], "k": 3, "eps1": 0.05, "columns": 20_000},
    "minor_end_to_end": {"n": 1000, "k": 9, "m": 12_000, "pipeline": {"L": 3.0, "zeta": 0.5}},
}


@pytest.mark.parametrize("kind", sorted(SMALL))
def test_each_kind_runs(kind):
    rep = run_experiment(ExperimentSpec(kind, SMALL[kind], trials=2, seed=1))
    assert len(rep.records) == 2
    assert all("error" not in r for r in rep.records)
    assert [r["trial"] for r in rep.records] == [0, 1]
    assert rep.aggregates["trial_errors"] == 0
    json.dumps(rep.to_json())


def test_determinism_excluding_timings():
    spec = ExperimentSpec("minor_end_to_end", SMALL["minor_end_to_end"], trials=2, seed=9)
    a = run_experiment(spec).to_json(timings=False)
    b = run_experiment(spec).to_json(timings=False)
    assert a == b


def test_parallel_matches_serial():
    spec = ExperimentSpec("core_size", SMALL["core_size"], trials=4, seed=2)
    par = ExperimentSpec("core_size", SMALL["core_size"], trials=4, seed=2, workers=2)
    assert run_experiment(spec).to_json(timings=False) == run_experiment(par).to_json(timings=False)


def test_aggregates_recomputable():
    rep = run_experiment(ExperimentSpec("core_size", SMALL["core_size"], trials=3, seed=4))
    v = [r["core_vertices"] for r in rep.records]
    assert rep.aggregates["core_vertices"]["mean"] == pytest.approx(np.mean(v))
    assert rep.aggregates["core_vertices"]["max"] == max(v)
    agg, pred, ver = harness._summarize("core_size", SMALL["core_size"], list(reversed(rep.records)))
    assert agg == rep.aggregates and ver == rep.verdicts


def test_failing_trial_is_recorded():
    # n < k makes every sample fail; the batch still completes
    rep = run_experiment(ExperimentSpec("column_independence", {"n": 2, "k": 3, "m1": 1}, trials=3))
    assert len(rep.records) == 3
    assert all(r["error"].startswith("ValueError") for r in rep.records)
    assert rep.aggregates["trial_errors"] == 3
    assert not rep.passed


def test_even_k_row_sum_checked():
    rep = run_experiment(ExperimentSpec("column_independence", {"n": 300, "k": 4, "m1": 60}, trials=2))
    assert all(r["row_sum_zero"] for r in rep.records)
    assert rep.verdicts["even_k_row_sum_zero"]["pass"]


def test_json_roundtrip_byte_identical(tmp_path):
    rep = run_experiment(ExperimentSpec("subset_sums", SMALL["subset_sums"], trials=3, seed=5))
    text = emit_report(rep, "json", tmp_path / "r.json")
    assert (tmp_path / "r.json").read_text() == text
    back = ExperimentReport.from_json(json.loads(text))
    assert emit_report(back, "json") == text
    assert json.loads(text)["schema_version"] == harness.SCHEMA_VERSION
    with pytest.raises(ValueError):
        ExperimentReport.from_json({**json.loads(text), "schema_version": 99})


def test_csv_layout():
    rep = run_experiment(ExperimentSpec("subset_sums", SMALL["subset_sums"], trials=4, seed=5))
    text = emit_report(rep, "csv")
    rows = read_csv_records(text)
    assert len(rows) == 4
    assert [int(r["trial"]) for r in rows] == [0, 1, 2, 3]
    assert "# aggregates" in text.splitlines()
    assert text.splitlines()[-1].startswith("# passed = ")
    with pytest.raises(ValueError):
        emit_report(rep, "xml")


def test_io_failure(tmp_path):
    rep = run_experiment(ExperimentSpec("subset_sums", SMALL["subset_sums"], trials=1))
    with pytest.raises(IOFailure):
        emit_report(rep, "json", tmp_path / "missing" / "r.json")


def test_profiles_load():
    profiles = load_profiles()
    assert {"core-k30", "fano-small", "candidate-k3"} <= set(profiles)
    for name, prof in profiles.items():
        assert prof["kind"] in harness.KINDS, name
    spec = spec_from_profile("fano-small", trials=2, overrides={"n": 500})
    assert spec.trials == 2 and spec.params["n"] == 500 and spec.params["k"] == 9
    with pytest.raises(KeyError):
        spec_from_profile("nope")


def test_exact_match_probability_sums_to_candidate_rate():
    sizes = [5, 4, 0, 3, 1, 6, 2, 4]
    large = np.array([s >= 2 for s in sizes])
    dvals = [0] * 8  # unused by the total
    total = sum(harness.exact_match_probability(sizes, large, list(range(8))[::-1], 3, t) for t in range(8))
    cand = math.comb(sum(s for s, l in zip(sizes, large) if l), 3) / math.comb(sum(sizes), 3)
    assert total == pytest.approx(cand)
    assert harness.exact_match_probability(sizes, large, dvals, 3, 1) == 0.0
