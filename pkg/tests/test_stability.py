import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from clustab.clustering import Partition, canonical, cluster
from clustab.data import PricePanel, SyntheticSpec, business_dates, synthesize, variations, write_csv
from clustab.distances import compute_distance
from clustab.errors import ConfigError, ValidationError
from clustab.stability import (
    ExperimentError,
    StabilityReport,
    ari,
    ari_matrix,
    contingency,
    mean_correlation_series,
    run_experiment,
    tenor_years,
)
from conftest import vm
from oracles import hubert_arabie, pair_count_ari, same_partition


def part(labels, ids=None):
    ids = ids or [f"a{i}" for i in range(len(labels))]
    return canonical(ids, labels)


def test_contingency_examples():
    p = part([0, 0, 0, 1, 1])
    np.testing.assert_array_equal(contingency(p, p), [[3, 0], [0, 2]])
    np.testing.assert_array_equal(contingency(part([0] * 4), part([0, 1, 2, 3])), [[1, 1, 1, 1]])
    ids = ["a", "b", "c", "d"]
    np.testing.assert_array_equal(contingency(part([0, 0, 1, 1], ids), part([0, 1, 0, 1], ids)), [[1, 1], [1, 1]])


def test_contingency_rejects_other_assets():
    with pytest.raises(ValidationError, match="different assets"):
        contingency(part([0, 1], ["a", "b"]), part([0, 1], ["a", "c"]))
    with pytest.raises(ValidationError, match="order"):
        contingency(part([0, 1], ["a", "b"]), part([0, 1], ["b", "a"]))


def test_ari_hand_example():
    p = part([0, 0, 0, 1, 1, 1])
    q = part([0, 0, 1, 0, 1, 1])
    np.testing.assert_array_equal(contingency(p, q), [[2, 1], [1, 2]])
    assert ari(p, q) == pytest.approx(-1 / 9, abs=1e-12)
    assert hubert_arabie([[2, 1], [1, 2]]) == pytest.approx(-1 / 9, abs=1e-15)


def test_ari_degenerate_cases():
    singles = part(list(range(5)))
    one = part([0] * 5)
    assert ari(singles, singles) == 1.0
    assert ari(one, one) == 1.0
    assert ari(singles, one) == 0.0
    with pytest.raises(ValidationError):
        ari(part([0]), part([0]))


@pytest.mark.filterwarnings("ignore::UserWarning")
@pytest.mark.parametrize("seed", range(30))
def test_ari_against_pair_counts_and_sklearn(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 30))
    a = rng.integers(0, rng.integers(1, n + 1), n)
    b = rng.integers(0, rng.integers(1, n + 1), n)
    p, q = part(a), part(b)
    value = ari(p, q)
    assert value == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)
    reference = pair_count_ari(a, b)
    if reference is not None:
        assert value == pytest.approx(reference, abs=1e-12)


labelings = st.integers(2, 12).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 4), min_size=n, max_size=n), st.lists(st.integers(0, 4), min_size=n, max_size=n))
)


@settings(max_examples=200, deadline=None)
@given(labelings, st.permutations(range(5)))
def test_ari_symmetry_and_relabel_invariance(pair, perm):
    a, b = pair
    p, q = part(a), part(b)
    assert ari(p, q) == ari(q, p)
    sub = [x for x in perm if x < p.k]  # a permutation of 0..k-1
    relabeled = Partition(p.asset_ids, tuple(sub[x] for x in p.labels))
    assert ari(relabeled, q) == ari(p, q)
    # canonical() itself relabels arbitrary label values
    assert ari(part([x * 7 + 3 for x in a]), q) == ari(p, q)
    assert -1.0 <= ari(p, q) <= 1.0


@settings(max_examples=300, deadline=None)
@given(labelings)
def test_ari_one_iff_identical(pair):
    a, b = pair
    assert (ari(part(a), part(b)) == 1.0) == same_partition(a, b)


def test_ari_null_calibration():
    rng = np.random.default_rng(2024)
    values = [
        ari(part(rng.integers(0, 16, 100)), part(rng.integers(0, 16, 100)))
        for _ in range(1000)
    ]
    assert abs(np.mean(values)) < 0.02


def test_ari_matrix_uses_common_assets():
    p = part([0, 0, 1, 1], ["a", "b", "c", "d"])
    q = part([0, 0, 1], ["a", "c", "d"])
    m = ari_matrix([p, q, p])
    np.testing.assert_array_equal(np.diag(m), 1)
    np.testing.assert_array_equal(m, m.T)
    assert m[0, 1] == ari(p.restrict(["a", "c", "d"]), q)


SYN = {"n_assets": 24, "n_days": 400, "n_clusters": 3, "cluster_factor_weight": 0.8, "idiosyncratic_sigma": 0.3, "seed": 3}


def config(**overrides):
    cfg = {
        "experiment": "t",
        "input": {"synthetic": dict(SYN)},
        "distance": {"method": "pearson"},
        "clustering": {"k": 3},
        "perturbation": {"type": "odd_even"},
    }
    cfg.update(overrides)
    return cfg


def test_full_window_gives_single_part():
    report = run_experiment(config(perturbation={"type": "sliding_window", "params": {"window": 399, "step": 1}}))
    assert report.labels == ["win@0"]
    np.testing.assert_array_equal(report.ari, [[1.0]])


def test_noop_perturbation_matches_direct_pipeline():
    report = run_experiment(config(distance={"method": "gnpr"}, perturbation={"type": "none"}))
    panel, _ = synthesize(SyntheticSpec(**SYN))
    direct = cluster(compute_distance(variations(panel, "diff"), "gnpr"), 3)
    assert list(report.partitions.values()) == [direct]


def test_preprocessing_default_and_override():
    a = run_experiment(config(perturbation={"type": "none"}))
    panel, _ = synthesize(SyntheticSpec(**SYN))
    logd = compute_distance(variations(panel, "log_diff"), "pearson")
    np.testing.assert_allclose(a.distances["full"].values, logd.values)
    b = run_experiment(config(perturbation={"type": "none"}, preprocessing={"kind": "diff"}))
    diff = compute_distance(variations(panel, "diff"), "pearson")
    np.testing.assert_allclose(b.distances["full"].values, diff.values)


def test_report_deterministic_and_round_trips():
    cfg = config()
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a.dumps() == b.dumps()
    payload = json.loads(a.dumps())
    assert set(payload) >= {"experiment", "distance", "clustering", "parts", "partitions", "ari", "provenance"}
    assert payload["clustering"] == {"linkage": "wpgma", "k": 3}
    assert payload["provenance"]["seed"] == 3
    assert len(payload["provenance"]["input_hash"]) == 64
    assert StabilityReport.from_json(payload).dumps() == a.dumps()
    m = a.ari
    np.testing.assert_array_equal(m, m.T)
    assert set(a.ground_truth_ari) == {"odd", "even"}


@pytest.mark.parametrize(
    "perturbation, labels",
    [
        ({"type": "regimes", "params": {"breakpoints": [100, 250]}}, 3),
        ({"type": "heart_tails"}, 2),
        ({"type": "multiscale", "params": {"scales": [1, 2, 4]}}, 3),
        ({"type": "sliding_window", "params": {"window": 100, "step": 50}}, 6),
    ],
)
def test_time_perturbations(perturbation, labels):
    report = run_experiment(config(perturbation=perturbation))
    assert len(report.partitions) == labels
    assert report.ari.shape == (labels, labels)


def test_population_resample_compares_on_common_assets():
    report = run_experiment(
        config(perturbation={"type": "population_resample", "params": {"keep_fraction": 0.75, "draws": 3, "seed": 1}})
    )
    assert report.labels == ["full", "draw@0", "draw@1", "draw@2"]
    assert [p.n for p in report.partitions.values()] == [24, 18, 18, 18]
    assert "asset_ids" not in report.parts[0]
    assert len(report.parts[1]["asset_ids"]) == 18
    restored = StabilityReport.from_json(report.to_json())
    assert restored.partitions == report.partitions


def test_population_augment(tmp_path):
    panel, _ = synthesize(SyntheticSpec(**SYN))
    path = tmp_path / "p.csv"
    write_csv(panel, path)
    lines = path.read_text().splitlines()
    # blank the first 50 prices of the last asset
    for i in range(1, 51):
        cells = lines[i].split(",")
        cells[-1] = ""
        lines[i] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    cfg = {
        "experiment": "aug",
        "input": {"csv": "p.csv"},
        "distance": {"method": "pearson"},
        "clustering": {"k": 3},
        "perturbation": {"type": "population_augment"},
    }
    report = run_experiment(cfg, tmp_path)
    assert report.labels == ["complete", "augmented"]
    assert report.provenance["imputed"] == [panel.asset_ids[-1]]
    assert report.partitions["augmented"].n == 24
    assert report.ari[0, 1] == 1.0


def maturity_files(tmp_path, inverted=False):
    rng = np.random.default_rng(0)
    n, t = 8, 30
    dates = business_dates("2010-01-04", t)
    base = np.where(np.arange(n) < 4, 80.0, 400.0)[:, None] * np.exp(rng.normal(0, 0.01, (n, t)))
    slope = np.where(np.arange(n) < 4, 0.15, -0.02)[:, None]
    ids = tuple(f"c{i}" for i in range(n))
    for m in ("1y", "3y", "5y"):
        years = tenor_years(m)
        spreads = base * (1 + slope * years)
        if inverted and m == "5y":
            spreads[0] = spreads[0] / 10
        write_csv(PricePanel(ids, dates, spreads, m), tmp_path / f"cds_{m}.csv")
    return ids


def test_maturities_and_term_structure(tmp_path):
    maturity_files(tmp_path)
    base = {"experiment": "m", "input": {"maturities": "cds"}, "distance": {"method": "pearson"}, "clustering": {"k": 2}}
    rep = run_experiment({**base, "perturbation": {"type": "maturities"}}, tmp_path)
    assert rep.labels == ["1y", "3y", "5y"]
    ts = run_experiment({**base, "perturbation": {"type": "term_structure", "params": {"n_dates": 3}}}, tmp_path)
    assert ts.distance["method"] == "term_structure"
    assert len(ts.labels) == 3
    for p in ts.partitions.values():
        assert p.labels == (0,) * 4 + (1,) * 4
    np.testing.assert_array_equal(ts.ari, np.ones((3, 3)))


def test_term_structure_error_names_part_and_asset(tmp_path):
    maturity_files(tmp_path, inverted=True)
    cfg = {
        "experiment": "m",
        "input": {"maturities": "cds"},
        "distance": {"method": "pearson"},
        "clustering": {"k": 2},
        "perturbation": {"type": "term_structure", "params": {"n_dates": 2}},
    }
    with pytest.raises(ExperimentError, match="2010-01-04.*c0"):
        run_experiment(cfg, tmp_path)
    cfg["perturbation"]["params"]["floor"] = 1e-6
    assert len(run_experiment(cfg, tmp_path).labels) == 2


def test_part_errors_are_annotated():
    with pytest.raises(ExperimentError, match="odd"):
        run_experiment(config(clustering={"k": 30}))


@pytest.mark.parametrize(
    "mutate",
    [
        lambda c: c.pop("distance"),
        lambda c: c.update(distance={"method": "cosine"}),
        lambda c: c.update(perturbation={"type": "sliding_window", "params": {"window": 10}}),
        lambda c: c.update(perturbation={"type": "odd_even", "params": {"foo": 1}}),
        lambda c: c.update(perturbation={"type": "maturities"}),
        lambda c: c.update(extra=1),
    ],
)
def test_bad_configs(mutate):
    cfg = config()
    mutate(cfg)
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_mean_correlation_identical_rows():
    x = np.random.default_rng(0).normal(size=200)
    series = mean_correlation_series(vm([x, x]), 50, 25)
    assert [s.start for s in series] == [0, 25, 50, 75, 100, 125, 150]
    assert all(s.value == pytest.approx(1.0) and s.n_pairs == 1 for s in series)


def test_mean_correlation_independent_rows():
    rows = np.random.default_rng(1).normal(size=(6, 10_000))
    (s,) = mean_correlation_series(vm(rows), 10_000, 1)
    assert abs(s.value) <= 0.02
    assert s.n_pairs == 15


def test_mean_correlation_skips_constant_rows():
    rng = np.random.default_rng(2)
    rows = rng.normal(size=(3, 20))
    rows[2, :10] = 1.0
    first, second = mean_correlation_series(vm(rows), 10, 10)
    assert first.n_pairs == 1 and second.n_pairs == 3
    rows[:2, :10] = 0.0
    with pytest.raises(ValidationError):
        mean_correlation_series(vm(rows), 10, 10)


def test_mean_correlation_rises_in_stress():
    spec = SyntheticSpec(
        n_assets=30, n_days=1200, n_clusters=3, common_factor_weight=0.1, cluster_factor_weight=0.2,
        idiosyncratic_sigma=0.4, stress_segments=((400, 700),), stress_factor_weight=0.8, seed=5,
    )
    panel, _ = synthesize(spec)
    series = mean_correlation_series(variations(panel, "diff"), 50, 10)
    inside = [s.value for s in series if s.start >= 400 and s.end <= 700]
    outside = [s.value for s in series if s.end <= 400 or s.start >= 700]
    assert np.mean(inside) > np.mean(outside) + 0.2
