"""Small worked cases with hand-derived expected values, one per behaviour."""
import io
import json
import math

import numpy as np
import pytest

from crashml.cart import GrowConfig, grow_tree, predict_tree
from crashml.cli import cmd_generate
from crashml.config import RunConfig
from crashml.counterfactual import counts_mode_replication, expand_lane_widths
from crashml.data_model import (AggregatedSection, Dataset, FeatureMeta, RateParameters,
                                aggregate_sections, crash_rate, ingest_csv, make_dataset,
                                train_test_split)
from crashml.ensemble import (ForestModel, curve_from_model, train_forest, train_lsboost,
                              variable_importance)
from crashml.metrics import HistogramSpec, adequacy_check, histogram_intersection, mae, mse
from crashml.stats import (boxplot_summary, chi_square_sf, format_p, nemenyi, percent_changes,
                           studentized_range_sf)
from crashml.synthetic import generate_synthetic


def _section(**kw):
    base = dict(section_number="1", crash_count=10.0, section_length=1.0, shoulder=0,
                speed_limit=35.0, on_street_parking=0, one_way=0, num_lanes=2,
                road_class="collector", median=0, lane_width=11.0, cbd=0, aadt_per_lane=5000.0)
    base.update(kw)
    return AggregatedSection(**base)


def _one_feature(x, y):
    return Dataset(np.asarray(x, float)[:, None], y, (FeatureMeta("x"),))


# data_model ---------------------------------------------------------------

def test_exponent_zero_example():
    assert crash_rate(2, 2.0, 3, 1234.0, RateParameters(0.0)) == 1e6


def test_dataset_rows_and_rate_response():
    rate = make_dataset([_section()], "rate")
    counts = make_dataset([_section()], "counts")
    assert rate.X.shape == (1, 8) and counts.X.shape == (1, 11)
    assert rate.y[0] == pytest.approx(56.25559318331926, rel=1e-12)


def test_split_sizes_and_seed_dependence():
    small = make_dataset([_section(section_number=str(i)) for i in range(10)], "counts")
    train, test = train_test_split(small, 0.8, 1)
    assert (len(train), len(test)) == (8, 2)
    big = make_dataset([_section(section_number=str(i)) for i in range(1000)], "counts")
    assert train_test_split(big, 0.8, 1)[0].ids != train_test_split(big, 0.8, 2)[0].ids


def test_aggregate_identity_and_independence():
    recs = generate_synthetic(2, seed=3, years=1)
    out = aggregate_sections(recs)
    assert [s.years_observed for s in out] == [1, 1]
    assert out[0].crash_count == recs[0].crash_count
    assert aggregate_sections(recs[:1])[0] == out[0]


def test_generator_record_count_and_zero_noise():
    assert len(generate_synthetic(5, seed=1, years=4)) == 20
    recs = generate_synthetic(300, {9: 1.0, 10: 1.0, 11: 1.0, 12: 1.0}, noise_sd=0.0, seed=2,
                              years=1)
    seen = {}
    for r in recs:
        key = (r.section_length, r.shoulder, r.speed_limit, r.on_street_parking, r.one_way,
               r.num_lanes, r.road_class, r.median, r.lane_width, r.cbd, r.aadt_per_lane)
        assert seen.setdefault(key, r.crash_count) == r.crash_count


def test_generator_latent_means_follow_planted_map():
    effect = {9: 1.1, 10: 1.3, 11: 0.7, 12: 0.9}
    _, truth = generate_synthetic(2000, effect, seed=4, years=1, return_truth=True)
    means = {w: truth.section_rate[truth.section_lane_width == w].mean() for w in effect}
    assert sorted(means, key=lambda w: -means[w]) == [10, 9, 12, 11] == truth.ordering()


# cart ---------------------------------------------------------------------

def test_single_row_and_depth_zero():
    assert grow_tree([[1.0]], [4.0]).value.tolist() == [4.0]
    tree = grow_tree([[1.0], [2.0], [3.0]], [1.0, 2.0, 6.0], GrowConfig(max_depth=0))
    assert tree.n_nodes == 1 and tree.value[0] == 3.0


def test_stump_routing():
    tree = grow_tree([[1.0], [2.0], [3.0], [4.0]], [0.0, 0.0, 10.0, 10.0], GrowConfig(min_leaf=1))
    assert tree.depth == 1 and sorted(tree.value[tree.leaves]) == [0.0, 10.0]
    assert predict_tree(tree, [1.0]) == 0.0
    assert predict_tree(tree, [100.0]) == 10.0
    leaf = grow_tree([[0.0], [1.0]], [7.5, 7.5])
    assert predict_tree(leaf, [-3.0]) == 7.5


# ensemble -----------------------------------------------------------------

def test_forest_on_constant_data_and_averaging():
    const = _one_feature([1, 2, 3, 4, 5, 6], np.full(6, 3.0))
    f = train_forest(const, 1, seed=0)
    assert f.trees[0].n_nodes == 1 and f.predict([[9.0]])[0] == 3.0
    trees = tuple(grow_tree([[0.0]], [v]) for v in (1.0, 2.0, 6.0))
    model = ForestModel(trees, (np.array([0]),) * 3, GrowConfig(), 0, (FeatureMeta("x"),), 1)
    assert model.predict([[0.0]])[0] == 3.0
    assert model.predict([[0.0]], n_trees=2)[0] == 1.5


def test_oob_fraction():
    data = _one_feature(np.arange(200), np.arange(200.0))
    f = train_forest(data, 50, seed=8)
    frac = np.mean([len(o) / 200 for o in f.oob])
    assert abs(frac - (1 - 1 / 200) ** 200) < 0.05


def test_boost_traces():
    data = _one_feature([0, 1], [0.0, 10.0])
    cfg = GrowConfig(min_leaf=1)
    full = train_lsboost(data, 5, 1.0, cfg)
    assert full.initial_value == 5.0
    assert full.predict(data.X).tolist() == [0.0, 10.0]
    assert all(t.n_nodes == 1 and t.value[0] == 0.0 for t in full.stages[1:])
    half = train_lsboost(data, 4, 0.5, cfg)
    for m in range(1, 5):
        expect = [5 - 5 * (1 - 0.5 ** m), 5 + 5 * (1 - 0.5 ** m)]
        assert half.predict(data.X, n_stages=m) == pytest.approx(expect, abs=1e-12)
    flat = train_lsboost(data, 1, 1.0, GrowConfig(max_depth=0))
    assert flat.predict(data.X).tolist() == [5.0, 5.0]


def test_importance_of_unused_and_single_features():
    rng = np.random.default_rng(0)
    n = 200
    x0 = rng.normal(size=n)
    y = 10 + 3 * (x0 > 0)
    X = np.column_stack([x0, np.zeros(n)])  # second feature is constant, never split
    data = Dataset(X, y, (FeatureMeta("a"), FeatureMeta("b")))
    rep = variable_importance(train_forest(data, 60, GrowConfig(min_leaf=5, mtry=2)), data)
    assert rep.purity[1] == 0.0
    assert abs(rep.permutation[1]) <= 3 * rep.permutation_se[1] + 1e-12
    single = _one_feature(x0, np.abs(y + rng.normal(size=n)))
    rep1 = variable_importance(train_forest(single, 30, seed=1), single)
    assert rep1.purity[0] > 0 and rep1.purity_rank == (1,)


def test_curve_arity_and_variance_reduction():
    wins = 0
    for seed in range(100):
        data = make_dataset(aggregate_sections(generate_synthetic(300, seed=seed, years=3)))
        train, test = train_test_split(data, 0.8, seed)
        curve = curve_from_model(train_forest(train, 200, seed=seed), test, [1, 50, 200])
        assert [k for k, _, _ in curve.points] == [1, 50, 200]
        wins += curve.points[-1][2] <= curve.points[0][2]
    assert wins >= 95


# metrics ------------------------------------------------------------------

def test_error_examples():
    assert mae([0, 10], [1, 9]) == 1.0 and mse([0, 10], [1, 9]) == 1.0
    assert mae([5], [2]) == 3.0 and mse([0], [3]) == 9.0


def test_two_bin_intersection():
    # bin counts [3, 1] vs [2, 2]
    spec = HistogramSpec(bins=2, lo=0.0, hi=1.0)
    assert histogram_intersection([0.1, 0.2, 0.3, 0.9], [0.1, 0.2, 0.8, 0.9], spec) == 1.5
    assert histogram_intersection([0.1, 0.2], [0.7, 0.8], spec) == 0.0


def test_perfect_and_swapped_models():
    truth = np.array([1.0, 2.0, 3.0])
    t = adequacy_check(truth, truth, truth + 1)
    assert t.winner == "forest" and t.forest.mse == 0.0
    assert adequacy_check(truth, truth + 1, truth).winner == "boost"


# stats --------------------------------------------------------------------

def test_tails_and_formatting():
    assert chi_square_sf(0.0, 1) == 1.0
    assert studentized_range_sf(0.0, 4) == 1.0
    p = chi_square_sf(786.9, 3)
    assert p < 2.2e-16 and format_p(p) == "< 2.2e-16"
    assert studentized_range_sf(1.96 * math.sqrt(2), 2) == pytest.approx(0.05, abs=1e-4)


def test_identical_groups_give_unit_p():
    g = [1.0, 4.0, 2.0, 8.0]
    pw = nemenyi([g, list(g), [0.5, 9.0, 3.0, 7.0]])
    assert pw.p(1, 0) == pytest.approx(1.0, abs=1e-9)


def test_large_gaps_all_significant():
    rng = np.random.default_rng(1)
    groups = [rng.normal(loc=3 * i, size=30) for i in range(4)]
    assert all(p < 0.05 for _, _, p in nemenyi(groups).cells())


def test_equal_means_give_zero_rows():
    t = percent_changes({9: 4.0, 10: 4.0, 11: 4.0, 12: 4.0}, 4.0)
    assert all(v == 0.0 for _, _, v in t.rows)


def test_boxplot_examples():
    s = boxplot_summary([1, 2, 3, 4, 5])
    assert (s.q1, s.median, s.q3, s.outliers) == (2.0, 3.0, 4.0, ())
    one = boxplot_summary([7.0])
    assert {one.minimum, one.q1, one.median, one.q3, one.maximum} == {7.0}


# counterfactual -------------------------------------------------------------

def test_expansion_sizes():
    data = make_dataset([_section(section_number=str(i), lane_width=9.0 + i % 4)
                         for i in range(5)])
    ex = expand_lane_widths(data)
    assert ex.X.shape[0] == 20
    single = expand_lane_widths(data, (11,))
    col = single.lane_column
    assert np.all(single.X[:, col] == 11.0)
    other = [j for j in range(data.n_features) if j != col]
    assert np.array_equal(single.X[:, other], data.X[:, other])


def test_counts_mode_monotone_and_adjacent_overlap():
    effect = {9: 1.2, 10: 1.2, 11: 0.8, 12: 0.8}
    sections = aggregate_sections(generate_synthetic(1000, effect, seed=21))
    rep, model = counts_mode_replication(sections, "forest", k=100, seed=21)
    assert len(model.features) == 11 and rep.response_mode == "counts"
    m = dict(zip(rep.widths, rep.marginal_means))
    assert min(m[9.0], m[10.0]) > max(m[11.0], m[12.0])
    # widths planted with equal effects are not told apart
    assert rep.pairwise.p(1, 0) > 0.05 and rep.pairwise.p(3, 2) > 0.05


# cli ----------------------------------------------------------------------

def test_generate_is_deterministic(tmp_path):
    cfg = dict(generator_n_sections=100, generator_years=3)
    a = cmd_generate(RunConfig(out=str(tmp_path / "a"), seed=6, **cfg).validate())
    b = cmd_generate(RunConfig(out=str(tmp_path / "b"), seed=6, **cfg).validate())
    assert a == b
    records, _ = ingest_csv(io.StringIO(a["synthetic.csv"]))
    assert len(records) == 300
    truth = json.loads(a["generator_truth.json"])
    assert truth["ordering_high_to_low"] == [10.0, 9.0, 12.0, 11.0]
