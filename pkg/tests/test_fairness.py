"""Pair-pool contracts, discrimination estimates, and group metrics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairtrim.data import drop_sensitive, load_dataset
from fairtrim.errors import MissingGroup, RangeError, SensitiveAbsent
from fairtrim.fairness import (
    SimilarityConfig,
    accuracy,
    build_influence_set,
    discriminatory_pairs,
    estimate_discrim,
    generate_similar_pairs,
    metrics_report,
    parity_from_predictions,
    statistical_parity_difference,
)
from fairtrim.model import Hyperparameters, mask_sensitive, predict_batch, train
from fairtrim.synthetic import toy_schema, write_toy_loans


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("toy")
    write_toy_loans(tmp / "d.csv", tmp / "s.json")
    return load_dataset(tmp / "d.csv", toy_schema())


@pytest.fixture(scope="module")
def trained(toy):
    hp = Hyperparameters(8, 4, 7, epochs=2000, learning_rate=0.3, weight_init_seed=1)
    return train(toy, hp)


def pair_invariants(d, pool, lam):
    sens = d.sensitive_block
    numeric_cols = [c.start for c in d.encoding.codecs if c.kind == "numeric"]
    cat_blocks = [
        (c.start, c.stop) for c in d.encoding.codecs
        if c.kind == "categorical" and (c.start, c.stop) != (sens.start, sens.stop)
    ]
    a, b = pool.first, pool.second
    # sensitive one-hot always flipped
    np.testing.assert_array_equal(a[:, sens], b[:, sens][:, ::-1])
    assert not np.any(np.all(a[:, sens] == b[:, sens], axis=1))
    # one-hot blocks are valid (exactly one 1)
    for start, stop in cat_blocks + [(sens.start, sens.stop)]:
        for m in (a, b):
            block = m[:, start:stop]
            np.testing.assert_array_equal(block.sum(axis=1), 1.0)
            assert set(np.unique(block)) <= {0.0, 1.0}
        # non-sensitive categorical values match across the pair
        if (start, stop) != (sens.start, sens.stop):
            np.testing.assert_array_equal(a[:, start:stop], b[:, start:stop])
    # numerics inside [0,1] and within lam of each other
    for j in numeric_cols:
        for m in (a, b):
            assert np.all((m[:, j] >= 0.0) & (m[:, j] <= 1.0))
        if lam == 0.0:
            np.testing.assert_array_equal(a[:, j], b[:, j])
        else:
            assert np.max(np.abs(a[:, j] - b[:, j])) <= lam + 1e-12


# --- pool contracts ----------------------------------------------------------

def test_pool_size_lambda_zero(toy):
    pool = generate_similar_pairs(toy, SimilarityConfig(lam=0.0, pool_multiplier=100))
    assert len(pool) == 100 * len(toy)  # one companion per seed
    pair_invariants(toy, pool, 0.0)


def test_pool_size_lambda_positive(toy):
    pool = generate_similar_pairs(toy, SimilarityConfig(lam=0.05, pool_multiplier=100))
    assert len(pool) == 200 * len(toy)  # two companions per seed
    pair_invariants(toy, pool, 0.05)


def test_companion_override(toy):
    cfg = SimilarityConfig(lam=0.1, pool_multiplier=10, companions_per_seed=3)
    assert len(generate_similar_pairs(toy, cfg)) == 30 * len(toy)


def test_lambda_zero_companions_copy_numerics_bitwise(toy):
    pool = generate_similar_pairs(toy, SimilarityConfig(lam=0.0, pool_multiplier=50))
    assert pool.first[:, 0].tobytes() == pool.second[:, 0].tobytes()
    assert pool.first[:, 1].tobytes() == pool.second[:, 1].tobytes()


def test_pool_deterministic_per_call_index(toy):
    cfg = SimilarityConfig(lam=0.0, pool_multiplier=5, rng_seed=3)
    a = generate_similar_pairs(toy, cfg, call_index=2)
    b = generate_similar_pairs(toy, cfg, call_index=2)
    c = generate_similar_pairs(toy, cfg, call_index=3)
    assert a.first.tobytes() == b.first.tobytes()
    assert a.first.tobytes() != c.first.tobytes()
    d_ = generate_similar_pairs(toy, cfg, call_index=None)
    assert d_.first.tobytes() != a.first.tobytes()


def test_pool_requires_sensitive(toy):
    with pytest.raises(SensitiveAbsent):
        generate_similar_pairs(drop_sensitive(toy), SimilarityConfig())


def test_similarity_config_validation():
    with pytest.raises(RangeError):
        SimilarityConfig(lam=-0.1)
    with pytest.raises(RangeError):
        SimilarityConfig(lam=1.5)
    with pytest.raises(RangeError):
        SimilarityConfig(pool_multiplier=0)


@settings(max_examples=12, deadline=None)
@given(
    lam=st.one_of(st.just(0.0), st.floats(0.01, 0.5)),
    seed=st.integers(0, 2**31 - 1),
)
def test_pair_invariants_property(toy, lam, seed):
    cfg = SimilarityConfig(lam=lam, pool_multiplier=3, rng_seed=seed)
    pool = generate_similar_pairs(toy, cfg)
    expected = 3 * len(toy) * (1 if lam == 0.0 else 2)
    assert len(pool) == expected
    pair_invariants(toy, pool, lam)


def test_pair_views(toy):
    pool = generate_similar_pairs(toy, SimilarityConfig(pool_multiplier=1))
    p = pool.pair(0)
    np.testing.assert_array_equal(p.first, pool.first[0])
    assert len(pool.pairs()) == len(pool)


# --- discrimination ----------------------------------------------------------

def test_discriminatory_pairs_subset_semantics(toy, trained):
    pool = generate_similar_pairs(toy, SimilarityConfig(pool_multiplier=20))
    discm = discriminatory_pairs(trained, pool)
    l1, _ = predict_batch(trained, discm.first)
    l2, _ = predict_batch(trained, discm.second)
    assert np.all(l1 != l2)
    rate = estimate_discrim(trained, toy, SimilarityConfig(pool_multiplier=20))
    # same stream as generate(call_index=0)? estimate uses its own stream;
    # just sanity: both in [0,1] and consistent with the DP count of its pool
    assert 0.0 <= rate <= 1.0


def test_estimate_discrim_matches_manual_count(toy, trained):
    cfg = SimilarityConfig(pool_multiplier=10, rng_seed=5)
    pool = generate_similar_pairs(toy, cfg, call_index=4)
    l1, _ = predict_batch(trained, pool.first)
    l2, _ = predict_batch(trained, pool.second)
    assert estimate_discrim(trained, toy, cfg, call_index=4) == pytest.approx(
        float(np.mean(l1 != l2))
    )


def test_influence_set_members_are_lower_confidence(toy, trained):
    pool = generate_similar_pairs(toy, SimilarityConfig(pool_multiplier=30))
    discm = discriminatory_pairs(trained, pool)
    iset = build_influence_set(trained, discm)
    assert len(iset) == len(discm)
    _, c1 = predict_batch(trained, discm.first)
    _, c2 = predict_batch(trained, discm.second)
    _, c_sel = predict_batch(trained, iset.features)
    np.testing.assert_allclose(c_sel, np.minimum(c1, c2))
    # chosen labels are the model's own predictions on the chosen member
    l_sel, _ = predict_batch(trained, iset.features)
    np.testing.assert_array_equal(l_sel, iset.labels)


def test_masked_model_never_discriminates_lambda_zero(toy):
    # hard guarantee: identical numerics + masked sensitive block
    # means bit-identical inputs to the inner model across each pair
    hp = Hyperparameters(8, 4, 7, epochs=500, learning_rate=0.3, weight_init_seed=0)
    inner = train(drop_sensitive(toy), hp)
    wrapped = mask_sensitive(inner, toy)
    for seed in range(5):
        rate = estimate_discrim(
            wrapped, toy, SimilarityConfig(lam=0.0, pool_multiplier=100, rng_seed=seed)
        )
        assert rate == 0.0


# --- accuracy and parity -----------------------------------------------------

def test_accuracy_range_and_value(toy, trained):
    acc = accuracy(trained, toy)
    labels, _ = predict_batch(trained, toy.encoded)
    assert acc == pytest.approx(float(np.mean(labels == toy.labels)))


def test_parity_oracle_on_ground_truth_labels(toy):
    # hand count: whites approve 2/3, blacks approve 1/4
    gap = parity_from_predictions(toy.labels, toy.group_values, toy.sensitive_categories)
    assert gap == pytest.approx(abs(2 / 3 - 1 / 4), abs=1e-12)
    assert gap == pytest.approx(0.416667, abs=1e-6)


def test_parity_of_constant_predictor_is_zero(toy):
    assert parity_from_predictions(
        np.ones(len(toy), dtype=int), toy.group_values, toy.sensitive_categories
    ) == 0.0


def test_parity_missing_group_raises(toy):
    whites_only = toy.subset(np.array([0, 2, 4]))
    with pytest.raises(MissingGroup):
        parity_from_predictions(
            np.ones(3, dtype=int), whites_only.group_values, whites_only.sensitive_categories
        )


def test_parity_works_after_drop_sensitive(toy):
    hp = Hyperparameters(8, 4, 7, epochs=200, weight_init_seed=0)
    dropped = drop_sensitive(toy)
    m = train(dropped, hp)
    gap = statistical_parity_difference(m, dropped)
    assert 0.0 <= gap <= 1.0


def test_metrics_report_keys(toy, trained):
    rep = metrics_report(trained, toy, SimilarityConfig(pool_multiplier=5))
    assert set(rep) == {
        "individual_discrimination", "pool_pairs", "discriminatory_pairs",
        "accuracy", "statistical_parity_difference",
    }
    assert rep["pool_pairs"] == 5 * len(toy)
    assert rep["statistical_parity_difference"] is not None
