import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rds_lab.blockmodel import BlockModel, block_process_from
from rds_lab.estimators import (
    DegreesUnavailable,
    EstimateRecord,
    EstimatorError,
    GlsWeights,
    build_sigma_blockmodel,
    gls_closed_form_2block,
    gls_general,
    gls_ipw,
    gls_vh,
    gls_weights_closed_form,
    ipw,
    records_to_csv,
    sample_mean,
    sbm_fgls,
    vh,
)
from rds_lab.sampler import RdsSample
from rds_lab.spectral import decompose
from rds_lab.tree import OffspringLaw, grow_to_size, m_tree


def make_sample(states, traits, degrees=None, tree=None):
    states = np.asarray(states)
    if tree is None:
        n = states.shape[0]
        parent = np.array([-1] + [0] * (n - 1))
        gen = np.array([0] + [1] * (n - 1))
        from rds_lab.tree import ReferralTree

        tree = ReferralTree(parent=parent, generation=gen)
    return RdsSample(
        tree=tree,
        states=states,
        traits=np.asarray(traits, dtype=float),
        seed_used=int(states[0]),
        with_replacement=True,
        degrees=None if degrees is None else np.asarray(degrees, dtype=float),
    )


def test_sample_mean():
    rec = sample_mean(make_sample([0, 1, 0], [1.0, 0.0, 1.0]))
    assert rec.kind == "mean"
    assert abs(rec.value - 2 / 3) < 1e-15
    assert rec.n == 3 and rec.t == 1


def test_ipw_hand_value():
    s = make_sample([0, 1, 2], [1.0, 0.0, 1.0], degrees=[2.0, 1.0, 4.0])
    rec = ipw(s, mean_degree=2.0)
    assert abs(rec.value - 0.5) < 1e-15


def test_ipw_needs_degrees_and_mean_degree():
    with pytest.raises(DegreesUnavailable):
        ipw(make_sample([0, 1], [1.0, 0.0]), mean_degree=2.0)
    with pytest.raises(EstimatorError):
        ipw(make_sample([0, 1], [1.0, 0.0], degrees=[1.0, 1.0]))


def test_vh_hand_value():
    s = make_sample([0, 1, 2], [1.0, 0.0, 1.0], degrees=[2.0, 1.0, 4.0])
    rec = vh(s)
    assert abs(rec.value - 3 / 7) < 1e-15
    with pytest.raises(DegreesUnavailable):
        vh(make_sample([0, 1], [1.0, 0.0]))


def test_closed_form_weights_on_three_vertex_star():
    w = gls_weights_closed_form(m_tree(2, 1), 0.5)
    assert np.allclose(w.weights, [0.2, 0.4, 0.4], atol=1e-15)
    assert w.source == "closed_form"
    assert abs(w.weights.sum() - 1.0) < 1e-12


def test_closed_form_weights_zero_lambda_are_uniform():
    w = gls_weights_closed_form(m_tree(2, 2), 0.0)
    assert np.allclose(w.weights, 1 / 7)


def test_gls_closed_form_value():
    s = make_sample([0, 1, 1], [1.0, 0.0, 0.0])
    rec = gls_closed_form_2block(s, 0.5)
    assert abs(rec.value - 0.2) < 1e-15
    assert rec.kind == "gls"


def test_sigma_entries_match_kernel(dec_87):
    y = np.array([1.0, 0.0])
    tree = m_tree(2, 1)
    sigma = build_sigma_blockmodel(tree, dec_87, y)
    c2sq = 0.24  # Var_pi(y) for pi = (0.6, 0.4), binary y
    assert abs(sigma[0, 0] - c2sq) < 1e-12
    assert abs(sigma[0, 1] - c2sq * 0.5) < 1e-12
    assert abs(sigma[1, 2] - c2sq * 0.25) < 1e-12


def test_general_solve_matches_closed_form(dec_87):
    tree = m_tree(3, 2)
    y = np.array([1.0, 0.0])
    s = make_sample([0] * tree.size, [1.0] * tree.size, tree=tree)
    sigma = build_sigma_blockmodel(tree, dec_87, y)
    w, rec = gls_general(s, sigma)
    wc = gls_weights_closed_form(tree, dec_87.lambda2)
    assert np.max(np.abs(w.weights - wc.weights)) < 1e-12
    assert w.source == "general_solve"
    assert rec.kind == "gls"


def test_gls_general_validates_sigma(dec_87):
    tree = m_tree(2, 1)
    s = make_sample([0, 1, 1], [1.0, 0.0, 0.0], tree=tree)
    with pytest.raises(EstimatorError):
        gls_general(s, np.eye(4))
    bad = np.eye(3)
    bad[0, 1] = 0.5
    with pytest.raises(EstimatorError):
        gls_general(s, bad)
    with pytest.raises(EstimatorError):
        gls_general(s, -np.eye(3))


def test_gls_ipw_and_gls_vh_hand_values():
    s = make_sample([0, 1, 2], [1.0, 0.0, 0.0], degrees=[2.0, 1.0, 1.0])
    rec = gls_ipw(s, lambda2=0.5, mean_degree=2.0)
    assert abs(rec.value - 0.2) < 1e-15  # 0.2*1*2/2
    rec2 = gls_vh(s, lambda2=0.5)
    assert abs(rec2.value - 1 / 9) < 1e-15  # 0.1 / 0.9


def test_gls_variants_need_exactly_one_correlation_input(dec_87):
    s = make_sample([0, 1, 1], [1.0, 0.0, 0.0], degrees=[2.0, 1.0, 1.0])
    with pytest.raises(EstimatorError):
        gls_vh(s)
    sigma = build_sigma_blockmodel(s.tree, dec_87, np.array([1.0, 0.0]))
    with pytest.raises(EstimatorError):
        gls_vh(s, lambda2=0.5, sigma=sigma)
    with pytest.raises(DegreesUnavailable):
        gls_vh(make_sample([0, 1, 1], [1.0, 0.0, 0.0]), lambda2=0.5)


def test_sbm_fgls_hand_example():
    tree = m_tree(2, 2)
    states = np.array([0, 0, 1, 0, 0, 1, 0])
    traits = np.array([1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0])
    s = RdsSample(tree=tree, states=states, traits=traits, seed_used=0, with_replacement=True)
    rec = sbm_fgls(s)
    assert abs(rec.detail["p_hat"] - 2 / 3) < 1e-15
    assert abs(rec.detail["q_hat"] - 0.5) < 1e-15
    assert abs(rec.detail["lambda2_hat"] - 1 / 6) < 1e-15
    assert abs(rec.value - 27 / 37) < 1e-12


def test_sbm_fgls_input_guards():
    with pytest.raises(EstimatorError):
        sbm_fgls(make_sample([0, 1], [1.0, 0.0]))
    s = make_sample([0, 1, 2], [1.0, 2.0, 3.0])
    with pytest.raises(EstimatorError):
        sbm_fgls(s)


def test_record_validation(two_block_87):
    with pytest.raises(EstimatorError):
        EstimateRecord(kind="bogus", value=1.0, n=3, t=1, seed_used=0)
    with pytest.raises(EstimatorError):
        EstimateRecord(kind="mean", value=float("nan"), n=3, t=1, seed_used=0)


def test_gls_weights_must_sum_to_one():
    with pytest.raises(EstimatorError):
        GlsWeights(weights=np.array([0.5, 0.6]), source="closed_form")


def test_records_csv_header():
    recs = [sample_mean(make_sample([0, 1], [1.0, 0.0]))]
    body = records_to_csv(recs)
    assert body.splitlines()[0] == "replicate,estimator,adjustment,t,n,seed_state,value"
    assert body.splitlines()[1].startswith("-1,mean,none,1,2,0,")


@settings(max_examples=25, deadline=None)
@given(
    st.floats(min_value=0.55, max_value=0.95),
    st.floats(min_value=0.55, max_value=0.95),
    st.integers(min_value=2, max_value=24),
    st.integers(min_value=0, max_value=10_000),
)
def test_closed_form_equals_general_solve_on_random_trees(p, q, size, seed):
    rng = np.random.default_rng(seed)
    tree = grow_to_size(OffspringLaw.custom({1: 0.5, 2: 0.3, 3: 0.2}), size, rng)
    dec = decompose(block_process_from(BlockModel.two_block(p, q)))
    sigma = build_sigma_blockmodel(tree, dec, np.array([1.0, 0.0]))
    s = make_sample([0] * size, [0.0] * size, tree=tree)
    w, _ = gls_general(s, sigma)
    wc = gls_weights_closed_form(tree, dec.lambda2)
    assert np.max(np.abs(w.weights - wc.weights)) < 1e-9
