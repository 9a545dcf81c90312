import numpy as np
import pytest

from qnnrank.agent import (
    AdamState,
    PolicyShape,
    RankEvaluator,
    SearchConfig,
    SearchState,
    adam_step,
    init_policy,
    policy_logits,
    policy_loss,
    prefix_rewards,
    random_search,
    run_search,
    sample_sequence,
    train_round,
)
from qnnrank.agent.policy import batch_logits, sample_batch
from qnnrank.agent.search import random_sequences
from qnnrank.ansatz import TokenSequence, decode_tokens, encode_gates, chain_blocks
from qnnrank.data import make_dataset
from qnnrank.fisher import effective_rank
from qnnrank.quantum import MeasurementProtocol

TINY = PolicyShape(vocab=4, max_len=3, embed_dim=8, layer_count=1, head_count=2, ff_dim=16)
SMALL = dict(n=2, length=5, dataset_size=4, embed_dim=16, layer_count=1, head_count=2,
             ff_dim=32, threshold=None, window_rounds=5)


@pytest.fixture
def tiny():
    params = init_policy(TINY, np.random.default_rng(0))
    # non-trivial norms and biases so every tensor gets a generic gradient
    rng = np.random.default_rng(1)
    for k, v in params.tensors.items():
        if v.ndim == 1:
            params.tensors[k] = v + 0.3 * rng.normal(size=v.shape)
    return params


def test_policy_gradient_matches_finite_differences(tiny):
    rng = np.random.default_rng(2)
    seqs = np.column_stack([np.zeros(5, dtype=int), rng.integers(0, 4, (5, 2))])
    rewards = rng.uniform(0, 3, (5, 2))
    _, grads = policy_loss(tiny, seqs, rewards)
    h = 1e-6
    for name, value in tiny.tensors.items():
        fd = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            value[idx] = orig + h
            lp, _ = policy_loss(tiny, seqs, rewards)
            value[idx] = orig - h
            lm, _ = policy_loss(tiny, seqs, rewards)
            value[idx] = orig
            fd[idx] = (lp - lm) / (2 * h)
        assert np.all(np.abs(grads[name] - fd) <= 1e-4 * np.abs(fd) + 1e-9), name


def test_zero_rewards_zero_loss(tiny):
    seqs = np.array([[0, 1, 2], [0, 3, 3]])
    loss, grads = policy_loss(tiny, seqs, np.zeros((2, 2)))
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grads.values())


def test_duplicated_batch_same_loss(tiny):
    seqs = np.array([[0, 1, 2], [0, 3, 3]])
    r = np.array([[1.0, 2.0], [0.5, 3.0]])
    a, _ = policy_loss(tiny, seqs, r)
    b, _ = policy_loss(tiny, np.concatenate([seqs, seqs]), np.concatenate([r, r]))
    assert a == pytest.approx(b, rel=1e-14)


def test_loss_shape_errors(tiny):
    with pytest.raises(ValueError):
        policy_loss(tiny, np.array([[0, 1, 2]]), np.zeros((1, 3)))
    with pytest.raises(ValueError):
        policy_loss(tiny, np.zeros((0, 3), dtype=int), np.zeros((0, 2)))


def test_logits_shape_and_causality():
    shape = PolicyShape(vocab=9, max_len=10)
    params = init_policy(shape, np.random.default_rng(3))
    for length in range(1, 10):
        logits = policy_logits(params, tuple(range(length)))
        assert logits.shape == (9,) and np.all(np.isfinite(logits))
    a = batch_logits(params, np.array([[0, 4, 8, 1, 5]]))
    b = batch_logits(params, np.array([[0, 4, 8, 2, 2]]))
    assert np.array_equal(a[0, :3], b[0, :3])
    with pytest.raises(ValueError):
        policy_logits(params, tuple(range(10)))
    with pytest.raises(ValueError):
        policy_logits(params, ())


def test_sample_sequence_contract():
    params = init_policy(PolicyShape(vocab=9, max_len=10), np.random.default_rng(4))
    rng = np.random.default_rng(5)
    for _ in range(20):
        seq = sample_sequence(params, 10, rng)
        assert len(seq) == 10 and seq.tokens[0] == 0 and max(seq.tokens) < 9
    a = sample_batch(params, 3, 10, np.random.default_rng(6))
    b = sample_batch(params, 3, 10, np.random.default_rng(6))
    assert np.array_equal(a, b)


def test_one_hot_logits_give_argmax():
    params = init_policy(PolicyShape(vocab=9, max_len=6), np.random.default_rng(0))

    def forced(prefix):
        out = np.full((prefix.shape[0], 9), -1e9)
        out[:, (prefix[:, -1] + 4) % 9] = 0.0
        return out

    seq = sample_sequence(params, 6, np.random.default_rng(1), logits_fn=forced)
    assert seq.tokens == (0, 4, 8, 3, 7, 2)


def test_adam_zero_gradient():
    params = {"w": np.array([1.0, -2.0])}
    # zero first moment: nothing to move along, second moment decays
    state = AdamState(3, {"w": np.zeros(2)}, {"w": np.array([1.0, 4.0])})
    new, st = adam_step(params, {"w": np.zeros(2)}, state)
    assert np.array_equal(new["w"], params["w"])
    assert np.allclose(st.v["w"], [0.999, 3.996]) and st.step == 4
    # stored momentum keeps moving params and decays by beta1
    state = AdamState(3, {"w": np.array([0.5, 0.5])}, {"w": np.ones(2)})
    new, st = adam_step(params, {"w": np.zeros(2)}, state)
    assert np.allclose(st.m["w"], 0.45) and np.all(new["w"] < params["w"])


def test_adam_first_step_is_signed_lr():
    params = {"w": np.array([0.3, 0.3, 0.3])}
    new, st = adam_step(params, {"w": np.array([2.0, -0.01, 50.0])}, AdamState(), lr=1e-3)
    assert np.allclose(new["w"] - params["w"], [-1e-3, 1e-3, -1e-3], rtol=1e-5)
    assert st.step == 1


def test_adam_deterministic_and_checks():
    params = {"w": np.arange(3.0)}
    g = {"w": np.array([0.1, -0.2, 0.3])}
    a = adam_step(params, g, AdamState())[0]
    b = adam_step(params, g, AdamState())[0]
    assert np.array_equal(a["w"], b["w"])
    with pytest.raises(FloatingPointError):
        adam_step(params, {"w": np.array([np.nan, 0, 0])}, AdamState())
    with pytest.raises(ValueError):
        adam_step(params, {"w": np.zeros(2)}, AdamState())


def test_loss_decreases_on_frozen_batch():
    params = init_policy(PolicyShape(vocab=9, max_len=10, embed_dim=32, layer_count=1,
                                     head_count=4, ff_dim=64), np.random.default_rng(0))
    rng = np.random.default_rng(1)
    seqs = random_sequences(3, 16, 10, rng)
    rewards = rng.integers(1, 10, (16, 9)).astype(float)
    state = AdamState()
    first, _ = policy_loss(params, seqs, rewards)
    for _ in range(50):
        loss, grads = policy_loss(params, seqs, rewards)
        new, state = adam_step(params.tensors, grads, state, lr=1e-3)
        params.tensors = new
    assert loss < first


@pytest.fixture(scope="module")
def z_evaluator():
    return RankEvaluator(3, make_dataset(3, 20, 0), MeasurementProtocol.parse("Z"))


def test_prefix_rewards_chain(z_evaluator):
    chain = encode_gates(chain_blocks(3, 2))
    r = prefix_rewards(chain, z_evaluator)
    assert r.shape == (9,) and r[-1] == 13


def test_prefix_rewards_single_qubit_bound(z_evaluator):
    r = prefix_rewards(TokenSequence(3, (0, 0, 0)), z_evaluator)
    assert r[0] <= 3


def test_reward_cache_coherent(z_evaluator):
    seq = TokenSequence(3, (0, 4, 2, 8, 1, 0))
    first = prefix_rewards(seq, z_evaluator)
    count = z_evaluator.evaluations
    again = prefix_rewards(seq, z_evaluator)
    assert np.array_equal(first, again) and z_evaluator.evaluations == count
    for key in [(0, 4), (0, 4, 2, 8)]:
        assert z_evaluator.cache[key] == z_evaluator.fresh(key)
        c = decode_tokens(TokenSequence(3, key))
        assert z_evaluator.cache[key] == effective_rank(c, z_evaluator.dataset, z_evaluator.protocol).kappa


def test_train_round_bookkeeping():
    cfg = SearchConfig(**SMALL, seed=7)
    ev = RankEvaluator.from_config(cfg)
    state = SearchState.initial(cfg)
    rng_copy = np.random.default_rng()
    rng_copy.bit_generator.state = state.rng.bit_generator.state
    expected_first = random_sequences(2, 10, 5, rng_copy)
    records = [train_round(state, ev) for _ in range(12)]
    assert records[0].sequences == [tuple(s) for s in expected_first.tolist()]
    running = [r.kappa_max_running for r in records]
    assert running == sorted(running)
    assert records[9].score_sbar == pytest.approx(np.mean([r.mean_kappa for r in records[:10]]))
    assert records[11].score_sbar == pytest.approx(np.mean([r.mean_kappa for r in records[2:12]]))
    for r in records:
        assert all(0 <= x <= 15 and float(x).is_integer() for row in r.rewards for x in row)


def test_threshold_zero_stops_after_first_round():
    cfg = SearchConfig(**(SMALL | {"threshold": 0}))
    res = run_search(cfg)
    assert len(res.log) == 1 and res.reached


def test_budget_exhaustion_flag_and_consistency():
    cfg = SearchConfig(**(SMALL | {"threshold": 99, "max_rounds": 3}))
    ev = RankEvaluator.from_config(cfg)
    res = run_search(cfg, ev)
    assert not res.reached and len(res.log) == 3
    assert ev.fresh(res.best.tokens) == res.kappa_max == res.log[-1].kappa_max_running


def test_search_is_deterministic():
    cfg = SearchConfig(**(SMALL | {"max_rounds": 6}), seed=3)
    assert run_search(cfg).csv() == run_search(cfg).csv()


def test_checkpoint_resume_matches_uninterrupted(tmp_path):
    cfg = SearchConfig(**(SMALL | {"max_rounds": 6}), seed=5)
    full = run_search(cfg)
    ev = RankEvaluator.from_config(cfg)
    state = SearchState.initial(cfg)
    head = [train_round(state, ev) for _ in range(3)]
    state.save(tmp_path / "ckpt.json")
    resumed = SearchState.load(tmp_path / "ckpt.json")
    tail = run_search(cfg, RankEvaluator.from_config(cfg), resumed)
    assert [r.csv_row() for r in head + tail.log] == [r.csv_row() for r in full.log]


def test_random_search_schema_and_budget():
    cfg = SearchConfig(**(SMALL | {"max_rounds": 20}), seed=2)
    rl = run_search(SearchConfig(**(SMALL | {"max_rounds": 2})))
    res = random_search(cfg, eval_budget=30)
    assert res.csv().splitlines()[0] == rl.csv().splitlines()[0]
    running = [r.kappa_max_running for r in res.log]
    assert running == sorted(running)
    assert res.log[-2].evaluations < 30 or len(res.log) == 1
    assert all(s[0] == 0 for r in res.log for s in r.sequences)


@pytest.mark.slow
def test_policy_improves_over_random_start():
    cfg = SearchConfig(threshold=None, max_rounds=200, seed=0)
    res = run_search(cfg)
    late = np.mean([r.mean_kappa for r in res.log[-10:]])
    assert late > res.log[0].mean_kappa
