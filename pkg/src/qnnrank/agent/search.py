"""Policy-gradient architecture search with effective-rank rewards."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..ansatz import TokenSequence, decode_tokens
from ..data import Dataset, make_dataset
from ..fisher import effective_rank
from ..quantum import MeasurementProtocol
from .adam import AdamState, adam_step
from .policy import PolicyParams, PolicyShape, init_policy, policy_loss, sample_batch

SCORE_WINDOW = 10
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SearchConfig:
    n: int = 3
    length: int = 10
    dataset_size: int = 20
    dataset_seed: int = 0
    protocol: str = "Z"
    threshold: int | None = 16
    max_rounds: int = 1000
    samples_per_round: int = 10
    seed: int = 0
    # rank evaluation
    n_draws: int = 3
    rel_tol: float | None = None
    method: str = "auto"
    rank_seed: int = 0
    # policy and optimiser
    embed_dim: int = 64
    layer_count: int = 2
    head_count: int = 4
    ff_dim: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    window_rounds: int = 50
    batch_size: int = 32
    epochs: int = 1
    baseline: bool = False

    def __post_init__(self):
        if self.n < 1 or self.length < 2 or self.samples_per_round < 1:
            raise ValueError("need n >= 1, length >= 2 and samples_per_round >= 1")
        if self.max_rounds < 1 or self.window_rounds < 1 or self.batch_size < 1:
            raise ValueError("round budget, window and batch size must be positive")
        MeasurementProtocol.parse(self.protocol)

    @classmethod
    def from_dict(cls, data: dict) -> SearchConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown search settings: {sorted(unknown)}")
        return cls(**data)

    def policy_shape(self) -> PolicyShape:
        return PolicyShape(
            self.n**2, self.length, self.embed_dim, self.layer_count, self.head_count, self.ff_dim
        )


class RankEvaluator:
    """Effective rank of decoded token prefixes against a fixed dataset and
    protocol, memoised by token tuple. ``evaluations`` counts cache misses."""

    def __init__(self, n: int, dataset: Dataset, protocol: MeasurementProtocol, n_draws: int = 3,
                 rel_tol: float | None = None, method: str = "auto", seed: int = 0):
        if dataset.n != n:
            raise ValueError("dataset qubit count differs from the search's")
        self.n = n
        self.dataset = dataset
        self.protocol = protocol
        self.n_draws = n_draws
        self.rel_tol = rel_tol
        self.method = method
        self.seed = seed
        self.cache: dict[tuple[int, ...], int] = {}
        self.evaluations = 0

    @classmethod
    def from_config(cls, config: SearchConfig) -> RankEvaluator:
        ds = make_dataset(config.n, config.dataset_size, config.dataset_seed)
        return cls(config.n, ds, MeasurementProtocol.parse(config.protocol), config.n_draws,
                   config.rel_tol, config.method, config.rank_seed)

    def fresh(self, tokens) -> int:
        circuit = decode_tokens(TokenSequence(self.n, tuple(tokens)))
        if circuit.p == 0:
            return 0
        return effective_rank(circuit, self.dataset, self.protocol, self.n_draws,
                              self.rel_tol, self.seed, self.method).kappa

    def __call__(self, tokens) -> int:
        key = tuple(int(t) for t in tokens)
        if key not in self.cache:
            self.cache[key] = self.fresh(key)
            self.evaluations += 1
        return self.cache[key]


def prefix_rewards(seq, evaluator: RankEvaluator) -> np.ndarray:
    """``[kappa(a_1..a_l) for l = 2..L]``."""
    toks = seq.tokens if isinstance(seq, TokenSequence) else tuple(seq)
    return np.array([evaluator(toks[:l]) for l in range(2, len(toks) + 1)], dtype=float)


@dataclass
class RoundRecord:
    round: int
    sequences: list[tuple[int, ...]]
    rewards: list[list[float]]
    mean_kappa: float
    max_kappa_round: int
    kappa_max_running: int
    score_sbar: float
    loss: float | None
    evaluations: int

    CSV_HEADER = "round,mean_kappa,max_kappa_round,kappa_max_running,score_sbar,loss"

    def csv_row(self) -> str:
        loss = "" if self.loss is None else repr(self.loss)
        return (f"{self.round},{self.mean_kappa!r},{self.max_kappa_round},"
                f"{self.kappa_max_running},{self.score_sbar!r},{loss}")


@dataclass
class SearchState:
    config: SearchConfig
    params: PolicyParams
    adam: AdamState
    rng: np.random.Generator
    round: int = 0
    replay: deque = field(default_factory=deque)  # per-round (tokens, rewards) arrays
    round_means: list[float] = field(default_factory=list)
    kappa_max: int = -1
    best: tuple[int, ...] | None = None

    @classmethod
    def initial(cls, config: SearchConfig) -> SearchState:
        rng = np.random.default_rng(config.seed)
        params = init_policy(config.policy_shape(), rng)
        return cls(config, params, AdamState(), rng, replay=deque(maxlen=config.window_rounds))

    def save(self, path: str | Path) -> None:
        doc = {
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "round": self.round,
            "params": {k: v.tolist() for k, v in self.params.tensors.items()},
            "adam": {
                "step": self.adam.step,
                "m": {k: v.tolist() for k, v in self.adam.m.items()},
                "v": {k: v.tolist() for k, v in self.adam.v.items()},
            },
            "rng": self.rng.bit_generator.state,
            "replay": [[t.tolist(), r.tolist()] for t, r in self.replay],
            "round_means": self.round_means,
            "kappa_max": self.kappa_max,
            "best": list(self.best) if self.best is not None else None,
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path: str | Path) -> SearchState:
        doc = json.loads(Path(path).read_text())
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
        config = SearchConfig.from_dict(doc["config"])
        params = PolicyParams(config.policy_shape(), {k: np.asarray(v, dtype=float)
                                                      for k, v in doc["params"].items()})
        params.check()
        a = doc["adam"]
        adam = AdamState(a["step"], {k: np.asarray(v) for k, v in a["m"].items()},
                         {k: np.asarray(v) for k, v in a["v"].items()})
        rng = np.random.default_rng()
        rng.bit_generator.state = doc["rng"]
        replay = deque(((np.asarray(t, dtype=np.int64), np.asarray(r, dtype=float))
                        for t, r in doc["replay"]), maxlen=config.window_rounds)
        best = tuple(doc["best"]) if doc["best"] is not None else None
        return cls(config, params, adam, rng, doc["round"], replay, list(doc["round_means"]),
                   doc["kappa_max"], best)


def random_sequences(n: int, count: int, length: int, rng: np.random.Generator) -> np.ndarray:
    seqs = rng.integers(0, n**2, size=(count, length))
    seqs[:, 0] = 0
    return seqs


def _record(state: SearchState, seqs: np.ndarray, rewards: np.ndarray, loss, evaluations) -> RoundRecord:
    finals = rewards[:, -1]
    top = int(np.argmax(finals))
    if int(finals[top]) > state.kappa_max:
        state.kappa_max = int(finals[top])
        state.best = tuple(int(t) for t in seqs[top])
    state.round_means.append(float(finals.mean()))
    window = state.round_means[-SCORE_WINDOW:]
    return RoundRecord(
        round=state.round,
        sequences=[tuple(int(t) for t in s) for s in seqs],
        rewards=rewards.tolist(),
        mean_kappa=float(finals.mean()),
        max_kappa_round=int(finals[top]),
        kappa_max_running=state.kappa_max,
        score_sbar=float(np.mean(window)),
        loss=loss,
        evaluations=evaluations,
    )


def train_round(state: SearchState, evaluator: RankEvaluator) -> RoundRecord:
    """Sample, score, store, and update the policy once."""
    cfg = state.config
    state.round += 1
    if state.round == 1:
        seqs = random_sequences(cfg.n, cfg.samples_per_round, cfg.length, state.rng)
    else:
        seqs = sample_batch(state.params, cfg.samples_per_round, cfg.length, state.rng)
    rewards = np.stack([prefix_rewards(s, evaluator) for s in seqs])
    state.replay.append((seqs, rewards))

    tokens = np.concatenate([t for t, _ in state.replay])
    rew = np.concatenate([r for _, r in state.replay])
    if cfg.baseline:
        rew = rew - rew.mean(axis=0, keepdims=True)
    losses = []
    for _ in range(cfg.epochs):
        order = state.rng.permutation(len(tokens))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = policy_loss(state.params, tokens[idx], rew[idx])
            new, state.adam = adam_step(state.params.tensors, grads, state.adam,
                                        cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
            state.params = PolicyParams(state.params.shape, new)
            losses.append(loss)
    return _record(state, seqs, rewards, float(np.mean(losses)), evaluator.evaluations)


@dataclass
class SearchResult:
    best: TokenSequence
    kappa_max: int
    reached: bool
    log: list[RoundRecord]
    evaluations: int

    def csv(self) -> str:
        return "\n".join([RoundRecord.CSV_HEADER] + [r.csv_row() for r in self.log]) + "\n"


def _done(kappa_max: int, threshold: int | None) -> bool:
    return threshold is not None and kappa_max >= threshold


def run_search(config: SearchConfig, evaluator: RankEvaluator | None = None,
               state: SearchState | None = None, progress=None) -> SearchResult:
    """Train until the running best rank reaches ``config.threshold`` or the
    round budget is spent. ``reached`` is False when the budget ran out."""
    evaluator = evaluator or RankEvaluator.from_config(config)
    state = state or SearchState.initial(config)
    log = []
    while state.round < config.max_rounds:
        rec = train_round(state, evaluator)
        log.append(rec)
        if progress:
            progress(rec)
        if _done(state.kappa_max, config.threshold):
            break
    return SearchResult(TokenSequence(config.n, state.best), state.kappa_max,
                        _done(state.kappa_max, config.threshold), log, evaluator.evaluations)


def random_search(config: SearchConfig, evaluator: RankEvaluator | None = None,
                  eval_budget: int | None = None, progress=None) -> SearchResult:
    """Uniformly random sequences (first token 0) under the same reward
    accounting. Stops at the threshold, the round budget, or once
    ``eval_budget`` fresh rank evaluations have been spent."""
    evaluator = evaluator or RankEvaluator.from_config(config)
    rng = np.random.default_rng(config.seed)
    state = SearchState(config, None, AdamState(), rng)
    log = []
    while state.round < config.max_rounds:
        if eval_budget is not None and evaluator.evaluations >= eval_budget:
            break
        state.round += 1
        seqs = random_sequences(config.n, config.samples_per_round, config.length, rng)
        rewards = np.stack([prefix_rewards(s, evaluator) for s in seqs])
        rec = _record(state, seqs, rewards, None, evaluator.evaluations)
        log.append(rec)
        if progress:
            progress(rec)
        if _done(state.kappa_max, config.threshold):
            break
    return SearchResult(TokenSequence(config.n, state.best), state.kappa_max,
                        _done(state.kappa_max, config.threshold), log, evaluator.evaluations)
