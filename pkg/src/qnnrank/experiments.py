"""The three studies (rank vs data, rank vs depth, RL search) and the
random-search baseline, each producing CSV text."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .agent import RankEvaluator, SearchConfig, random_search, run_search
from .agent.search import RoundRecord, SearchResult
from .ansatz import chain_blocks, decode_tokens, universal_circuit
from .data import RICH_SIZE, make_dataset
from .fisher import METHODS, effective_rank
from .quantum import MeasurementProtocol

KINDS = ("sweep-data", "sweep-depth", "rl-search", "random-search", "rank")
DATA_PROTOCOLS = ("X", "XY", "XYZ")
M_MAX = {2: 8, 3: 12, 4: 16}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str = "sweep-data"
    n: int = 1
    dataset_size: int | None = None
    dataset_seed: int = 0
    protocol: str = "XYZ"
    protocols: list[str] = field(default_factory=lambda: list(DATA_PROTOCOLS))
    sizes: list[int] | None = None
    m_max: int | None = None
    reverse_cnot: bool = False
    method: str = "auto"
    n_draws: int = 3
    rel_tol: float | None = None
    seed: int = 0
    eval_budget: int | None = None
    agent: dict = field(default_factory=dict)
    out: str = "."

    def validate(self) -> ExperimentConfig:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown gradient method {self.method!r}")
        if self.n_draws < 1:
            raise ConfigError("n_draws must be >= 1")
        if self.rel_tol is not None and self.rel_tol <= 0:
            raise ConfigError("rel_tol must be positive")
        try:
            for p in [self.protocol, *self.protocols]:
                MeasurementProtocol.parse(p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.kind == "sweep-data" and self.n not in (1, 2, 3):
            raise ConfigError("sweep-data needs n in {1, 2, 3}")
        if self.kind == "sweep-depth" and self.n not in (2, 3, 4):
            raise ConfigError("sweep-depth needs n in {2, 3, 4}")
        if self.sizes is not None and (not self.sizes or min(self.sizes) < 1):
            raise ConfigError("sizes must be a non-empty list of positive counts")
        if self.m_max is not None and self.m_max < 1:
            raise ConfigError("m_max must be >= 1")
        if self.kind in ("rl-search", "random-search"):
            self.search_config()
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc

    def search_config(self) -> SearchConfig:
        base = {"n": self.n, "dataset_seed": self.dataset_seed, "seed": self.seed,
                "n_draws": self.n_draws, "rel_tol": self.rel_tol, "method": self.method}
        if self.dataset_size is not None:
            base["dataset_size"] = self.dataset_size
        try:
            return SearchConfig.from_dict(base | self.agent)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid agent settings: {exc}") from exc


def _fmt(x: float) -> str:
    return repr(float(x))


def sweep_data(cfg: ExperimentConfig) -> str:
    """Rank of the universal ansatz against nested Wishart datasets."""
    cfg.validate()
    sizes = cfg.sizes or list(range(1, (20 if cfg.n == 3 else 12) + 1))
    circuit = universal_circuit(cfg.n)
    full = make_dataset(cfg.n, max(sizes), cfg.dataset_seed)
    rows = ["n,protocol,num_states,kappa,d_n"]
    for label in cfg.protocols:
        protocol = MeasurementProtocol.parse(label)
        for k in sorted(sizes):
            r = effective_rank(circuit, full.head(k), protocol, cfg.n_draws, cfg.rel_tol,
                               cfg.seed, cfg.method)
            rows.append(f"{cfg.n},{protocol.label},{k},{r.kappa},{r.d_n}")
    return "\n".join(rows) + "\n"


def sweep_depth(cfg: ExperimentConfig) -> str:
    """Rank and parameter efficiency of chain circuits with 1..m_max blocks."""
    cfg.validate()
    m_max = cfg.m_max or M_MAX[cfg.n]
    ds = make_dataset(cfg.n, cfg.dataset_size or RICH_SIZE[cfg.n], cfg.dataset_seed)
    protocol = MeasurementProtocol.parse(cfg.protocol)
    rows = ["n,m,p,kappa,kappa_over_dn,eta"]
    for m in range(1, m_max + 1):
        c = chain_blocks(cfg.n, m, cfg.reverse_cnot)
        r = effective_rank(c, ds, protocol, cfg.n_draws, cfg.rel_tol, cfg.seed, cfg.method)
        rows.append(f"{cfg.n},{m},{c.p},{r.kappa},{_fmt(r.kappa / r.d_n)},{_fmt(r.eta)}")
    return "\n".join(rows) + "\n"


def best_circuit_document(result: SearchResult, evaluator: RankEvaluator) -> dict:
    circuit = decode_tokens(result.best)
    return {
        "n": result.best.n,
        "tokens": list(result.best.tokens),
        "kappa": result.kappa_max,
        "p": circuit.p,
        "reached_threshold": result.reached,
        "rounds": len(result.log),
        "evaluations": result.evaluations,
        "protocol": evaluator.protocol.label,
        "dataset_size": len(evaluator.dataset),
        "circuit": circuit.to_dict(),
    }


def rl_search(cfg: ExperimentConfig, progress=None) -> tuple[str, dict]:
    sc = cfg.validate().search_config()
    evaluator = RankEvaluator.from_config(sc)
    result = run_search(sc, evaluator, progress=progress)
    return result.csv(), best_circuit_document(result, evaluator)


def random_baseline(cfg: ExperimentConfig, progress=None) -> tuple[str, dict]:
    sc = cfg.validate().search_config()
    evaluator = RankEvaluator.from_config(sc)
    result = random_search(sc, evaluator, cfg.eval_budget, progress=progress)
    return result.csv(), best_circuit_document(result, evaluator)


def read_log(text: str) -> list[dict]:
    lines = text.strip().splitlines()
    if lines[0] != RoundRecord.CSV_HEADER:
        raise ValueError("not a round log")
    keys = lines[0].split(",")
    return [dict(zip(keys, line.split(","))) for line in lines[1:]]


def rich_rank(circuit, protocol: str = "XYZ", seed: int = 0):
    """Rank of ``circuit`` on the canonical rich dataset."""
    ds = make_dataset(circuit.n, RICH_SIZE[circuit.n], seed)
    return effective_rank(circuit, ds, MeasurementProtocol.parse(protocol))

