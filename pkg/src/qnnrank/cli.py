"""Command-line entry point: ``qnnrank <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .ansatz import TokenSequence, decode_tokens
from .data import Dataset, make_dataset
from .experiments import (
    ConfigError,
    ExperimentConfig,
    random_baseline,
    rl_search,
    sweep_data,
    sweep_depth,
)
from .fisher import effective_rank
from .quantum import Circuit, MeasurementProtocol

log = logging.getLogger("qnnrank")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="seed for parameter draws and the agent")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--method", choices=["auto", "shift", "fd", "exact"])
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--draws", type=int)
    p.add_argument("-n", "--qubits", type=int)
    p.add_argument("--protocol", help="measurement bases, e.g. XYZ")
    p.add_argument("--dataset-size", type=int)
    p.add_argument("--dataset-seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qnnrank", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep-data", help="rank of the universal ansatz vs dataset size")
    _common(p)
    p.add_argument("--sizes", type=int, nargs="+")

    p = sub.add_parser("sweep-depth", help="rank and efficiency of chain circuits vs depth")
    _common(p)
    p.add_argument("--m-max", type=int)
    p.add_argument("--reverse-cnot", action="store_true")

    for name, text in [("rl-search", "transformer policy-gradient search"),
                       ("random-search", "uniform random baseline")]:
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--length", type=int, help="tokens per circuit")
        p.add_argument("--rounds", type=int, help="round budget")
        p.add_argument("--threshold", type=int, help="stop once this rank is reached")
        if name == "random-search":
            p.add_argument("--eval-budget", type=int, help="fresh rank evaluations allowed")

    p = sub.add_parser("rank", help="effective rank of a circuit file against a dataset file")
    _common(p)
    p.add_argument("circuit", type=Path, help="circuit JSON or token-sequence JSON")
    p.add_argument("dataset", type=Path, help="dataset JSON")

    p = sub.add_parser("dataset", help="write a Wishart dataset file")
    _common(p)
    return parser


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    cfg.kind = args.command
    simple = {"seed": "seed", "method": "method", "rel_tol": "rel_tol", "draws": "n_draws",
              "qubits": "n", "protocol": "protocol", "dataset_size": "dataset_size",
              "dataset_seed": "dataset_seed", "sizes": "sizes", "m_max": "m_max",
              "eval_budget": "eval_budget"}
    for arg, attr in simple.items():
        value = getattr(args, arg, None)
        if value is not None:
            setattr(cfg, attr, value)
    if getattr(args, "reverse_cnot", False):
        cfg.reverse_cnot = True
    if args.out is not None:
        cfg.out = str(args.out)
    agent = dict(cfg.agent)
    for arg, key in (("length", "length"), ("rounds", "max_rounds"), ("threshold", "threshold")):
        value = getattr(args, arg, None)
        if value is not None:
            agent[key] = value
    if args.command in ("rl-search", "random-search") and args.protocol is not None:
        agent["protocol"] = args.protocol
    cfg.agent = agent
    return cfg


def _load_circuit(path: Path) -> Circuit:
    doc = json.loads(path.read_text())
    if "tokens" in doc and "gates" not in doc:
        return decode_tokens(TokenSequence.from_dict(doc))
    if "circuit" in doc:
        return Circuit.from_dict(doc["circuit"])
    return Circuit.from_dict(doc)


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _progress(rec) -> None:
    log.info("round %d: mean %.2f, best %d, running best %d, score %.2f",
             rec.round, rec.mean_kappa, rec.max_kappa_round, rec.kappa_max_running, rec.score_sbar)


def run(args) -> None:
    cfg = _config(args)
    out = Path(cfg.out)
    if args.command == "rank":
        circuit = _load_circuit(args.circuit)
        dataset = Dataset.load(args.dataset)
        r = effective_rank(circuit, dataset, MeasurementProtocol.parse(cfg.protocol),
                           cfg.validate().n_draws, cfg.rel_tol, cfg.seed, cfg.method)
        print(json.dumps({"kappa": r.kappa, "p": r.p, "eta": r.eta, "d_n": r.d_n,
                          "draws": list(r.draws)}))
        return
    if args.command == "dataset":
        size = cfg.dataset_size or 20
        ds = make_dataset(cfg.n, size, cfg.dataset_seed)
        path = out / f"dataset_n{cfg.n}_size{size}_seed{cfg.dataset_seed}.json"
        out.mkdir(parents=True, exist_ok=True)
        ds.save(path)
        print(path)
        return
    if args.command == "sweep-data":
        print(_write(out, f"sweep_data_n{cfg.n}.csv", sweep_data(cfg)))
    elif args.command == "sweep-depth":
        print(_write(out, f"sweep_depth_n{cfg.n}.csv", sweep_depth(cfg)))
    else:
        fn, stem = (rl_search, "rl_search") if args.command == "rl-search" else (random_baseline, "random_search")
        csv, best = fn(cfg, progress=_progress)
        print(_write(out, f"{stem}.csv", csv))
        print(_write(out, f"{stem}_best.json", json.dumps(best, indent=2) + "\n"))
        if not best["reached_threshold"]:
            log.warning("threshold not reached; best rank %d", best["kappa"])


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        run(args)
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
