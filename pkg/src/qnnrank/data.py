"""Random mixed-state datasets from the Wishart construction."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .quantum import DensityMatrix

# State counts large enough that architecture studies are not data-limited.
RICH_SIZE = {1: 20, 2: 20, 3: 20, 4: 40}


def wishart_state(n: int, rng: np.random.Generator) -> DensityMatrix:
    if not 1 <= n <= 4:
        raise ValueError(f"n must be in 1..4, got {n}")
    d = 2**n
    g = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    w = g @ g.conj().T
    w = 0.5 * (w + w.conj().T)
    return DensityMatrix(n, w / np.trace(w).real)


@dataclass(frozen=True)
class Dataset:
    n: int
    states: tuple[DensityMatrix, ...]
    seed: int | None = None
    _stack: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        states = tuple(self.states)
        if not states:
            raise ValueError("dataset needs at least one state")
        if any(s.n != self.n for s in states):
            raise ValueError("all states must have the dataset's qubit count")
        object.__setattr__(self, "states", states)
        stack = np.stack([s.matrix for s in states])
        stack.setflags(write=False)
        object.__setattr__(self, "_stack", stack)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def array(self) -> np.ndarray:
        """States stacked as ``(size, d, d)``."""
        return self._stack

    def head(self, size: int) -> Dataset:
        return Dataset(self.n, self.states[:size], self.seed)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "states": [
                [[float(z.real), float(z.imag)] for z in s.matrix.reshape(-1)] for s in self.states
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> Dataset:
        n = int(data["n"])
        d = 2**n
        states = []
        for entries in data["states"]:
            arr = np.asarray(entries, dtype=float)
            if arr.shape != (d * d, 2):
                raise ValueError(f"state needs {d * d} [re, im] pairs, got shape {arr.shape}")
            states.append(DensityMatrix(n, (arr[:, 0] + 1j * arr[:, 1]).reshape(d, d)))
        return cls(n, tuple(states), data.get("seed"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> Dataset:
        return cls.from_dict(json.loads(Path(path).read_text()))


def make_dataset(n: int, size: int, seed: int = 0) -> Dataset:
    """``size`` Wishart states drawn sequentially from one seeded stream, so a
    smaller dataset is always a prefix of a larger one with the same seed."""
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = np.random.default_rng(seed)
    return Dataset(n, tuple(wishart_state(n, rng) for _ in range(size)), seed)


def rich_dataset(n: int, seed: int = 0) -> Dataset:
    return make_dataset(n, RICH_SIZE[n], seed)
