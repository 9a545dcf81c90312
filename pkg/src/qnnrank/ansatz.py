"""Circuit families: the universal Pauli-exponential ansatz, the
hardware-efficient chain of building blocks, and token-decoded circuits."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

from .quantum import Circuit, CircuitError, GateOp

_LETTERS = "IXYZ"


class TokenError(ValueError):
    pass


@dataclass(frozen=True)
class TokenSequence:
    """Gate tokens ``a = n*i + j``: a rotation on qubit ``i`` when ``i == j``,
    otherwise a CNOT with control ``i`` and target ``j``."""

    n: int
    tokens: tuple[int, ...]

    def __post_init__(self):
        if self.n < 1:
            raise TokenError("n must be positive")
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        for pos, t in enumerate(self.tokens):
            if not 0 <= t < self.n**2:
                raise TokenError(f"token {t} at position {pos} is outside 0..{self.n**2 - 1}")

    def __len__(self) -> int:
        return len(self.tokens)

    def prefix(self, length: int) -> TokenSequence:
        return TokenSequence(self.n, self.tokens[:length])

    def to_dict(self) -> dict:
        return {"n": self.n, "tokens": list(self.tokens)}

    @classmethod
    def from_dict(cls, data: dict) -> TokenSequence:
        return cls(int(data["n"]), tuple(data["tokens"]))


def max_rank(n: int) -> int:
    """Dimension of su(2^n)."""
    return 4**n - 1


def pauli_generators(n: int) -> list[str]:
    if not 1 <= n <= 4:
        raise ValueError(f"n must be in 1..4, got {n}")
    # itertools.product over "IXYZ" enumerates words in base-4 order already
    words = ("".join(w) for w in itertools.product(_LETTERS, repeat=n))
    return [w for w in words if set(w) != {"I"}]


def universal_circuit(n: int) -> Circuit:
    words = tuple(pauli_generators(n))
    gate = GateOp("universal", slots=tuple(range(len(words))), paulis=words)
    return Circuit(n, (gate,), len(words))


def chain_blocks(n: int, m: int, reverse_cnot: bool = False) -> Circuit:
    """``m`` blocks of (rotation on every qubit, then a nearest-neighbour CNOT
    chain). ``reverse_cnot`` flips every CNOT to control k+1, target k."""
    if n < 2 or m < 1:
        raise ValueError(f"chain needs n >= 2 and m >= 1, got n={n}, m={m}")
    gates = []
    p = 0
    for _ in range(m):
        for q in range(n):
            gates.append(GateOp("single", q, q, (p, p + 1, p + 2)))
            p += 3
        for q in range(n - 1):
            c, t = (q + 1, q) if reverse_cnot else (q, q + 1)
            gates.append(GateOp("cnot", c, t))
    return Circuit(n, tuple(gates), p)


def decode_tokens(seq: TokenSequence) -> Circuit:
    n = seq.n
    gates = []
    p = 0
    for t in seq.tokens:
        i, j = divmod(t, n)
        if i == j:
            gates.append(GateOp("single", i, i, (p, p + 1, p + 2)))
            p += 3
        else:
            gates.append(GateOp("cnot", i, j))
    return Circuit(n, tuple(gates), p)


def encode_gates(circuit: Circuit) -> TokenSequence:
    tokens = []
    for k, g in enumerate(circuit.gates):
        if g.kind not in ("single", "cnot"):
            raise CircuitError(f"gate {k} ({g.kind}) has no token")
        tokens.append(circuit.n * g.i + g.j)
    return TokenSequence(circuit.n, tuple(tokens))
