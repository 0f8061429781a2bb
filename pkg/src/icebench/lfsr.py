"""Fibonacci (external-XOR) linear-feedback shift registers.

The register is an ``order``-bit integer that shifts toward the LSB. Stages are
numbered 1..n from the feedback input (MSB) to the output (LSB), so tap ``t``
reads state bit ``n - t`` and the mandatory tap ``n`` is the output bit. The
XOR of the tapped bits is shifted into the MSB. This is the convention of the
usual published maximal-length tap tables (x^n + ... + 1 polynomials).

Bit indices used for stimulus selection are counted the other way, from the
output end: bit 1 is the LSB, bit n the MSB.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import LfsrError

# One maximal-length tap set per order, taken from the common XAPP052-derived
# tables. Every entry is re-verified by the test suite (exhaustively up to 16).
MAX_LENGTH_TAPS = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 6, 4, 1),
    13: (13, 4, 3, 1),
    14: (14, 5, 3, 1),
    15: (15, 14),
    16: (16, 15, 13, 4),
    17: (17, 14),
    18: (18, 11),
    19: (19, 6, 2, 1),
    20: (20, 17),
    21: (21, 19),
    22: (22, 21),
    23: (23, 18),
    24: (24, 23, 22, 17),
}


@dataclass(frozen=True)
class LfsrConfig:
    order: int
    taps: frozenset
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "taps", frozenset(self.taps))
        if self.order < 2:
            raise LfsrError(f"order must be >= 2, got {self.order}")
        if not self.taps:
            raise LfsrError("taps must not be empty")
        if max(self.taps) != self.order or min(self.taps) < 1:
            raise LfsrError(f"taps must lie in 1..{self.order} and include {self.order}")
        if not 0 < self.seed < (1 << self.order):
            raise LfsrError(f"seed must be a nonzero {self.order}-bit value, got {self.seed}")

    @classmethod
    def maximal(cls, order: int, seed: int = 1) -> LfsrConfig:
        return cls(order, frozenset(max_length_taps(order)), seed)

    @property
    def feedback_mask(self) -> int:
        return sum(1 << (self.order - t) for t in self.taps)


def max_length_taps(order: int) -> frozenset:
    try:
        return frozenset(MAX_LENGTH_TAPS[order])
    except KeyError:
        lo, hi = min(MAX_LENGTH_TAPS), max(MAX_LENGTH_TAPS)
        raise LfsrError(f"no tap table entry for order {order} (supported {lo}..{hi})") from None


def next_state(cfg: LfsrConfig, state: int) -> int:
    if state == 0:
        raise LfsrError("state 0 is the XOR-LFSR lockup state")
    if state >> cfg.order:
        raise LfsrError(f"state {state:#x} wider than {cfg.order} bits")
    feedback = (state & cfg.feedback_mask).bit_count() & 1
    return (state >> 1) | (feedback << (cfg.order - 1))


def generate_sequence(cfg: LfsrConfig, count: int) -> list:
    if count < 0:
        raise LfsrError("count must be >= 0")
    states = []
    state = cfg.seed
    for _ in range(count):
        states.append(state)
        state = next_state(cfg, state)
    return states


def period(cfg: LfsrConfig) -> int:
    # next_state is a bijection because tap n is always present, so the seed
    # lies on a cycle and stepping must return to it within 2^n - 1 steps.
    mask, top = cfg.feedback_mask, cfg.order - 1
    state = cfg.seed
    for steps in range(1, 1 << cfg.order):
        state = (state >> 1) | (((state & mask).bit_count() & 1) << top)
        if state == cfg.seed:
            return steps
    raise AssertionError("unreachable: LFSR orbit did not close")


def bit(state: int, index: int) -> int:
    """Bit ``index`` of ``state``, counted from 1 at the output (LSB) end."""
    return (state >> (index - 1)) & 1


def tap_table_csv() -> str:
    rows = ["order,taps"]
    rows += [f"{n},{' '.join(map(str, taps))}" for n, taps in sorted(MAX_LENGTH_TAPS.items())]
    return "\n".join(rows) + "\n"
