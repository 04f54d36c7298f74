"""Counter-based random streams, one per (master seed, group, agent).

Every draw is a pure function of ``(key, counter, lane)`` evaluated with the
Philox-4x32-10 block cipher, so a stream never depends on how many other
streams exist or in which order agents are processed. numpy's own Philox
bit generator holds a single key, which would force one Python call per
agent per step; the cipher is applied here across all agents at once.

Lanes separate independent uses of the same agent stream: Wiener
increments, initial positions, exploration noise and weight initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .types import GroupId

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_LO32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

LANE_WIENER = 0
LANE_INIT_STATE = 1
LANE_EXPLORE = 2
LANE_INIT_WEIGHTS = 3

_TWO_POW_M53 = 1.0 / 9007199254740992.0


def philox4x32(counter: np.ndarray, key: np.ndarray, rounds: int = 10) -> np.ndarray:
    """Philox-4x32 block function.

    ``counter`` has shape (..., 4) and ``key`` shape (..., 2), both uint32;
    they broadcast against each other. Returns uint32 words of shape (..., 4).
    """
    counter = np.asarray(counter, dtype=np.uint32)
    key = np.asarray(key, dtype=np.uint32)
    shape = np.broadcast_shapes(counter.shape[:-1], key.shape[:-1])
    counter = np.broadcast_to(counter, shape + (4,))
    key = np.broadcast_to(key, shape + (2,))
    c0, c1, c2, c3 = (counter[..., i].astype(np.uint64) for i in range(4))
    k0 = key[..., 0].copy()
    k1 = key[..., 1].copy()
    with np.errstate(over="ignore"):
        for r in range(rounds):
            if r:
                k0 = k0 + _W0
                k1 = k1 + _W1
            p0 = _M0 * c0
            p1 = _M1 * c2
            c0, c1, c2, c3 = (
                (p1 >> _SHIFT32) ^ c1 ^ k0.astype(np.uint64),
                p1 & _LO32,
                (p0 >> _SHIFT32) ^ c3 ^ k1.astype(np.uint64),
                p0 & _LO32,
            )
    return np.stack([c0, c1, c2, c3], axis=-1).astype(np.uint32)


def _unit_pairs(words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two 53-bit doubles in [0, 1) from four 32-bit words."""
    w = words.astype(np.uint64)
    a = ((w[..., 0] >> np.uint64(5)) << np.uint64(26)) + (w[..., 1] >> np.uint64(6))
    b = ((w[..., 2] >> np.uint64(5)) << np.uint64(26)) + (w[..., 3] >> np.uint64(6))
    return a.astype(float) * _TWO_POW_M53, b.astype(float) * _TWO_POW_M53


def _counter_words(index, lane: int, sub) -> np.ndarray:
    index = np.asarray(index, dtype=np.uint64)
    sub = np.asarray(sub, dtype=np.uint64)
    index, sub = np.broadcast_arrays(index, sub)
    return np.stack(
        [
            (index & _LO32).astype(np.uint32),
            (index >> _SHIFT32).astype(np.uint32),
            np.full(index.shape, lane, dtype=np.uint32),
            sub.astype(np.uint32),
        ],
        axis=-1,
    )


def derive_key(master_seed: int, group: GroupId, agent_index: int) -> np.ndarray:
    """Two uint32 key words for one agent stream."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(group.code, int(agent_index)))
    return ss.generate_state(2, dtype=np.uint32)


def normal_pairs(keys: np.ndarray, index, lane: int, sub=0) -> np.ndarray:
    """Standard normal pairs via Box-Muller, shape (..., 2).

    ``keys`` (..., 2) and ``index``/``sub`` broadcast together.
    """
    words = philox4x32(_counter_words(index, lane, sub), keys)
    u1, u2 = _unit_pairs(words)
    r = np.sqrt(-2.0 * np.log1p(-u1))  # 1 - u1 lies in (0, 1]
    theta = 2.0 * np.pi * u2
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def uniform_pairs(keys: np.ndarray, index, lane: int, sub=0) -> np.ndarray:
    """Uniform [0, 1) pairs, shape (..., 2)."""
    words = philox4x32(_counter_words(index, lane, sub), keys)
    u1, u2 = _unit_pairs(words)
    return np.stack([u1, u2], axis=-1)


@dataclass
class RngStream:
    """Random stream owned by one agent.

    Two streams built from the same ``(master_seed, agent_index, group)``
    yield the same sequence. ``counter`` counts Wiener draw-pairs consumed.
    """

    master_seed: int
    agent_index: int
    group: GroupId
    counter: int = 0
    key: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.key = derive_key(self.master_seed, self.group, self.agent_index)


def gaussian_increment(stream: RngStream, dt: float) -> np.ndarray:
    """Draw a Wiener increment ~ N(0, dt I2) and advance the stream by one pair."""
    z = normal_pairs(stream.key, stream.counter, LANE_WIENER)
    stream.counter += 1
    return np.sqrt(dt) * z


class StreamBank:
    """The streams of a whole group, evaluated together.

    Row ``k`` of every draw equals what ``RngStream(seed, indices[k], group)``
    would produce, whatever the row order.
    """

    def __init__(self, master_seed: int, group: GroupId, indices):
        self.master_seed = int(master_seed)
        self.group = group
        self.indices = np.asarray(indices, dtype=np.int64)
        self.keys = np.stack([derive_key(master_seed, group, i) for i in self.indices]) \
            if self.indices.size else np.zeros((0, 2), dtype=np.uint32)
        self.counter = 0

    def take(self, order: np.ndarray) -> "StreamBank":
        bank = StreamBank.__new__(StreamBank)
        bank.master_seed, bank.group = self.master_seed, self.group
        bank.indices = self.indices[order]
        bank.keys = self.keys[order]
        bank.counter = self.counter
        return bank

    def wiener(self, dt: float) -> np.ndarray:
        z = normal_pairs(self.keys, self.counter, LANE_WIENER)
        self.counter += 1
        return np.sqrt(dt) * z

    def initial_normals(self) -> np.ndarray:
        return normal_pairs(self.keys, 0, LANE_INIT_STATE)

    def explore(self, step_index: int, control_dim: int, amplitude: float) -> np.ndarray:
        """Uniform(-a, a) exploration noise, shape (n, control_dim)."""
        n_blocks = (control_dim + 1) // 2
        u = uniform_pairs(self.keys[:, None, :], step_index, LANE_EXPLORE, np.arange(n_blocks))
        u = u.reshape(len(self.keys), -1)[:, :control_dim]
        return amplitude * (2.0 * u - 1.0)

    def init_weights(self, slot: int, size: int, scale: float) -> np.ndarray:
        """Uniform(-s, s) initial weights, shape (n, size); ``slot`` names the approximator."""
        n_blocks = (size + 1) // 2
        u = uniform_pairs(self.keys[:, None, :], slot, LANE_INIT_WEIGHTS, np.arange(n_blocks))
        u = u.reshape(len(self.keys), -1)[:, :size]
        return scale * (2.0 * u - 1.0)
