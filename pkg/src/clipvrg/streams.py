"""Counter-based random streams for reproducible, order-independent sampling.

All randomness in a run derives from one 64-bit master seed. Philox counters
partition the key space so that every (round, agent) pair owns a disjoint
stream: results cannot depend on the order agents are processed in, or on
how many worker threads execute a round.

Counter layout (256-bit Philox counter, little-endian 64-bit words):
    word 0: Philox's own draw counter (advances as numbers are generated)
    word 1: agent id (0 for whole-round block streams)
    word 2: round index
    word 3: region tag (0 = simulation rounds, 1 = setup draws)
"""
from __future__ import annotations

import numpy as np

_SETUP_REGION = 1 << 192

# Setup-stream tags. Keeping them fixed means e.g. the sampled attacked set
# does not change when an unrelated config field changes.
TOPOLOGY_TAG = 0
PROBLEM_TAG = 1
ATTACK_TAG = 2
INIT_TAG = 3


def round_stream(master_seed: int, t: int) -> np.random.Generator:
    """Stream owning all of round t's oracle draws (agents consume fixed slices)."""
    return np.random.Generator(np.random.Philox(key=master_seed, counter=t << 128))


def agent_round_stream(master_seed: int, agent: int, t: int) -> np.random.Generator:
    """Private stream for one agent at one round."""
    counter = (t << 128) | ((agent + 1) << 64)
    return np.random.Generator(np.random.Philox(key=master_seed, counter=counter))


def setup_stream(master_seed: int, tag: int) -> np.random.Generator:
    """Stream for one-off construction draws (theta_star, datasets, attacked set)."""
    return np.random.Generator(np.random.Philox(key=master_seed, counter=_SETUP_REGION | (tag << 128)))


def derive_seed(master_seed: int, tag: int) -> int:
    """Child 64-bit seed for builders that take a plain integer seed."""
    return int(setup_stream(master_seed, tag).integers(0, 2**63, dtype=np.uint64))
