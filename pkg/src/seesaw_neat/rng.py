"""Seedable, splittable random streams.

Every stochastic operation in the toolkit takes an explicit
``numpy.random.Generator`` so a whole run is a pure function of one root
seed.  Episode seeds are derived functionally (no shared cursor) so
evaluations can run in any order, or in parallel, without changing results.
"""

import numpy as np


def make_rng(seed):
    """Create a generator from an integer seed or a SeedSequence."""
    return np.random.default_rng(seed)


def spawn(rng, n):
    """Split `n` independent child streams off a generator."""
    return [np.random.default_rng(s) for s in rng.bit_generator.seed_seq.spawn(n)]


def derive_seed(*parts):
    """Deterministically hash a tuple of non-negative ints into a 32-bit seed."""
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])


def rng_state(rng):
    """JSON-serializable snapshot of a generator's position."""
    return rng.bit_generator.state


def restore_rng(state):
    """Rebuild a generator from a snapshot taken with rng_state()."""
    rng = np.random.default_rng(0)
    rng.bit_generator.state = state
    return rng
