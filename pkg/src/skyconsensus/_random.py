"""Counter-based random streams.

Every stochastic choice in the asynchronous engine is a pure function of
``(seed, tag, a, b, c)``.  A node's draws therefore never depend on how many
other nodes exist or in which order events were processed, which is what keeps
runs reproducible and lets unrelated nodes (e.g. Sybil identities) be added
without perturbing anyone else's stream.

The compiled engine re-implements ``mix64``/``keyed_unit`` bit-for-bit; keep the
two in sync.
"""

import math

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
TWO_PI = 6.283185307179586
INV_2_53 = 1.0 / 9007199254740992.0

TAG_LATENCY_A = 1
TAG_LATENCY_B = 2
TAG_RULE = 3
TAG_ADVERSARY = 4


def mix64(z):
    """splitmix64 finalizer."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def keyed_hash(seed, tag, a, b, c):
    h = mix64((seed & MASK64) ^ ((tag * GOLDEN) & MASK64))
    h = mix64((h + a * GOLDEN) & MASK64)
    h = mix64((h + b * GOLDEN) & MASK64)
    return mix64((h + c * GOLDEN) & MASK64)


def keyed_unit(seed, tag, a, b, c):
    """Uniform double in [0, 1) derived from the key."""
    return (keyed_hash(seed, tag, a, b, c) >> 11) * INV_2_53


def gaussian_from_units(u1, u2):
    """Box-Muller; ``u1`` must lie in (0, 1]."""
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(TWO_PI * u2)


def keyed_latency(seed, sender, recipient, k, mu, sigma, cutoff):
    u1 = 1.0 - keyed_unit(seed, TAG_LATENCY_A, sender, recipient, k)
    u2 = keyed_unit(seed, TAG_LATENCY_B, sender, recipient, k)
    x = mu + sigma * gaussian_from_units(u1, u2)
    return cutoff if x < cutoff else x


class NodeStream:
    """Sequential stream for one node: the i-th call to ``random()`` returns
    ``keyed_unit(seed, TAG_RULE, node, i, 0)``."""

    __slots__ = ("seed", "node", "counter")

    def __init__(self, seed, node, counter=0):
        self.seed = seed
        self.node = node
        self.counter = counter

    def random(self):
        u = keyed_unit(self.seed, TAG_RULE, self.node, self.counter, 0)
        self.counter += 1
        return u
