"""Counter-based deterministic random numbers.

Every draw is a pure function of ``(global seed, namespace, k0, k1, k2)``.
Nothing here keeps state, so the same draw can be reproduced from any
worker, any partition, and any replay of a run.  This is what makes the
single-node vs partitioned bit-equivalence check possible at all.

The generator is a SplitMix64-style finalizer chain over the counters,
turned into uniforms and then normals via Box-Muller.
"""

from __future__ import annotations

import numpy as np

# Draw namespaces.  Each subsystem owns one so that counter tuples never
# collide across unrelated draw sites.
NS_MOTION = 0
NS_RECEPTOR = 1
NS_SEEDING = 2
NS_CREATION = 3
NS_BURST = 4
NS_TEST = 9

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64


def _finalize(x: np.ndarray) -> np.ndarray:
    """SplitMix64 output finalizer (bijective 64-bit mix)."""
    x = (x ^ (x >> _U64(30))) * _MIX1
    x = (x ^ (x >> _U64(27))) * _MIX2
    return x ^ (x >> _U64(31))


def _mix_counters(seed, ns, k0, k1, k2):
    """Fold (seed, ns, k0, k1, k2) into one well-mixed 64-bit word."""
    # uint64 wrap-around is intentional throughout.
    with np.errstate(over="ignore"):
        h = _finalize(_U64(seed) + _GOLDEN)
        h = _finalize(h + _GOLDEN * (np.asarray(ns, dtype=np.uint64) + _U64(1)))
        h = _finalize(h + _GOLDEN * (np.asarray(k0, dtype=np.uint64) + _U64(1)))
        h = _finalize(h + _GOLDEN * (np.asarray(k1, dtype=np.uint64) + _U64(1)))
        h = _finalize(h + _GOLDEN * (np.asarray(k2, dtype=np.uint64) + _U64(1)))
    return h


def _to_unit(u: np.ndarray) -> np.ndarray:
    # Top 53 bits -> (0, 1]; never 0, so log() is always finite.
    return ((u >> _U64(11)).astype(np.float64) + 1.0) * (2.0 ** -53)


def uniform(seed, ns, k0, k1, k2):
    """Uniform draw in (0, 1], pure in all five counters.

    All counter arguments broadcast; the result has the broadcast shape
    (or is a float scalar for all-scalar input).
    """
    u = _to_unit(_mix_counters(seed, ns, k0, k1, k2))
    return float(u) if u.ndim == 0 else u


def gaussian(seed, ns, k0, k1, k2):
    """Standard normal draw, pure in all five counters.

    Box-Muller over two derived uniforms; one normal per counter tuple.
    """
    h = _mix_counters(seed, ns, k0, k1, k2)
    with np.errstate(over="ignore"):
        u1 = _to_unit(_finalize(h))
        u2 = _to_unit(_finalize(h ^ _GOLDEN))
    g = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return float(g) if g.ndim == 0 else g


def draw_gaussian(seed: int, object_id, step: int, slot) -> float | np.ndarray:
    """Per-object standard normal for the motion phase.

    ``slot`` distinguishes independent draws within one step (slots 0-2
    are the Cartesian displacement components).
    """
    return gaussian(seed, NS_MOTION, object_id, step, slot)
