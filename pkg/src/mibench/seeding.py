"""Deterministic seed derivation.

Every random stream in the package is keyed by hashing a base seed
together with a tuple of string-convertible tags (SHA-256, first 8 bytes,
little-endian).  Distinct tag tuples give independent 64-bit seeds, so
grid cells, epochs, and evaluation shuffles never share a stream.
"""

import hashlib

import numpy as np


def derive_seed(base_seed, *tags):
    """Derive a 64-bit seed from ``base_seed`` and a sequence of tags.

    Parameters
    ----------
    base_seed : int
        Root seed supplied by the caller.
    *tags
        Any values with a stable ``str()`` form (ints, floats, strings,
        bools).

    Returns
    -------
    int
        Seed in ``[0, 2**64)``, a pure function of the inputs.
    """
    key = "|".join([str(int(base_seed))] + [str(t) for t in tags])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(base_seed, *tags):
    """Return a ``numpy.random.Generator`` seeded via :func:`derive_seed`."""
    return np.random.default_rng(derive_seed(base_seed, *tags))
