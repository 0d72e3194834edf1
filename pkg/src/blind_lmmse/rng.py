"""Counter-based random streams for reproducible data generation.

Every random quantity in :mod:`blind_lmmse.datagen` is drawn from a Philox
stream keyed by ``(seed, component_tag)``.  Within a stream, sample ``j``
owns the fixed-size block of raw 64-bit words ``[j*w, (j+1)*w)`` where
``w`` is the number of variates the component needs per sample, so the
value of sample ``j`` never depends on how many samples were drawn before
it and disjoint index ranges can be generated independently.

Gaussian variates use the inverse-CDF transform ``ndtri((raw + 0.5) / 2^64)``,
which consumes exactly one word per variate (unlike rejection samplers whose
consumption is data dependent).  Streams are bit-reproducible for a fixed
build of numpy/scipy; reproducibility across maths libraries is not claimed.
"""

from __future__ import annotations

import hashlib

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

_WORD_SCALE = 2.0 ** -64


def derive_key(seed: int, tag: str) -> int:
    """128-bit Philox key derived from an integer seed and a component tag."""
    h = hashlib.blake2s(tag.encode("utf-8"), digest_size=8).digest()
    tag_word = int.from_bytes(h, "little")
    return (int(seed) & (2**64 - 1)) | (tag_word << 64)


def derive_seed(seed: int, tag: str) -> int:
    """Stable 63-bit sub-seed for naming independent child streams."""
    h = hashlib.blake2s(
        f"{int(seed)}:{tag}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(h, "little") >> 1


def raw_words(seed: int, tag: str, count: int, offset: int = 0) -> np.ndarray:
    """Raw uint64 words ``[offset, offset+count)`` of the (seed, tag) stream."""
    bg = Philox(key=derive_key(seed, tag))
    offset = int(offset)
    if offset:
        # advance() steps the 4-word counter blocks, not individual words
        blocks, rem = divmod(offset, 4)
        if blocks:
            bg.advance(blocks)
        if rem:
            return bg.random_raw(rem + int(count))[rem:]
    return bg.random_raw(int(count))


def uniforms(seed: int, tag: str, count: int, offset: int = 0) -> np.ndarray:
    """Uniform variates on the open interval (0, 1), one word each."""
    raw = raw_words(seed, tag, count, offset)
    return (raw + 0.5) * _WORD_SCALE


def normals(seed: int, tag: str, shape, offset: int = 0) -> np.ndarray:
    """Standard-normal variates via the inverse CDF, one word each.

    ``shape=(N, w)`` lays out sample ``j`` on row ``j``; together with
    ``offset=j0*w`` this addresses the per-sample blocks described in the
    module docstring.
    """
    shape = tuple(np.atleast_1d(shape).astype(int))
    count = int(np.prod(shape)) if shape else 1
    u = uniforms(seed, tag, count, offset)
    return ndtri(u).reshape(shape)
