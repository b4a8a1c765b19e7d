"""Matrix container conventions, seeded randomness and the DBCS1 file format.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64.  Signals,
measurements and codes are stored one sample per *column*.

Randomness
----------
:class:`Rng` wraps numpy's PCG64 bit generator seeded through
``SeedSequence(seed, spawn_key=stream)``.  Child streams are derived by
appending an integer to the stream key, so ``Rng(s).spawn(3)`` is always the
same stream no matter how many numbers the parent has already produced.
Uniform doubles come from ``Generator.random`` (53 random bits).  Normal
variates use the Box-Muller transform on consecutive uniform pairs
``(u1, u2)``::

    r = sqrt(-2 log(1 - u1))
    z0, z1 = r cos(2 pi u2), r sin(2 pi u2)

and are emitted in the order ``z0, z1, z0', z1', ...``.

DBCS1 format
------------
``b"DBCS1"`` | rows (uint32 LE) | cols (uint32 LE) | rows*cols float64 LE
values in column-major order.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .exceptions import (BadMagicError, DimensionMismatchError, MatrixFormatError,
                         NonFiniteError, TruncatedPayloadError)

MAGIC = b"DBCS1"
_HEADER = struct.Struct("<5sII")

#: Columns with a norm below this are treated as dead atoms.
DEAD_ATOM_NORM = 1e-10


class Rng:
    """Seeded, stream-indexed random number generator.

    Parameters
    ----------
    seed : int
        Unsigned 64-bit seed.
    stream : tuple of int, optional
        Stream key; use :meth:`spawn` rather than setting it directly.
    """

    def __init__(self, seed=0, stream=()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.stream = tuple(int(s) for s in stream)
        ss = np.random.SeedSequence(seed, spawn_key=self.stream)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"Rng(seed={self.seed}, stream={self.stream})"

    def spawn(self, index):
        """Return the independent child stream ``index``."""
        return Rng(self.seed, self.stream + (int(index),))

    def uniform(self, size):
        """Uniform doubles in [0, 1)."""
        return self._gen.random(size)

    def normal(self, size):
        """Standard normal variates via Box-Muller."""
        count = int(np.prod(size))
        pairs = (count + 1) // 2
        u = self._gen.random(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        z = np.empty((pairs, 2))
        z[:, 0] = r * np.cos(theta)
        z[:, 1] = r * np.sin(theta)
        return z.ravel()[:count].reshape(size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, n, size, replace=False):
        return self._gen.choice(n, size=size, replace=replace)


def as_rng(rng):
    """Coerce ``None``, an int seed or an :class:`Rng` into an :class:`Rng`."""
    if isinstance(rng, Rng):
        return rng
    if rng is None:
        return Rng(0)
    if isinstance(rng, (int, np.integer)):
        return Rng(int(rng))
    raise TypeError(f"cannot build an Rng from {type(rng).__name__}")


def as_matrix(a, name="matrix", finite=True):
    """Validate and convert ``a`` to a 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got shape {m.shape}")
    if finite and not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return m


def mat_write(m, path):
    """Write a matrix to ``path`` in DBCS1 format."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatchError(f"can only write 2-D matrices, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{path}: refusing to write non-finite entries")
    rows, cols = m.shape
    payload = np.asfortranarray(m).ravel(order="F").astype("<f8").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, rows, cols))
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write matrix to {path}: {exc}") from exc


def mat_read(path):
    """Read a DBCS1 matrix file.

    Raises
    ------
    BadMagicError, TruncatedPayloadError, NonFiniteError
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read matrix from {path}: {exc}") from exc
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise BadMagicError("bad magic, not a DBCS1 file", path)
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError("truncated header", path)
    _, rows, cols = _HEADER.unpack_from(data)
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        kind = "truncated payload" if len(data) < expected else "trailing bytes after payload"
        raise TruncatedPayloadError(
            f"{kind}: expected {expected} bytes for {rows}x{cols}, found {len(data)}", path)
    if rows == 0 or cols == 0:
        raise MatrixFormatError(f"empty dimensions {rows}x{cols}", path)
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    m = values.astype(np.float64).reshape((rows, cols), order="F")
    if not np.all(np.isfinite(m)):
        raise NonFiniteError(f"{path}: non-finite entry in payload")
    return np.ascontiguousarray(m)


def gaussian_matrix(rows, cols, rng):
    """``rows x cols`` matrix of i.i.d. standard normals, filled column by column."""
    if rows < 1 or cols < 1:
        raise ValueError(f"dimensions must be positive, got {rows}x{cols}")
    z = as_rng(rng).normal(rows * cols)
    return np.ascontiguousarray(z.reshape((rows, cols), order="F"))


def normalize_columns(m, rng):
    """Scale every column of ``m`` to unit Euclidean norm.

    Returns ``(normalized, scales)`` where ``scales`` holds the original
    column norms.  Dead columns (norm below ``DEAD_ATOM_NORM``) are replaced
    by a fresh random unit vector drawn from ``rng`` and get scale 0.
    """
    m = as_matrix(m)
    scales = np.linalg.norm(m, axis=0)
    out = np.empty_like(m)
    live = scales >= DEAD_ATOM_NORM
    out[:, live] = m[:, live] / scales[live]
    dead = np.flatnonzero(~live)
    if dead.size:
        rng = as_rng(rng)
        for j in dead:
            v = rng.normal(m.shape[0])
            out[:, j] = v / np.linalg.norm(v)
        scales = scales.copy()
        scales[dead] = 0.0
    return out, scales


def chain_product(mats, n=None):
    """Left-to-right product of a list of matrices; identity(n) if empty."""
    if not mats:
        if n is None:
            raise ValueError("need n for an empty product")
        return np.eye(n)
    out = mats[0]
    for m in mats[1:]:
        out = out @ m
    return out


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
