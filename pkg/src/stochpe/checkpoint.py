"""Binary state checkpoints.

Layout (little endian):

* magic ``HSTV1`` (5 bytes)
* truncation radius n   (uint32)
* grid points per axis  (uint32)
* component count       (uint32)
* step index            (uint64)
* time                  (float64)
* payload: (re, im) float64 pairs for every coefficient in lexicographic
  (component, m1, m2, m3) order, with each m running from -n to n.

Parity tags are not stored; the reader assigns them from context (states are
two even components, noise coefficient fields are (even, even, odd)).
"""

from __future__ import annotations

import struct

import numpy as np

from .spectral import Lattice, Parity, SpectralField

MAGIC = b"HSTV1"
_HEADER = struct.Struct("<5sIIIQd")


class CheckpointError(ValueError):
    pass


def write_state(path: str, field: SpectralField, step: int, time: float) -> None:
    lat = field.lattice
    payload = np.ascontiguousarray(
        np.stack([field.coeffs.real, field.coeffs.imag], axis=-1), dtype="<f8"
    )
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, lat.n, lat.grid, field.ncomp, step, float(time)))
        fh.write(payload.tobytes())


def read_state(
    path: str, parity: tuple[Parity, ...] | None = None
) -> tuple[SpectralField, int, float]:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise CheckpointError(f"{path}: truncated header")
        magic, n, grid, ncomp, step, time = _HEADER.unpack(head)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        w = 2 * n + 1
        expected = ncomp * w * w * w * 2 * 8
        body = fh.read(expected + 1)
        if len(body) < expected:
            raise CheckpointError(f"{path}: truncated payload ({len(body)} < {expected})")
        if len(body) > expected:
            raise CheckpointError(f"{path}: trailing bytes after payload")
    raw = np.frombuffer(body, dtype="<f8").reshape(ncomp, w, w, w, 2)
    coeffs = raw[..., 0] + 1j * raw[..., 1]
    if parity is None:
        parity = tuple([Parity.EVEN] * ncomp) if ncomp != 3 else (
            Parity.EVEN, Parity.EVEN, Parity.ODD,
        )
    field = SpectralField(Lattice(int(n), int(grid)), coeffs.copy(), parity)
    return field, int(step), float(time)
