"""Strand-based hairstyle container and its binary file format.

A hairstyle is a flat particle array plus a prefix-sum offset table; strand
``s`` owns particles ``offsets[s]:offsets[s+1]`` and its first particle is
the root. All coordinates are meters.

File format (little-endian): magic ``HAIR``, u32 version (=1), u32 strand
count, then per strand a u32 vertex count followed by ``count * 3`` f32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

_MAGIC = b"HAIR"
_VERSION = 1


class HairFileError(ValueError):
    """Malformed hair file. Carries the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class Hairstyle:
    """Immutable particle positions with per-strand offsets.

    positions: (N, 3) float64, meters.
    offsets:   (S + 1,) int64 prefix sums; strand s = positions[offsets[s]:offsets[s+1]].
    """

    positions: np.ndarray
    offsets: np.ndarray
    _root_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must be (N, 3)")
        if self.offsets.ndim != 1 or self.offsets.size < 2:
            raise ValueError("offsets must hold at least one strand")
        if self.offsets[0] != 0 or self.offsets[-1] != len(self.positions):
            raise ValueError("offsets must start at 0 and end at the particle count")
        counts = np.diff(self.offsets)
        if np.any(counts < 2):
            raise ValueError("every strand needs at least 2 particles")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("non-finite particle coordinates")
        mask = np.zeros(len(self.positions), dtype=bool)
        mask[self.offsets[:-1]] = True
        self._root_mask = mask
        self.positions.setflags(write=False)
        self.offsets.setflags(write=False)

    @property
    def n_particles(self) -> int:
        return len(self.positions)

    @property
    def n_strands(self) -> int:
        return len(self.offsets) - 1

    @property
    def root_indices(self) -> np.ndarray:
        """First particle of each strand."""
        return self.offsets[:-1]

    @property
    def root_mask(self) -> np.ndarray:
        return self._root_mask

    @property
    def strand_counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def strand_slice(self, s: int) -> slice:
        return slice(int(self.offsets[s]), int(self.offsets[s + 1]))

    def strand_positions(self, s: int) -> np.ndarray:
        return self.positions[self.strand_slice(s)]

    def strand_of_particle(self) -> np.ndarray:
        """Particle index -> strand index."""
        return np.repeat(np.arange(self.n_strands), self.strand_counts)

    def segments(self) -> np.ndarray:
        """All (a, b) particle index pairs of consecutive in-strand particles."""
        idx = np.arange(self.n_particles)
        a = np.delete(idx, self.offsets[1:] - 1)  # drop last particle per strand
        return np.column_stack([a, a + 1])

    def interior_mask(self) -> np.ndarray:
        """Particles with both in-strand neighbors (excludes endpoints)."""
        mask = np.ones(self.n_particles, dtype=bool)
        mask[self.offsets[:-1]] = False
        mask[self.offsets[1:] - 1] = False
        return mask

    def bounding_box_diagonal(self) -> float:
        lo = self.positions.min(axis=0)
        hi = self.positions.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def with_positions(self, positions: np.ndarray) -> "Hairstyle":
        """Same strand structure, new particle positions."""
        return Hairstyle(positions, self.offsets.copy())

    def arc_lengths(self) -> np.ndarray:
        """Per-particle arc length from the strand root, on these positions."""
        s = np.zeros(self.n_particles)
        seg = self.segments()
        lengths = np.linalg.norm(self.positions[seg[:, 1]] - self.positions[seg[:, 0]], axis=1)
        np.add.at(s, seg[:, 1], lengths)
        for a, b in zip(self.offsets[:-1], self.offsets[1:]):
            s[a:b] = np.cumsum(s[a:b])
        return s


def load_hairstyle(path) -> Hairstyle:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12:
        raise HairFileError("file shorter than header", len(data))
    if data[:4] != _MAGIC:
        raise HairFileError(f"bad magic {data[:4]!r}, expected {_MAGIC!r}", 0)
    version, strand_count = struct.unpack_from("<II", data, 4)
    if version != _VERSION:
        raise HairFileError(f"unsupported version {version}", 4)
    pos = 12
    counts = np.empty(strand_count, dtype=np.int64)
    chunks = []
    for s in range(strand_count):
        if pos + 4 > len(data):
            raise HairFileError(f"truncated: strand {s} count missing", pos)
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if count < 2:
            raise HairFileError(f"strand {s} has {count} < 2 particles", pos - 4)
        nbytes = count * 12
        if pos + nbytes > len(data):
            raise HairFileError(f"truncated: strand {s} payload", pos)
        chunk = np.frombuffer(data, dtype="<f4", count=count * 3, offset=pos).reshape(-1, 3)
        if not np.all(np.isfinite(chunk)):
            bad = int(np.flatnonzero(~np.isfinite(chunk).all(axis=1))[0])
            raise HairFileError(f"non-finite coordinates in strand {s}", pos + bad * 12)
        counts[s] = count
        chunks.append(chunk)
        pos += nbytes
    if pos != len(data):
        raise HairFileError(f"{len(data) - pos} trailing bytes", pos)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    positions = (
        np.concatenate(chunks).astype(np.float64)
        if chunks
        else np.empty((0, 3), dtype=np.float64)
    )
    return Hairstyle(positions, offsets)


def save_hairstyle(path, hair: Hairstyle) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, hair.n_strands))
        pos32 = hair.positions.astype("<f4")
        for s in range(hair.n_strands):
            sl = hair.strand_slice(s)
            f.write(struct.pack("<I", sl.stop - sl.start))
            f.write(pos32[sl].tobytes())


def hairstyle_to_bytes(hair: Hairstyle) -> bytes:
    """Serialized file content, identical to what save_hairstyle writes."""
    parts = [_MAGIC, struct.pack("<II", _VERSION, hair.n_strands)]
    pos32 = hair.positions.astype("<f4")
    for s in range(hair.n_strands):
        sl = hair.strand_slice(s)
        parts.append(struct.pack("<I", sl.stop - sl.start))
        parts.append(pos32[sl].tobytes())
    return b"".join(parts)
