"""Per-concern random streams derived from one master seed.

Each concern (world, sensing, faults, spray, ...) gets its own
``numpy.random.Generator``.  The stream for ``name`` is built from
``SeedSequence(master_seed, spawn_key=(crc32(name),))`` so toggling one
fault never shifts the draws seen by unrelated noise sources.
"""

import zlib

import numpy as np

CONCERNS = ("world", "sensing", "faults", "spray", "vision", "mission", "scenario", "disturbance")


def stream(master_seed: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(master_seed), spawn_key=(key,))))


class Streams:
    """Lazily created named generators for one run."""

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self._streams = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = stream(self.master_seed, name)
        return self._streams[name]
