"""Virtual-ID assignment: partition the positive integers into per-user ID sets.

Each user owns a block of ``ids_per_user`` consecutive virtual IDs; blocks are
either assigned in user order (deterministic mode) or permuted among users
with a seeded shuffle. Devices broadcast a virtual ID from their set and the
server resolves it back to the owning user. Rotation re-permutes the blocks
under a new epoch number.
"""

from __future__ import annotations

import random
from dataclasses import dataclass


class UnknownVirtualIdError(KeyError):
    """Virtual ID not assigned to any user."""


@dataclass(frozen=True)
class VirtualIdTable:
    """Immutable mapping between users and their virtual-ID blocks.

    ``user_of_block`` is None in deterministic mode (identity permutation).
    Virtual IDs are 1-based: user 0's deterministic block is {1, ..., r}.
    """

    population: int
    ids_per_user: int
    epoch: int = 0
    user_of_block: tuple[int, ...] | None = None
    block_of_user: tuple[int, ...] | None = None

    def ids_of(self, user: int) -> range:
        """The virtual-ID set owned by ``user``."""
        if not 0 <= user < self.population:
            raise UnknownVirtualIdError(f"unknown user {user}")
        block = user if self.block_of_user is None else self.block_of_user[user]
        r = self.ids_per_user
        return range(block * r + 1, (block + 1) * r + 1)

    def resolve(self, vid: int) -> int:
        """Owning user of ``vid``."""
        if vid < 1 or vid > self.population * self.ids_per_user:
            raise UnknownVirtualIdError(f"unassigned virtual ID {vid}")
        block = (vid - 1) // self.ids_per_user
        return block if self.user_of_block is None else self.user_of_block[block]


def _permuted(population: int, ids_per_user: int, epoch: int, seed: int) -> VirtualIdTable:
    perm = list(range(population))
    random.Random(seed).shuffle(perm)
    block_of_user = tuple(perm)
    user_of_block = [0] * population
    for user, block in enumerate(perm):
        user_of_block[block] = user
    return VirtualIdTable(
        population=population,
        ids_per_user=ids_per_user,
        epoch=epoch,
        user_of_block=tuple(user_of_block),
        block_of_user=block_of_user,
    )


def assign(
    population: int,
    ids_per_user: int,
    mode: str = "deterministic",
    seed: int | None = None,
) -> VirtualIdTable:
    """Create the epoch-0 table. Modes: ``deterministic`` or ``seeded``."""
    if population < 1 or ids_per_user < 1:
        raise ValueError("population and ids_per_user must be >= 1")
    if mode == "deterministic":
        return VirtualIdTable(population=population, ids_per_user=ids_per_user)
    if mode == "seeded":
        if seed is None:
            raise ValueError("seeded mode needs a seed")
        return _permuted(population, ids_per_user, epoch=0, seed=seed)
    raise ValueError(f"unknown assignment mode {mode!r}")


def rotate(table: VirtualIdTable, seed: int) -> VirtualIdTable:
    """New epoch with blocks re-permuted from ``seed``; the ID universe is unchanged."""
    return _permuted(table.population, table.ids_per_user, table.epoch + 1, seed)


class IdRegistry:
    """All epochs of the ID table, reconstructible from seeds.

    Streams carry the epoch their samples were recorded under, so old uploads
    must resolve against the table of that epoch even after later rotations.
    The registry stores only the generation recipe and materializes tables on
    demand.
    """

    def __init__(
        self,
        population: int,
        ids_per_user: int,
        mode: str = "deterministic",
        seed: int | None = None,
        rotation_seeds: list[int] | None = None,
    ):
        self.population = population
        self.ids_per_user = ids_per_user
        self.mode = mode
        self.seed = seed
        self.rotation_seeds: list[int] = list(rotation_seeds or [])
        self._cache: dict[int, VirtualIdTable] = {}

    @property
    def current_epoch(self) -> int:
        return len(self.rotation_seeds)

    @property
    def current(self) -> VirtualIdTable:
        return self.table(self.current_epoch)

    def table(self, epoch: int) -> VirtualIdTable:
        if not 0 <= epoch <= self.current_epoch:
            raise KeyError(f"unknown epoch {epoch}")
        if epoch not in self._cache:
            if epoch == 0:
                self._cache[0] = assign(self.population, self.ids_per_user, self.mode, self.seed)
            else:
                self._cache[epoch] = _permuted(
                    self.population, self.ids_per_user, epoch, self.rotation_seeds[epoch - 1]
                )
        return self._cache[epoch]

    def rotate(self, seed: int) -> VirtualIdTable:
        self.rotation_seeds.append(seed)
        return self.current

    def to_dict(self) -> dict:
        return {
            "population": self.population,
            "ids_per_user": self.ids_per_user,
            "mode": self.mode,
            "seed": self.seed,
            "rotation_seeds": list(self.rotation_seeds),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IdRegistry":
        return cls(
            population=data["population"],
            ids_per_user=data["ids_per_user"],
            mode=data.get("mode", "deterministic"),
            seed=data.get("seed"),
            rotation_seeds=data.get("rotation_seeds", []),
        )
