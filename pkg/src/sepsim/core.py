"""Shared lattice types for the boundary-driven symmetric exclusion chain.

The chain lives on sites 0..S+1. Sites 1..S are bulk sites holding at most one
particle each. The two edge sites act as reservoirs with pinned values: site 0
is always empty, site S+1 always occupied. Bond s joins sites s and s+1 for
s = 0..S. Firing an interior bond exchanges the two endpoint occupancies;
firing bond 0 empties site 1 (a particle leaves through the empty reservoir),
firing bond S fills site S (a particle enters from the full reservoir). Every
bond carries the same rate.

This module also owns the reproducible-randomness contract: an RngStream is a
value keyed by (seed, stream_id), and two streams with the same key always
yield the same draw sequence while distinct ids give statistically independent
sequences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

_MASK64 = (1 << 64) - 1

# A point set is a strictly increasing tuple of site indices; a cluster
# decomposition is its split into maximal runs of consecutive sites.
PointSet = tuple[int, ...]
ClusterDecomposition = list[tuple[int, ...]]


@dataclass(frozen=True)
class ModelParams:
    """Global model parameters: bulk size, bond rate, base RNG seed."""

    size: int
    rate: float = 1.0
    seed: int = 1

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValidationError(f"size must be >= 1, got {self.size}")
        if not self.rate > 0.0:
            raise ValidationError(f"rate must be positive, got {self.rate}")

    def stream(self, stream_id: int = 0) -> "RngStream":
        return RngStream(self.seed, stream_id)


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.seed & _MASK64, spawn_key=(self.stream_id & _MASK64,)
        )
        return np.random.Generator(np.random.PCG64(ss))

    def offset(self, k: int) -> "RngStream":
        """Stream for the k-th replica of a block anchored at this stream."""
        return RngStream(self.seed, self.stream_id + k)


def as_generator(rng: "RngStream | np.random.Generator") -> np.random.Generator:
    """Accept either a stream value or an already-instantiated generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return rng.generator()


@dataclass(frozen=True)
class Configuration:
    """Occupancies of sites 0..S+1 with the reservoir values pinned."""

    occupancy: tuple[int, ...]

    def __post_init__(self) -> None:
        occ = self.occupancy
        if len(occ) < 3:
            raise ValidationError("configuration needs at least one bulk site")
        if any(v not in (0, 1) for v in occ):
            raise ValidationError("occupancies must be 0 or 1")
        if occ[0] != 0:
            raise ValidationError("site 0 is pinned empty")
        if occ[-1] != 1:
            raise ValidationError("site S+1 is pinned occupied")

    @property
    def size(self) -> int:
        return len(self.occupancy) - 2

    @classmethod
    def from_interior(cls, interior: Sequence[int]) -> "Configuration":
        return cls((0, *interior, 1))

    @classmethod
    def from_interior_string(cls, bits: str) -> "Configuration":
        """Bulk occupancies written left to right, site 1 first."""
        return cls.from_interior([int(c) for c in bits])

    def interior(self) -> tuple[int, ...]:
        return self.occupancy[1:-1]

    def interior_string(self) -> str:
        return "".join(str(v) for v in self.interior())

    def as_array(self) -> np.ndarray:
        return np.array(self.occupancy, dtype=np.uint8)


def default_initial_configuration(params: ModelParams) -> Configuration:
    """Step profile used when no start is given: sites 1..ceil(S/2) occupied.

    The step faces against the stationary gradient, which makes it a useful
    deterministic start for relaxation and duality checks.
    """
    s = params.size
    half = (s + 1) // 2
    return Configuration.from_interior([1 if i <= half else 0 for i in range(1, s + 1)])


def apply_swap(config: Configuration, bond: int) -> Configuration:
    """Fire one bond and return the resulting configuration.

    Interior bonds exchange the endpoint values. Bond 0 sets site 1 empty,
    bond S sets site S occupied; both reduce to an exchange with the pinned
    reservoir value.
    """
    s = config.size
    if not 0 <= bond <= s:
        raise ValidationError(f"bond must lie in [0, {s}], got {bond}")
    occ = list(config.occupancy)
    if bond == 0:
        occ[1] = 0
    elif bond == s:
        occ[s] = 1
    else:
        occ[bond], occ[bond + 1] = occ[bond + 1], occ[bond]
    return Configuration(tuple(occ))


def enabled_bonds(config: Configuration) -> set[int]:
    """Bonds whose firing changes the configuration (unequal endpoint values)."""
    occ = config.occupancy
    return {s for s in range(config.size + 1) if occ[s] != occ[s + 1]}


def validate_point_set(
    points: Iterable[int], size: int, *, interior_only: bool = False
) -> PointSet:
    """Check a point set is nonempty, strictly increasing and in range."""
    pts = tuple(int(p) for p in points)
    if not pts:
        raise ValidationError("point set must be nonempty")
    if any(b <= a for a, b in zip(pts, pts[1:])):
        raise ValidationError(f"points must be strictly increasing, got {pts}")
    lo, hi = (1, size) if interior_only else (0, size + 1)
    if pts[0] < lo or pts[-1] > hi:
        raise ValidationError(f"points must lie in [{lo}, {hi}], got {pts}")
    return pts


def cluster_decompose(points: Iterable[int]) -> ClusterDecomposition:
    """Split a strictly increasing point set into maximal consecutive runs.

    Example: (2, 3, 7) -> [(2, 3), (7,)].
    """
    pts = tuple(int(p) for p in points)
    if any(b <= a for a, b in zip(pts, pts[1:])):
        raise ValidationError(f"points must be strictly increasing, got {pts}")
    clusters: ClusterDecomposition = []
    run: list[int] = []
    for p in pts:
        if run and p != run[-1] + 1:
            clusters.append(tuple(run))
            run = []
        run.append(p)
    if run:
        clusters.append(tuple(run))
    return clusters
