"""Exact stationary distribution of the chain by full state-space enumeration.

A bulk configuration is encoded as an S-bit integer with site 1 in the least
significant bit. The generator acts on all 2^S states; the stationary row
vector is found by power iteration on the uniformized kernel P = I + Q/Lambda
with Lambda = rate * (S+1), the total rate of the full bond clock. Occupation
moments (the probability that a given set of sites is simultaneously occupied)
are then plain masked sums over the state space.

Memory grows as 2^S so the module enforces a size cap; this path is meant for
desk-scale verification, not production sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .core import ModelParams, validate_point_set
from .errors import NumericError, ResourceError, ValidationError

MAX_EXACT_SIZE = 20

DEFAULT_TOL = 1e-13

# Extra matvecs after the increment test first passes; cheap, and they push the
# residual to the rounding floor instead of stopping right at the threshold.
_POLISH_ITERATIONS = 32


@dataclass(frozen=True)
class GeneratorMatrix:
    """Sparse generator: off-diagonal jump rates, diagonal minus row sums."""

    size: int
    rate: float
    matrix: sp.csr_matrix

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class StationaryVector:
    """Stationary probabilities indexed by bulk bitmask (site 1 = bit 0)."""

    size: int
    probabilities: np.ndarray
    residual: float


def build_generator(params: ModelParams) -> GeneratorMatrix:
    s = params.size
    if s > MAX_EXACT_SIZE:
        raise ResourceError(
            f"exact solve limited to size <= {MAX_EXACT_SIZE}, got {s}"
        )
    dim = 1 << s
    states = np.arange(dim, dtype=np.int64)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    for bond in range(s + 1):
        if bond == 0:
            # empties site 1: enabled where bit 0 is set
            mask = (states & 1) == 1
            targets = states[mask] & ~np.int64(1)
        elif bond == s:
            # fills site S: enabled where the top bulk bit is clear
            top = np.int64(1 << (s - 1))
            mask = (states & top) == 0
            targets = states[mask] | top
        else:
            lo = np.int64(1 << (bond - 1))
            hi = np.int64(1 << bond)
            mask = ((states & lo) != 0) != ((states & hi) != 0)
            targets = states[mask] ^ (lo | hi)
        rows.append(states[mask])
        cols.append(targets)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    data = np.full(r.shape, params.rate)
    q = sp.coo_matrix((data, (r, c)), shape=(dim, dim)).tocsr()
    out_rates = np.asarray(q.sum(axis=1)).ravel()
    q = q + sp.diags(-out_rates, format="csr")
    return GeneratorMatrix(size=s, rate=params.rate, matrix=q)


def stationary_distribution(
    gen: GeneratorMatrix, tol: float = DEFAULT_TOL
) -> StationaryVector:
    """Power-iterate pi <- pi P until the L1 increment drops below tol."""
    if not 0.0 < tol < 1.0:
        raise ValidationError(f"tol must lie in (0, 1), got {tol}")
    dim = gen.dimension
    lam_total = gen.rate * (gen.size + 1)
    # Column-oriented transpose so each iteration is a single csr matvec.
    kernel_t = (sp.eye(dim, format="csr") + gen.matrix / lam_total).T.tocsr()
    pi = np.full(dim, 1.0 / dim)
    max_iter = max(10_000, 8 * (gen.size + 1) ** 3)
    increment = np.inf
    for it in range(max_iter):
        nxt = kernel_t @ pi
        increment = float(np.abs(nxt - pi).sum())
        pi = nxt
        if increment < tol:
            for _ in range(_POLISH_ITERATIONS):
                pi = kernel_t @ pi
            break
        if it % 1024 == 1023:
            pi /= pi.sum()
    else:
        raise NumericError(
            f"power iteration did not reach increment {tol} in {max_iter} steps"
            f" (last increment {increment:.3e})"
        )
    pi /= pi.sum()
    residual = float(np.abs(gen.matrix.T @ pi).max())
    return StationaryVector(size=gen.size, probabilities=pi, residual=residual)


def exact_moment(pi: StationaryVector, points: Iterable[int]) -> float:
    """Stationary probability that every listed site is occupied.

    Reservoir sites resolve by their pinned values: a set containing site 0
    has moment 0, and site S+1 drops out (always occupied). The empty set has
    moment 1.
    """
    s = pi.size
    pts = tuple(int(p) for p in points)
    if not pts:
        return 1.0
    pts = validate_point_set(pts, s)
    if pts[0] == 0:
        return 0.0
    pts = tuple(p for p in pts if p != s + 1)
    if not pts:
        return 1.0
    mask = 0
    for p in pts:
        mask |= 1 << (p - 1)
    states = np.arange(pi.probabilities.shape[0], dtype=np.int64)
    hit = (states & mask) == mask
    return float(pi.probabilities[hit].sum())


def occupation_profile(pi: StationaryVector) -> np.ndarray:
    """Vector of single-site moments for sites 1..S."""
    return np.array([exact_moment(pi, (x,)) for x in range(1, pi.size + 1)])


def pair_moments(pi: StationaryVector) -> dict[tuple[int, int], float]:
    """All two-site moments keyed by (x, y) with x < y."""
    s = pi.size
    return {
        (x, y): exact_moment(pi, (x, y))
        for x in range(1, s + 1)
        for y in range(x + 1, s + 1)
    }
