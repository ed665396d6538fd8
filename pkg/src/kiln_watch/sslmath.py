"""Numeric and combinatorial kernels for self-supervised pretext tasks:
the contrastive NT-Xent loss with its analytic gradient, and jigsaw
permutation selection and patching.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

# Above this many candidate permutations we sample instead of enumerating.
PERMUTATION_POOL = 100_000


def _as_batch(vectors: np.ndarray) -> np.ndarray:
    z = np.asarray(vectors, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError(f"expected a 2-d batch, got shape {z.shape}")
    n = z.shape[0]
    if n < 2 or n % 2 != 0:
        raise ValueError(f"batch needs an even row count >= 2, got {n}")
    if not np.all(np.isfinite(z)):
        raise ValueError("batch contains non-finite values")
    return z


def _unit_rows(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("batch contains a zero-norm row; cosine undefined")
    return z / norms[:, None], norms


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not (math.isfinite(tau) and tau > 0.0):
        raise ValueError(f"temperature must be positive, got {tau!r}")
    return tau


def nt_xent_loss(vectors: np.ndarray, tau: float = 0.5,
                 ) -> tuple[float, np.ndarray]:
    """Normalized temperature-scaled cross-entropy over paired embeddings.

    Rows 2k and 2k+1 are the two augmented views of sample k.  For anchor i
    with partner j,

        l_i = -log( exp(s_ij / tau) / sum_{k != i} exp(s_ik / tau) )

    where s is cosine similarity; the positive pair is part of the
    denominator, only the self term is excluded.  Returns the mean over all
    2N anchors together with the per-anchor values.  Log-sum-exp is
    computed against the row maximum, so extreme temperatures do not
    overflow.
    """
    z = _as_batch(vectors)
    tau = _check_tau(tau)
    units, _ = _unit_rows(z)
    n = z.shape[0]
    logits = (units @ units.T) / tau

    idx = np.arange(n)
    partner = idx ^ 1
    off_diag = ~np.eye(n, dtype=bool)

    row_max = np.max(np.where(off_diag, logits, -np.inf), axis=1)
    shifted = np.where(off_diag, np.exp(logits - row_max[:, None]), 0.0)
    lse = row_max + np.log(shifted.sum(axis=1))

    per_anchor = lse - logits[idx, partner]
    return float(per_anchor.mean()), per_anchor


def nt_xent_grad(vectors: np.ndarray, tau: float = 0.5) -> np.ndarray:
    """Analytic gradient of the mean NT-Xent loss w.r.t. the raw embeddings.

    d(mean loss)/dS_ik for the off-diagonal similarity entries is
    (softmax weight - positive indicator) / (2N * tau), accumulated from
    both rows an entry appears in, then mapped through the cosine
    derivative dS_ik/dz_i = (u_k - S_ik * u_i) / |z_i|.
    """
    z = _as_batch(vectors)
    tau = _check_tau(tau)
    units, norms = _unit_rows(z)
    n = z.shape[0]
    sims = units @ units.T
    logits = sims / tau

    idx = np.arange(n)
    partner = idx ^ 1
    off_diag = ~np.eye(n, dtype=bool)

    row_max = np.max(np.where(off_diag, logits, -np.inf), axis=1)
    expd = np.where(off_diag, np.exp(logits - row_max[:, None]), 0.0)
    weights = expd / expd.sum(axis=1, keepdims=True)
    weights[idx, partner] -= 1.0

    coeff = weights / (n * tau)
    both = coeff + coeff.T
    lead = both @ units
    diag = (both * sims).sum(axis=1)
    return (lead - diag[:, None] * units) / norms[:, None]


@dataclass(frozen=True)
class PermutationSet:
    """Jigsaw target classes: k permutations of an n x n patch grid, the
    identity always first."""

    grid_n: int
    permutations: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if self.grid_n < 2:
            raise ValueError("grid_n must be >= 2")
        cells = self.grid_n ** 2
        ident = tuple(range(cells))
        if not self.permutations or self.permutations[0] != ident:
            raise ValueError("permutation set must start with the identity")
        seen = set()
        for perm in self.permutations:
            if sorted(perm) != list(range(cells)):
                raise ValueError(f"not a permutation of {cells} cells: {perm}")
            if perm in seen:
                raise ValueError(f"duplicate permutation {perm}")
            seen.add(perm)

    @property
    def k(self) -> int:
        return len(self.permutations)

    def min_pairwise_hamming(self) -> int:
        """Smallest Hamming distance between any two chosen permutations."""
        best = None
        for a, b in itertools.combinations(self.permutations, 2):
            d = sum(x != y for x, y in zip(a, b))
            best = d if best is None else min(best, d)
        return 0 if best is None else best


def select_permutations(grid_n: int, k: int, seed: int = 0) -> PermutationSet:
    """Pick k well-separated permutations of an n x n grid.

    Greedy farthest-point selection under Hamming distance, seeded with the
    identity: each step takes the candidate whose minimum distance to the
    already-chosen set is largest, breaking ties toward the
    lexicographically smallest candidate.  Candidates are the full
    enumeration when (n^2)! fits in the pool budget, otherwise a seeded
    random sample, so selection is deterministic either way.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    if k < 1:
        raise ValueError("k must be >= 1")
    cells = grid_n ** 2
    total = math.factorial(cells)
    if k > total:
        raise ValueError(f"k={k} exceeds {cells}! = {total} permutations")

    ident = tuple(range(cells))
    if total <= PERMUTATION_POOL:
        pool = [p for p in itertools.permutations(range(cells)) if p != ident]
    else:
        rng = np.random.default_rng(seed)
        sample = {tuple(rng.permutation(cells)) for _ in range(PERMUTATION_POOL)}
        sample.discard(ident)
        pool = sorted(sample)
        if k - 1 > len(pool):
            raise ValueError(
                f"k={k} exceeds the {len(pool) + 1} candidates in the sampled pool")

    cand = np.array(pool, dtype=np.int64)
    chosen = [ident]
    min_dist = np.full(len(pool), cells, dtype=np.int64)
    last = np.array(ident, dtype=np.int64)
    while len(chosen) < k:
        np.minimum(min_dist, (cand != last).sum(axis=1), out=min_dist)
        # argmax returns the first maximum; candidates are in lexicographic
        # order, so ties resolve to the smallest permutation.
        pick = int(np.argmax(min_dist))
        chosen.append(tuple(int(v) for v in cand[pick]))
        last = cand[pick]
        min_dist[pick] = -1
    return PermutationSet(grid_n=grid_n, permutations=tuple(chosen))


def split_patches(raster: np.ndarray, grid_n: int) -> list[np.ndarray]:
    """Cut a raster into grid_n x grid_n equal patches, row-major."""
    arr = np.asarray(raster)
    if arr.ndim not in (2, 3):
        raise ValueError(f"raster must be 2-d or 3-d, got shape {arr.shape}")
    h, w = arr.shape[:2]
    if h % grid_n or w % grid_n:
        raise ValueError(
            f"raster {h}x{w} does not divide into a {grid_n}x{grid_n} grid")
    ph, pw = h // grid_n, w // grid_n
    return [arr[r * ph:(r + 1) * ph, c * pw:(c + 1) * pw]
            for r in range(grid_n) for c in range(grid_n)]


def jigsaw_targets(raster: np.ndarray, perm_index: int,
                   perms: PermutationSet) -> tuple[list[np.ndarray], int]:
    """Permute a raster's patches and return (patches, class target).

    Slot i of the output holds source patch perms[perm_index][i]; the
    target is the permutation's index, which is what a jigsaw classifier
    is trained to recover.
    """
    if not 0 <= perm_index < perms.k:
        raise ValueError(f"perm_index {perm_index} outside [0, {perms.k})")
    patches = split_patches(raster, perms.grid_n)
    order = perms.permutations[perm_index]
    return [patches[src] for src in order], perm_index


def undo_jigsaw(patches: list[np.ndarray], perm: tuple[int, ...]) -> np.ndarray:
    """Reassemble a raster from permuted patches via the inverse permutation."""
    cells = len(perm)
    grid_n = math.isqrt(cells)
    if grid_n * grid_n != cells or len(patches) != cells:
        raise ValueError("patch count and permutation length must be n^2")
    restored: list[np.ndarray | None] = [None] * cells
    for slot, src in enumerate(perm):
        restored[src] = patches[slot]
    rows = [np.concatenate(restored[r * grid_n:(r + 1) * grid_n], axis=1)
            for r in range(grid_n)]
    return np.concatenate(rows, axis=0)
