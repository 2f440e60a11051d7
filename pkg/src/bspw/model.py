"""Block structure, prior information and weight containers.

Indices are 0-based throughout: coordinates run over ``range(n)`` and block
indices over ``range(q)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "BlockPartition",
    "PriorModel1",
    "PriorModel2",
    "ModelError",
    "validate_partition",
    "check_weights",
    "expand_lambda",
    "load_model",
    "P_CLAMP",
]

#: Endpoint clamp for block probabilities.
P_CLAMP = 1e-6


class ModelError(ValueError):
    """Raised for inconsistent block structures or priors."""


def _frozen(a) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint blocks of coordinate indices covering ``range(n)``.

    Blocks are kept as explicit index arrays so that non-contiguous layouts
    (e.g. the rows of a vectorised multi-snapshot matrix) use the same code.
    """

    n: int
    blocks: tuple[np.ndarray, ...]
    block_ids: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ModelError(f"n must be >= 1, got {self.n}")
        if len(self.blocks) < 1:
            raise ModelError("need at least one block")
        ids = np.full(self.n, -1, dtype=np.intp)
        blocks = []
        for b, idx in enumerate(self.blocks):
            idx = np.asarray(idx, dtype=np.intp).ravel()
            if idx.size == 0:
                raise ModelError(f"block {b} is empty")
            if idx.min() < 0 or idx.max() >= self.n:
                raise ModelError(f"block {b} has indices outside range({self.n})")
            if np.any(ids[idx] != -1) or np.unique(idx).size != idx.size:
                raise ModelError(f"block {b} overlaps another block")
            ids[idx] = b
            blocks.append(_frozen(idx))
        if np.any(ids == -1):
            missing = np.flatnonzero(ids == -1)
            raise ModelError(f"coordinates not covered by any block: {missing[:10].tolist()}")
        object.__setattr__(self, "blocks", tuple(blocks))
        object.__setattr__(self, "block_ids", _frozen(ids))

    @classmethod
    def contiguous(cls, n: int, block_sizes: Sequence[int]) -> "BlockPartition":
        sizes = [int(s) for s in block_sizes]
        if any(s < 1 for s in sizes):
            raise ModelError(f"block sizes must be positive, got {sizes}")
        if sum(sizes) != n:
            raise ModelError(f"block sizes sum to {sum(sizes)}, expected n={n}")
        edges = np.concatenate([[0], np.cumsum(sizes)])
        return cls(n, tuple(np.arange(lo, hi) for lo, hi in zip(edges[:-1], edges[1:])))

    @classmethod
    def uniform(cls, q: int, k: int) -> "BlockPartition":
        return cls.contiguous(q * k, [k] * q)

    @property
    def q(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([b.size for b in self.blocks])

    @property
    def equal_size(self) -> int | None:
        """Common block size, or None if sizes differ."""
        s = self.sizes
        return int(s[0]) if np.all(s == s[0]) else None

    def block_norms(self, x: np.ndarray) -> np.ndarray:
        """l2 norm of each block of ``x`` (rows of a 2-D array are grouped)."""
        x = np.asarray(x)
        sq = np.abs(x) ** 2
        if sq.ndim > 1:
            sq = sq.reshape(sq.shape[0], -1).sum(axis=1)
        return np.sqrt(np.bincount(self.block_ids, weights=sq, minlength=self.q))

    def block_support(self, x: np.ndarray, tol: float = 0.0) -> np.ndarray:
        return np.flatnonzero(self.block_norms(x) > tol)


def validate_partition(n: int, block_sizes: Sequence[int]) -> BlockPartition:
    """Contiguous partition of ``range(n)`` with the given block sizes."""
    return BlockPartition.contiguous(n, block_sizes)


@dataclass(frozen=True)
class PriorModel1:
    """Per-block activation probabilities, strictly inside (0, 1)."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).ravel()
        if p.size == 0:
            raise ModelError("empty probability vector")
        if not np.all(np.isfinite(p)) or np.any(p <= 0) or np.any(p >= 1):
            raise ModelError(
                "block probabilities must lie strictly in (0, 1); "
                f"use PriorModel1.clamped to map endpoints to [{P_CLAMP}, 1-{P_CLAMP}]"
            )
        object.__setattr__(self, "p", _frozen(p))

    @classmethod
    def clamped(cls, p, eps: float = P_CLAMP) -> "PriorModel1":
        return cls(np.clip(np.asarray(p, dtype=float), eps, 1 - eps))

    @property
    def q(self) -> int:
        return self.p.size


@dataclass(frozen=True)
class PriorModel2:
    """Disjoint block-index sets with their expected accuracies.

    The sets must cover ``range(q)``; use :meth:`build` to append the
    complement set when they do not.
    """

    q: int
    sets: tuple[np.ndarray, ...]
    alphas: np.ndarray

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=float).ravel()
        if len(self.sets) != alphas.size:
            raise ModelError(f"{len(self.sets)} sets but {alphas.size} alphas")
        if np.any(alphas < 0) or np.any(alphas > 1) or not np.all(np.isfinite(alphas)):
            raise ModelError("alphas must lie in [0, 1]")
        owner = np.full(self.q, -1, dtype=np.intp)
        sets = []
        for i, s in enumerate(self.sets):
            s = np.asarray(s, dtype=np.intp).ravel()
            if s.size == 0:
                raise ModelError(f"set {i} is empty")
            if s.min() < 0 or s.max() >= self.q:
                raise ModelError(f"set {i} has block indices outside range({self.q})")
            if np.any(owner[s] != -1) or np.unique(s).size != s.size:
                raise ModelError(f"set {i} overlaps another set")
            owner[s] = i
            sets.append(_frozen(s))
        if np.any(owner == -1):
            raise ModelError(
                "sets do not cover every block; pass complement_alpha to PriorModel2.build"
            )
        object.__setattr__(self, "sets", tuple(sets))
        object.__setattr__(self, "alphas", _frozen(alphas))
        object.__setattr__(self, "_owner", _frozen(owner))

    @classmethod
    def build(cls, q: int, sets, alphas, complement_alpha: float | None = None) -> "PriorModel2":
        sets = [np.asarray(s, dtype=np.intp).ravel() for s in sets]
        alphas = [float(a) for a in alphas]
        covered = np.zeros(q, dtype=bool)
        for s in sets:
            covered[s] = True
        if not covered.all():
            if complement_alpha is None:
                raise ModelError(
                    f"{int((~covered).sum())} blocks are not in any set and no complement_alpha was given"
                )
            sets.append(np.flatnonzero(~covered))
            alphas.append(float(complement_alpha))
        return cls(q, tuple(sets), np.array(alphas))

    @property
    def L(self) -> int:
        return len(self.sets)

    @property
    def set_sizes(self) -> np.ndarray:
        return np.array([s.size for s in self.sets])

    @property
    def owner(self) -> np.ndarray:
        """Set index of every block."""
        return self._owner

    def block_probabilities(self) -> np.ndarray:
        """Per-block marginals that are uniform within each set."""
        return self.alphas[self._owner]


def check_weights(w, size: int | None = None, name: str = "weights") -> np.ndarray:
    """Validate a vector of strictly positive weights and return it as floats."""
    w = np.asarray(w, dtype=float).ravel()
    if size is not None and w.size != size:
        raise ModelError(f"{name} has length {w.size}, expected {size}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ModelError(f"{name} must be finite and strictly positive")
    return w


def expand_lambda(prior2: PriorModel2, lam) -> np.ndarray:
    """Per-block weights ``w = D @ lam``: every block takes the weight of its set."""
    lam = check_weights(lam, prior2.L, name="lambda")
    return lam[prior2.owner]


def load_model(source) -> dict:
    """Read a partition and prior from a JSON file path or an already-parsed dict.

    Recognised keys: ``n``, ``block_sizes`` (or ``blocks`` as explicit index
    lists), and either ``p`` (Model 1) or ``sets`` + ``alphas`` (Model 2, with
    optional ``complement_alpha``). Returns a dict with ``partition`` and
    ``prior`` (or ``prior2``).
    """
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            cfg = json.load(fh)
    else:
        cfg = dict(source)
    if "blocks" in cfg:
        partition = BlockPartition(int(cfg["n"]), tuple(np.asarray(b) for b in cfg["blocks"]))
    else:
        partition = validate_partition(int(cfg["n"]), cfg["block_sizes"])
    out = {"partition": partition, "config": cfg}
    if "p" in cfg:
        prior = PriorModel1(cfg["p"])
        if prior.q != partition.q:
            raise ModelError(f"p has {prior.q} entries for {partition.q} blocks")
        out["prior"] = prior
    if "sets" in cfg:
        out["prior2"] = PriorModel2.build(
            partition.q, cfg["sets"], cfg["alphas"], cfg.get("complement_alpha")
        )
    if "prior" not in out and "prior2" not in out:
        raise ModelError("model needs either 'p' or 'sets'/'alphas'")
    return out
