"""Catalog and Zipf popularity.

Popularity is attached to ranks, never to content identities: when a
content is replaced every rank below it shifts by one, so the rank is all
the model needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray


def zipf_popularity(n: int, skew: float) -> NDArray[np.float64]:
    """f_i = i^-v / sum_j j^-v for ranks i = 1..n."""
    if n < 1:
        raise ValueError(f"catalog size must be >= 1, got {n}")
    if skew < 0:
        raise ValueError(f"Zipf skew must be >= 0, got {skew}")
    weights = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** skew
    return weights / weights.sum()


@dataclass(frozen=True, eq=False)
class Catalog:
    """N ranked contents; each slot one is replaced with probability p_c."""
    size: int
    skew: float
    update_prob: float
    popularity: NDArray[np.float64] = field(init=False, repr=False)
    _head: NDArray[np.float64] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.update_prob <= 1.0:
            raise ValueError(f"update_prob must lie in [0, 1], got {self.update_prob}")
        f = zipf_popularity(self.size, self.skew)
        head = np.concatenate([[0.0], np.cumsum(f)])
        head[-1] = 1.0
        f.setflags(write=False)
        head.setflags(write=False)
        object.__setattr__(self, "popularity", f)
        object.__setattr__(self, "_head", head)

    def rank_popularity(self, rank: int) -> float:
        """f_rank for rank in 1..N; 0 beyond the catalog."""
        if rank < 1:
            raise ValueError(f"rank must be >= 1, got {rank}")
        return float(self.popularity[rank - 1]) if rank <= self.size else 0.0

    @property
    def harmonic(self) -> float:
        """sum_j j^-v, the Zipf normalizer."""
        return float(np.sum(1.0 / np.arange(1, self.size + 1, dtype=np.float64) ** self.skew))


def head_mass(catalog: Catalog, pushed: int) -> float:
    """Probability that a request hits one of the ``pushed`` most popular ranks."""
    if not 0 <= pushed <= catalog.size:
        raise ValueError(f"pushed count must lie in [0, {catalog.size}], got {pushed}")
    return float(catalog._head[pushed])
