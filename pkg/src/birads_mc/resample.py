"""SMOTE oversampling of minority groups in feature space."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from .errors import ResamplingError, ValidationError

GROUP_BY_BIRADS = "birads"
GROUP_BY_PATHOLOGY = "pathology"


@dataclass(frozen=True)
class SmoteConfig:
    """``target`` is either ``"match_majority"`` or an explicit {group: count} map."""

    k_neighbors: int = 5
    group_key: str = GROUP_BY_BIRADS
    target: str | Mapping[Hashable, int] = "match_majority"
    seed: int = 0
    round_binary: bool = False

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValidationError("k_neighbors must be >= 1")
        if self.group_key not in (GROUP_BY_BIRADS, GROUP_BY_PATHOLOGY):
            raise ValidationError(f"unknown group key {self.group_key!r}")
        if isinstance(self.target, str) and self.target != "match_majority":
            raise ValidationError(f"unknown SMOTE target {self.target!r}")


@dataclass(frozen=True, eq=False)
class SmoteResult:
    """Originals first (verbatim, in input order), then synthetics.

    For a synthetic row ``i``: ``X[i] = X[source[i]] + u[i] * (X[neighbor[i]] - X[source[i]])``
    where ``source`` and ``neighbor`` index the original rows. Originals have
    ``source[i] == i``, ``neighbor[i] == -1`` and ``u[i]`` NaN.
    """

    X: np.ndarray
    groups: list
    source: np.ndarray
    neighbor: np.ndarray
    u: np.ndarray
    synthetic: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "synthetic", self.neighbor >= 0)

    def __len__(self) -> int:
        return self.X.shape[0]


def nearest_neighbors(points, query_index: int, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest points (Euclidean), excluding the query; ties go to the lower index."""
    P = np.asarray(points, dtype=float)
    if not 1 <= k <= P.shape[0] - 1:
        raise ValidationError(f"k={k} needs between 1 and {P.shape[0] - 1} neighbours")
    d = np.sqrt(((P - P[query_index]) ** 2).sum(axis=1))
    d[query_index] = np.inf
    return np.argsort(d, kind="stable")[:k]


def _targets(counts: dict, target) -> dict:
    if isinstance(target, str):
        top = max(counts.values())
        return {g: top for g in counts}
    out = {}
    for g, n in counts.items():
        want = int(target.get(g, n))
        if want < n:
            raise ValidationError(f"target {want} for group {g} is below its size {n}")
        out[g] = want
    return out


def smote_balance(
    X,
    groups: Sequence[Hashable],
    cfg: SmoteConfig = SmoteConfig(),
    binary_mask: np.ndarray | None = None,
) -> SmoteResult:
    """Synthesise ``target - size`` points per group by interpolating a member
    toward one of its ``k`` nearest in-group neighbours.

    Group ``j`` (in order of first appearance) draws from a stream derived
    from ``(cfg.seed, j)``. With ``cfg.round_binary`` the slots flagged by
    ``binary_mask`` are rounded at 0.5 after interpolation.
    """
    X = np.asarray(X, dtype=float)
    groups = list(groups)
    if X.shape[0] != len(groups):
        raise ValidationError(f"{X.shape[0]} vectors but {len(groups)} group labels")
    members: dict = {}
    for i, g in enumerate(groups):
        members.setdefault(g, []).append(i)
    counts = {g: len(ix) for g, ix in members.items()}
    targets = _targets(counts, cfg.target) if counts else {}

    new_X, new_src, new_nb, new_u, new_groups = [], [], [], [], []
    for j, (g, ix) in enumerate(members.items()):
        need = targets[g] - len(ix)
        if need <= 0:
            continue
        if len(ix) < 2:
            raise ResamplingError(f"group {g} has a single member; SMOTE needs at least two")
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(j,)))
        G = X[ix]
        k = min(cfg.k_neighbors, len(ix) - 1)
        neigh = [nearest_neighbors(G, q, k) for q in range(len(ix))]
        for _ in range(need):
            a = int(rng.integers(len(ix)))
            b = int(neigh[a][rng.integers(k)])
            u = float(rng.random())
            new_X.append(G[a] + u * (G[b] - G[a]))
            new_src.append(ix[a])
            new_nb.append(ix[b])
            new_u.append(u)
            new_groups.append(g)

    n = X.shape[0]
    if new_X:
        S = np.stack(new_X)
        if cfg.round_binary and binary_mask is not None:
            S[:, binary_mask] = (S[:, binary_mask] >= 0.5).astype(float)
        X_out = np.vstack([X, S])
    else:
        X_out = X.copy()
    return SmoteResult(
        X=X_out,
        groups=groups + new_groups,
        source=np.concatenate([np.arange(n), np.asarray(new_src, dtype=int)]),
        neighbor=np.concatenate([np.full(n, -1), np.asarray(new_nb, dtype=int)]),
        u=np.concatenate([np.full(n, np.nan), np.asarray(new_u, dtype=float)]),
    )
