"""Parameter sensitivity: fraction of same-scene groups with CV > 1."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Hashable, Mapping, Optional, Tuple


@dataclass(frozen=True)
class GroupStat:
    size: int
    mu: float
    sigma: float

    @property
    def cv(self) -> Optional[float]:
        # Undefined for an all-zero group: no variation to be sensitive to.
        if self.mu == 0:
            return None
        return self.sigma / self.mu

    @property
    def sensitive(self) -> bool:
        cv = self.cv
        return cv is not None and cv > 1.0


@dataclass(frozen=True)
class PsResult:
    ps: float
    n_groups: int
    n_sensitive: int
    group_stats: Dict[Hashable, GroupStat]
    degenerate: Tuple[Hashable, ...]


def _population_stats(values) -> Tuple[float, float]:
    n = len(values)
    mu = sum(values) / n
    var = sum((v - mu) ** 2 for v in values) / n
    return mu, math.sqrt(var)


def parameter_sensitivity(
    per_image_scores: Mapping[str, float],
    group_keys: Mapping[str, Hashable],
) -> PsResult:
    """PS = 100 * |groups with CV > 1| / |groups of size >= 2|.

    CV uses the population standard deviation.  Groups with mean 0 count
    as not sensitive; singleton groups are excluded and reported.
    """
    groups: Dict[Hashable, list] = {}
    for image_id, score in per_image_scores.items():
        if score < 0:
            raise ValueError(f"negative score for {image_id!r}")
        groups.setdefault(group_keys[image_id], []).append(score)

    stats: Dict[Hashable, GroupStat] = {}
    degenerate = []
    for key in sorted(groups, key=repr):
        values = groups[key]
        if len(values) < 2:
            degenerate.append(key)
            continue
        mu, sigma = _population_stats(values)
        stats[key] = GroupStat(size=len(values), mu=mu, sigma=sigma)

    if not stats:
        raise ValueError("no groups of size >= 2")
    n_sensitive = sum(1 for s in stats.values() if s.sensitive)
    return PsResult(
        ps=100.0 * n_sensitive / len(stats),
        n_groups=len(stats),
        n_sensitive=n_sensitive,
        group_stats=stats,
        degenerate=tuple(degenerate),
    )
