"""The six pairwise similarity measures and Jensen-Shannon divergence."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass
from typing import Optional, Sequence

from .features import FeatureProfile, extract_features
from .graph import Graph

MEASURES = ("S", "D", "Nd", "Cc", "Bc", "Cm")
DEFAULT_BINS = 20

# written into results manifests so alternate conventions can be told apart
CONVENTIONS = {
    "jsd_log_base": 2,
    "continuous_bins": DEFAULT_BINS,
    "binning": "equal-width over [0,1], last bin closed",
    "degree_alignment": "union support 0..max degree, zero padded",
    "community_distribution": "Louvain sizes / |V|, sorted descending, zero padded",
}


class InvalidDistribution(ValueError):
    pass


class UndefinedMeasure(ValueError):
    pass


def _check_prob(p: Sequence[float], name: str) -> None:
    if any(not math.isfinite(x) or x < 0 for x in p):
        raise InvalidDistribution(f"{name} has negative or non-finite entries")
    if abs(math.fsum(p) - 1.0) > 1e-9:
        raise InvalidDistribution(f"{name} sums to {math.fsum(p)!r}, not 1")


def jsd(p: Sequence[float], q: Sequence[float]) -> float:
    """Jensen-Shannon divergence in bits, so the result lies in [0, 1]."""
    if len(p) != len(q):
        raise ValueError(f"length mismatch: {len(p)} vs {len(q)}")
    _check_prob(p, "p")
    _check_prob(q, "q")
    terms = []
    for a, b in zip(p, q):
        # a / ((a+b)/2) written so subnormal inputs cannot underflow the midpoint
        if a > 0:
            terms.append(0.5 * a * math.log2(2.0 * a / (a + b)))
        if b > 0:
            terms.append(0.5 * b * math.log2(2.0 * b / (a + b)))
    return min(1.0, max(0.0, math.fsum(terms)))


def pad(p: Sequence[float], length: int) -> list[float]:
    return list(p) + [0.0] * (length - len(p))


def histogram(values: Sequence[float], bins: int = DEFAULT_BINS) -> list[float]:
    counts = [0] * bins
    for v in values:
        counts[min(bins - 1, max(0, int(math.floor(v * bins))))] += 1
    total = len(values)
    return [c / total for c in counts]


# -- measures over profiles ----------------------------------------------------


def _ratio_similarity(a: float, b: float) -> float:
    return 1.0 - abs(a - b) / max(a, b)


def sim_size(g1: Graph, g2: Graph) -> float:
    return _ratio_similarity(g1.node_count, g2.node_count)


def sim_density(g1: Graph, g2: Graph) -> float:
    d1, d2 = g1.linear_density(), g2.linear_density()
    if d1 == 0 and d2 == 0:
        raise UndefinedMeasure("linear density similarity is undefined for two edgeless graphs")
    return _ratio_similarity(d1, d2)


def degree_similarity(p1: FeatureProfile, p2: FeatureProfile) -> float:
    length = max(len(p1.degree_dist), len(p2.degree_dist))
    return 1.0 - jsd(pad(p1.degree_dist, length), pad(p2.degree_dist, length))


def binned_similarity(v1: Sequence[float], v2: Sequence[float], bins: int = DEFAULT_BINS) -> float:
    return 1.0 - jsd(histogram(v1, bins), histogram(v2, bins))


def community_distribution(sizes: Sequence[int]) -> list[float]:
    total = sum(sizes)
    return [s / total for s in sorted(sizes, reverse=True)]


def community_similarity(p1: FeatureProfile, p2: FeatureProfile) -> float:
    a = community_distribution(p1.community_sizes)
    b = community_distribution(p2.community_sizes)
    length = max(len(a), len(b))
    return 1.0 - jsd(pad(a, length), pad(b, length))


def sim_degree(g1: Graph, g2: Graph) -> float:
    return degree_similarity(extract_features(g1), extract_features(g2))


def sim_clustering(g1: Graph, g2: Graph, bins: int = DEFAULT_BINS) -> float:
    return binned_similarity(
        extract_features(g1).clustering_values, extract_features(g2).clustering_values, bins
    )


def sim_betweenness(g1: Graph, g2: Graph, bins: int = DEFAULT_BINS) -> float:
    return binned_similarity(
        extract_features(g1).betweenness_values, extract_features(g2).betweenness_values, bins
    )


def sim_community(g1: Graph, g2: Graph) -> float:
    return community_similarity(extract_features(g1), extract_features(g2))


@dataclass(frozen=True)
class SimilarityVector:
    S: float
    D: float
    Nd: float
    Cc: float
    Bc: float
    Cm: float

    def __post_init__(self) -> None:
        for name, v in zip(MEASURES, astuple(self)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"measure {name}={v} outside [0, 1]")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(MEASURES, astuple(self)))

    def mean(self) -> float:
        return math.fsum(astuple(self)) / len(MEASURES)


def similarity_vector(
    g1: Graph,
    g2: Graph,
    p1: Optional[FeatureProfile] = None,
    p2: Optional[FeatureProfile] = None,
    bins: int = DEFAULT_BINS,
) -> SimilarityVector:
    """All six measures for ``(g1, g2)``; pass cached profiles to skip extraction."""
    p1 = p1 if p1 is not None else extract_features(g1)
    p2 = p2 if p2 is not None else extract_features(g2)
    return SimilarityVector(
        S=sim_size(g1, g2),
        D=sim_density(g1, g2),
        Nd=degree_similarity(p1, p2),
        Cc=binned_similarity(p1.clustering_values, p2.clustering_values, bins),
        Bc=binned_similarity(p1.betweenness_values, p2.betweenness_values, bins),
        Cm=community_similarity(p1, p2),
    )
