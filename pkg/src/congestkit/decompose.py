"""Network decomposition: partition every vertex into color classes of
well-separated clusters.

Each color class is one carving run over the not-yet-clustered residue;
the carve's death budget guarantees the residue shrinks by a factor x
per class. decompose_logn uses x = 2 and runs classes until the residue
is empty (at most ceil(log2 n) + 1 of them). decompose_few_colors runs
exactly lam classes with x = ceil(n^(1/lam)), which drives the residue
to zero because x^lam >= n; it uses the fast distance-1 carve when
k == 1 and the distance-k carve otherwise.

validate_decomposition checks the partition (every vertex in exactly
one cluster of exactly one class), per-class structural validity, and
strict pairwise cluster distance > k inside every class, and reports
the measured class count, tree radius, and congestion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .carving import PhaseRecord, carve_distance_k, carve_fast
from .clusters import (
    ClusterCollection,
    min_cluster_distance,
    validate_collection,
)
from .engine import SimConfig
from .errors import CollectionError, DecompositionError
from .graphs import Graph, log2_ceil


@dataclass(frozen=True)
class ClassStats:
    """What one color class cost and achieved."""

    seeds: int
    clustered: int
    clusters: int
    x: int
    steiner_radius: int
    congestion: int
    phases: int

    def as_dict(self) -> dict:
        return {
            "seeds": self.seeds,
            "clustered": self.clustered,
            "clusters": self.clusters,
            "x": self.x,
            "steiner_radius": self.steiner_radius,
            "congestion": self.congestion,
            "phases": self.phases,
        }


@dataclass(frozen=True)
class NetworkDecomposition:
    """Color classes of cluster collections, pairwise separation > k
    within each class, jointly covering every vertex exactly once."""

    color_classes: tuple[ClusterCollection, ...]
    k: int
    stats: tuple[ClassStats, ...]

    @property
    def colors(self) -> int:
        return len(self.color_classes)

    def to_json(self) -> str:
        return json.dumps(
            {
                "k": self.k,
                "classes": [json.loads(cc.to_json()) for cc in self.color_classes],
                "stats": [s.as_dict() for s in self.stats],
            },
            indent=2,
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "NetworkDecomposition":
        try:
            obj = json.loads(text)
            classes = tuple(
                ClusterCollection.from_json(json.dumps(c)) for c in obj["classes"]
            )
            stats = tuple(ClassStats(**s) for s in obj["stats"])
            return NetworkDecomposition(classes, int(obj["k"]), stats)
        except (KeyError, TypeError, ValueError) as exc:
            raise DecompositionError(f"bad decomposition serialization: {exc}") from exc


@dataclass(frozen=True)
class DecompositionReport:
    """Measured quality of a validated decomposition."""

    colors: int
    max_steiner_radius: int
    max_congestion: int
    min_separation: float
    per_class: tuple[dict, ...] = field(default=())


def _class_stats(
    g: Graph, cc: ClusterCollection, seeds: int, x: int, records: list[PhaseRecord]
) -> ClassStats:
    measured = validate_collection(g, cc)
    return ClassStats(
        seeds=seeds,
        clustered=len(cc.covered()),
        clusters=len(cc.clusters),
        x=x,
        steiner_radius=measured.steiner_radius,
        congestion=measured.congestion,
        phases=len(records),
    )


def decompose_logn(
    g: Graph, k: int, cfg: SimConfig | None = None
) -> NetworkDecomposition:
    """Partition all vertices into at most ceil(log2 n) + 1 classes of
    clusters with pairwise distance > k inside each class."""
    if k < 1:
        raise DecompositionError(f"cluster distance must be >= 1, got {k}")
    residue = set(range(g.n))
    classes: list[ClusterCollection] = []
    stats: list[ClassStats] = []
    limit = log2_ceil(g.n) + 1
    while residue:
        if len(classes) >= limit:
            raise DecompositionError(
                f"residue of {len(residue)} nodes left after {limit} classes"
            )
        cc, dead, records = carve_distance_k(g, residue, k, 2, cfg=cfg)
        if 2 * len(dead) > len(residue):
            raise DecompositionError(
                f"class {len(classes)} clustered only "
                f"{len(residue) - len(dead)} of {len(residue)} nodes"
            )
        stats.append(_class_stats(g, cc, len(residue), 2, records))
        classes.append(cc)
        residue = dead
    return NetworkDecomposition(tuple(classes), k, tuple(stats))


def _ceil_root(n: int, lam: int) -> int:
    """ceil(n^(1/lam)) in exact integer arithmetic."""
    r = max(1, round(n ** (1.0 / lam)))
    while r**lam > n:
        r -= 1
    while (r + 1) ** lam <= n:
        r += 1
    return r if r**lam == n else r + 1


def decompose_few_colors(
    g: Graph, lam: int, k: int, cfg: SimConfig | None = None
) -> NetworkDecomposition:
    """Partition all vertices into at most lam classes, paying for the
    small class count with cluster collections carved at x = ceil(n^(1/lam))."""
    if k < 1:
        raise DecompositionError(f"cluster distance must be >= 1, got {k}")
    if not 1 <= lam <= log2_ceil(g.n):
        raise DecompositionError(
            f"class budget must be in 1..{log2_ceil(g.n)}, got {lam}"
        )
    x = _ceil_root(g.n, lam)
    residue = set(range(g.n))
    classes: list[ClusterCollection] = []
    stats: list[ClassStats] = []
    for _ in range(lam):
        if not residue:
            break
        if k == 1:
            cc, dead, records = carve_fast(g, residue, x, cfg=cfg)
        else:
            cc, dead, records = carve_distance_k(g, residue, k, x, cfg=cfg)
        if x * len(dead) > len(residue):
            raise DecompositionError(
                f"class {len(classes)} left a residue of {len(dead)} nodes "
                f"from {len(residue)}, more than the 1/{x} budget"
            )
        stats.append(_class_stats(g, cc, len(residue), x, records))
        classes.append(cc)
        residue = dead
    if residue:
        raise DecompositionError(
            f"{len(residue)} nodes still unclustered after {lam} classes"
        )
    return NetworkDecomposition(tuple(classes), k, tuple(stats))


def validate_decomposition(g: Graph, nd: NetworkDecomposition) -> DecompositionReport:
    """Check the partition and separation promises; return measurements."""
    seen: dict[int, int] = {}
    for idx, cc in enumerate(nd.color_classes):
        for v in cc.covered():
            if v in seen:
                raise DecompositionError(
                    f"node {v} clustered in classes {seen[v]} and {idx}"
                )
            seen[v] = idx
    missing = [v for v in range(g.n) if v not in seen]
    if missing:
        raise DecompositionError(
            f"{len(missing)} nodes in no class (first: {missing[0]})"
        )

    max_radius = max_congestion = 0
    min_sep = float("inf")
    per_class = []
    for idx, cc in enumerate(nd.color_classes):
        try:
            measured = validate_collection(g, cc)
        except CollectionError as exc:
            raise DecompositionError(f"class {idx}: {exc}") from exc
        sep = min_cluster_distance(g, cc)
        if sep <= nd.k:
            raise DecompositionError(
                f"class {idx}: clusters at distance {sep}, need more than {nd.k}"
            )
        max_radius = max(max_radius, measured.steiner_radius)
        max_congestion = max(max_congestion, measured.congestion)
        min_sep = min(min_sep, sep)
        per_class.append(
            {
                "clusters": len(cc.clusters),
                "nodes": len(cc.covered()),
                "steiner_radius": measured.steiner_radius,
                "congestion": measured.congestion,
                "separation": sep,
            }
        )
    return DecompositionReport(
        colors=nd.colors,
        max_steiner_radius=max_radius,
        max_congestion=max_congestion,
        min_separation=min_sep,
        per_class=tuple(per_class),
    )
