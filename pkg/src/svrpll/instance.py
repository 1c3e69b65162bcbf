"""Problem instances: targets, candidate landmark sites and the geometric cover sets.

Random generation uses numpy's PCG64 generator.  The integer seed feeds a
``SeedSequence`` that is split into two child streams, one for targets and one
for candidate sites, so changing the number of sites never perturbs the target
draws.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np


class InstanceError(ValueError):
    """Raised for invalid instance parameters or malformed instance files."""


class Point2(NamedTuple):
    x: float
    y: float


class EdgeId(NamedTuple):
    i: int
    j: int


def edge(a: int, b: int) -> EdgeId:
    """Canonical undirected edge key with ``i < j``."""
    if a == b:
        raise InstanceError(f"self-loop ({a}, {b}) is not an edge")
    return EdgeId(a, b) if a < b else EdgeId(b, a)


def all_edges(n: int) -> List[EdgeId]:
    return [EdgeId(i, j) for i, j in combinations(range(n), 2)]


@dataclass
class Instance:
    targets: List[Point2]
    candidate_sites: List[Point2]
    sensing_range: float
    landmark_cost: List[float]
    seed: int = 0

    def __post_init__(self):
        self.targets = [Point2(float(x), float(y)) for x, y in self.targets]
        self.candidate_sites = [Point2(float(x), float(y)) for x, y in self.candidate_sites]
        self.landmark_cost = [float(d) for d in self.landmark_cost]
        self.sensing_range = float(self.sensing_range)
        self.check()

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def n_sites(self) -> int:
        return len(self.candidate_sites)

    def check(self) -> None:
        if len(self.targets) < 2:
            raise InstanceError("an instance needs at least 2 targets")
        if not self.sensing_range > 0 or not math.isfinite(self.sensing_range):
            raise InstanceError(f"sensing range must be positive, got {self.sensing_range}")
        if len(self.landmark_cost) != len(self.candidate_sites):
            raise InstanceError("landmark_cost must have one entry per candidate site")
        if any(not (d >= 0) or not math.isfinite(d) for d in self.landmark_cost):
            raise InstanceError("landmark costs must be finite and nonnegative")
        for p in list(self.targets) + list(self.candidate_sites):
            if not (math.isfinite(p.x) and math.isfinite(p.y)):
                raise InstanceError(f"non-finite coordinate {p}")

    def to_dict(self) -> dict:
        return {
            "targets": [[p.x, p.y] for p in self.targets],
            "sites": [[p.x, p.y] for p in self.candidate_sites],
            "sensing_range": self.sensing_range,
            "landmark_cost": list(self.landmark_cost),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        try:
            return cls(
                targets=data["targets"],
                candidate_sites=data["sites"],
                sensing_range=data["sensing_range"],
                landmark_cost=data["landmark_cost"],
                seed=int(data.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise InstanceError(f"malformed instance data: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Instance":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class CoverSets:
    per_target: Dict[int, FrozenSet[int]]
    per_edge: Dict[EdgeId, FrozenSet[int]]


@dataclass
class ValidationReport:
    coverable_incident: Dict[int, int]
    flagged_targets: List[int] = field(default_factory=list)

    @property
    def infeasible_certain(self) -> bool:
        return bool(self.flagged_targets)

    def lines(self) -> List[str]:
        out = [f"target {v}: {c} coverable incident edges" for v, c in self.coverable_incident.items()]
        if self.infeasible_certain:
            out.append("verdict: infeasible-certain (targets with < 2 coverable incident edges: "
                       + ", ".join(map(str, self.flagged_targets)) + ")")
        else:
            out.append("verdict: no flags")
        return out


def generate_instance(n_targets: int, seed: int, grid_side: float = 100.0,
                      site_factor: int = 5, sensing_range: float = 35.0,
                      n_sites: Optional[int] = None) -> Instance:
    """Uniform random targets and sites on ``[0, grid_side]^2`` with unit landmark costs.

    ``n_sites`` overrides ``site_factor * n_targets`` when given.
    """
    if n_targets < 2:
        raise InstanceError(f"n_targets must be >= 2, got {n_targets}")
    if not grid_side > 0:
        raise InstanceError(f"grid_side must be positive, got {grid_side}")
    if not sensing_range > 0:
        raise InstanceError(f"sensing_range must be positive, got {sensing_range}")
    if site_factor < 0:
        raise InstanceError(f"site_factor must be nonnegative, got {site_factor}")
    if n_sites is not None and n_sites < 0:
        raise InstanceError(f"n_sites must be nonnegative, got {n_sites}")
    target_seq, site_seq = np.random.SeedSequence(seed).spawn(2)
    targets = np.random.Generator(np.random.PCG64(target_seq)).uniform(0.0, grid_side, (n_targets, 2))
    if n_sites is None:
        n_sites = int(site_factor * n_targets)
    sites = np.random.Generator(np.random.PCG64(site_seq)).uniform(0.0, grid_side, (n_sites, 2))
    return Instance(
        targets=[tuple(p) for p in targets.tolist()],
        candidate_sites=[tuple(p) for p in sites.tolist()],
        sensing_range=sensing_range,
        landmark_cost=[1.0] * n_sites,
        seed=seed,
    )


def compute_cover_sets(inst: Instance) -> CoverSets:
    rho = inst.sensing_range
    per_target = {}
    for v, t in enumerate(inst.targets):
        per_target[v] = frozenset(
            k for k, s in enumerate(inst.candidate_sites) if math.hypot(s.x - t.x, s.y - t.y) < rho
        )
    per_edge = {e: per_target[e.i] & per_target[e.j] for e in all_edges(inst.n_targets)}
    return CoverSets(per_target, per_edge)


def compute_edge_costs(inst: Instance) -> Dict[EdgeId, float]:
    t = inst.targets
    return {e: math.hypot(t[e.i].x - t[e.j].x, t[e.i].y - t[e.j].y) for e in all_edges(inst.n_targets)}


def validate_instance(inst: Instance, cov: CoverSets) -> ValidationReport:
    """Necessary-condition check: a covered tour needs two coverable edges at every target."""
    counts = {v: 0 for v in range(inst.n_targets)}
    for e, sites in cov.per_edge.items():
        if len(sites) >= 2:
            counts[e.i] += 1
            counts[e.j] += 1
    flagged = [v for v, c in counts.items() if c < 2]
    return ValidationReport(counts, flagged)


def tour_length(order: Sequence[int], costs: Dict[EdgeId, float]) -> float:
    return sum(costs[edge(a, b)] for a, b in zip(order, order[1:]))
