"""Recovery of the difference DAG from a covariance pair.

Four stages, all driven by precision-difference estimates. Vertices whose
difference rows vanish are invariant and dropped. The remainder is peeled
into layers: vertices with a zero difference diagonal are terminal in the
difference DAG, so they are extracted, removed, and the difference is
re-estimated over what is left. Support pairs of the original (restricted)
difference are then oriented from earlier-eliminated vertex to later, which
yields a supergraph of the truth. Finally each edge is re-tested with
candidate common-children subsets removed; an edge whose entry can be zeroed
that way is an artifact of shared children and is pruned.

On exact covariances from a pair that passes ``oracles.check_assumptions``,
the pruned result equals the support of B1 - B2 exactly.
"""

from __future__ import annotations

import itertools
import warnings as _warnings
from dataclasses import dataclass, replace

from .errors import OrderStallError, VertexMismatchError
from .estimators import (
    DeltaPrecision,
    EstimatorConfig,
    estimate_dantzig,
    solve_population,
    threshold,
    with_resolved_lambda,
)
from .sem import CovariancePair, DagEdgeSet


class PartialPruneWarning(UserWarning):
    """Pruning stopped early because a descendant set exceeded the cap."""


@dataclass(frozen=True)
class LayeredOrder:
    """Disjoint vertex layers in elimination order, earliest first.

    Layer k holds vertices removed at stage k; vertices eliminated later sit
    earlier in the causal order of the difference DAG (terminal vertices come
    out first).
    """

    layers: tuple = ()

    def __post_init__(self):
        layers = tuple(frozenset(layer) for layer in self.layers)
        seen: set = set()
        for layer in layers:
            if not layer:
                raise ValueError("layers must be nonempty")
            if layer & seen:
                raise ValueError("layers must be pairwise disjoint")
            seen |= layer
        object.__setattr__(self, "layers", layers)

    def all_labels(self) -> frozenset:
        out: set = set()
        for layer in self.layers:
            out |= layer
        return frozenset(out)

    def layer_of(self, label) -> int:
        for k, layer in enumerate(self.layers):
            if label in layer:
                return k
        raise KeyError(f"label {label!r} is in no layer")

    def to_json(self) -> list:
        return [sorted(layer) for layer in self.layers]


@dataclass(frozen=True)
class PipelineConfig:
    """How the pipeline estimates and reads the precision difference.

    ``estimator`` picks exact population solves or the constrained-l1
    program. Finite-sample zero tests use ``est_cfg.epsilon``; population
    estimates are thresholded at ``population_zero_tol`` instead, a numerical
    zero for values the algebra makes exactly zero. Descendant sets larger
    than ``prune_subset_cap`` are only partially searched (with a warning).
    """

    estimator: str = "population"
    est_cfg: EstimatorConfig = EstimatorConfig()
    record_trace: bool = False
    population_zero_tol: float = 1e-9
    prune_subset_cap: int = 12

    def __post_init__(self):
        if self.estimator not in ("population", "dantzig"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.population_zero_tol <= 0.0:
            raise ValueError("population_zero_tol must be positive")
        if self.prune_subset_cap < 0:
            raise ValueError("prune_subset_cap must be nonnegative")

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        kwargs = dict(obj)
        if "est_cfg" in kwargs:
            kwargs["est_cfg"] = EstimatorConfig.from_json(kwargs["est_cfg"])
        return cls(**kwargs)


@dataclass(frozen=True)
class PipelineResult:
    """Everything the pipeline produced, including the elimination order."""

    delta: DagEdgeSet
    invariant_vertices: frozenset
    order: LayeredOrder
    trace: tuple | None = None
    warnings: tuple = ()

    def to_json(self) -> dict:
        out = {
            "invariant": sorted(self.invariant_vertices),
            "layers": self.order.to_json(),
            "edges": [list(e) for e in self.delta.sorted_edges()],
        }
        if self.warnings:
            out["warnings"] = list(self.warnings)
        if self.trace is not None:
            out["trace"] = [
                {**entry, "delta": entry["delta"].to_json()}
                if "delta" in entry
                else dict(entry)
                for entry in self.trace
            ]
        return out


def _estimate(cov: CovariancePair, cfg: PipelineConfig) -> DeltaPrecision:
    """One thresholded estimate in the configured mode."""
    if cfg.estimator == "population":
        return threshold(solve_population(cov), cfg.population_zero_tol)
    return estimate_dantzig(cov, cfg.est_cfg)


def invariant_vertices(dp: DeltaPrecision) -> frozenset:
    """Labels whose entire (thresholded) difference row is zero."""
    return dp.zero_rows()


def compute_order(
    cov: CovariancePair,
    cfg: PipelineConfig,
    initial: DeltaPrecision | None = None,
    trace: list | None = None,
) -> LayeredOrder:
    """Peel zero-diagonal vertices into layers, re-estimating between peels.

    ``cov`` must already be restricted to the non-invariant vertices. The
    loop runs while more than one vertex remains; a final leftover vertex
    becomes its own layer, so the layers partition the input labels. If some
    iteration finds no zero diagonal the run stalls, which signals an
    assumption violation or a badly chosen threshold.
    """
    remaining = list(cov.labels)
    layers: list[frozenset] = []
    dp = initial if initial is not None else _estimate(cov, cfg)
    while len(remaining) > 1:
        peeled = [lab for lab in remaining if dp.entry(lab, lab) == 0.0]
        if not peeled:
            raise OrderStallError(
                f"no zero-diagonal vertex among {len(remaining)} remaining; "
                "assumptions violated or epsilon too small",
                stuck_delta=dp,
            )
        layers.append(frozenset(peeled))
        peeled_set = set(peeled)
        remaining = [lab for lab in remaining if lab not in peeled_set]
        if trace is not None:
            trace.append({"stage": "order_layer", "layer": sorted(peeled), "remaining": sorted(remaining)})
        if len(remaining) <= 1:
            break
        dp = _estimate(cov.restrict(remaining), cfg)
        if trace is not None:
            trace.append({"stage": "order_estimate", "labels": sorted(remaining), "delta": dp})
    if len(remaining) == 1:
        layers.append(frozenset(remaining))
    return LayeredOrder(tuple(layers))


def orient_edges(dp: DeltaPrecision, order: LayeredOrder) -> DagEdgeSet:
    """Turn difference support pairs into directed edges along the layers.

    For each layer in elimination order and each vertex i in it, every
    support partner j outside the layer contributes the edge (i, j) unless
    the reverse was already added. Earlier-eliminated vertices therefore end
    up as children.
    """
    delta: set = set()
    for layer in order.layers:
        for i in sorted(layer):
            for j in sorted(dp.nonzero_partners(i)):
                if j in layer or (j, i) in delta:
                    continue
                delta.add((i, j))
    return DagEdgeSet(vertices=frozenset(dp.labels), edges=frozenset(delta))


def prune(
    delta: DagEdgeSet,
    cov: CovariancePair,
    order: LayeredOrder,
    cfg: PipelineConfig,
    trace: list | None = None,
    warn_sink: list | None = None,
) -> DagEdgeSet:
    """Drop edges whose difference entry vanishes once common children go.

    For an edge (i, j), the candidate common children are the vertices
    eliminated strictly before j (descendants of j in the layered order),
    excluding i. Subsets are removed in increasing size and the difference is
    re-estimated over the rest; the first subset that zeroes the (i, j) entry
    kills the edge. Descendant sets above ``cfg.prune_subset_cap`` are only
    searched within a 2**cap subset budget.
    """
    kept = set(delta.edges)
    cache: dict[frozenset, DeltaPrecision] = {}
    all_labels = list(cov.labels)
    budget = 2 ** cfg.prune_subset_cap

    def estimate_over(retained: tuple) -> DeltaPrecision:
        key = frozenset(retained)
        if key not in cache:
            cache[key] = _estimate(cov.restrict(retained), cfg)
        return cache[key]

    for (i, j) in sorted(delta.edges, key=lambda e: (repr(e[0]), repr(e[1]))):
        j_layer = order.layer_of(j)
        descendants: set = set()
        for layer in order.layers[:j_layer]:
            descendants |= layer
        descendants.discard(i)
        desc = sorted(descendants, key=repr)
        truncated = len(desc) > cfg.prune_subset_cap
        tested = 0
        removed = False
        for size in range(len(desc) + 1):
            for drop in itertools.combinations(desc, size):
                if truncated and tested >= budget:
                    break
                tested += 1
                drop_set = set(drop)
                retained = tuple(lab for lab in all_labels if lab not in drop_set)
                dp_s = estimate_over(retained)
                entry = dp_s.entry(i, j)
                if trace is not None:
                    trace.append(
                        {"stage": "prune_test", "edge": [i, j], "dropped": sorted(drop), "entry": entry}
                    )
                if entry == 0.0:
                    kept.discard((i, j))
                    removed = True
                    if trace is not None:
                        trace.append({"stage": "prune_remove", "edge": [i, j], "dropped": sorted(drop)})
                    break
            if removed or (truncated and tested >= budget):
                break
        if truncated and not removed:
            msg = (
                f"edge ({i!r}, {j!r}): descendant set of size {len(desc)} exceeds the "
                f"cap {cfg.prune_subset_cap}; searched {tested} subsets before giving up"
            )
            _warnings.warn(msg, PartialPruneWarning, stacklevel=2)
            if warn_sink is not None:
                warn_sink.append(msg)
    return DagEdgeSet(vertices=delta.vertices, edges=frozenset(kept))


def run_pipeline(cov: CovariancePair, cfg: PipelineConfig) -> PipelineResult:
    """Estimate, drop invariant vertices, order, orient, prune.

    Estimator failures propagate. When every vertex is invariant the result
    is an empty edge set over an empty vertex set.
    """
    if cfg.estimator == "dantzig":
        cfg = replace(cfg, est_cfg=with_resolved_lambda(cov, cfg.est_cfg))
    trace: list | None = [] if cfg.record_trace else None
    dp_full = _estimate(cov, cfg)
    if trace is not None:
        trace.append({"stage": "estimate_full", "labels": sorted(cov.labels), "delta": dp_full})
    invariant = invariant_vertices(dp_full)
    v_labels = [lab for lab in cov.labels if lab not in invariant]
    if trace is not None:
        trace.append({"stage": "invariant_vertices", "invariant": sorted(invariant)})
    if not v_labels:
        return PipelineResult(
            delta=DagEdgeSet(frozenset(), frozenset()),
            invariant_vertices=invariant,
            order=LayeredOrder(()),
            trace=tuple(trace) if trace is not None else None,
            warnings=(),
        )
    cov_v = cov.restrict(v_labels)
    dp_v = dp_full.restrict(v_labels)
    order = compute_order(cov_v, cfg, initial=dp_v, trace=trace)
    rough = orient_edges(dp_v, order)
    if trace is not None:
        trace.append({"stage": "orient_edges", "edges": [list(e) for e in rough.sorted_edges()]})
    sink: list = []
    pruned = prune(rough, cov_v, order, cfg, trace=trace, warn_sink=sink)
    return PipelineResult(
        delta=pruned,
        invariant_vertices=invariant,
        order=order,
        trace=tuple(trace) if trace is not None else None,
        warnings=tuple(sink),
    )


def hamming_distance(a: DagEdgeSet, b: DagEdgeSet) -> int:
    """Size of the symmetric difference of directed edge sets.

    Orientation counts: an edge present in both but reversed contributes two.
    """
    if a.vertices != b.vertices:
        raise VertexMismatchError("edge sets are over different vertex sets")
    return len(a.edges ^ b.edges)
