"""Aggregation rules: how a node combines its own model with its neighbors'.

Every rule treats the aggregating node's own model as one of the candidates
and returns it unchanged when there are no neighbors. Candidates are sorted
by node id before any arithmetic, which makes all rules bitwise permutation-
invariant over the neighbor sequence and gives Krum its documented tie rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import learner, params
from .datasets import LabeledDataset
from .params import ModelParams


@dataclass(frozen=True)
class AggregationInput:
    own_id: int
    own_model: ModelParams
    own_previous: ModelParams | None = None
    neighbor_models: tuple[tuple[int, ModelParams], ...] = ()
    local_validation: LabeledDataset | None = None


def _candidates(inp: AggregationInput) -> list[tuple[int, ModelParams]]:
    cands = [(inp.own_id, inp.own_model)] + list(inp.neighbor_models)
    cands.sort(key=lambda c: c[0])
    return cands


def mean_of(models: list[ModelParams]) -> ModelParams:
    return params.weighted_sum(models, np.ones(len(models)))


def fed_avg(inp: AggregationInput) -> ModelParams:
    """Unweighted coordinate-wise mean over own + neighbor models."""
    cands = _candidates(inp)
    if len(cands) == 1:
        return inp.own_model
    return mean_of([m for _, m in cands])


def default_krum_f(n_candidates: int) -> int:
    """Largest tolerated-byzantine count that keeps the score well-defined."""
    return max(0, min((n_candidates - 2) // 2, n_candidates - 3))


def krum(inp: AggregationInput, f: int | None = None) -> ModelParams:
    """Return the candidate with the smallest sum of squared distances to its
    nearest peers; ties break toward the lowest node id."""
    cands = _candidates(inp)
    n_c = len(cands)
    if n_c < 2:
        if inp.neighbor_models:
            raise ValueError("krum needs at least 2 candidates")
        return inp.own_model
    if f is None:
        f = default_krum_f(n_c)
    f = max(0, min(f, n_c - 3))
    k = max(1, n_c - f - 2)

    flats = np.stack([params.flatten(m) for _, m in cands])
    sq_dist = np.sum((flats[:, None, :] - flats[None, :, :]) ** 2, axis=2)
    best_idx = 0
    best_score = np.inf
    for i in range(n_c):
        others = np.delete(sq_dist[i], i)
        others.sort()
        score = float(others[:k].sum())
        if score < best_score:
            best_score = score
            best_idx = i
    return cands[best_idx][1]


def coordinate_median(inp: AggregationInput) -> ModelParams:
    """Per-coordinate median; even counts average the two middle values."""
    cands = _candidates(inp)
    if len(cands) == 1:
        return inp.own_model
    flats = np.stack([params.flatten(m) for _, m in cands])
    return params.unflatten(np.median(flats, axis=0), inp.own_model)


def trimmed_mean(inp: AggregationInput, beta: float = 0.2) -> ModelParams:
    """Per coordinate, drop the k=floor(beta*n) smallest and largest, then average."""
    if not 0.0 <= beta < 0.5:
        raise ValueError(f"beta must be in [0, 0.5), got {beta}")
    cands = _candidates(inp)
    n_c = len(cands)
    if n_c == 1:
        return inp.own_model
    k = int(beta * n_c)
    if n_c - 2 * k < 1:
        raise ValueError(f"over-trimming: {n_c} candidates, beta={beta}")
    flats = np.stack([params.flatten(m) for _, m in cands])
    flats.sort(axis=0)
    kept = flats[k:n_c - k] if k else flats
    return params.unflatten(kept.mean(axis=0), inp.own_model)


def fl_trust(inp: AggregationInput) -> ModelParams:
    """Trust-weighted update aggregation against the node's own update.

    The node's own update since the previous round serves as the root-trust
    reference: each neighbor update is scored by ReLU-clipped cosine
    similarity to it and rescaled to its norm before a trust-weighted average
    is applied on top of the previous model.
    """
    if inp.own_previous is None:
        raise ValueError("fl_trust needs the previous-round model")
    if not inp.neighbor_models:
        return inp.own_model
    prev_flat = params.flatten(inp.own_previous)
    ref = params.flatten(inp.own_model) - prev_flat
    ref_norm = np.linalg.norm(ref)

    updates = [ref]
    trusts = [1.0]
    for _, model in sorted(inp.neighbor_models, key=lambda c: c[0]):
        delta = params.flatten(model) - prev_flat
        trust = max(0.0, params.cosine_similarity(ref, delta))
        norm = np.linalg.norm(delta)
        if trust > 0.0 and norm > 0.0:
            updates.append(delta * (ref_norm / norm))
            trusts.append(trust)
    if len(updates) == 1:
        # Every neighbor was clipped to zero trust.
        return inp.own_model
    weights = np.asarray(trusts)
    combined = sum(w * u for w, u in zip(weights, updates)) / weights.sum()
    return params.unflatten(prev_flat + combined, inp.own_model)


def _layer_avg_cosine(a: ModelParams, b: ModelParams) -> float:
    sims = []
    for (wa, ba), (wb, bb) in zip(a.layers, b.layers):
        sims.append(params.cosine_similarity(np.concatenate([wa.ravel(), ba]),
                                             np.concatenate([wb.ravel(), bb])))
    return float(np.mean(sims))


def sentinel(inp: AggregationInput, sim_threshold: float = 0.5) -> ModelParams:
    """Three-phase defense: similarity filter, loss-distance weights, norm clip.

    Phase 1 discards neighbors whose layer-averaged cosine similarity to the
    own model falls below the threshold. Phase 2 weights each survivor by
    1/(1 + max(0, L_j - L_0)) from its cross-entropy on the local validation
    split. Phase 3 clips survivors to the own model's norm before the
    weighted average.
    """
    if inp.local_validation is None or inp.local_validation.n == 0:
        raise ValueError("sentinel needs a non-empty local validation set")
    if not inp.neighbor_models:
        return inp.own_model

    survivors = [(nid, m) for nid, m in sorted(inp.neighbor_models, key=lambda c: c[0])
                 if _layer_avg_cosine(inp.own_model, m) >= sim_threshold]
    if not survivors:
        return inp.own_model

    own_loss = learner.mean_cross_entropy(inp.own_model, inp.local_validation)
    own_norm = params.l2_norm(inp.own_model)
    models = [inp.own_model]
    weights = [1.0]
    for _, m in survivors:
        loss = learner.mean_cross_entropy(m, inp.local_validation)
        weights.append(1.0 / (1.0 + max(0.0, loss - own_loss)))
        models.append(params.clip_to_norm(m, own_norm) if own_norm > 0 else m)
    return params.weighted_sum(models, np.asarray(weights))


@dataclass(frozen=True)
class AggregatorParams:
    krum_f: int | None = None
    trim_beta: float = 0.2
    sentinel_sim_threshold: float = 0.5


AGGREGATOR_NAMES = ("fedavg", "krum", "median", "trimmedmean", "fltrust", "sentinel", "voyager")


def aggregate(name: str, inp: AggregationInput, opts: AggregatorParams = AggregatorParams()
              ) -> ModelParams:
    """Dispatch by config name. Voyager aggregates with FedAvg; its topology
    manipulation lives in the engine."""
    if name == "fedavg" or name == "voyager":
        return fed_avg(inp)
    if name == "krum":
        return krum(inp, opts.krum_f)
    if name == "median":
        return coordinate_median(inp)
    if name == "trimmedmean":
        return trimmed_mean(inp, opts.trim_beta)
    if name == "fltrust":
        return fl_trust(inp)
    if name == "sentinel":
        return sentinel(inp, opts.sentinel_sim_threshold)
    raise ValueError(f"unknown aggregator {name!r}")
