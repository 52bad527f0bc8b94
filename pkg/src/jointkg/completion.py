"""Completion component: translation scoring summed over encoder layers, the
margin ranking loss over corrupted triples, and the seed-pair constraint that
pulls aligned entities' completion embeddings together."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import diff
from .diff import Tensor
from .errors import CompletionError
from .rgnn import LayerEmbeddings

_RETRY_LIMIT = 100


@dataclass(frozen=True)
class ScoredTriple:
    """Per-layer and total scores of one triple; total == sum of layers."""

    triple: tuple[int, int, int]
    layer_scores: tuple[float, ...]
    total: float


class NegativeBatch(NamedTuple):
    """Corrupted triples, each tagged with the index of its positive."""

    heads: np.ndarray
    relations: np.ndarray
    tails: np.ndarray
    positive_index: np.ndarray


def score_layer(c_h: Tensor, c_r: Tensor, c_t: Tensor) -> Tensor:
    """Negative L1 length of head + relation - tail (single rows or batches)."""
    return diff.scale(diff.l1_norm_row(diff.sub(diff.add(c_h, c_r), c_t)), -1.0)


def score_batch(heads, relations, tails, layers: LayerEmbeddings, layer: int) -> Tensor:
    """Layer-k scores for aligned index arrays of triples."""
    e = layers.entities[layer]
    r = layers.relations[layer]
    return score_layer(
        diff.gather_rows(e, heads), diff.gather_rows(r, relations), diff.gather_rows(e, tails)
    )


def score(head: int, relation: int, tail: int, layers: LayerEmbeddings) -> Tensor:
    """Total score: layer scores summed over layers 0..K."""
    total = None
    idx_h = np.array([head])
    idx_r = np.array([relation])
    idx_t = np.array([tail])
    for k in range(layers.layer_count + 1):
        f_k = score_batch(idx_h, idx_r, idx_t, layers, k)
        total = f_k if total is None else diff.add(total, f_k)
    return diff.reshape(total, ())


def score_triple(head: int, relation: int, tail: int,
                 layers: LayerEmbeddings) -> ScoredTriple:
    """Scores of one triple broken out per layer."""
    idx = (np.array([head]), np.array([relation]), np.array([tail]))
    with diff.no_grad():
        per_layer = tuple(float(score_batch(*idx, layers, k).values[0])
                          for k in range(layers.layer_count + 1))
    return ScoredTriple((head, relation, tail), per_layer, sum(per_layer))


def score_all_tails(head: int, relation: int, entity_values: list[np.ndarray],
                    relation_values: list[np.ndarray], offset: int, count: int) -> np.ndarray:
    """Plain-array total scores of (head, relation, t) for every candidate
    tail t in one KG's id block; used by ranking evaluation."""
    total = np.zeros(count)
    for ek, rk in zip(entity_values, relation_values):
        translated = ek[head] + rk[relation]
        total -= np.abs(translated[None, :] - ek[offset:offset + count]).sum(axis=1)
    return total


def ranking_loss(positives: tuple[np.ndarray, np.ndarray, np.ndarray],
                 negatives: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
                 gamma_c: float, layers: LayerEmbeddings) -> Tensor:
    """Hinge gamma_c - f_k(pos) + f_k(neg), averaged over pos-neg pairs and
    summed over layers. `negatives` carries a positive-index column pairing
    each corruption with its source triple."""
    pos_h, pos_r, pos_t = positives
    neg_h, neg_r, neg_t, pair_of = negatives
    total = None
    for k in range(layers.layer_count + 1):
        f_pos = score_batch(pos_h, pos_r, pos_t, layers, k)
        f_neg = score_batch(neg_h, neg_r, neg_t, layers, k)
        hinge = diff.relu(
            diff.add(diff.sub(diff.tensor(gamma_c), diff.gather_rows(f_pos, pair_of)), f_neg)
        )
        layer_loss = diff.mean_all(hinge)
        total = layer_loss if total is None else diff.add(total, layer_loss)
    return total


def alignment_constraint_loss(pairs: np.ndarray, layers: LayerEmbeddings) -> Tensor:
    """Cosine distance between seed-aligned completion embeddings, summed over
    pairs and layers."""
    if len(pairs) == 0:
        return diff.tensor(np.zeros(()))
    left = np.asarray([p[0] for p in pairs])
    right = np.asarray([p[1] for p in pairs])
    total = None
    for k in range(layers.layer_count + 1):
        e = layers.entities[k]
        distances = diff.cosine_distance(diff.gather_rows(e, left), diff.gather_rows(e, right))
        layer_loss = diff.sum_all(distances)
        total = layer_loss if total is None else diff.add(total, layer_loss)
    return total


def completion_loss(ranking: Tensor, constraint: Tensor) -> Tensor:
    """Unweighted sum of the two completion objectives."""
    return diff.add(ranking, constraint)


def sample_negatives(positives: list[tuple[int, int, int]], entity_count: int,
                     known: set[tuple[int, int, int]], m: int,
                     rng: np.random.Generator) -> NegativeBatch:
    """Corrupt head or tail of each positive, m times, avoiding known
    training triples.

    Corruptions are drawn in vectorized rejection rounds; a draw is rejected
    when it leaves the triple unchanged or reproduces a known triple.
    """
    if m < 1:
        raise CompletionError(f"need at least one negative per positive, got {m}")
    total = len(positives) * m
    pos = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    pair_of = np.repeat(np.arange(len(positives), dtype=np.int64), m)
    out_h = pos[pair_of, 0].copy()
    out_r = pos[pair_of, 1].copy()
    out_t = pos[pair_of, 2].copy()

    max_rel = int(pos[:, 1].max()) + 1 if len(positives) else 1
    known_keys = np.fromiter(
        (((h * max_rel + r) * entity_count + t)
         for h, r, t in known if r < max_rel and h < entity_count and t < entity_count),
        dtype=np.int64, count=-1)
    known_keys.sort()

    pending = np.arange(total, dtype=np.int64)
    for attempt in range(_RETRY_LIMIT):
        if pending.size == 0:
            break
        corrupt_head = rng.integers(2, size=pending.size).astype(bool)
        replacement = rng.integers(entity_count, size=pending.size)
        h = np.where(corrupt_head, replacement, out_h[pending])
        t = np.where(corrupt_head, out_t[pending], replacement)
        changed = np.where(corrupt_head, h != out_h[pending], t != out_t[pending])
        keys = (h * max_rel + out_r[pending]) * entity_count + t
        hits = np.searchsorted(known_keys, keys)
        hits = np.minimum(hits, max(len(known_keys) - 1, 0))
        is_known = (known_keys[hits] == keys) if len(known_keys) else np.zeros_like(changed)
        accept = changed & ~is_known
        rows = pending[accept]
        out_h[rows] = h[accept]
        out_t[rows] = t[accept]
        pending = pending[~accept]
    if pending.size:
        raise CompletionError(
            "negative sampling retry budget exhausted; KG too small to corrupt")
    return NegativeBatch(out_h, out_r, out_t, pair_of)
