"""Relation-aware GNN encoder.

One encoder instance carries K message-passing layers over the union of all
KGs' edges (there are never cross-KG edges). Messages subtract a transformed
relation embedding from the neighbor embedding, attention logits are a linear
map of center||message, and each entity update passes the attended sum plus
the entity's own embedding through a linear + tanh transform. The same
architecture is instantiated twice, once per model component; an optional
fusion hook rewrites the entity/relation tables at every layer before they
feed the next one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import diff
from .diff import Mlp, Tensor
from .errors import EncoderError
from .kgdata import MultiKg

FusionHook = Callable[[Tensor, Tensor, int], tuple[Tensor, Tensor]]


@dataclass
class EdgeList:
    """Flattened neighbor sets: one row per (center, neighbor, relation)."""

    centers: np.ndarray
    neighbors: np.ndarray
    relations: np.ndarray
    num_entities: int

    @property
    def count(self) -> int:
        return int(self.centers.size)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_entities)
        np.add.at(deg, self.centers, 1.0)
        return deg


def build_edges(multikg: MultiKg) -> EdgeList:
    """Edge rows for every KG in one id space, sorted for fixed reductions."""
    centers: list[int] = []
    neighbors: list[int] = []
    relations: list[int] = []
    for kg in multikg.kgs:
        offset = multikg.entity_offset(kg.id)
        index = kg.neighbor_index()
        for center in range(kg.entity_count):
            for neighbor, relation, _ in index[center]:
                centers.append(offset + center)
                neighbors.append(offset + neighbor)
                relations.append(relation)
    order = np.lexsort((relations, neighbors, centers))
    return EdgeList(
        centers=np.asarray(centers, dtype=np.int64)[order],
        neighbors=np.asarray(neighbors, dtype=np.int64)[order],
        relations=np.asarray(relations, dtype=np.int64)[order],
        num_entities=multikg.total_entities,
    )


@dataclass
class LayerEmbeddings:
    """Entity and relation tables for layers 0..K of one encoder."""

    entities: list[Tensor]
    relations: list[Tensor]

    @property
    def layer_count(self) -> int:
        return len(self.entities) - 1

    def detached(self) -> "LayerEmbeddings":
        return LayerEmbeddings(
            [e.detach() for e in self.entities], [r.detach() for r in self.relations]
        )

    def entity_values(self) -> list[np.ndarray]:
        return [e.values for e in self.entities]

    def relation_values(self) -> list[np.ndarray]:
        return [r.values for r in self.relations]


class EncoderParams:
    """All trainable state of one encoder.

    Per transition k (0..K-1): a two-layer composition MLP and relation MLP,
    a single-layer attention map (2n -> 1), and the linear+tanh output
    transform. `relation_aware=False` downgrades messages to the bare
    neighbor vector and attention to uniform weights.
    """

    def __init__(self, layer_count: int, dim: int, entity0: Tensor, relation0: Tensor,
                 comp: list[Mlp], rel: list[Mlp], att: list[Mlp], g: list[Mlp],
                 relation_aware: bool = True):
        if not (len(comp) == len(rel) == len(att) == len(g) == layer_count):
            raise EncoderError("need exactly one parameter block per layer")
        for mlp, (i, o) in (
            *[(m, (dim, dim)) for m in comp],
            *[(m, (dim, dim)) for m in rel],
            *[(m, (2 * dim, 1)) for m in att],
            *[(m, (dim, dim)) for m in g],
        ):
            if (mlp.in_dim, mlp.out_dim) != (i, o):
                raise EncoderError(f"MLP dims {(mlp.in_dim, mlp.out_dim)} != expected {(i, o)}")
        self.layer_count = layer_count
        self.dim = dim
        self.entity0 = entity0
        self.relation0 = relation0
        self.comp = comp
        self.rel = rel
        self.att = att
        self.g = g
        self.relation_aware = relation_aware

    @classmethod
    def create(cls, layer_count: int, dim: int, entity_count: int, relation_count: int,
               rng: np.random.Generator, relation_aware: bool = True,
               entity_vectors: dict[int, np.ndarray] | None = None,
               relation_vectors: dict[int, np.ndarray] | None = None) -> "EncoderParams":
        bound = 1.0 / np.sqrt(dim)
        e0 = rng.uniform(-bound, bound, size=(entity_count, dim))
        r0 = rng.uniform(-bound, bound, size=(relation_count, dim))
        for row, vec in (entity_vectors or {}).items():
            if vec.size != dim:
                raise EncoderError(f"initial vector dimension {vec.size} != {dim}")
            e0[row] = vec
        for row, vec in (relation_vectors or {}).items():
            if vec.size != dim:
                raise EncoderError(f"initial vector dimension {vec.size} != {dim}")
            r0[row] = vec
        comp, rel, att, g = [], [], [], []
        for _ in range(layer_count):
            comp.append(Mlp.create([dim, dim, dim], ("leakyrelu", "identity"), rng))
            rel.append(Mlp.create([dim, dim, dim], ("leakyrelu", "identity"), rng))
            att.append(Mlp.create([2 * dim, 1], ("identity",), rng))
            g.append(Mlp.create([dim, dim], ("tanh",), rng))
        return cls(layer_count, dim, diff.param(e0), diff.param(r0), comp, rel, att, g,
                   relation_aware=relation_aware)

    def parameters(self) -> list[Tensor]:
        params = [self.entity0, self.relation0]
        for k in range(self.layer_count):
            for mlp in (self.comp[k], self.rel[k], self.att[k], self.g[k]):
                params.extend(mlp.parameters())
        return params

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        named = [(f"{prefix}/entity0", self.entity0), (f"{prefix}/relation0", self.relation0)]
        for k in range(self.layer_count):
            named += self.comp[k].named_parameters(f"{prefix}/layer{k}/comp")
            named += self.rel[k].named_parameters(f"{prefix}/layer{k}/rel")
            named += self.att[k].named_parameters(f"{prefix}/layer{k}/att")
            named += self.g[k].named_parameters(f"{prefix}/layer{k}/g")
        return named


def message(neighbor_vec: Tensor, relation_vec: Tensor, params: EncoderParams,
            layer: int) -> Tensor:
    """Neighbor embedding minus the composed relation embedding.

    Accepts single vectors or row-aligned batches.
    """
    if not params.relation_aware:
        return neighbor_vec
    return diff.sub(neighbor_vec, params.comp[layer](relation_vec))


def attention(center_vec: Tensor, messages: Sequence[Tensor], params: EncoderParams,
              layer: int) -> Tensor:
    """Softmax weights over one entity's incoming messages."""
    if not messages:
        raise EncoderError("attention needs at least one message")
    if not params.relation_aware:
        return diff.tensor(np.full(len(messages), 1.0 / len(messages)))
    rows = diff.concat(
        [diff.reshape(diff.concat([center_vec, m], axis=0), (1, 2 * params.dim))
         for m in messages],
        axis=0,
    )
    logits = params.att[layer](rows)
    weights = diff.softmax_row(diff.reshape(logits, (1, len(messages))))
    return diff.reshape(weights, (len(messages),))


def layer_forward(edges: EdgeList, entity_k: Tensor, relation_k: Tensor,
                  params: EncoderParams, layer: int) -> tuple[Tensor, Tensor]:
    """One message-passing transition: tables at layer k -> layer k+1."""
    if edges.count:
        neighbor_rows = diff.gather_rows(entity_k, edges.neighbors)
        if params.relation_aware:
            composed = params.comp[layer](relation_k)
            messages = diff.sub(neighbor_rows, diff.gather_rows(composed, edges.relations))
            center_rows = diff.gather_rows(entity_k, edges.centers)
            logits = diff.reshape(
                params.att[layer](diff.concat([center_rows, messages], axis=1)),
                (edges.count,),
            )
            weights = diff.segment_softmax(logits, edges.centers, edges.num_entities)
        else:
            messages = neighbor_rows
            degrees = edges.degrees()
            weights = diff.tensor(1.0 / degrees[edges.centers])
        aggregated = diff.scatter_weighted_sum(messages, weights, edges.centers,
                                               edges.num_entities)
        entity_next = params.g[layer](diff.add(aggregated, entity_k))
    else:
        entity_next = params.g[layer](entity_k)
    relation_next = params.rel[layer](relation_k)
    return entity_next, relation_next


def encode(edges: EdgeList, params: EncoderParams,
           fusion_hook: FusionHook | None = None) -> LayerEmbeddings:
    """Run all K layers; the hook rewrites each layer's tables before they
    feed the next layer (and before they are recorded)."""
    entity, relation = params.entity0, params.relation0
    if fusion_hook is not None:
        entity, relation = fusion_hook(entity, relation, 0)
    entities, relations = [entity], [relation]
    for k in range(params.layer_count):
        entity, relation = layer_forward(edges, entity, relation, params, k)
        if fusion_hook is not None:
            entity, relation = fusion_hook(entity, relation, k + 1)
        entities.append(entity)
        relations.append(relation)
    return LayerEmbeddings(entities, relations)
