"""Alignment component: per-layer fusion of completion embeddings into the
alignment encoder, final embedding heads over the layer stack, the dense
similarity matrix, nearest-entity negatives, the margin loss over aligned
pairs, and greedy one-to-one matching."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diff
from .diff import Mlp, Tensor
from .errors import AlignmentError
from .rgnn import FusionHook, LayerEmbeddings


class FusionParams:
    """One entity and one relation fusion MLP (2n -> n) per layer 0..K."""

    def __init__(self, entity_fusers: list[Mlp], relation_fusers: list[Mlp]):
        if len(entity_fusers) != len(relation_fusers):
            raise AlignmentError("fusion MLP lists must have equal length")
        self.entity_fusers = entity_fusers
        self.relation_fusers = relation_fusers

    @classmethod
    def create(cls, layer_count: int, dim: int, rng: np.random.Generator) -> "FusionParams":
        entity_fusers = [Mlp.create([2 * dim, dim, dim], ("leakyrelu", "identity"), rng)
                         for _ in range(layer_count + 1)]
        relation_fusers = [Mlp.create([2 * dim, dim, dim], ("leakyrelu", "identity"), rng)
                           for _ in range(layer_count + 1)]
        return cls(entity_fusers, relation_fusers)

    @property
    def layer_count(self) -> int:
        return len(self.entity_fusers) - 1

    def parameters(self) -> list[Tensor]:
        params: list[Tensor] = []
        for a1, a2 in zip(self.entity_fusers, self.relation_fusers):
            params.extend(a1.parameters())
            params.extend(a2.parameters())
        return params

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        named: list[tuple[str, Tensor]] = []
        for k, (a1, a2) in enumerate(zip(self.entity_fusers, self.relation_fusers)):
            named += a1.named_parameters(f"{prefix}/layer{k}/entity")
            named += a2.named_parameters(f"{prefix}/layer{k}/relation")
        return named


class HeadParams:
    """Final embedding heads applied to the concatenated layer stack."""

    def __init__(self, entity_head: Mlp, relation_head: Mlp):
        self.entity_head = entity_head
        self.relation_head = relation_head

    @classmethod
    def create(cls, layer_count: int, dim: int, rng: np.random.Generator) -> "HeadParams":
        stacked = (layer_count + 1) * dim
        return cls(
            Mlp.create([stacked, dim, dim], ("leakyrelu", "identity"), rng),
            Mlp.create([stacked, dim, dim], ("leakyrelu", "identity"), rng),
        )

    def parameters(self) -> list[Tensor]:
        return self.entity_head.parameters() + self.relation_head.parameters()

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        return (self.entity_head.named_parameters(f"{prefix}/entity")
                + self.relation_head.named_parameters(f"{prefix}/relation"))


def sir_fuse(completion_table: Tensor, alignment_table: Tensor, fuser: Mlp) -> Tensor:
    """Fuse one layer's completion table (a constant here) into the alignment
    table: MLP(completion || alignment)."""
    return fuser(diff.concat([completion_table, alignment_table], axis=1))


def make_fusion_hook(completion_layers: LayerEmbeddings, fusion: FusionParams) -> FusionHook:
    """Hook for the alignment encoder that applies the per-layer fusion.

    Completion embeddings enter as detached constants: the alignment loss
    must not reach completion parameters through the fusion.
    """
    constants = completion_layers.detached()
    if fusion.layer_count != constants.layer_count:
        raise AlignmentError("fusion depth does not match encoder depth")

    def hook(entity: Tensor, relation: Tensor, layer: int) -> tuple[Tensor, Tensor]:
        fused_e = sir_fuse(constants.entities[layer], entity, fusion.entity_fusers[layer])
        fused_r = sir_fuse(constants.relations[layer], relation, fusion.relation_fusers[layer])
        return fused_e, fused_r

    return hook


def final_embeddings(layers: LayerEmbeddings, heads: HeadParams) -> tuple[Tensor, Tensor]:
    """Concatenate layer 0..K vectors and apply the entity/relation heads."""
    entity_stack = diff.concat(layers.entities, axis=1)
    relation_stack = diff.concat(layers.relations, axis=1)
    return heads.entity_head(entity_stack), heads.relation_head(relation_stack)


@dataclass
class AlignmentMatrix:
    """Dense cosine-similarity matrix between two KGs' final embeddings."""

    kg_pair: tuple[str, str]
    values: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _unit_rows(table: np.ndarray, side: str) -> np.ndarray:
    norms = np.sqrt((table * table).sum(axis=1))
    if np.any(norms == 0.0):
        raise AlignmentError(f"zero-norm embedding in {side} final table")
    return table / norms[:, None]


def build_alignment_matrix(source_finals: np.ndarray, target_finals: np.ndarray,
                           kg_pair: tuple[str, str] = ("", "")) -> AlignmentMatrix:
    """Entries are 1 - cosine_distance = cosine similarity, in [-1, 1]."""
    return AlignmentMatrix(
        kg_pair, _unit_rows(source_finals, "source") @ _unit_rows(target_finals, "target").T
    )


def nearest_negatives(pairs: list[tuple[int, int]], source_finals: np.ndarray,
                      target_finals: np.ndarray, k_neg: int
                      ) -> list[tuple[int, tuple[int, int]]]:
    """For each positive pair, 2*k_neg negatives made by swapping either side
    for its k_neg nearest same-KG entities (cosine; ties to the lowest id;
    never the entity itself). Returns (positive_index, negative_pair) items.
    """
    if k_neg < 1:
        raise AlignmentError(f"k_neg must be >= 1, got {k_neg}")
    if len(source_finals) <= k_neg or len(target_finals) <= k_neg:
        raise AlignmentError(f"KG smaller than k_neg + 1 = {k_neg + 1} entities")
    source_unit = _unit_rows(source_finals, "source")
    target_unit = _unit_rows(target_finals, "target")

    def ranked_neighbors(unit: np.ndarray, row: int) -> np.ndarray:
        sims = unit @ unit[row]
        sims[row] = -np.inf
        order = np.lexsort((np.arange(len(sims)), -sims))
        return order[:k_neg]

    negatives: list[tuple[int, tuple[int, int]]] = []
    for index, (e, e_star) in enumerate(pairs):
        for substitute in ranked_neighbors(source_unit, e):
            negatives.append((index, (int(substitute), e_star)))
        for substitute in ranked_neighbors(target_unit, e_star):
            negatives.append((index, (e, int(substitute))))
    return negatives


def alignment_loss(pairs: list[tuple[int, int]],
                   negatives: list[tuple[int, tuple[int, int]]],
                   gamma_a: float, entity_finals: Tensor) -> Tensor:
    """Hinge gamma_a + d(pos) - d(neg) per positive-negative pairing, mean
    over all pairings. Indices here are rows of the shared finals table."""
    if not negatives:
        raise AlignmentError("alignment loss needs at least one negative pair")
    pos_left = np.asarray([pairs[i][0] for i, _ in negatives])
    pos_right = np.asarray([pairs[i][1] for i, _ in negatives])
    neg_left = np.asarray([n[0] for _, n in negatives])
    neg_right = np.asarray([n[1] for _, n in negatives])
    d_pos = diff.cosine_distance(diff.gather_rows(entity_finals, pos_left),
                                 diff.gather_rows(entity_finals, pos_right))
    d_neg = diff.cosine_distance(diff.gather_rows(entity_finals, neg_left),
                                 diff.gather_rows(entity_finals, neg_right))
    hinge = diff.relu(diff.add(diff.sub(diff.tensor(gamma_a), d_neg), d_pos))
    return diff.mean_all(hinge)


def greedy_match(matrix: AlignmentMatrix | np.ndarray) -> list[tuple[int, int, float]]:
    """Repeatedly take the largest remaining entry, emitting one-to-one pairs
    until rows or columns run out. Ties break on (row, column) ascending."""
    values = matrix.values if isinstance(matrix, AlignmentMatrix) else np.asarray(matrix)
    if not np.all(np.isfinite(values)):
        raise AlignmentError("greedy matching requires a finite matrix")
    rows, cols = values.shape
    flat = values.reshape(-1)
    row_of = np.arange(flat.size) // cols
    col_of = np.arange(flat.size) % cols
    order = np.lexsort((col_of, row_of, -flat))
    row_used = np.zeros(rows, dtype=bool)
    col_used = np.zeros(cols, dtype=bool)
    matches: list[tuple[int, int, float]] = []
    for position in order:
        r = int(row_of[position])
        c = int(col_of[position])
        if row_used[r] or col_used[c]:
            continue
        row_used[r] = True
        col_used[c] = True
        matches.append((r, c, float(flat[position])))
        if len(matches) == min(rows, cols):
            break
    return matches


def write_matches(matches: list[tuple[int, int, float]], source_labels: list[str],
                  target_labels: list[str], path) -> None:
    """entity<TAB>entity<TAB>score, one line per matched pair."""
    lines = [f"{source_labels[r]}\t{target_labels[c]}\t{s:.6f}" for r, c, s in matches]
    from pathlib import Path

    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
