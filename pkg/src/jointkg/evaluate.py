"""Ranking evaluation for both tasks.

Completion: each test triple competes against every same-KG entity as a tail
candidate; candidates forming another known-true triple are removed first
(filtered protocol) and ties count against the model. Alignment: the true
counterpart is ranked among all target entities by cosine similarity.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .completion import score_all_tails
from .errors import EvalError
from .kgdata import MultiKg, SeedSet

TripleKey = tuple[int, int, int]


@dataclass
class RankResult:
    query: tuple
    rank: int
    candidate_count: int

    def __post_init__(self):
        if not 1 <= self.rank <= self.candidate_count:
            raise EvalError(
                f"rank {self.rank} outside 1..{self.candidate_count} for {self.query}"
            )


def pessimistic_rank(scores: np.ndarray, true_index: int, excluded: set[int]) -> tuple[int, int]:
    """Rank of true_index among the non-excluded candidates, counting every
    tie as scoring higher; returns (rank, candidate count)."""
    true_score = scores[true_index]
    better_or_equal = 0
    candidates = 0
    for candidate, value in enumerate(scores):
        if candidate == true_index:
            continue
        if candidate in excluded:
            continue
        candidates += 1
        if value >= true_score:
            better_or_equal += 1
    return better_or_equal + 1, candidates + 1


def known_tails(multikg: MultiKg, kg_id: str) -> dict[tuple[int, int], set[int]]:
    """(head, relation) -> known true tails over the kgc splits. Transferred
    triples are model output and never enter the filter."""
    table: dict[tuple[int, int], set[int]] = {}
    for split in ("train", "valid", "test"):
        for h, r, t in multikg.kgc_splits[kg_id][split]:
            table.setdefault((h, r), set()).add(t)
    return table


def kgc_rank(test_triple: TripleKey, entity_count: int,
             known: dict[tuple[int, int], set[int]], scores: np.ndarray) -> RankResult:
    """Filtered rank of the true tail among all candidate tails.

    `scores` holds the model score of (h, r, t') for every candidate t' in
    the KG's local id block.
    """
    h, r, t = test_triple
    if scores.shape != (entity_count,):
        raise EvalError(f"expected {entity_count} candidate scores, got {scores.shape}")
    filtered = set(known.get((h, r), set()))
    filtered.discard(t)
    if t in filtered:
        raise EvalError("true tail filtered out")
    rank, candidates = pessimistic_rank(scores, t, filtered)
    return RankResult(query=test_triple, rank=rank, candidate_count=candidates)


def kga_rank(similarities: np.ndarray, true_target: int) -> RankResult:
    """Rank of the true counterpart among all target entities (pessimistic)."""
    rank, candidates = pessimistic_rank(similarities, true_target, set())
    return RankResult(query=(true_target,), rank=rank, candidate_count=candidates)


def aggregate(ranks: list[int], k_list: tuple[int, ...] = (1, 10)) -> dict[str, float]:
    """MRR and Hits@k for a list of ranks."""
    if not ranks:
        raise EvalError("cannot aggregate an empty rank list")
    ranks_array = np.asarray(ranks, dtype=np.float64)
    metrics = {"MRR": float((1.0 / ranks_array).mean())}
    for k in k_list:
        metrics[f"Hits@{k}"] = float((ranks_array <= k).mean())
    return metrics


# ---------------------------------------------------------------------------
# whole-dataset sweeps


def evaluate_kgc(multikg: MultiKg, entity_layer_values: list[np.ndarray],
                 relation_layer_values: list[np.ndarray], split: str = "test",
                 k_list: tuple[int, ...] = (1, 10)) -> dict[str, dict[str, float]]:
    """Per-KG completion metrics for one kgc split."""
    results: dict[str, dict[str, float]] = {}
    for kg in multikg.kgs:
        triples = multikg.kgc_splits[kg.id][split]
        if not triples:
            continue
        offset = multikg.entity_offset(kg.id)
        known = known_tails(multikg, kg.id)
        ranks = []
        for h, r, t in triples:
            scores = score_all_tails(offset + h, r, entity_layer_values,
                                     relation_layer_values, offset, kg.entity_count)
            ranks.append(kgc_rank((h, r, t), kg.entity_count, known, scores).rank)
        metrics = aggregate(ranks, k_list)
        metrics["count"] = float(len(ranks))
        results[kg.id] = metrics
    return results


def cosine_similarity_block(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    norms_s = np.sqrt((source * source).sum(axis=1))
    norms_t = np.sqrt((target * target).sum(axis=1))
    if np.any(norms_s == 0.0) or np.any(norms_t == 0.0):
        raise EvalError("zero-norm final embedding")
    return (source / norms_s[:, None]) @ (target / norms_t[:, None]).T


def evaluate_kga(multikg: MultiKg, entity_finals: np.ndarray,
                 test_seeds: dict[tuple[str, str], SeedSet],
                 k_list: tuple[int, ...] = (1, 10)) -> dict[tuple[str, str], dict[str, float]]:
    """Per-pair alignment metrics over held-out seed pairs."""
    results: dict[tuple[str, str], dict[str, float]] = {}
    for pair, seed_set in sorted(test_seeds.items()):
        if not seed_set.pairs:
            continue
        left = multikg.by_id[pair[0]]
        right = multikg.by_id[pair[1]]
        off_l = multikg.entity_offset(left.id)
        off_r = multikg.entity_offset(right.id)
        block = cosine_similarity_block(
            entity_finals[off_l:off_l + left.entity_count],
            entity_finals[off_r:off_r + right.entity_count],
        )
        ranks = [kga_rank(block[e], e_star).rank for e, e_star in seed_set.pairs]
        metrics = aggregate(ranks, k_list)
        metrics["count"] = float(len(ranks))
        results[pair] = metrics
    return results


def overall_mean(per_scope: dict, metric: str) -> float:
    """Equal-weight mean of one metric across KGs or KG pairs."""
    if not per_scope:
        raise EvalError("no scopes to average")
    return float(np.mean([m[metric] for m in per_scope.values()]))


def write_results(path: Path, kgc: dict[str, dict[str, float]] | None,
                  kga: dict[tuple[str, str], dict[str, float]] | None) -> str:
    """TSV rows task<TAB>scope<TAB>metric<TAB>value plus a summary table;
    returns the rendered summary."""
    rows: list[str] = []
    summary: list[str] = []

    def block(task: str, scoped: dict, scope_name) -> None:
        names = sorted(scoped)
        metric_names = [m for m in next(iter(scoped.values())) if m != "count"]
        header = f"{task:8s} " + " ".join(f"{m:>8s}" for m in metric_names)
        summary.append(header)
        for name in names:
            for metric in metric_names + ["count"]:
                rows.append(f"{task}\t{scope_name(name)}\t{metric}\t{scoped[name][metric]:.6f}")
            summary.append(f"{scope_name(name):8s} "
                           + " ".join(f"{scoped[name][m]:8.4f}" for m in metric_names))
        for metric in metric_names:
            rows.append(f"{task}\toverall\t{metric}\t{overall_mean(scoped, metric):.6f}")
        summary.append(f"{'overall':8s} "
                       + " ".join(f"{overall_mean(scoped, m):8.4f}" for m in metric_names))
        summary.append("")

    if kgc:
        block("kgc", kgc, lambda kg_id: kg_id)
    if kga:
        block("kga", kga, lambda pair: f"{pair[0]}-{pair[1]}")
    Path(path).write_text("\n".join(rows) + ("\n" if rows else ""), encoding="utf-8")
    return "\n".join(summary)
