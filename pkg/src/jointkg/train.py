"""Alternating two-optimizer training.

Each epoch: (1) update the completion side on its ranking + seed-constraint
loss while the alignment side stays frozen, (2) update the alignment side on
its margin loss (completion embeddings enter the fusion as constants), then
(3) grow the seed sets and transfer triples. Model selection keeps the
checkpoint with the best validation completion MRR, ties to the earlier
epoch. One root seed drives every random draw, so runs reproduce bitwise.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import diff
from .alignment import (
    FusionParams,
    HeadParams,
    alignment_loss,
    build_alignment_matrix,
    final_embeddings,
    make_fusion_hook,
    nearest_negatives,
)
from .completion import alignment_constraint_loss, completion_loss, ranking_loss, sample_negatives
from .entr import EntropyState, enlarge_seeds, matrix_entropy, prune_stale_transfers, seed_budget, transfer_triples
from .errors import TrainError
from .evaluate import evaluate_kgc, overall_mean
from .kgdata import ENLARGED, GIVEN, MultiKg, SeedSet, split_seeds
from .rgnn import EncoderParams, build_edges, encode
from .seeding import substream

ABLATIONS = ("no_ra_gnn", "one_gnn", "no_sir", "no_entr", "no_align", "no_comple")
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    layers: int = 2
    dim: int = 128
    lr_completion: float = 1e-3
    lr_alignment: float = 1e-3
    beta: float = 0.2
    gamma_completion: float = 5.0
    gamma_alignment: float = 5.0
    epochs: int = 30
    negatives_per_positive: int = 5
    nearest_neighbor_negatives: int = 5
    si_mode: str = "without"
    ablations: tuple[str, ...] = ()
    rng_seed: int = 0
    seed_train_fraction: float = 0.5
    entr_period: int = 1
    transferred_as_positives: bool = True
    steps_per_epoch: int = 10

    def __post_init__(self):
        self.ablations = tuple(self.ablations)
        if self.layers < 0:
            raise TrainError(f"layers must be >= 0, got {self.layers}")
        if self.dim < 1:
            raise TrainError(f"dim must be >= 1, got {self.dim}")
        if self.epochs < 0:
            raise TrainError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.beta <= 1.0:
            raise TrainError(f"beta must lie in [0, 1], got {self.beta}")
        if self.si_mode not in ("with", "without"):
            raise TrainError(f"si_mode must be 'with' or 'without', got {self.si_mode!r}")
        for flag in self.ablations:
            if flag not in ABLATIONS:
                raise TrainError(f"unknown ablation flag {flag!r}; known: {ABLATIONS}")
        if self.entr_period < 1:
            raise TrainError(f"entr_period must be >= 1, got {self.entr_period}")
        if self.steps_per_epoch < 1:
            raise TrainError(f"steps_per_epoch must be >= 1, got {self.steps_per_epoch}")

    def flag(self, name: str) -> bool:
        return name in self.ablations

    @property
    def sir_active(self) -> bool:
        return not (self.flag("no_sir") or self.flag("one_gnn") or self.flag("no_comple"))

    @property
    def entr_active(self) -> bool:
        return not (self.flag("no_entr") or self.flag("no_align"))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict, require_all: bool = False) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise TrainError(f"unknown config field: {sorted(unknown)[0]}")
        if require_all:
            for name in sorted(names):
                if name not in data:
                    raise TrainError(f"missing config field: {name}")
        converted = dict(data)
        if "ablations" in converted:
            converted["ablations"] = tuple(converted["ablations"])
        return cls(**converted)

    @classmethod
    def from_file(cls, path: Path) -> "TrainConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise TrainError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise TrainError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data, require_all=True)

    def to_file(self, path: Path) -> None:
        payload = self.to_dict()
        payload["ablations"] = list(payload["ablations"])
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")


class JointModel:
    """Both encoders plus the fusion and head parameters.

    Every block is created in a fixed order from the init stream regardless
    of ablation flags, so variants of one seed start from identical values.
    """

    def __init__(self, config: TrainConfig, multikg: MultiKg):
        if config.si_mode == "with" and multikg.vector_dim is None:
            raise TrainError("si_mode 'with' needs a loaded vector file")
        if config.si_mode == "with" and multikg.vector_dim != config.dim:
            raise TrainError(
                f"si vectors have dimension {multikg.vector_dim}, config dim is {config.dim}"
            )
        entity_vectors: dict[int, np.ndarray] = {}
        relation_vectors: dict[int, np.ndarray] = {}
        if config.si_mode == "with":
            for kg in multikg.kgs:
                offset = multikg.entity_offset(kg.id)
                for local, vec in multikg.entity_vectors[kg.id].items():
                    entity_vectors[offset + local] = vec
            relation_vectors = dict(multikg.relation_vectors)

        rng = substream(config.rng_seed, "init")
        relation_aware = not config.flag("no_ra_gnn")
        self.completion_encoder = EncoderParams.create(
            config.layers, config.dim, multikg.total_entities, len(multikg.relations), rng,
            relation_aware=relation_aware, entity_vectors=entity_vectors,
            relation_vectors=relation_vectors)
        self.alignment_encoder = EncoderParams.create(
            config.layers, config.dim, multikg.total_entities, len(multikg.relations), rng,
            relation_aware=relation_aware, entity_vectors=entity_vectors,
            relation_vectors=relation_vectors)
        self.fusion = FusionParams.create(config.layers, config.dim, rng)
        self.heads = HeadParams.create(config.layers, config.dim, rng)
        self.one_gnn = config.flag("one_gnn")

    @property
    def alignment_side_encoder(self) -> EncoderParams:
        return self.completion_encoder if self.one_gnn else self.alignment_encoder

    def completion_parameters(self) -> list[diff.Tensor]:
        return self.completion_encoder.parameters()

    def alignment_parameters(self) -> list[diff.Tensor]:
        if self.one_gnn:
            return self.heads.parameters()
        return (self.alignment_encoder.parameters() + self.fusion.parameters()
                + self.heads.parameters())

    def named_parameters(self) -> list[tuple[str, diff.Tensor]]:
        return (self.completion_encoder.named_parameters("completion")
                + self.alignment_encoder.named_parameters("alignment")
                + self.fusion.named_parameters("fusion")
                + self.heads.named_parameters("heads"))


class TrainState:
    def __init__(self, multikg: MultiKg, config: TrainConfig):
        self.multikg = multikg
        self.config = config
        self.model = JointModel(config, multikg)
        self.adam_completion = diff.Adam(self.model.completion_parameters(),
                                         lr=config.lr_completion)
        self.adam_alignment = diff.Adam(self.model.alignment_parameters(),
                                        lr=config.lr_alignment)
        self.entropy = EntropyState()
        self.epoch = 0
        self.step_in_epoch = 0
        self.train_seeds: dict[tuple[str, str], SeedSet] = {}
        self.test_seeds: dict[tuple[str, str], SeedSet] = {}
        for pair, seed_set in sorted(multikg.seed_sets.items()):
            train, test = split_seeds(seed_set, config.seed_train_fraction, config.rng_seed)
            self.train_seeds[pair] = train
            self.test_seeds[pair] = test
        self.edges = build_edges(multikg)

    def refresh_edges(self) -> None:
        self.edges = build_edges(self.multikg)

    # ---- forward helpers -------------------------------------------------

    def completion_layers(self, tape: bool):
        if tape:
            return encode(self.edges, self.model.completion_encoder)
        with diff.no_grad():
            return encode(self.edges, self.model.completion_encoder)

    def fusion_hook(self):
        """SIR hook over the current completion parameters (or None)."""
        if not self.config.sir_active:
            return None
        return make_fusion_hook(self.completion_layers(tape=False), self.model.fusion)

    def alignment_layers_and_finals(self, tape: bool, hook="fresh"):
        if hook == "fresh":
            hook = self.fusion_hook()
        encoder = self.model.alignment_side_encoder
        if tape:
            layers = encode(self.edges, encoder, hook)
            return final_embeddings(layers, self.model.heads)
        with diff.no_grad():
            layers = encode(self.edges, encoder, hook)
            return final_embeddings(layers, self.model.heads)

    def pair_blocks(self, pair: tuple[str, str], finals: np.ndarray):
        left = self.multikg.by_id[pair[0]]
        right = self.multikg.by_id[pair[1]]
        off_l = self.multikg.entity_offset(left.id)
        off_r = self.multikg.entity_offset(right.id)
        return (finals[off_l:off_l + left.entity_count],
                finals[off_r:off_r + right.entity_count], off_l, off_r)

    def global_seed_pairs(self) -> np.ndarray:
        rows = []
        for pair in sorted(self.train_seeds):
            off_l = self.multikg.entity_offset(pair[0])
            off_r = self.multikg.entity_offset(pair[1])
            for e, e_star in self.train_seeds[pair].pairs:
                rows.append((off_l + e, off_r + e_star))
        return np.asarray(rows, dtype=np.int64).reshape(-1, 2)

    # ---- loss assembly ---------------------------------------------------

    def completion_positives(self) -> list[tuple[str, list[tuple[int, int, int]]]]:
        per_kg = []
        for kg in self.multikg.kgs:
            triples = list(self.multikg.kgc_splits[kg.id]["train"])
            if self.config.transferred_as_positives:
                triples += [t.key for t in kg.transferred_triples()]
            per_kg.append((kg.id, triples))
        return per_kg

    def completion_step(self) -> float:
        """One completion update. Corruptions come from a stream keyed by
        (kg, epoch, step): runs differing only in appended transferred
        positives draw identical negatives for the shared positives, which
        keeps ablation comparisons paired."""
        self.step_in_epoch += 1
        layers = self.completion_layers(tape=True)
        heads, relations, tails, neg_h, neg_r, neg_t, pair_of = [], [], [], [], [], [], []
        base = 0
        for kg_id, positives in self.completion_positives():
            if not positives:
                continue
            kg = self.multikg.by_id[kg_id]
            offset = self.multikg.entity_offset(kg_id)
            known = set(positives)
            rng = substream(self.config.rng_seed, "negatives", kg_id,
                            f"epoch{self.epoch}", f"step{self.step_in_epoch}")
            nh, nr, nt, np_of = sample_negatives(
                positives, kg.entity_count, known,
                self.config.negatives_per_positive, rng)
            heads += [offset + h for h, _, _ in positives]
            relations += [r for _, r, _ in positives]
            tails += [offset + t for _, _, t in positives]
            neg_h += (nh + offset).tolist()
            neg_r += nr.tolist()
            neg_t += (nt + offset).tolist()
            pair_of += (np_of + base).tolist()
            base += len(positives)
        if not heads:
            raise TrainError("no completion training triples in any KG")
        positives_arrays = (np.asarray(heads), np.asarray(relations), np.asarray(tails))
        negatives_arrays = (np.asarray(neg_h), np.asarray(neg_r), np.asarray(neg_t),
                            np.asarray(pair_of))
        ranking = ranking_loss(positives_arrays, negatives_arrays,
                               self.config.gamma_completion, layers)
        constraint = alignment_constraint_loss(self.global_seed_pairs(), layers)
        loss = completion_loss(ranking, constraint)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainError(f"non-finite completion loss at epoch {self.epoch}: {value}")
        diff.backward(loss)
        self.adam_completion.step()
        self.adam_completion.zero_grad()
        self.adam_alignment.zero_grad()
        return value, ranking.item()

    def alignment_step(self, hook="fresh") -> float:
        entity_finals, _ = self.alignment_layers_and_finals(tape=True, hook=hook)
        finals_values = entity_finals.values
        total = None
        for pair in sorted(self.train_seeds):
            seed_set = self.train_seeds[pair]
            if not seed_set.pairs:
                continue
            src, tgt, off_l, off_r = self.pair_blocks(pair, finals_values)
            local_negatives = nearest_negatives(
                seed_set.pairs, src, tgt, self.config.nearest_neighbor_negatives)
            global_pairs = [(off_l + e, off_r + s) for e, s in seed_set.pairs]
            global_negatives = [(i, (off_l + a, off_r + b)) for i, (a, b) in local_negatives]
            pair_loss = alignment_loss(global_pairs, global_negatives,
                                       self.config.gamma_alignment, entity_finals)
            total = pair_loss if total is None else diff.add(total, pair_loss)
        if total is None:
            raise TrainError("no alignment seed pairs available")
        value = total.item()
        if not np.isfinite(value):
            raise TrainError(f"non-finite alignment loss at epoch {self.epoch}: {value}")
        diff.backward(total)
        self.adam_alignment.step()
        self.adam_alignment.zero_grad()
        self.adam_completion.zero_grad()
        return value

    def entr_step(self) -> tuple[int, int]:
        entity_finals, _ = self.alignment_layers_and_finals(tape=False)
        finals_values = entity_finals.values
        budget_total = 0
        for pair in sorted(self.train_seeds):
            src, tgt, _, _ = self.pair_blocks(pair, finals_values)
            matrix = build_alignment_matrix(src, tgt, pair)
            h_now = matrix_entropy(matrix)
            self.entropy.h_current[pair] = h_now
            q = seed_budget(self.entropy.h_tilde[pair], h_now, self.config.beta,
                            src.shape[0], tgt.shape[0])
            budget_total += q
            self.train_seeds[pair] = enlarge_seeds(matrix, q, self.train_seeds[pair])
        prune_stale_transfers(self.multikg, self.train_seeds)
        transferred = 0
        for pair in sorted(self.train_seeds):
            transferred += transfer_triples(self.train_seeds[pair], self.multikg, self.epoch)
        self.refresh_edges()
        return budget_total, transferred

    def initialize_entropy_baseline(self) -> None:
        """Entropy of the untrained model's alignment matrices (run once)."""
        entity_finals, _ = self.alignment_layers_and_finals(tape=False)
        for pair in sorted(self.train_seeds):
            src, tgt, _, _ = self.pair_blocks(pair, entity_finals.values)
            h = matrix_entropy(build_alignment_matrix(src, tgt, pair))
            self.entropy.h_tilde[pair] = h
            self.entropy.h_current[pair] = h


def train_epoch(state: TrainState) -> dict:
    """One epoch: steps_per_epoch completion updates with the alignment side
    frozen, then steps_per_epoch alignment updates with the completion side
    frozen (its freshly updated embeddings enter the fusion as constants),
    then seed enlargement and triple transfer. Reported losses are those of
    each phase's last step."""
    config = state.config
    state.epoch += 1
    state.step_in_epoch = 0
    metrics = {"epoch": state.epoch, "loss_completion": 0.0, "loss_alignment": 0.0,
               "budget": 0, "transferred": 0, "loss_ranking": 0.0}
    if not config.flag("no_comple"):
        for _ in range(config.steps_per_epoch):
            metrics["loss_completion"], metrics["loss_ranking"] = state.completion_step()
    if not config.flag("no_align"):
        hook = state.fusion_hook()
        for _ in range(config.steps_per_epoch):
            metrics["loss_alignment"] = state.alignment_step(hook=hook)
        if config.entr_active and state.epoch % config.entr_period == 0:
            metrics["budget"], metrics["transferred"] = state.entr_step()
    return metrics


def validation_mrr(state: TrainState) -> float:
    """Completion MRR on the validation split, averaged per KG."""
    layers = state.completion_layers(tape=False)
    results = evaluate_kgc(state.multikg, layers.entity_values(), layers.relation_values(),
                           split="valid")
    if not results:
        raise TrainError("empty validation split")
    return overall_mean(results, "MRR")


def format_log_line(metrics: dict) -> str:
    return ("{epoch}\t{loss_completion:.6f}\t{loss_alignment:.6f}\t{budget}"
            "\t{transferred}\t{val_mrr:.6f}").format(**metrics)


LOG_HEADER = "epoch\tloss_completion\tloss_alignment\tbudget\ttransferred\tval_mrr"


def fit(multikg: MultiKg, config: TrainConfig, log_lines: list[str] | None = None
        ) -> "Checkpoint":
    """Train up to config.epochs epochs and return the checkpoint with the
    highest validation MRR (earlier epoch wins ties)."""
    state = TrainState(multikg, config)
    if config.entr_active:
        state.initialize_entropy_baseline()
    if log_lines is not None:
        log_lines.append(LOG_HEADER)
    best_value = validation_mrr(state)
    best = snapshot(state, best_value)
    if log_lines is not None:
        log_lines.append(format_log_line({"epoch": 0, "loss_completion": 0.0,
                                          "loss_alignment": 0.0, "budget": 0,
                                          "transferred": 0, "val_mrr": best_value}))
    for _ in range(config.epochs):
        metrics = train_epoch(state)
        metrics["val_mrr"] = validation_mrr(state)
        if log_lines is not None:
            log_lines.append(format_log_line(metrics))
        if metrics["val_mrr"] > best_value:
            best_value = metrics["val_mrr"]
            best = snapshot(state, best_value)
    return best


# ---------------------------------------------------------------------------
# checkpointing


def _array_to_json(values: np.ndarray) -> dict:
    contiguous = np.ascontiguousarray(values)
    return {
        "shape": list(contiguous.shape),
        "dtype": str(contiguous.dtype),
        "data": base64.b64encode(contiguous.tobytes()).decode("ascii"),
    }


def _array_from_json(payload: dict) -> np.ndarray:
    raw = base64.b64decode(payload["data"])
    return np.frombuffer(raw, dtype=payload["dtype"]).reshape(payload["shape"]).copy()


def _seed_set_to_json(seed_set: SeedSet) -> dict:
    return {"kg_pair": list(seed_set.kg_pair), "pairs": [list(p) for p in seed_set.pairs],
            "provenance": list(seed_set.provenance)}


def _seed_set_from_json(payload: dict) -> SeedSet:
    return SeedSet(tuple(payload["kg_pair"]), [tuple(p) for p in payload["pairs"]],
                   list(payload["provenance"]))


@dataclass
class Checkpoint:
    """Everything needed to evaluate or bit-identically resume a run."""

    config: TrainConfig
    vocab_hash: str
    epoch: int
    val_mrr: float
    parameters: dict[str, np.ndarray]
    adam_completion: dict
    adam_alignment: dict
    entropy: EntropyState
    train_seeds: dict[tuple[str, str], SeedSet]
    test_seeds: dict[tuple[str, str], SeedSet]
    transferred: dict[str, list[tuple[int, int, int, int]]]

    def save(self, path: Path) -> None:
        adam_json = lambda s: {
            "t": s["t"], "lr": s["lr"], "beta1": s["beta1"], "beta2": s["beta2"],
            "eps": s["eps"],
            "m": [_array_to_json(a) for a in s["m"]],
            "v": [_array_to_json(a) for a in s["v"]],
        }
        payload = {
            "version": CHECKPOINT_VERSION,
            "config": {**self.config.to_dict(), "ablations": list(self.config.ablations)},
            "vocab_hash": self.vocab_hash,
            "epoch": self.epoch,
            "val_mrr": self.val_mrr,
            "parameters": {k: _array_to_json(v) for k, v in sorted(self.parameters.items())},
            "adam_completion": adam_json(self.adam_completion),
            "adam_alignment": adam_json(self.adam_alignment),
            "entropy": {
                "h_tilde": {f"{a}|{b}": v for (a, b), v in sorted(self.entropy.h_tilde.items())},
                "h_current": {f"{a}|{b}": v for (a, b), v in sorted(self.entropy.h_current.items())},
            },
            "train_seeds": {f"{a}|{b}": _seed_set_to_json(s)
                            for (a, b), s in sorted(self.train_seeds.items())},
            "test_seeds": {f"{a}|{b}": _seed_set_to_json(s)
                           for (a, b), s in sorted(self.test_seeds.items())},
            "transferred": {kg: [list(t) for t in rows]
                            for kg, rows in sorted(self.transferred.items())},
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "Checkpoint":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise TrainError(f"checkpoint not found: {path}") from None
        if payload.get("version") != CHECKPOINT_VERSION:
            raise TrainError(f"unsupported checkpoint version {payload.get('version')}")
        adam_state = lambda s: {
            "t": s["t"], "lr": s["lr"], "beta1": s["beta1"], "beta2": s["beta2"],
            "eps": s["eps"],
            "m": [_array_from_json(a) for a in s["m"]],
            "v": [_array_from_json(a) for a in s["v"]],
        }
        unpair = lambda key: tuple(key.split("|"))
        entropy = EntropyState(
            h_tilde={unpair(k): v for k, v in payload["entropy"]["h_tilde"].items()},
            h_current={unpair(k): v for k, v in payload["entropy"]["h_current"].items()},
        )
        return cls(
            config=TrainConfig.from_dict(payload["config"]),
            vocab_hash=payload["vocab_hash"],
            epoch=payload["epoch"],
            val_mrr=payload["val_mrr"],
            parameters={k: _array_from_json(v) for k, v in payload["parameters"].items()},
            adam_completion=adam_state(payload["adam_completion"]),
            adam_alignment=adam_state(payload["adam_alignment"]),
            entropy=entropy,
            train_seeds={unpair(k): _seed_set_from_json(v)
                         for k, v in payload["train_seeds"].items()},
            test_seeds={unpair(k): _seed_set_from_json(v)
                        for k, v in payload["test_seeds"].items()},
            transferred={kg: [tuple(t) for t in rows]
                         for kg, rows in payload["transferred"].items()},
        )


def snapshot(state: TrainState, val_mrr: float) -> Checkpoint:
    return Checkpoint(
        config=state.config,
        vocab_hash=state.multikg.vocab_hash(),
        epoch=state.epoch,
        val_mrr=val_mrr,
        parameters={name: tensor.values.copy()
                    for name, tensor in state.model.named_parameters()},
        adam_completion=state.adam_completion.state_dict(),
        adam_alignment=state.adam_alignment.state_dict(),
        entropy=EntropyState(dict(state.entropy.h_tilde), dict(state.entropy.h_current)),
        train_seeds={pair: SeedSet(s.kg_pair, list(s.pairs), list(s.provenance))
                     for pair, s in state.train_seeds.items()},
        test_seeds={pair: SeedSet(s.kg_pair, list(s.pairs), list(s.provenance))
                    for pair, s in state.test_seeds.items()},
        transferred={kg.id: [(t.head, t.relation, t.tail, kg.transfer_epoch[t.key])
                             for t in kg.transferred_triples()]
                     for kg in state.multikg.kgs},
    )


def resume(checkpoint: Checkpoint, multikg: MultiKg) -> TrainState:
    """Rebuild a TrainState that continues the checkpointed run bitwise.

    The multikg must be freshly loaded from the same data the checkpoint was
    trained on (its vocab hash is verified).
    """
    if multikg.vocab_hash() != checkpoint.vocab_hash:
        raise TrainError("checkpoint/data mismatch")
    state = TrainState(multikg, checkpoint.config)
    named = dict(state.model.named_parameters())
    if set(named) != set(checkpoint.parameters):
        raise TrainError("checkpoint parameters do not match the model layout")
    for name, tensor in named.items():
        tensor.values[:] = checkpoint.parameters[name]
    state.adam_completion.load_state_dict(checkpoint.adam_completion)
    state.adam_alignment.load_state_dict(checkpoint.adam_alignment)
    state.entropy = EntropyState(dict(checkpoint.entropy.h_tilde),
                                 dict(checkpoint.entropy.h_current))
    state.epoch = checkpoint.epoch
    state.train_seeds = {pair: SeedSet(s.kg_pair, list(s.pairs), list(s.provenance))
                         for pair, s in checkpoint.train_seeds.items()}
    state.test_seeds = {pair: SeedSet(s.kg_pair, list(s.pairs), list(s.provenance))
                        for pair, s in checkpoint.test_seeds.items()}
    for kg in multikg.kgs:
        existing = {t.key for t in kg.transferred_triples()}
        if existing:
            kg.remove_transferred(existing)
        for h, r, t, epoch in checkpoint.transferred[kg.id]:
            kg.add_triple(h, r, t, origin="transferred", epoch=epoch)
    state.refresh_edges()
    return state
