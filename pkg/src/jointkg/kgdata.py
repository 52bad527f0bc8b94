"""Data model for multilingual KGs: triple/seed/split/vector file ingestion.

File formats (UTF-8, LF lines):
  triples:  head<TAB>relation<TAB>tail
  seeds:    entity<TAB>entity
  vectors:  label followed by whitespace-separated floats
  transfer sidecar (output only): head<TAB>relation<TAB>tail<TAB>epoch

Entity ids are dense per KG in first-seen file order; relation ids are dense
in one vocabulary shared by every KG, which is what makes cross-KG triple
transfer well defined.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import KgDataError, ParseError
from .seeding import substream

LOADED = "loaded"
TRANSFERRED = "transferred"
GIVEN = "given"
ENLARGED = "enlarged"


@dataclass(frozen=True)
class Triple:
    head: int
    relation: int
    tail: int
    origin: str = LOADED

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.head, self.relation, self.tail)


class RelationVocab:
    """Relation label <-> global id table shared by every KG."""

    def __init__(self):
        self.labels: list[str] = []
        self.index: dict[str, int] = {}

    def intern(self, label: str) -> int:
        rid = self.index.get(label)
        if rid is None:
            rid = len(self.labels)
            self.labels.append(label)
            self.index[label] = rid
        return rid

    def __len__(self) -> int:
        return len(self.labels)


class Kg:
    """One language's graph.

    Immutable after load except the transferred-triple set, which is appended
    between epochs and can be pruned when the alignment that produced a
    transfer is withdrawn.
    """

    def __init__(self, kg_id: str, relations: RelationVocab):
        self.id = kg_id
        self.relations = relations
        self.entity_labels: list[str] = []
        self.entity_index: dict[str, int] = {}
        self.triples: list[Triple] = []
        self.duplicate_count = 0
        self.transfer_epoch: dict[tuple[int, int, int], int] = {}
        self._keys: set[tuple[int, int, int]] = set()
        self._neighbors: dict[int, list[tuple[int, int, str]]] | None = None

    @property
    def entity_count(self) -> int:
        return len(self.entity_labels)

    @property
    def relation_count(self) -> int:
        return len({t.relation for t in self.triples if t.origin == LOADED})

    def intern_entity(self, label: str) -> int:
        eid = self.entity_index.get(label)
        if eid is None:
            eid = len(self.entity_labels)
            self.entity_labels.append(label)
            self.entity_index[label] = eid
        return eid

    def has_triple(self, head: int, relation: int, tail: int) -> bool:
        return (head, relation, tail) in self._keys

    def add_triple(self, head: int, relation: int, tail: int,
                   origin: str = LOADED, epoch: int | None = None) -> bool:
        """Add a triple; returns False when it is already present."""
        key = (head, relation, tail)
        if key in self._keys:
            return False
        self._keys.add(key)
        self.triples.append(Triple(head, relation, tail, origin))
        if origin == TRANSFERRED:
            self.transfer_epoch[key] = -1 if epoch is None else epoch
        self._neighbors = None
        return True

    def remove_transferred(self, keys: set[tuple[int, int, int]]) -> int:
        """Drop the given transferred triples; loaded triples are untouchable."""
        doomed = {k for k in keys if k in self.transfer_epoch}
        if not doomed:
            return 0
        self.triples = [t for t in self.triples if not (t.origin == TRANSFERRED and t.key in doomed)]
        for key in doomed:
            self._keys.discard(key)
            del self.transfer_epoch[key]
        self._neighbors = None
        return len(doomed)

    def loaded_triples(self) -> list[Triple]:
        return [t for t in self.triples if t.origin == LOADED]

    def transferred_triples(self) -> list[Triple]:
        return [t for t in self.triples if t.origin == TRANSFERRED]

    def neighbor_index(self) -> dict[int, list[tuple[int, int, str]]]:
        """N(e): deduplicated (neighbor, relation, direction) adjacency.

        direction is 'out' when (e, r, e') is a triple, 'in' when (e', r, e)
        is, and 'both' when both exist. Covers loaded and transferred triples.
        """
        if self._neighbors is None:
            self._neighbors = self._build_neighbors()
        return self._neighbors

    def rebuild_neighbor_index(self) -> dict[int, list[tuple[int, int, str]]]:
        self._neighbors = self._build_neighbors()
        return self._neighbors

    def _build_neighbors(self) -> dict[int, list[tuple[int, int, str]]]:
        directions: dict[tuple[int, int, int], set[str]] = {}
        for t in self.triples:
            directions.setdefault((t.head, t.tail, t.relation), set()).add("out")
            directions.setdefault((t.tail, t.head, t.relation), set()).add("in")
        index: dict[int, list[tuple[int, int, str]]] = {e: [] for e in range(self.entity_count)}
        for (center, neighbor, relation) in sorted(directions):
            tags = directions[(center, neighbor, relation)]
            tag = "both" if len(tags) == 2 else next(iter(tags))
            index[center].append((neighbor, relation, tag))
        return index


@dataclass
class SeedSet:
    """Aligned entity pairs between one ordered KG pair, one-to-one per side."""

    kg_pair: tuple[str, str]
    pairs: list[tuple[int, int]]
    provenance: list[str]

    def __post_init__(self):
        if len(self.pairs) != len(self.provenance):
            raise KgDataError("seed pairs and provenance lists must match")
        self.validate_one_to_one()

    def validate_one_to_one(self) -> None:
        left = [p[0] for p in self.pairs]
        right = [p[1] for p in self.pairs]
        if len(set(left)) != len(left) or len(set(right)) != len(right):
            raise KgDataError(f"seed set for {self.kg_pair} reuses an entity")

    def __len__(self) -> int:
        return len(self.pairs)

    def given_pairs(self) -> list[tuple[int, int]]:
        return [p for p, tag in zip(self.pairs, self.provenance) if tag == GIVEN]

    def enlarged_pairs(self) -> list[tuple[int, int]]:
        return [p for p, tag in zip(self.pairs, self.provenance) if tag == ENLARGED]

    def mapping(self) -> dict[int, int]:
        return dict(self.pairs)

    def inverse_mapping(self) -> dict[int, int]:
        return {b: a for a, b in self.pairs}


class MultiKg:
    """KGs over one shared relation vocabulary, plus seeds, splits, vectors."""

    def __init__(self, kgs: list[Kg], relations: RelationVocab):
        self.kgs = list(kgs)
        self.relations = relations
        self.by_id = {kg.id: kg for kg in self.kgs}
        if len(self.by_id) != len(self.kgs):
            raise KgDataError("duplicate KG ids")
        self.seed_sets: dict[tuple[str, str], SeedSet] = {}
        self.kgc_splits: dict[str, dict[str, list[tuple[int, int, int]]]] = {
            kg.id: {"train": [], "valid": [], "test": []} for kg in self.kgs
        }
        self.entity_vectors: dict[str, dict[int, np.ndarray]] = {kg.id: {} for kg in self.kgs}
        self.relation_vectors: dict[int, np.ndarray] = {}
        self.vector_dim: int | None = None
        self._offsets: dict[str, int] = {}
        offset = 0
        for kg in self.kgs:
            self._offsets[kg.id] = offset
            offset += kg.entity_count

    @property
    def total_entities(self) -> int:
        return sum(kg.entity_count for kg in self.kgs)

    def entity_offset(self, kg_id: str) -> int:
        return self._offsets[kg_id]

    def globalize(self, kg_id: str, local_id: int) -> int:
        return self._offsets[kg_id] + local_id

    def pair_ids(self) -> list[tuple[str, str]]:
        return sorted(self.seed_sets)

    def set_kgc_split(self, kg_id: str, split: str, triples: list[tuple[int, int, int]]) -> None:
        self.kgc_splits[kg_id][split] = list(triples)
        self._check_split_disjoint(kg_id)

    def _check_split_disjoint(self, kg_id: str) -> None:
        splits = self.kgc_splits[kg_id]
        seen: set[tuple[int, int, int]] = set()
        for name in ("train", "valid", "test"):
            for key in splits[name]:
                if key in seen:
                    raise KgDataError(f"kgc splits for {kg_id} overlap on {key}")
                seen.add(key)

    def vocab_hash(self) -> str:
        digest = hashlib.sha256()
        for kg in self.kgs:
            digest.update(kg.id.encode())
            for label in kg.entity_labels:
                digest.update(b"\x00" + label.encode())
        digest.update(b"\x01")
        for label in self.relations.labels:
            digest.update(b"\x00" + label.encode())
        return digest.hexdigest()


# ---------------------------------------------------------------------------
# parsing


def _read_lines(path: Path, what: str) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise KgDataError(f"{what} file not found: {path}") from None
    return text.splitlines()


def parse_triples(path: Path, kg_id: str, relations: RelationVocab | None = None) -> Kg:
    """Parse a tab-separated triple file into a Kg with dense first-seen ids.

    Duplicate lines are dropped and counted on kg.duplicate_count.
    """
    relations = relations if relations is not None else RelationVocab()
    kg = Kg(kg_id, relations)
    lines = _read_lines(path, "triple")
    for number, line in enumerate(lines, start=1):
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(f"{path}:{number}: expected 3 tab-separated fields, got {len(fields)}")
        head = kg.intern_entity(fields[0])
        relation = relations.intern(fields[1])
        tail = kg.intern_entity(fields[2])
        if not kg.add_triple(head, relation, tail):
            kg.duplicate_count += 1
    if not kg.triples:
        raise KgDataError(f"empty triple file: {path}")
    return kg


def parse_seeds(path: Path, kg_left: Kg, kg_right: Kg) -> tuple[SeedSet, int]:
    """Parse entity<TAB>entity alignment seeds; returns (seed set, skip count).

    Lines with a label unknown on either side are skipped and counted. An
    entity taking part in two pairs violates the one-to-one invariant.
    """
    pairs: list[tuple[int, int]] = []
    used_left: set[int] = set()
    used_right: set[int] = set()
    skipped = 0
    for number, line in enumerate(_read_lines(path, "seed"), start=1):
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(f"{path}:{number}: expected 2 tab-separated fields, got {len(fields)}")
        left = kg_left.entity_index.get(fields[0])
        right = kg_right.entity_index.get(fields[1])
        if left is None or right is None:
            skipped += 1
            continue
        if left in used_left or right in used_right:
            raise KgDataError(f"{path}:{number}: entity repeated across seed pairs")
        used_left.add(left)
        used_right.add(right)
        pairs.append((left, right))
    seed_set = SeedSet((kg_left.id, kg_right.id), pairs, [GIVEN] * len(pairs))
    return seed_set, skipped


def split_seeds(seed_set: SeedSet, train_fraction: float, rng_seed: int) -> tuple[SeedSet, SeedSet]:
    """Deterministic disjoint partition; train side takes the floor."""
    if not 0.0 < train_fraction < 1.0:
        raise KgDataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if len(seed_set) < 2:
        raise KgDataError("need at least 2 seed pairs to split")
    rng = substream(rng_seed, "seed-split", seed_set.kg_pair[0], seed_set.kg_pair[1])
    order = rng.permutation(len(seed_set))
    n_train = int(np.floor(train_fraction * len(seed_set)))
    train_idx = sorted(order[:n_train].tolist())
    test_idx = sorted(order[n_train:].tolist())
    make = lambda idx: SeedSet(
        seed_set.kg_pair,
        [seed_set.pairs[i] for i in idx],
        [seed_set.provenance[i] for i in idx],
    )
    return make(train_idx), make(test_idx)


def load_initial_vectors(path: Path, multikg: MultiKg) -> dict[str, int]:
    """Attach surface-information vectors by label; returns coverage counts.

    A label can resolve to entities of several KGs and to a relation at once.
    Anything without a vector keeps the random initialization.
    """
    covered_entities = 0
    covered_relations = 0
    unknown = 0
    for number, line in enumerate(_read_lines(path, "vector"), start=1):
        if not line.strip():
            continue
        if "\t" in line:
            label, rest = line.split("\t", 1)
            parts = rest.split()
        else:
            tokens = line.split()
            label, parts = tokens[0], tokens[1:]
        try:
            vector = np.array([float(p) for p in parts], dtype=np.float64)
        except ValueError:
            raise ParseError(f"{path}:{number}: non-numeric vector component") from None
        if vector.size == 0:
            raise ParseError(f"{path}:{number}: no vector components")
        if multikg.vector_dim is None:
            multikg.vector_dim = int(vector.size)
        elif vector.size != multikg.vector_dim:
            raise KgDataError(
                f"{path}:{number}: vector dimension {vector.size} != {multikg.vector_dim}"
            )
        hit = False
        for kg in multikg.kgs:
            eid = kg.entity_index.get(label)
            if eid is not None:
                multikg.entity_vectors[kg.id][eid] = vector
                covered_entities += 1
                hit = True
        rid = multikg.relations.index.get(label)
        if rid is not None:
            multikg.relation_vectors[rid] = vector
            covered_relations += 1
            hit = True
        if not hit:
            unknown += 1
    return {
        "covered_entities": covered_entities,
        "covered_relations": covered_relations,
        "unknown_labels": unknown,
    }


def _resolve_split_triples(path: Path, kg: Kg) -> list[tuple[int, int, int]]:
    triples = []
    for number, line in enumerate(_read_lines(path, "kgc split"), start=1):
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(f"{path}:{number}: expected 3 tab-separated fields, got {len(fields)}")
        head = kg.entity_index.get(fields[0])
        relation = kg.relations.index.get(fields[1])
        tail = kg.entity_index.get(fields[2])
        if head is None or tail is None:
            raise ParseError(f"{path}:{number}: unknown entity label")
        if relation is None:
            raise ParseError(f"{path}:{number}: unknown relation label")
        triples.append((head, relation, tail))
    return triples


def load_multikg(data_dir: Path) -> MultiKg:
    """Load a data directory laid out as:

    triples_<kg>.tsv, seeds_<kg1>_<kg2>.tsv, kgc_{train,valid,test}_<kg>.tsv,
    optional vectors.tsv. KGs are ordered by their file names.
    """
    data_dir = Path(data_dir)
    triple_files = sorted(data_dir.glob("triples_*.tsv"))
    if not triple_files:
        raise KgDataError(f"no triples_*.tsv files under {data_dir}")
    relations = RelationVocab()
    kgs = [parse_triples(f, f.stem.removeprefix("triples_"), relations) for f in triple_files]
    multikg = MultiKg(kgs, relations)

    for kg in multikg.kgs:
        for split in ("train", "valid", "test"):
            split_path = data_dir / f"kgc_{split}_{kg.id}.tsv"
            if split_path.exists():
                multikg.set_kgc_split(kg.id, split, _resolve_split_triples(split_path, kg))

    for seed_path in sorted(data_dir.glob("seeds_*.tsv")):
        name = seed_path.stem.removeprefix("seeds_")
        for left in multikg.by_id:
            suffix = f"{left}_"
            if name.startswith(suffix) and name.removeprefix(suffix) in multikg.by_id:
                right = name.removeprefix(suffix)
                seed_set, _ = parse_seeds(seed_path, multikg.by_id[left], multikg.by_id[right])
                multikg.seed_sets[(left, right)] = seed_set
                break
        else:
            raise KgDataError(f"seed file {seed_path.name} does not match any KG pair")

    vectors = data_dir / "vectors.tsv"
    if vectors.exists():
        load_initial_vectors(vectors, multikg)
    return multikg


# ---------------------------------------------------------------------------
# serialization


def kg_to_lines(kg: Kg) -> list[str]:
    """Loaded triples in original order, ready to re-parse into the same Kg."""
    lines = []
    for t in kg.loaded_triples():
        lines.append(
            f"{kg.entity_labels[t.head]}\t{kg.relations.labels[t.relation]}\t{kg.entity_labels[t.tail]}"
        )
    return lines


def write_kg(kg: Kg, path: Path) -> None:
    Path(path).write_text("\n".join(kg_to_lines(kg)) + "\n", encoding="utf-8")


def write_transfer_sidecar(kg: Kg, path: Path) -> None:
    """Transferred triples only: head<TAB>relation<TAB>tail<TAB>epoch."""
    rows = []
    for t in sorted(kg.transferred_triples(), key=lambda t: (kg.transfer_epoch[t.key],) + t.key):
        rows.append(
            f"{kg.entity_labels[t.head]}\t{kg.relations.labels[t.relation]}"
            f"\t{kg.entity_labels[t.tail]}\t{kg.transfer_epoch[t.key]}"
        )
    Path(path).write_text("\n".join(rows) + ("\n" if rows else ""), encoding="utf-8")
