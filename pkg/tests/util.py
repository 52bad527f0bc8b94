"""Shared construction helpers for the test suite."""
import numpy as np

from jointkg import diff
from jointkg.diff import Mlp, Tensor
from jointkg.kgdata import Kg, MultiKg, RelationVocab
from jointkg.rgnn import EncoderParams, build_edges


def zero_mlp(dims, activations):
    weights = [diff.param(np.zeros((i, o))) for i, o in zip(dims[:-1], dims[1:])]
    biases = [diff.param(np.zeros(o)) for o in dims[1:]]
    return Mlp(weights, biases, activations)


def identity_mlp(n):
    return Mlp([diff.param(np.eye(n))], [diff.param(np.zeros(n))], ("identity",))


def const_mlp(in_dim, out_value):
    """Zero weights with the output forced to `out_value` via the bias."""
    out_value = np.asarray(out_value, dtype=np.float64)
    return Mlp(
        [diff.param(np.zeros((in_dim, out_value.size)))],
        [diff.param(out_value.copy())],
        ("identity",),
    )


def weight_mlp(w, activation="identity"):
    w = np.asarray(w, dtype=np.float64)
    return Mlp([diff.param(w.copy())], [diff.param(np.zeros(w.shape[1]))], (activation,))


def manual_encoder(layer_count, dim, entity0, relation0, comp=None, rel=None, att=None,
                   g=None, relation_aware=True):
    """Encoder with explicit tables; unspecified blocks default to zero MLPs
    (comp/att), identity (rel), or identity-with-tanh (g)."""
    def block(source, default):
        return [source(k) if source else default(k) for k in range(layer_count)]

    comp_mlps = block(comp, lambda k: zero_mlp([dim, dim, dim], ("leakyrelu", "identity")))
    rel_mlps = block(rel, lambda k: identity_mlp(dim))
    att_mlps = block(att, lambda k: zero_mlp([2 * dim, 1], ("identity",)))
    g_mlps = block(g, lambda k: Mlp([diff.param(np.eye(dim))], [diff.param(np.zeros(dim))],
                                    ("tanh",)))
    return EncoderParams(
        layer_count, dim,
        diff.param(np.asarray(entity0, dtype=np.float64).copy()),
        diff.param(np.asarray(relation0, dtype=np.float64).copy()),
        comp_mlps, rel_mlps, att_mlps, g_mlps, relation_aware=relation_aware,
    )


def single_kg(triples, entity_count=None, kg_id="xx"):
    """MultiKg with one KG given as integer (head, relation, tail) triples."""
    vocab = RelationVocab()
    kg = Kg(kg_id, vocab)
    max_entity = max([max(h, t) for h, _, t in triples], default=-1)
    for e in range((entity_count if entity_count is not None else max_entity + 1)):
        kg.intern_entity(f"e{e}")
    max_rel = max([r for _, r, _ in triples], default=-1)
    for r in range(max_rel + 1):
        vocab.intern(f"r{r}")
    for h, r, t in triples:
        kg.add_triple(h, r, t)
    return MultiKg([kg], vocab)


def toy_pair_dataset(entities=12, relations=2, extra_edges=10, seed_pairs=6, seed=0,
                     drop_in_first=0):
    """Two mirrored KGs with kgc splits and alignment seeds, fully in memory.

    The second KG always carries the full base graph; the first loses
    `drop_in_first` random triples, mimicking unequal completeness.
    """
    rng = np.random.default_rng(seed)
    base = [(i + 1, int(rng.integers(relations)), int(rng.integers(i + 1)))
            for i in range(entities - 1)]
    existing = set(base)
    attempts = 0
    while len(base) < entities - 1 + extra_edges and attempts < 10_000:
        attempts += 1
        h, t = rng.integers(entities, size=2)
        r = int(rng.integers(relations))
        key = (int(h), r, int(t))
        if h != t and key not in existing:
            existing.add(key)
            base.append(key)

    drop = set(rng.choice(len(base), size=drop_in_first, replace=False).tolist()) \
        if drop_in_first else set()
    first = [t for i, t in enumerate(base) if i not in drop]

    vocab = RelationVocab()
    kg_a = Kg("aa", vocab)
    kg_b = Kg("bb", vocab)
    for i in range(entities):
        kg_a.intern_entity(f"a{i}")
        kg_b.intern_entity(f"b{i}")
    for r in range(relations):
        vocab.intern(f"r{r}")
    for h, r, t in first:
        kg_a.add_triple(h, r, t)
    for h, r, t in base:
        kg_b.add_triple(h, r, t)
    multikg = MultiKg([kg_a, kg_b], vocab)

    from jointkg.kgdata import GIVEN, SeedSet

    multikg.seed_sets[("aa", "bb")] = SeedSet(
        ("aa", "bb"), [(i, i) for i in range(seed_pairs)], [GIVEN] * seed_pairs)

    for kg_id, triples in (("aa", first), ("bb", base)):
        order = rng.permutation(len(triples))
        n_train = max(1, int(0.7 * len(triples)))
        n_valid = max(1, int(0.15 * len(triples)))
        train = [triples[i] for i in order[:n_train]]
        valid = [triples[i] for i in order[n_train:n_train + n_valid]]
        test = [triples[i] for i in order[n_train + n_valid:]]
        multikg.set_kgc_split(kg_id, "train", train)
        multikg.set_kgc_split(kg_id, "valid", valid)
        multikg.set_kgc_split(kg_id, "test", test)
    return multikg


def pack_params(tensors):
    """Flatten parameter tensors into one vector plus a rebuild closure.

    rebuild(probe) returns differentiable stand-ins carved out of the probe
    vector, shaped like the originals, for grad-checking whole models.
    """
    shapes = [t.values.shape for t in tensors]
    sizes = [int(np.prod(s)) if s else 1 for s in shapes]
    flat = np.concatenate([t.values.reshape(-1) for t in tensors])

    def rebuild(probe: Tensor):
        column = diff.reshape(probe, (flat.size, 1))
        rebuilt = []
        offset = 0
        for shape, size in zip(shapes, sizes):
            rows = diff.gather_rows(column, np.arange(offset, offset + size))
            rebuilt.append(diff.reshape(rows, shape))
            offset += size
        return rebuilt

    return flat, rebuild


def rewire_encoder(params: EncoderParams, stand_ins):
    """EncoderParams whose tensors are replaced by `stand_ins` (pack order)."""
    it = iter(stand_ins)

    def clone_mlp(mlp):
        tensors = [next(it) for _ in range(2 * len(mlp.weights))]
        return Mlp(tensors[0::2], tensors[1::2], mlp.activations, mlp.leaky_slope)

    entity0 = next(it)
    relation0 = next(it)
    comp, rel, att, g = [], [], [], []
    for k in range(params.layer_count):
        comp.append(clone_mlp(params.comp[k]))
        rel.append(clone_mlp(params.rel[k]))
        att.append(clone_mlp(params.att[k]))
        g.append(clone_mlp(params.g[k]))
    return EncoderParams(params.layer_count, params.dim, entity0, relation0,
                         comp, rel, att, g, relation_aware=params.relation_aware)
