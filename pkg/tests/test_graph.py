import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sinn.graph import (
    NEGATIVE,
    POSITIVE,
    ConceptLayer,
    GraphError,
    LabelGraph,
    RelationEdge,
    compile_masks,
    hierarchy_graph,
    make_graph,
    parse_graph,
    serialize_graph,
    validate_graph,
)


def test_parse_toy(toy_graph):
    g = toy_graph
    assert g.depth == 2 and g.sizes == (2, 3)
    signs = sorted(e.sign for e in g.edges)
    assert signs == [NEGATIVE, POSITIVE]


def test_single_layer_no_edges():
    g = parse_graph("layer only: a\n")
    assert g.depth == 1 and not g.edges
    m = compile_masks(g)
    assert m.down_pos == (None,) and m.up_pos == (None,)
    assert m.intra_pos[0].tolist() == [[True]]


def test_non_adjacent_rejected():
    text = "layer a: x\nlayer b: y\nlayer c: z\npos a.x c.z\n"
    with pytest.raises(GraphError, match="non-adjacent") as exc:
        parse_graph(text)
    assert exc.value.line == 4


@pytest.mark.parametrize("text, match", [
    ("layer a: x\nbogus line\n", "syntax"),
    ("layer a: x\nlayer a: y\n", "duplicate layer"),
    ("layer a: x, x\n", "duplicate label"),
    ("layer a: x\npos a.x b.y\n", "unknown layer"),
    ("layer a: x\nlayer b: y\npos a.x b.q\n", "unknown label"),
    ("layer a: x, y\npos a.x a.x\n", "self edge"),
    ("layer a: x\nlayer b: y\npos a.x b.y\nneg b.y a.x\n", "conflicting"),
    ("layer a: x\noption loud\n", "unknown option"),
    ("# nothing\n", "no layers"),
])
def test_parse_errors(text, match):
    with pytest.raises(GraphError, match=match):
        parse_graph(text)


def test_syntax_error_line_number():
    with pytest.raises(GraphError) as exc:
        parse_graph("layer a: x\n\n# c\nlayer b y\n")
    assert exc.value.line == 4
    assert str(exc.value).startswith("line 4:")


def test_same_sign_duplicate_is_merged():
    g = parse_graph("layer a: x\nlayer b: y\npos a.x b.y\npos b.y a.x\n")
    assert len(g.edges) == 1


def test_validate_clean(toy_graph):
    assert validate_graph(toy_graph) == []


def test_validate_conflicting_sign():
    layers = (ConceptLayer(0, "a", ("x",)), ConceptLayer(1, "b", ("y",)))
    edges = frozenset({RelationEdge((0, 0), (1, 0), POSITIVE), RelationEdge((1, 0), (0, 0), NEGATIVE)})
    diags = validate_graph(LabelGraph(layers, edges))
    assert [d.code for d in diags] == ["conflicting_sign"]


def test_validate_duplicate_label():
    layers = (ConceptLayer(0, "a", ("x", "x")),)
    diags = validate_graph(LabelGraph(layers))
    assert [d.code for d in diags] == ["duplicate_label"]
    assert "'x'" in diags[0].message


def test_validate_other_codes():
    layers = (ConceptLayer(0, "a", ("x",)), ConceptLayer(1, "b", ("y",)), ConceptLayer(2, "c", ("z",)))
    edges = frozenset({
        RelationEdge((0, 0), (2, 0), POSITIVE),
        RelationEdge((0, 0), (0, 0), POSITIVE),
        RelationEdge((0, 0), (1, 5), POSITIVE),
        RelationEdge((0, 0), (1, 0), "maybe"),
    })
    codes = sorted(d.code for d in validate_graph(LabelGraph(layers, edges)))
    assert codes == ["bad_endpoint", "bad_sign", "non_adjacent", "self_edge"]
    with pytest.raises(GraphError):
        compile_masks(LabelGraph(layers, edges))


def test_toy_masks(toy_graph):
    m = compile_masks(toy_graph)
    # rows: office, beach, forest; cols: indoor, outdoor
    assert m.down_pos[1].tolist() == [[True, False], [False, False], [False, False]]
    assert m.down_neg[1].tolist() == [[False, False], [True, False], [False, False]]
    assert np.array_equal(m.up_pos[0], m.down_pos[1].T)
    assert np.array_equal(m.intra_pos[1], np.eye(3, dtype=bool))
    assert not m.intra_neg[1].any()


def test_no_edges_masks():
    g = make_graph([("a", ["x", "y"]), ("b", ["p", "q", "r"])])
    m = compile_masks(g)
    assert not m.down_pos[1].any() and not m.down_neg[1].any()
    assert np.array_equal(m.intra_pos[0], np.eye(2, dtype=bool))


def test_fully_connected_pair():
    edges = [("pos", f"a.{x}", f"b.{y}") for x in "xy" for y in "pqr"]
    m = compile_masks(make_graph([("a", "xy"), ("b", "pqr")], edges))
    assert m.down_pos[1].shape == (3, 2) and m.down_pos[1].all()
    assert not m.down_neg[1].any()


def test_no_self_gate_option():
    g = parse_graph("layer a: x, y\nneg a.x a.y\noption no_self_gate\n")
    m = compile_masks(g)
    assert not m.intra_pos[0].any()
    assert m.intra_neg[0].tolist() == [[False, True], [True, False]]
    assert serialize_graph(g).endswith("option no_self_gate\n")


def test_masks_read_only(toy_graph):
    m = compile_masks(toy_graph)
    with pytest.raises(ValueError):
        m.intra_pos[0][0, 0] = False


def test_canonical_serialization():
    text = "layer b: y, z\nlayer a: x\nneg b.z a.x\npos a.x b.y\nneg b.y b.z\n"
    out = serialize_graph(parse_graph(text))
    assert out == "layer b: y, z\nlayer a: x\npos b.y a.x\nneg b.y b.z\nneg b.z a.x\n"
    assert serialize_graph(parse_graph(out)) == out


def _check_mask_invariants(g):
    m = compile_masks(g)
    for t in range(g.depth):
        assert not (m.intra_pos[t] & m.intra_neg[t]).any()
        assert np.array_equal(m.intra_pos[t], m.intra_pos[t].T)
        if t > 0:
            assert not (m.down_pos[t] & m.down_neg[t]).any()
            assert np.array_equal(m.down_pos[t].T, m.up_pos[t - 1])
            assert np.array_equal(m.down_neg[t].T, m.up_neg[t - 1])
    assert m == compile_masks(g)


@settings(max_examples=40, deadline=None)
@given(
    sizes=st.lists(st.integers(1, 5), min_size=1, max_size=4),
    seed=st.integers(0, 10_000),
    excl=st.booleans(),
)
def test_random_graph_properties(sizes, seed, excl):
    g = hierarchy_graph(sorted(sizes), seed=seed, exclusive_siblings=excl)
    assert validate_graph(g) == []
    _check_mask_invariants(g)
    text = serialize_graph(g)
    assert serialize_graph(parse_graph(text)) == text
    assert parse_graph(text).digest() == g.digest()


def test_hierarchy_rejects_narrowing():
    with pytest.raises(ValueError):
        hierarchy_graph((2, 1))


def test_hierarchy_tree_shape():
    g = hierarchy_graph((3, 8, 20), seed=0)
    m = compile_masks(g)
    for t in (1, 2):
        # every child has exactly one positive parent and negative links to the rest
        assert (m.down_pos[t].sum(axis=1) == 1).all()
        assert (m.down_neg[t].sum(axis=1) == g.sizes[t - 1] - 1).all()
    assert (m.down_pos[1].sum(axis=0) >= 1).all()
