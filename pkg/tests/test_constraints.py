import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from e2cp import (ConstraintError, ConstraintMatrix, PairwiseConstraint, constraints_from_labeled_subset,
                  constraints_from_labels, from_matrix, load_constraints, save_constraints, to_matrix,
                  toy_moon_constraints)
from e2cp.constraints import label_constraints

# labels of the 7-point illustration and the six constrained pairs (0-based)
FIG_LABELS = [0, 1, 0, 0, 2, 1, 0]
FIG_PAIRS = [(0, 1), (0, 2), (0, 6), (1, 3), (2, 5), (5, 6)]


def test_label_rule():
    cs = label_constraints([0, 0, 1], [0, 0, 1], [(0, 1), (0, 2)])
    assert [c.strength for c in cs] == [1.0, -1.0]
    assert cs[0].must_link and not cs[1].must_link


def test_illustration_matrix():
    z = to_matrix(label_constraints(FIG_LABELS, FIG_LABELS, FIG_PAIRS), 7).values
    expected = np.zeros((7, 7))
    for (i, j), s in {(0, 1): -1, (0, 2): 1, (0, 6): 1, (1, 3): -1, (2, 5): -1, (5, 6): -1}.items():
        expected[i, j] = expected[j, i] = s
    np.testing.assert_array_equal(z, expected)


def test_strength_validation():
    PairwiseConstraint(0, 1, -0.5)
    for s in (0.0, 1.5, -2.0, float("nan")):
        with pytest.raises(ConstraintError):
            PairwiseConstraint(0, 1, s)
    with pytest.raises(ConstraintError):
        PairwiseConstraint(-1, 1, 1.0)


def test_to_matrix_basics():
    assert not to_matrix([], 3).values.any()
    z = to_matrix([PairwiseConstraint(0, 1, 1.0)], 3).values
    assert z[0, 1] == z[1, 0] == 1 and np.count_nonzero(z) == 2
    with pytest.raises(ConstraintError, match=r"\(0, 1\)"):
        to_matrix([PairwiseConstraint(0, 1, 1.0), PairwiseConstraint(1, 0, -1.0)], 3)
    # identical duplicates collapse
    assert np.count_nonzero(to_matrix([PairwiseConstraint(0, 1, 1.0)] * 2, 3).values) == 2
    with pytest.raises(ConstraintError, match="out of bounds"):
        to_matrix([PairwiseConstraint(0, 3, 1.0)], 3)
    with pytest.raises(ConstraintError, match="self"):
        to_matrix([PairwiseConstraint(1, 1, 1.0)], 3)


def test_two_source_matrix_is_not_mirrored():
    z = to_matrix([PairwiseConstraint(2, 0, -1.0), PairwiseConstraint(1, 1, 1.0)], 3, 2).values
    assert z.shape == (3, 2)
    assert z[2, 0] == -1 and z[1, 1] == 1 and np.count_nonzero(z) == 2


def test_constraint_matrix_range():
    with pytest.raises(ValueError):
        ConstraintMatrix(np.array([[0, 1.5], [1.5, 0]]))


@given(st.lists(st.integers(0, 3), min_size=2, max_size=25), st.integers(0, 50), st.integers(0, 1000))
def test_sampling_single_source(labels, count, seed):
    n = len(labels)
    total = n * (n - 1) // 2
    count = min(count, total)
    cs = constraints_from_labels(labels, count=count, seed=seed)
    assert len(cs) == count
    keys = {(c.i, c.j) for c in cs}
    assert len(keys) == count and all(i < j for i, j in keys)
    for c in cs:
        assert c.strength == (1.0 if labels[c.i] == labels[c.j] else -1.0)
    again = constraints_from_labels(labels, count=count, seed=seed)
    assert again == cs


def test_sampling_errors_and_extremes():
    with pytest.raises(ConstraintError, match="only 3"):
        constraints_from_labels([0, 1, 2], count=4)
    assert constraints_from_labels([0, 1, 2], count=0) == []
    assert all(c.must_link for c in constraints_from_labels([5] * 6))
    assert not any(c.must_link for c in constraints_from_labels(list(range(6))))
    assert len(constraints_from_labels([0, 1, 0, 1])) == 6


def test_two_source_sampling_respects_rows_and_cols():
    la, lb = [0, 1, 0, 1, 2], [1, 1, 0, 2]
    cs = constraints_from_labels(la, lb, rows=[0, 2, 4], cols=[1, 3])
    assert {(c.i, c.j) for c in cs} == {(i, j) for i in (0, 2, 4) for j in (1, 3)}
    for c in cs:
        assert c.strength == (1.0 if la[c.i] == lb[c.j] else -1.0)


def test_labeled_subset_gives_all_pairs_of_subset():
    labels = np.repeat(np.arange(4), 30)
    cs = constraints_from_labeled_subset(labels, 70, seed=3)
    assert len(cs) == 70 * 69 // 2
    assert len({c.i for c in cs} | {c.j for c in cs}) == 70


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9), st.sampled_from([-1.0, -0.3, 0.5, 1.0])),
                max_size=30))
def test_roundtrip_single_source(triples):
    uniq = {}
    for i, j, s in triples:
        if i != j:
            uniq.setdefault((min(i, j), max(i, j)), s)
    cs = [PairwiseConstraint(i, j, s) for (i, j), s in uniq.items()]
    back = from_matrix(to_matrix(cs, 10))
    assert {(c.i, c.j, c.strength) for c in back} == {(i, j, s) for (i, j), s in uniq.items()}


def test_file_roundtrip_and_parsing(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("# comment\n0,1,1.0\n\n2,3,-0.5\n")
    cs = load_constraints(p)
    assert cs == [PairwiseConstraint(0, 1, 1.0), PairwiseConstraint(2, 3, -0.5)]
    q = tmp_path / "d.csv"
    save_constraints(cs, q)
    assert load_constraints(q) == cs


@pytest.mark.parametrize("text, match", [
    ("1,2,1.5\n", ":1:"),
    ("0,1\n", "expected"),
    ("0,x,1\n", "malformed"),
    ("0,1,1\n0,1\n", ":2:"),
])
def test_file_errors(tmp_path, text, match):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(ConstraintError, match=match):
        load_constraints(p)


def test_toy_moon_constraints():
    cs = toy_moon_constraints(100)
    assert sum(c.must_link for c in cs) == 2 and sum(not c.must_link for c in cs) == 2
    labels = np.repeat([0, 1], 50)
    for c in cs:
        assert (labels[c.i] == labels[c.j]) == c.must_link
