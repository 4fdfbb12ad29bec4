"""べき乗反復と確率的抽象解釈のテスト"""

import numpy as np
import pytest
import scipy.sparse as sps

import lang
from linalg_utils import identity, kron, pseudo_inverse
from los_compiler import assemble, enumerate_space, operator_terms
from los_errors import ConvergenceError, DimensionError, LosInputError
from pai_analysis import (
    Abstraction, abstract_operator, abstract_state, classification, extract_label, forgetful,
    initial_config, iterate, parse_abstraction_spec, termination_profile,
)

from conftest import WIN_ABSTRACTION

HT_TERMINAL = {
    12: 0.074074, 18: 0.037037, 36: 0.11111, 48: 0.11111, 72: 0.11111, 78: 0.037037,
    90: 0.074074, 96: 0.11111, 120: 0.11111, 132: 0.11111, 150: 0.074074, 156: 0.037037,
}
HW_TERMINAL = {
    18: 0.11111, 27: 0.11111, 54: 0.037037, 72: 0.074074, 108: 0.074074, 117: 0.11111,
    135: 0.11111, 144: 0.037037, 180: 0.037037, 198: 0.074074, 225: 0.11111, 234: 0.11111,
}
HT_DG = [0.11] * 9
HW_DG = [0.22, 0.04, 0.07, 0.07, 0.22, 0.04, 0.04, 0.07, 0.22]


def dense(A):
    return A.toarray() if sps.issparse(A) else np.asarray(A)


def terminal_of(op, s0=None):
    x0 = initial_config(op.space, s0 or {"d": 0, "g": 0, "o": 0}, op)
    return iterate(op, x0).terminal


# =====================
# iterate
# =====================
@pytest.mark.parametrize("fixture, expected", [("ht_operator", HT_TERMINAL), ("hw_operator", HW_TERMINAL)])
def test_monty_terminal_distribution(request, fixture, expected):
    op = request.getfixturevalue(fixture)
    x = terminal_of(op)
    nonzero = {i + 1 for i in np.flatnonzero(x > 1e-12)}
    assert nonzero == set(expected)
    for index, value in expected.items():
        assert x[index - 1] == pytest.approx(value, abs=1e-5)
    assert x.sum() == pytest.approx(1.0)


def test_iterate_identity_is_fixed_point():
    x0 = np.array([0.2, 0.3, 0.5])
    result = iterate(identity(3), x0)
    assert np.array_equal(result.terminal, x0)
    assert result.steps == 0
    assert result.residual == 0.0


def test_iterate_non_convergent():
    flip = sps.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(ConvergenceError):
        iterate(flip, np.array([1.0, 0.0]), max_steps=50)


def test_iterate_rejects_non_distribution():
    with pytest.raises(LosInputError):
        iterate(identity(2), np.array([0.7, 0.7]))
    with pytest.raises(DimensionError):
        iterate(identity(2), np.array([1.0, 0.0, 0.0]))


# =====================
# initial_config / extract_label
# =====================
def test_initial_config_monty(ht_operator):
    x0 = initial_config(ht_operator.space, {"d": 0, "g": 0, "o": 0}, ht_operator)
    assert x0.shape == (162,)
    assert x0[0] == 1.0 and x0.sum() == 1.0


def test_initial_config_uniform_two_states():
    program = lang.parse("var x:{0,1}; skip")
    space = enumerate_space(program.decls)
    assert np.array_equal(initial_config(space, np.array([0.5, 0.5]), program), [0.5, 0.0, 0.5, 0.0])


def test_initial_config_dimension_mismatch():
    program = lang.parse("var x:{0,1}; skip")
    space = enumerate_space(program.decls)
    with pytest.raises(DimensionError):
        initial_config(space, np.ones(3) / 3, program)


def test_extract_label():
    s = np.array([0.25, 0.75])
    x = np.kron(s, [0.0, 1.0])
    assert np.array_equal(extract_label(x, 2, 2), s)
    assert np.array_equal(extract_label(x, 1, 2), [0.0, 0.0])
    with pytest.raises(LosInputError):
        extract_label(x, 3, 2)


def test_extract_label_renormalize():
    x = np.array([0.1, 0.0, 0.3, 0.6])
    assert np.allclose(extract_label(x, 1, 2, renormalize=True), [0.25, 0.75])


def test_monty_terminates_at_stop(ht_operator):
    x = terminal_of(ht_operator)
    stop = ht_operator.label_position(ht_operator.stop_label)
    assert extract_label(x, stop, ht_operator.label_count).sum() == pytest.approx(1.0, abs=1e-12)


def test_termination_profile_is_monotone(corpus_files):
    for path in corpus_files:
        program = lang.parse_file(path)
        params = {name: 0.5 for name in lang.parameters(program)} or None
        op = assemble(program, params=params)
        x0 = initial_config(op.space, 1, op)
        profile = termination_profile(op, x0, op.label_position(op.stop_label), 60)
        assert np.all(np.diff(profile) >= -1e-15), path.name
        assert profile[-1] == pytest.approx(1.0, abs=1e-9), path.name


# =====================
# 抽象化
# =====================
def test_forgetful():
    A = forgetful(3)
    assert np.array_equal(dense(A), np.ones((3, 1)))
    assert np.allclose(dense(pseudo_inverse(A)), [[1 / 3] * 3])
    assert np.array_equal(dense(forgetful(1)), [[1.0]])
    assert np.array_equal(dense(kron(forgetful(2), forgetful(3))), dense(forgetful(6)))


def test_classification_rejects_overlap():
    with pytest.raises(LosInputError):
        classification(3, [[0, 1], [1, 2]])


def test_win_abstraction_matrix(ht_operator):
    A = parse_abstraction_spec("d,g=classes:[d==g, d!=g]", ht_operator.space)
    first = dense(A.factors[0].matrix)
    assert first.shape == (9, 2)
    assert np.array_equal(first[:, 0], [1, 0, 0, 0, 1, 0, 0, 0, 1])
    assert A.shape == (27, 6)


def test_abstraction_spec_defaults_and_label_factor(ht_operator):
    A = parse_abstraction_spec("o=forget; label=forget", ht_operator.space, ht_operator.labels)
    assert [f.kind for f in A.factors] == ["id", "id", "forget", "forget"]
    assert A.shape == (162, 9)
    assert A.describe_columns()[1] == "d=0 g=1 * *"
    assert parse_abstraction_spec("id", ht_operator.space).shape == (27, 27)


def test_abstraction_label_classes(ht_operator):
    A = parse_abstraction_spec("label=classes:[{6}, {1,2,3,4,5}]", ht_operator.space, ht_operator.labels)
    assert A.shape == (162, 54)


@pytest.mark.parametrize("spec", [
    "d,o=forget",            # 連続していない
    "d=forget; d=id",        # 重複
    "d=forget; d,g=id",      # 変数の重複
    "o=keep",                # 未知の種類
    "q=forget",              # 未宣言
    "o",                     # 形式
])
def test_abstraction_spec_errors(ht_operator, spec):
    with pytest.raises(LosInputError):
        parse_abstraction_spec(spec, ht_operator.space, ht_operator.labels)


def test_label_factor_requires_labels(ht_operator):
    with pytest.raises(LosInputError):
        parse_abstraction_spec("label=forget", ht_operator.space)


def test_abstraction_pinv_factorizes(ht_operator):
    A = parse_abstraction_spec(WIN_ABSTRACTION, ht_operator.space, ht_operator.labels)
    assert np.allclose(dense(A.pinv), dense(pseudo_inverse(A.matrix)), atol=1e-10, rtol=0)


@pytest.mark.parametrize("fixture, expected", [("ht_operator", [1 / 3, 2 / 3]), ("hw_operator", [2 / 3, 1 / 3])])
def test_monty_win_probability(request, fixture, expected):
    op = request.getfixturevalue(fixture)
    A = parse_abstraction_spec(WIN_ABSTRACTION, op.space, op.labels)
    assert np.allclose(abstract_state(terminal_of(op), A), expected, atol=1e-5, rtol=0)


@pytest.mark.parametrize("fixture, expected", [("ht_operator", HT_DG), ("hw_operator", HW_DG)])
def test_monty_door_pairs(request, fixture, expected):
    op = request.getfixturevalue(fixture)
    A = parse_abstraction_spec("o=forget; label=forget", op.space, op.labels)
    assert np.allclose(abstract_state(terminal_of(op), A), expected, atol=5e-3, rtol=0)


def test_abstract_state_identity(ht_operator):
    x = terminal_of(ht_operator)
    assert np.array_equal(abstract_state(x, identity(162)), x)


def test_abstract_state_preserves_mass(hw_operator):
    x = terminal_of(hw_operator, {"d": 2, "g": 1, "o": 0})
    A = parse_abstraction_spec(WIN_ABSTRACTION, hw_operator.space, hw_operator.labels)
    assert abstract_state(x, A).sum() == pytest.approx(1.0)
    with pytest.raises(DimensionError):
        abstract_state(x[:27], A)


def test_abstract_operator_of_identity():
    A = Abstraction.from_matrices([classification(4, [[0, 1], [2], [3]]), forgetful(2)])
    assert np.allclose(dense(abstract_operator(identity(8), A)), np.eye(3))


def test_abstract_operator_is_blockwise(monty_ht, ht_operator):
    A = parse_abstraction_spec(WIN_ABSTRACTION, ht_operator.space, ht_operator.labels)
    whole = dense(abstract_operator(ht_operator, A))
    blockwise = sum(dense(abstract_operator(term, A)) for _, term in operator_terms(monty_ht))
    assert np.allclose(whole, blockwise, atol=1e-12, rtol=0)


def test_abstract_operator_dimension_mismatch():
    with pytest.raises(DimensionError):
        abstract_operator(identity(5), forgetful(4))


def test_abstract_swap_operator():
    space = enumerate_space([("x", [0, 1]), ("y", [0, 1]), ("z", [0, 1])])
    A = parse_abstraction_spec("z=forget", space)
    assert A.shape == (8, 4)
    assert np.allclose(dense(abstract_operator(identity(8), A)), np.eye(4))
