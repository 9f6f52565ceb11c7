import numpy as np
import pytest

from merger_dss.errors import (
    EvidenceError,
    FactorError,
    ImpossibleEvidenceError,
    StateMismatchError,
)
from merger_dss.factors import (
    Cpt,
    Evidence,
    Factor,
    Variable,
    cpt_from_rows,
    factor_marginalize,
    factor_multiply,
    factor_normalize,
    factor_reduce,
)

A = Variable("A", ("a0", "a1"))
B = Variable("B", ("b0", "b1"))


def joint_ab():
    # P(A) * P(B|A) with P(A)=[0.6,0.4], rows [0.5,0.5] and [0.2,0.8]
    return Factor((A, B), [0.30, 0.30, 0.08, 0.32])


def test_variable_rejects_degenerate_and_duplicate_states():
    with pytest.raises(FactorError):
        Variable("X", ("only",))
    with pytest.raises(FactorError):
        Variable("X", ("s", "s"))


def test_multiply_by_unit_is_identity():
    f = Factor((A,), [0.6, 0.4])
    out = factor_multiply(f, Factor.unit())
    assert out.scope == (A,)
    assert np.array_equal(out.values, f.values)


def test_multiply_prior_with_conditional_gives_joint():
    f = Factor((A,), [0.6, 0.4])
    g = Factor((A, B), [0.5, 0.5, 0.2, 0.8])
    out = factor_multiply(f, g)
    assert [v.name for v in out.scope] == ["A", "B"]
    assert np.allclose(out.flat, [0.30, 0.30, 0.08, 0.32])


def test_multiply_commutes_up_to_scope_reordering():
    rng = np.random.default_rng(7)
    for _ in range(25):
        x = Variable("X", ("0", "1", "2"))
        y = Variable("Y", ("0", "1"))
        z = Variable("Z", ("0", "1", "2", "3"))
        f = Factor((x, y), rng.random((3, 2)))
        g = Factor((y, z), rng.random((2, 4)))
        fg = factor_multiply(f, g)
        gf = factor_multiply(g, f).reorder(fg.scope)
        assert np.allclose(fg.values, gf.values, atol=0, rtol=1e-12)


def test_multiply_rejects_state_list_collision():
    a_conflicting = Variable("A", ("x", "y", "z"))
    with pytest.raises(StateMismatchError):
        factor_multiply(Factor((A,), [0.5, 0.5]), Factor((a_conflicting,), [1, 1, 1]))


def test_marginalize_nothing_is_identity():
    f = joint_ab()
    assert factor_marginalize(f, []) is f


def test_marginalize_sums_columns():
    out = factor_marginalize(joint_ab(), [A])
    assert out.scope == (B,)
    assert np.allclose(out.values, [0.38, 0.62])


def test_marginalize_order_does_not_matter():
    rng = np.random.default_rng(3)
    x = Variable("X", ("0", "1"))
    y = Variable("Y", ("0", "1", "2"))
    z = Variable("Z", ("0", "1"))
    f = Factor((x, y, z), rng.random((2, 3, 2)))
    both = factor_marginalize(f, [x, y])
    stepwise = factor_marginalize(factor_marginalize(f, [y]), [x])
    assert np.allclose(both.values, stepwise.values)
    # direct enumeration oracle
    assert np.allclose(both.values, f.values.sum(axis=(0, 1)))


def test_reduce_hard_zeroes_inconsistent_cells_and_keeps_scope():
    out = factor_reduce(joint_ab(), Evidence.hard(B, "b0"))
    assert out.scope == (A, B)
    assert np.allclose(out.flat, [0.30, 0.0, 0.08, 0.0])


def test_reduce_vacuous_likelihood_keeps_values():
    out = factor_reduce(joint_ab(), Evidence.likelihood(B, [1, 1]))
    assert np.allclose(out.values, joint_ab().values)


def test_scaled_likelihood_proportional_to_hard_evidence():
    soft = factor_reduce(joint_ab(), Evidence.likelihood(B, [2, 0]))
    hard = factor_reduce(joint_ab(), Evidence.hard(B, "b0"))
    n_soft, _ = factor_normalize(soft)
    n_hard, _ = factor_normalize(hard)
    assert np.allclose(n_soft.values, n_hard.values, atol=1e-12)


def test_normalize_returns_norm_constant():
    out, z = factor_normalize(Factor((A, B), [0.30, 0, 0.08, 0]))
    assert z == pytest.approx(0.38, abs=1e-15)
    assert np.allclose(out.flat, [0.30 / 0.38, 0, 0.08 / 0.38, 0])
    again, z2 = factor_normalize(out)
    assert z2 == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(again.values, out.values)


def test_normalize_all_zero_signals_impossible_evidence():
    with pytest.raises(ImpossibleEvidenceError):
        factor_normalize(Factor((A,), [0.0, 0.0]))


def test_norm_constant_matches_enumerated_probability_of_evidence():
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = Variable("X", ("0", "1", "2"))
        y = Variable("Y", ("0", "1"))
        joint_vals = rng.dirichlet(np.ones(6)).reshape(3, 2)
        joint = Factor((x, y), joint_vals)
        weights = rng.random(2)
        e = Evidence.likelihood(y, weights)
        _, z = factor_normalize(factor_reduce(joint, e))
        brute = sum(
            joint_vals[i, j] * weights[j] for i in range(3) for j in range(2)
        )
        assert z == pytest.approx(brute, abs=1e-12)


def test_cpt_rows_must_sum_to_one():
    child = Variable("C", ("no", "yes"))
    with pytest.raises(FactorError):
        cpt_from_rows(child, (A,), [[0.5, 0.4], [0.3, 0.7]])
    ok = cpt_from_rows(child, (A,), [[0.5, 0.5], [0.3, 0.7]])
    assert ok.n_rows == 2
    assert np.allclose(ok.row([1]), [0.3, 0.7])


def test_evidence_validation():
    with pytest.raises(EvidenceError):
        Evidence.likelihood(A, [0.0, 0.0])
    with pytest.raises(EvidenceError):
        Evidence.likelihood(A, [1.0])
    with pytest.raises(EvidenceError):
        Evidence.likelihood(A, [-1.0, 2.0])
    hard = Evidence.hard(A, "a1")
    assert hard.kind == "hard" and hard.weights == (0.0, 1.0)


def test_factor_rejects_bad_values():
    with pytest.raises(FactorError):
        Factor((A,), [0.5, -0.1])
    with pytest.raises(FactorError):
        Factor((A,), [0.5, float("nan")])
    with pytest.raises(FactorError):
        Factor((A,), [0.5, 0.5, 0.5])
