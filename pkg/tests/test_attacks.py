import numpy as np
import pytest

from clipvrg.attacks import NO_ATTACK, AttackSpec, apply_attack, apply_attack_rows, sample_attacked_set
from clipvrg.errors import AttackOutputError
from clipvrg.problems import LinearMeasurementProblem
from clipvrg.streams import setup_stream


def test_pass_through_for_unattacked_agent():
    g = np.array([1.0, -2.0])
    for spec in (
        NO_ATTACK,
        AttackSpec(frozenset({3}), mode="constant", value=5.0),
        AttackSpec(frozenset({3}), mode="sign_flip"),
        AttackSpec(frozenset({3}), mode="zero"),
    ):
        out = apply_attack(spec, 0, g, t=7)
        assert out is g


def test_constant_full_support():
    spec = AttackSpec(frozenset({0}), mode="constant", value=0.714)
    out = apply_attack(spec, 0, np.zeros(784), t=0)
    assert out.shape == (784,)
    assert (out == 0.714).all()


def test_constant_measured_support():
    spec = AttackSpec(frozenset({0}), mode="constant", value=-200.0, support="measured")
    mask = np.array([True, False, True, False])
    out = apply_attack(spec, 0, None, t=0, support_mask=mask)
    assert np.array_equal(out, np.array([-200.0, 0.0, -200.0, 0.0]))


def test_constant_measured_needs_mask():
    spec = AttackSpec(frozenset({0}), mode="constant", value=-200.0, support="measured")
    with pytest.raises(ValueError, match="support mask"):
        apply_attack(spec, 0, np.zeros(4), t=0)


def test_sign_flip():
    spec = AttackSpec(frozenset({2}), mode="sign_flip")
    g = np.array([3.0, -1.0, 0.5])
    assert np.array_equal(apply_attack(spec, 2, g, t=1), -g)


def test_zero_mode():
    spec = AttackSpec(frozenset({1}), mode="zero")
    out = apply_attack(spec, 1, np.ones(3), t=0)
    assert (out == 0).all()


def test_custom_receives_agent_round_query():
    seen = []

    def adversary(agent, t, x):
        seen.append((agent, t, x.copy()))
        return 2.0 * (x - 1.0)

    spec = AttackSpec(frozenset({4}), mode="custom", custom=adversary)
    x = np.array([0.25])
    out = apply_attack(spec, 4, None, t=9, x=x)
    assert np.allclose(out, [-1.5])
    assert len(seen) == 1
    agent, t, x_seen = seen[0]
    assert (agent, t) == (4, 9) and np.array_equal(x_seen, [0.25])


def test_custom_nonfinite_rejected():
    spec = AttackSpec(frozenset({0}), mode="custom", custom=lambda i, t, x: np.array([np.inf]))
    with pytest.raises(AttackOutputError, match="non-finite"):
        apply_attack(spec, 0, None, t=0, x=np.zeros(1))


def test_custom_bad_shape_rejected():
    spec = AttackSpec(frozenset({0}), mode="custom", custom=lambda i, t, x: np.zeros(3))
    with pytest.raises(AttackOutputError, match="shape"):
        apply_attack(spec, 0, None, t=0, x=np.zeros(2))


def test_spec_validation():
    with pytest.raises(ValueError, match="unknown attack mode"):
        AttackSpec(frozenset(), mode="median")
    with pytest.raises(ValueError, match="custom callback"):
        AttackSpec(frozenset({0}), mode="custom")
    with pytest.raises(ValueError, match="custom callback"):
        AttackSpec(frozenset({0}), mode="zero", custom=lambda i, t, x: x)
    with pytest.raises(ValueError, match="nonnegative"):
        AttackSpec(frozenset({-1}))


def test_rho_and_unattacked():
    spec = AttackSpec(frozenset({0, 2}))
    assert spec.rho(4) == 0.5
    assert spec.unattacked(4) == (1, 3)


def test_row_override_only_touches_attacked_rows():
    problem = LinearMeasurementProblem(
        np.zeros(3),
        np.array([[True, True, False], [False, True, True], [True, False, True]]),
        0.0,
    )
    spec = AttackSpec(frozenset({1}), mode="constant", value=-200.0, support="measured")
    samples = np.ones((3, 3))
    X = np.zeros((3, 3))
    out = apply_attack_rows(spec, samples, X, t=0, problem=problem)
    assert np.array_equal(out[0], np.ones(3))
    assert np.array_equal(out[2], np.ones(3))
    assert np.array_equal(out[1], np.array([0.0, -200.0, -200.0]))


def test_sample_attacked_set_deterministic():
    a = sample_attacked_set(50, 10, setup_stream(5, 2))
    b = sample_attacked_set(50, 10, setup_stream(5, 2))
    assert a == b and len(a) == 10
    assert all(0 <= i < 50 for i in a)
    assert sample_attacked_set(50, 0, setup_stream(5, 2)) == frozenset()
    with pytest.raises(ValueError):
        sample_attacked_set(5, 6, setup_stream(5, 2))
