import numpy as np
import pytest

from mcpool import GeneratorSpec, Tape, constant, finite_diff_check, generate, parameter
from mcpool.errors import (
    DetachedLossError,
    NonDeterministicFunctionError,
    NonFiniteValueError,
    ShapeMismatchError,
    UnknownKindError,
)
from mcpool.gradcheck import primitive_gradchecks


class TestForward:
    def test_hadamard(self):
        t = Tape()
        out = t.hadamard(constant([1.0, 2.0]), constant([3.0, 4.0]))
        np.testing.assert_allclose(out.values.ravel(), [3.0, 8.0])

    def test_quadratic_form_counts_both_directions(self):
        k2 = generate(GeneratorSpec.ring(2))
        t = Tape()
        out = t.quadratic_form(constant([1.0, -1.0]), k2.adjacency)
        assert out.item() == -2.0

    def test_gather_rows_reorders(self):
        x = constant(np.arange(6.0).reshape(3, 2))
        out = Tape().gather_rows(x, [2, 0])
        np.testing.assert_allclose(out.values, [[4, 5], [0, 1]])

    def test_unknown_kind(self):
        with pytest.raises(UnknownKindError):
            Tape().record("convolve", (constant([1.0]),))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            Tape().matmul(constant(np.ones((2, 3))), constant(np.ones((2, 3))))

    def test_non_finite_aborts(self):
        with pytest.raises(NonFiniteValueError):
            Tape().scale(constant([1e308]), 1e10)

    def test_softmax_cross_entropy_matches_manual(self):
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((5, 3))
        targets = rng.integers(0, 3, 5)
        out = Tape().softmax_cross_entropy(constant(logits), targets)
        p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        manual = -np.log(p[np.arange(5), targets]).mean()
        assert out.item() == pytest.approx(manual, rel=1e-12)

    def test_global_sum_pool(self):
        x = constant(np.arange(8.0).reshape(4, 2))
        out = Tape().global_sum_pool(x, [0, 1, 0, 1], 2)
        np.testing.assert_allclose(out.values, [[4, 6], [8, 10]])

    def test_dropout_eval_is_identity(self):
        x = constant(np.ones((3, 3)))
        out = Tape().dropout(x, 0.5, False, 0)
        np.testing.assert_array_equal(out.values, x.values)

    def test_dropout_seeded_mask_is_reproducible(self):
        x = constant(np.ones((20, 20)))
        a = Tape().dropout(x, 0.5, True, 7)
        b = Tape().dropout(x, 0.5, True, 7)
        np.testing.assert_array_equal(a.values, b.values)
        c = Tape().dropout(x, 0.5, True, 8)
        assert not np.array_equal(a.values, c.values)


class TestBackward:
    def test_weighted_sum_gradient(self):
        w = parameter([2.0, 3.0])
        x = constant([5.0, 7.0])
        t = Tape()
        loss = t.reduce_sum(t.hadamard(w, x))
        grads = t.backward(loss)
        np.testing.assert_allclose(grads[w].ravel(), [5.0, 7.0])

    def test_quadratic_form_gradient_on_k2(self):
        k2 = generate(GeneratorSpec.ring(2))
        s = parameter([1.0, -1.0])
        t = Tape()
        loss = t.quadratic_form(s, k2.adjacency)
        t.backward(loss)
        np.testing.assert_allclose(s.grad.ravel(), [-2.0, 2.0])

    def test_double_backward_rejected(self):
        s = parameter([1.0])
        t = Tape()
        loss = t.reduce_sum(s)
        t.backward(loss)
        with pytest.raises(DetachedLossError):
            t.backward(loss)

    def test_foreign_loss_rejected(self):
        t1, t2 = Tape(), Tape()
        loss = t1.reduce_sum(parameter([1.0]))
        with pytest.raises(DetachedLossError):
            t2.backward(loss)

    def test_non_scalar_loss_rejected(self):
        t = Tape()
        out = t.tanh(parameter([1.0, 2.0]))
        with pytest.raises(DetachedLossError):
            t.backward(out)

    def test_gather_rows_routes_only_to_gathered(self):
        x = parameter(np.ones((4, 2)))
        t = Tape()
        loss = t.reduce_sum(t.gather_rows(x, [1, 3, 1]))
        t.backward(loss)
        np.testing.assert_allclose(x.grad, [[0, 0], [2, 2], [0, 0], [1, 1]])

    def test_gradients_accumulate_across_uses(self):
        w = parameter([[2.0]])
        t = Tape()
        loss = t.reduce_sum(t.hadamard(w, w))  # d(w^2)/dw = 2w
        t.backward(loss)
        assert w.grad[0, 0] == pytest.approx(4.0)


class TestFiniteDiff:
    def test_square_function_exact(self):
        w = parameter([[3.0]])

        def f(params):
            t = Tape()
            return t.reduce_sum(t.hadamard(params[0], params[0]))

        assert finite_diff_check(f, [w], eps=1e-5) <= 1e-8

    def test_nondeterministic_function_detected(self):
        w = parameter([[1.0]])
        state = {"n": 0}

        def f(params):
            state["n"] += 1
            t = Tape()
            return t.scale(params[0], float(state["n"]))

        with pytest.raises(NonDeterministicFunctionError):
            finite_diff_check(f, [w])

    def test_every_primitive_under_1e5(self):
        for seed in range(5):
            report = primitive_gradchecks(seed=seed, eps=1e-5)
            for kind, err in report.items():
                assert err <= 1e-5, f"{kind} seed {seed}: {err:.2e}"


class TestDenseEquivalence:
    def test_quadratic_form_matches_dense(self):
        rng = np.random.default_rng(42)
        for seed in range(5):
            g = generate(GeneratorSpec.erdos_renyi(16, 0.4), seed)
            s = rng.uniform(-1, 1, (16, 1))
            t = Tape()
            out = t.quadratic_form(constant(s), g.adjacency)
            dense = (s.T @ g.adjacency.toarray() @ s).item()
            assert out.item() == pytest.approx(dense, rel=1e-12, abs=1e-12)

    def test_spmm_matches_dense(self):
        rng = np.random.default_rng(1)
        g = generate(GeneratorSpec.erdos_renyi(10, 0.5), 3)
        x = rng.standard_normal((10, 4))
        out = Tape().spmm(g.adjacency, constant(x))
        np.testing.assert_allclose(out.values, g.adjacency.toarray() @ x)
