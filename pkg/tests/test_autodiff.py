import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradmix import autodiff as ad
from gradmix.autodiff import (
    Dual,
    InvalidInputError,
    NumericDomainError,
    Tape,
    TapeMismatchError,
    apply,
    backward,
    finite_diff_grad,
    forward_grad,
    logistic_map_grad,
    nested_sigmoid_grad,
    tape_var,
    value_and_grad,
)
from gradmix.cli import logistic_closed_form
from gradmix.gradcheck import check_expressions, rel_err


def f_example(xs):
    return xs[0] * xs[0] * ad.sin(xs[1])


def hand_gradient(x1, x2):
    # t1 = x1, t2 = x2, t3 = t1^2, t4 = sin t2, t5 = t3 t4
    # grad t5 = t3 grad t4 + t4 grad t3
    t3, t4 = x1 * x1, math.sin(x2)
    grad_t3 = (2 * x1, 0.0)
    grad_t4 = (0.0, math.cos(x2))
    return t3 * t4, tuple(t3 * a + t4 * b for a, b in zip(grad_t4, grad_t3))


class TestTapeBasics:
    def test_first_var_is_node_zero(self):
        t = Tape()
        assert tape_var(t, 2.0).index == 0

    def test_vars_are_ordered(self):
        t = Tape()
        assert [tape_var(t, 1.0).index, tape_var(t, 2.0).index] == [0, 1]

    def test_nan_input_rejected(self):
        with pytest.raises(InvalidInputError):
            tape_var(Tape(), float("nan"))

    def test_mul_partials_product_rule(self):
        t = Tape()
        x = tape_var(t, 3.0)
        y = apply(t, "mul", x, x)
        node = t.nodes[y.index]
        assert node.value == 9.0
        assert tuple(node.partials) == (3.0, 3.0)

    def test_sin_partial(self):
        t = Tape()
        y = apply(t, "sin", tape_var(t, 0.0))
        node = t.nodes[y.index]
        assert node.value == 0.0
        assert node.partials[0] == 1.0

    @pytest.mark.parametrize("op,a,b", [("log", -1.0, None), ("div", 1.0, 0.0),
                                        ("sqrt", -2.0, None), ("lgamma", 0.0, None)])
    def test_domain_errors_carry_node_index(self, op, a, b):
        t = Tape()
        x = tape_var(t, a)
        y = tape_var(t, b) if b is not None else None
        with pytest.raises(NumericDomainError) as info:
            apply(t, op, x, y)
        assert info.value.node_index == len(t)

    def test_unknown_opcode(self):
        t = Tape()
        with pytest.raises(InvalidInputError):
            apply(t, "tan", tape_var(t, 1.0))

    def test_topological_order(self):
        t = Tape()
        xs = [tape_var(t, 0.3), tape_var(t, 1.1)]
        f_example(xs)
        for i, node in enumerate(t.nodes):
            assert all(j < i for j in node.parents)
            assert np.all(np.isfinite(node.value))


class TestBackward:
    @pytest.mark.parametrize("point", [(2.0, math.pi / 2), (3.0, 0.0)])
    def test_matches_hand_recurrence(self, point):
        value, grad = value_and_grad(f_example, list(point))
        exp_value, exp_grad = hand_gradient(*point)
        assert value == pytest.approx(exp_value, abs=1e-15)
        np.testing.assert_allclose(grad, exp_grad, atol=1e-14)

    def test_frozen_values(self):
        _, g = value_and_grad(f_example, [2.0, math.pi / 2])
        np.testing.assert_allclose(g, [4.0, 0.0], atol=1e-14)
        v, g = value_and_grad(f_example, [3.0, 0.0])
        assert v == 0.0
        np.testing.assert_allclose(g, [0.0, 9.0], atol=1e-14)

    def test_identity(self):
        t = Tape()
        x = tape_var(t, 1.7)
        assert backward(t, x, [x]).grads == [1.0]

    def test_unused_input_gets_zero(self):
        t = Tape()
        x, y = tape_var(t, 1.0), tape_var(t, 2.0)
        assert backward(t, ad.exp(x), [x, y]).grads[1] == 0.0

    def test_foreign_ref_rejected(self):
        t1, t2 = Tape(), Tape()
        x = tape_var(t1, 1.0)
        with pytest.raises(TapeMismatchError):
            backward(t2, x, [x])
        with pytest.raises(TapeMismatchError):
            apply(t2, "add", x, tape_var(t2, 1.0))

    def test_backward_is_repeatable(self):
        t = Tape()
        xs = [tape_var(t, 0.7), tape_var(t, -1.2)]
        out = ad.log(1.0 + f_example(xs) ** 2)
        n_nodes = len(t)
        first = backward(t, out, xs).grads
        second = backward(t, out, xs).grads
        assert first == second
        assert len(t) == n_nodes

    def test_array_ops_match_finite_differences(self):
        rng = np.random.default_rng(3)
        A0 = rng.normal(size=(3, 3)) + 3 * np.eye(3)
        B0 = rng.normal(size=(3, 2))

        def f(theta):
            A = theta[:9].reshape((3, 3))
            B = theta[9:].reshape((3, 2))
            X = A.tape.solve(A, B)
            S = A.tape.matmul(A, A.tape.transpose(A))
            return (X * X).sum() + A.tape.logabsdet(S) + A.tape.logsumexp(B, axis=0).sum()

        theta = np.concatenate([A0.ravel(), B0.ravel()])
        _, g = value_and_grad(f, theta)

        def fv(th):
            t = Tape()
            return f(t.var(th)).value

        assert rel_err(g, finite_diff_grad(fv, theta)) < 1e-7


class TestForwardMode:
    def test_square(self):
        assert forward_grad(lambda x: x[0] * x[0], [3.0], [1.0]) == 6.0

    def test_matches_backward_on_example(self):
        assert forward_grad(f_example, [2.0, math.pi / 2], [1.0, 0.0]) == pytest.approx(4.0)

    def test_zero_direction(self):
        assert forward_grad(f_example, [2.0, 1.0], [0.0, 0.0]) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            forward_grad(f_example, [1.0, 2.0], [1.0])

    @pytest.mark.parametrize("op", ["add", "sub", "mul", "div", "pow", "logsumexp_pair",
                                    "sin", "cos", "exp", "log", "log1p", "sqrt", "lgamma", "neg"])
    @settings(max_examples=25, deadline=None)
    @given(a=st.floats(0.2, 3.0), b=st.floats(0.2, 3.0))
    def test_reverse_equals_forward_per_op(self, op, a, b):
        binary = op in ad.BINARY_OPS

        def f(xs):
            if isinstance(xs[0], Dual):
                u, v = xs
                if binary:
                    return {
                        "add": lambda: u + v, "sub": lambda: u - v, "mul": lambda: u * v,
                        "div": lambda: u / v, "pow": lambda: u ** v,
                        "logsumexp_pair": lambda: ad.logaddexp(u, v),
                    }[op]()
                return -u if op == "neg" else getattr(ad, op)(u)
            return apply(xs[0].tape, op, xs[0], xs[1] if binary else None)

        _, g = value_and_grad(f, [a, b])
        for i in range(2):
            e = [1.0 if j == i else 0.0 for j in range(2)]
            fwd = forward_grad(f, [a, b], e)
            assert g[i] == pytest.approx(fwd, rel=1e-12, abs=1e-300)


class TestFiniteDifferences:
    def test_square(self):
        assert finite_diff_grad(lambda x: x[0] ** 2, [3.0], 1e-5)[0] == pytest.approx(6.0, abs=1e-8)

    def test_sin(self):
        assert finite_diff_grad(lambda x: math.sin(x[0]), [0.0], 1e-5)[0] == pytest.approx(1.0, abs=1e-9)

    def test_bad_step(self):
        with pytest.raises(InvalidInputError):
            finite_diff_grad(lambda x: x[0], [1.0], 0.0)

    def test_random_composites(self):
        errors = check_expressions(count=50, max_depth=8, h=1e-5, seed=0)
        assert max(errors) < 1e-6

    def test_random_polynomials(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            coeffs = rng.normal(size=(3, 4))

            def poly(xs):
                total = 0.0
                for i in range(3):
                    term = coeffs[i, 0]
                    for j in range(1, 4):
                        term = term + coeffs[i, j] * xs[i] ** float(j)
                    total = total + term * xs[(i + 1) % 3]
                return total

            x = rng.uniform(-2, 2, size=3)
            _, g = value_and_grad(poly, list(x))
            assert rel_err(g, finite_diff_grad(lambda v: poly(list(v)), x)) < 1e-6


class TestLogisticMap:
    def test_n1(self):
        assert logistic_map_grad(0.37, 1)[1] == 1.0

    def test_n2_at_quarter(self):
        assert logistic_map_grad(0.25, 2)[1] == pytest.approx(2.0, abs=1e-15)

    def test_n3_at_half(self):
        assert logistic_map_grad(0.5, 3)[1] == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    @pytest.mark.parametrize("x", [0.0, 0.25, 0.5, 1.0])
    def test_closed_forms(self, n, x):
        assert abs(logistic_map_grad(x, n)[1] - logistic_closed_form(n, x)) < 1e-12

    def test_n0_rejected(self):
        with pytest.raises(InvalidInputError):
            logistic_map_grad(0.5, 0)

    def test_node_count_affine(self):
        sizes = {}
        for n in (1, 2, 3, 10, 100):
            t = Tape()
            ad.build_logistic_map(t, 0.3, n)
            sizes[n] = len(t)
        slope = sizes[2] - sizes[1]
        assert all(sizes[n] == sizes[1] + slope * (n - 1) for n in sizes)


class TestNestedSigmoid:
    def test_n0(self):
        v, d = nested_sigmoid_grad(0.0, 0)
        assert v == 0.5
        assert d == -0.25

    def test_n1_value(self):
        v, _ = nested_sigmoid_grad(0.0, 1)
        assert v == pytest.approx(1.0 / (1.0 + math.exp(0.5)), rel=1e-15)
        assert v == pytest.approx(0.37754, abs=1e-5)

    @pytest.mark.parametrize("n", [0, 1, 2, 5, 20])
    def test_derivative_vs_finite_differences(self, n):
        x = 0.3
        _, d = nested_sigmoid_grad(x, n)
        fd = finite_diff_grad(lambda v: nested_sigmoid_grad(v[0], n)[0], [x])[0]
        assert d == pytest.approx(fd, rel=1e-6)

    def test_derivative_sign_alternates(self):
        # each level multiplies by -sigma'(.) < 0
        signs = [np.sign(nested_sigmoid_grad(0.3, n)[1]) for n in range(6)]
        assert signs == [(-1.0) ** (n + 1) for n in range(6)]
