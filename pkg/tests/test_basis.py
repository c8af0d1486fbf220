"""Basis enumeration, kernel profile, selectors, and the adjusted arrays."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcrkpm import (
    KernelSpec,
    build_basis_table,
    enumerate_basis,
    eval_kernel_1d,
    gradient_selector,
    value_selector,
)
from fcrkpm.basis import monomial
from fcrkpm.grid import build_grid, plan_extension


class TestEnumerateBasis:
    @pytest.mark.parametrize(
        "n,d,s", [(1, 3, 4), (2, 3, 10), (1, 2, 3), (0, 1, 1), (3, 2, 10)]
    )
    def test_sizes(self, n, d, s):
        basis = enumerate_basis(n, d)
        assert basis.size == s
        assert basis.size == math.comb(n + d, d)
        assert basis.min_neighbors == s

    def test_2d_linear_tuples(self):
        basis = enumerate_basis(1, 2)
        assert basis.exponents == ((0, 0), (1, 0), (0, 1))

    def test_2d_quadratic_order(self):
        # 1, x, y, x^2, xy, y^2
        basis = enumerate_basis(2, 2)
        assert basis.exponents == (
            (0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2),
        )

    def test_3d_quadratic_order(self):
        # 1, x, y, z, x^2, xy, xz, y^2, yz, z^2
        basis = enumerate_basis(2, 3)
        assert basis.exponents == (
            (0, 0, 0),
            (1, 0, 0), (0, 1, 0), (0, 0, 1),
            (2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2),
        )

    @given(n=st.integers(0, 4), d=st.integers(1, 3))
    @settings(max_examples=20, deadline=None)
    def test_graded_ordering(self, n, d):
        basis = enumerate_basis(n, d)
        degrees = [sum(a) for a in basis.exponents]
        assert degrees == sorted(degrees)
        assert len(set(basis.exponents)) == basis.size


class TestKernel:
    def test_center(self):
        assert eval_kernel_1d(0.0, 1.0) == pytest.approx(2.0 / 3.0, rel=1e-15)

    def test_branch_agreement_at_half(self):
        # both polynomial branches evaluated independently at z = 1/2:
        # 2/3 - 4/4 + 4/8 = 1/6 and 4/3 - 2 + 1 - 4/24 = 1/6
        z = 0.5
        inner = 2.0 / 3.0 - 4.0 * z**2 + 4.0 * z**3
        outer = 4.0 / 3.0 - 4.0 * z + 4.0 * z**2 - (4.0 / 3.0) * z**3
        assert inner == pytest.approx(1.0 / 6.0, rel=1e-15)
        assert outer == pytest.approx(1.0 / 6.0, rel=1e-15)
        assert eval_kernel_1d(0.5, 1.0) == pytest.approx(1.0 / 6.0, rel=1e-15)

    def test_vanishing_outside_support(self):
        assert eval_kernel_1d(1.0, 1.0) == 0.0
        assert eval_kernel_1d(1.5, 1.0) == 0.0
        assert np.all(eval_kernel_1d(np.linspace(1, 5, 20), 1.0) == 0.0)

    def test_monotone_nonincreasing(self):
        z = np.linspace(0.0, 1.0, 400)
        vals = eval_kernel_1d(z, 1.0)
        assert np.all(np.diff(vals) <= 1e-15)

    def test_c2_at_breakpoints(self):
        # centered finite differences across z = 1/2 and z = 1
        h = 1e-5
        for z0 in (0.5, 1.0):
            f = lambda z: eval_kernel_1d(z, 1.0)
            d_left = (f(z0) - f(z0 - h)) / h
            d_right = (f(z0 + h) - f(z0)) / h
            assert d_left == pytest.approx(d_right, abs=1e-4)
            dd_left = (f(z0) - 2 * f(z0 - h) + f(z0 - 2 * h)) / h**2
            dd_right = (f(z0 + 2 * h) - 2 * f(z0 + h) + f(z0)) / h**2
            assert dd_left == pytest.approx(dd_right, abs=1e-3)

    def test_value_at_two_thirds(self):
        # used by the frozen moment-matrix values: phi(z=2/3) = 4/81
        assert eval_kernel_1d(2.0 / 3.0, 1.0) == pytest.approx(4.0 / 81.0, rel=1e-14)


class TestSelectors:
    def test_gradient_selector_2d(self):
        basis = enumerate_basis(1, 2)
        assert np.array_equal(gradient_selector(0, basis), [0, -1, 0])
        assert np.array_equal(gradient_selector(1, basis), [0, 0, -1])

    def test_gradient_selector_3d_z(self):
        basis = enumerate_basis(1, 3)
        assert np.array_equal(gradient_selector(2, basis), [0, 0, 0, -1])

    def test_value_selector(self):
        basis = enumerate_basis(2, 2)
        e1 = value_selector(basis)
        assert e1[0] == 1.0 and np.all(e1[1:] == 0.0)

    def test_degree_zero_rejected(self):
        with pytest.raises(ValueError):
            gradient_selector(0, enumerate_basis(0, 2))


def _table_1d(n_nodes=16, a_tilde=1.5, degree=1):
    plan = plan_extension(2.0, a_tilde, counts=n_nodes)
    grid = build_grid(plan, -1.0)
    basis = enumerate_basis(degree, 1)
    kernel = KernelSpec(support=plan.kernel_support)
    return grid, build_basis_table(grid, basis, kernel)


class TestBasisTable:
    def test_center_value(self):
        _, table = _table_1d()
        assert table.Ha[0][0] == pytest.approx(2.0 / 3.0, rel=1e-15)

    def test_wrap_value_last_node(self):
        grid, table = _table_1d()
        dx = grid.spacing[0]
        a = 1.5 * dx
        expected = -dx * eval_kernel_1d(dx, a)
        assert table.Ha[1][-1] == pytest.approx(expected, rel=1e-14)

    def test_reflection_of_linear_entry(self):
        # Hbar at node 1 equals Ha at node N-1 for the linear monomial
        _, table = _table_1d()
        assert table.Hbar_a[1][1] == table.Ha[1][-1]

    def test_reflection_identity_everywhere(self):
        grid, table = _table_1d(n_nodes=17)  # odd count, no exact L/2 tie
        for p in range(table.size):
            ha = table.Ha[p]
            hbar = table.Hbar_a[p]
            rolled = np.concatenate(([ha[0]], ha[1:][::-1]))
            assert np.array_equal(hbar, rolled)

    def test_compact_support(self):
        grid, table = _table_1d(n_nodes=32, a_tilde=1.5)
        xi = grid.wrapped_offsets()[0]
        outside = np.abs(xi) >= 1.5 * grid.spacing[0]
        for p in range(table.size):
            assert np.all(table.Ha[p][outside] == 0.0)
            assert np.all(table.Hbar_a[p][outside] == 0.0)

    def test_odd_symmetry_sum(self):
        grid, table = _table_1d(n_nodes=32, degree=2)
        for p, alpha in enumerate(table.basis.exponents):
            if sum(alpha) % 2 == 1:
                bound = 1e-12 * grid.counts[0] * np.max(np.abs(table.Ha[p]))
                assert abs(np.sum(table.Ha[p])) <= bound

    def test_support_exceeding_half_period_rejected(self):
        plan = plan_extension(2.0, 1.5, counts=16)
        grid = build_grid(plan, -1.0)
        basis = enumerate_basis(1, 1)
        too_wide = KernelSpec(support=(grid.length[0] / 2,))
        with pytest.raises(ValueError, match="half the box"):
            build_basis_table(grid, basis, too_wide)

    def test_corner_copy_equivalence_2d(self):
        """Minimal-image wrapping equals the literal 2^d corner-block
        construction: evaluate the centered function shifted to each box
        corner, masked to that corner's quadrant."""
        plan = plan_extension((2.0, 2.0), 1.5, counts=(8, 8))
        grid = build_grid(plan, (-1.0, -1.0))
        basis = enumerate_basis(1, 2)
        kernel = KernelSpec(support=plan.kernel_support)
        table = build_basis_table(grid, basis, kernel)

        Nx, Ny = grid.counts
        dx, dy = grid.spacing
        X = np.arange(Nx)[:, None] * dx * np.ones((1, Ny))
        Y = np.ones((Nx, 1)) * np.arange(Ny)[None, :] * dy
        Lx, Ly = grid.length
        corners = [(0.0, 0.0), (Lx, 0.0), (0.0, Ly), (Lx, Ly)]

        def quadrant_mask(cx, cy):
            mx = (X < Lx / 2) if cx == 0.0 else (X >= Lx / 2)
            my = (Y < Ly / 2) if cy == 0.0 else (Y >= Ly / 2)
            return mx & my

        for p, alpha in enumerate(basis.exponents):
            rebuilt = np.zeros(grid.shape)
            for cx, cy in corners:
                shifted = (X - cx, Y - cy)
                phi = eval_kernel_1d(shifted[0], kernel.support[0]) * eval_kernel_1d(
                    shifted[1], kernel.support[1]
                )
                rebuilt += quadrant_mask(cx, cy) * monomial(shifted, alpha) * phi
            assert np.max(np.abs(rebuilt - table.Ha[p])) < 1e-14 * max(
                np.max(np.abs(table.Ha[p])), 1.0
            )

    def test_release_real(self):
        _, table = _table_1d()
        assert table.persistent_nbytes() > 0
        before = table.persistent_nbytes()
        table.release_real()
        assert table.H == [] and table.Ha == []
        assert table.persistent_nbytes() < before
        assert len(table.hat_Ha) == table.size
