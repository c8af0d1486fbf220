"""Convolution-form operators: oracle equivalence, structure, audit counts."""

import numpy as np
import pytest

from fcrkpm import (
    CountingFFTProvider,
    boundary_force,
    discretize,
    evaluate_field,
    evaluate_gradient,
    external_force,
    internal_force,
    lumped_mass,
    mass_force,
    nonlinear_force_gradient,
    nonlinear_force_scalar,
    poisson_case,
)
from fcrkpm.grid import boundary_face_weights

from conftest import rel_err


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(99)


@pytest.fixture(scope="module")
def discs():
    return {
        1: discretize(poisson_case(1), counts=64, release=False),
        2: discretize(poisson_case(2), counts=32, release=False),
        3: discretize(poisson_case(3), counts=16, release=False),
    }


@pytest.fixture(scope="module")
def refs(discs):
    return {dim: d.reference() for dim, d in discs.items()}


class TestInternalForce:
    def test_zero(self, discs):
        d = discs[2]
        out = internal_force(np.zeros(d.grid.shape), d.precomp)
        assert np.all(out == 0.0)

    def test_constant_coefficients(self, discs, rng):
        # constant reproduction makes the gradient rows annihilate constants
        d = discs[2]
        c = 3.7
        out = internal_force(c * np.ones(d.grid.shape), d.precomp)
        probe = internal_force(d.chi * rng.standard_normal(d.grid.shape), d.precomp)
        assert np.max(np.abs(out)) < 1e-9 * abs(c) * np.max(np.abs(probe))

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_matches_oracle(self, dim, discs, refs, rng):
        d = discs[dim]
        coeff = d.chi * rng.standard_normal(d.grid.shape)
        assert rel_err(
            internal_force(coeff, d.precomp), refs[dim].f_int_direct(coeff)
        ) < 1e-10

    def test_symmetry_and_psd(self, discs, rng):
        d = discs[2]
        samples = [d.chi * rng.standard_normal(d.grid.shape) for _ in range(8)]
        scale = max(
            np.linalg.norm(internal_force(s, d.precomp)) / np.linalg.norm(s)
            for s in samples
        )
        for d1, d2 in zip(samples[::2], samples[1::2]):
            f1 = internal_force(d1, d.precomp)
            f2 = internal_force(d2, d.precomp)
            sym = abs(np.vdot(d1, f2) - np.vdot(d2, f1))
            assert sym <= 1e-10 * np.linalg.norm(d1) * np.linalg.norm(d2) * scale
        for s in samples:
            quad = np.vdot(s, internal_force(s, d.precomp))
            assert quad >= -1e-10 * scale * np.linalg.norm(s) ** 2

    def test_mask_absorption(self, discs, rng):
        d = discs[2]
        raw = rng.standard_normal(d.grid.shape)  # junk in the extension too
        assert np.array_equal(
            internal_force(raw, d.precomp),
            internal_force(d.chi * raw, d.precomp),
        )


class TestExternalForce:
    def test_zero(self, discs):
        d = discs[2]
        assert np.all(external_force(np.zeros(d.grid.shape), d.precomp) == 0.0)

    def test_unit_source_sums_to_volume(self, discs):
        # partition of unity under nodal integration
        for dim, d in discs.items():
            f = external_force(np.ones(d.grid.shape), d.precomp)
            assert np.sum(f) == pytest.approx(2.0**dim, rel=1e-10)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_matches_oracle(self, dim, discs, refs, rng):
        d = discs[dim]
        r = d.chi * rng.standard_normal(d.grid.shape)
        assert rel_err(external_force(r, d.precomp), refs[dim].f_r_direct(r)) < 1e-10


class TestEvaluateField:
    def test_zero(self, discs):
        d = discs[2]
        assert np.all(evaluate_field(np.zeros(d.grid.shape), d.precomp) == 0.0)

    def test_linear_reproduction(self, discs):
        d = discs[2]
        X, _ = d.grid.coordinates()
        u = evaluate_field(2.5 * X, d.precomp)
        active = d.chi > 0.5
        assert np.max(np.abs(u[active] - 2.5 * X[active])) < 1e-9 * np.max(
            np.abs(2.5 * X[active])
        )

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_matches_oracle(self, dim, discs, refs, rng):
        d = discs[dim]
        coeff = d.chi * rng.standard_normal(d.grid.shape)
        assert rel_err(
            evaluate_field(coeff, d.precomp), refs[dim].u_h_direct(coeff)
        ) < 1e-10


@pytest.fixture(scope="module")
def face_setup(discs):
    d = discs[2]
    face, area = boundary_face_weights(
        d.grid, d.chi, d.case.bounds, axis=0, side="hi"
    )
    return d, face, area


class TestBoundaryForce:
    def test_zero(self, face_setup):
        d, face, area = face_setup
        assert np.all(
            boundary_force(np.zeros(d.grid.shape), area, d.precomp) == 0.0
        )

    def test_unit_flux_sums_to_face_measure(self, face_setup):
        d, face, area = face_setup
        f = boundary_force(face, area, d.precomp)
        assert np.sum(f) == pytest.approx(np.sum(face * area), rel=1e-10)

    def test_matches_oracle(self, face_setup, refs, rng):
        d, face, area = face_setup
        q = face * rng.standard_normal(d.grid.shape)
        assert rel_err(
            boundary_force(q, area, d.precomp), refs[2].f_q_direct(q, area)
        ) < 1e-10


class TestNonlinearForces:
    def test_scalar_zero_and_unit(self, discs):
        d = discs[2]
        assert np.all(
            nonlinear_force_scalar(np.zeros(d.grid.shape), d.precomp) == 0.0
        )
        ones = np.ones(d.grid.shape)
        assert np.array_equal(
            nonlinear_force_scalar(ones, d.precomp),
            external_force(ones, d.precomp),
        )

    def test_scalar_cubic_matches_oracle(self, discs, refs, rng):
        d = discs[2]
        coeff = d.chi * rng.standard_normal(d.grid.shape)
        u = evaluate_field(coeff, d.precomp)
        assert rel_err(
            nonlinear_force_scalar(u**3, d.precomp),
            refs[2].f_r_direct(u**3),
        ) < 1e-10

    def test_gradient_zero(self, discs):
        d = discs[2]
        z = np.zeros(d.grid.shape)
        assert np.all(nonlinear_force_gradient([z, z], d.precomp) == 0.0)

    def test_gradient_reproduces_internal_force(self, discs, rng):
        # feeding the implicit gradient of u_h back in gives K d exactly
        d = discs[2]
        coeff = d.chi * rng.standard_normal(d.grid.shape)
        grads = evaluate_gradient(coeff, d.precomp)
        f_n = nonlinear_force_gradient(grads, d.precomp)
        f_int = internal_force(coeff, d.precomp)
        assert rel_err(f_n, f_int) < 1e-10

    def test_gradient_matches_oracle(self, discs, refs, rng):
        d = discs[2]
        fields = [d.chi * rng.standard_normal(d.grid.shape) for _ in range(2)]
        ref = refs[2]
        _, dpsi = ref.shape_value_table()
        # direct pair sum: f_J = sum_S V_S sum_ax grad-Psi_J(x_S) N_ax(x_S)
        w = sum(
            g * ref.restrict(f)[ref._pair_I] for g, f in zip(dpsi, fields)
        )
        direct = ref.extend(
            np.bincount(
                ref._nbr.ids,
                weights=w * ref.V[ref._pair_I],
                minlength=ref.n_nodes,
            )
        )
        got = nonlinear_force_gradient(fields, d.precomp)
        assert rel_err(got, direct) < 1e-10


class TestMassForce:
    def test_zero(self, discs):
        d = discs[2]
        assert np.all(mass_force(np.zeros(d.grid.shape), d.precomp) == 0.0)

    def test_symmetry(self, discs, rng):
        d = discs[2]
        for _ in range(3):
            d1 = d.chi * rng.standard_normal(d.grid.shape)
            d2 = d.chi * rng.standard_normal(d.grid.shape)
            lhs = np.vdot(d1, mass_force(d2, d.precomp))
            rhs = np.vdot(d2, mass_force(d1, d.precomp))
            assert abs(lhs - rhs) <= 1e-10 * abs(lhs)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_matches_oracle(self, dim, discs, refs, rng):
        d = discs[dim]
        dd = d.chi * rng.standard_normal(d.grid.shape)
        assert rel_err(
            mass_force(dd, d.precomp), refs[dim].mass_apply_direct(dd)
        ) < 1e-10


class TestLumpedMass:
    def test_zero_outside(self, discs):
        d = discs[2]
        Ml = lumped_mass(d.precomp)
        assert np.all(Ml[d.chi < 0.5] == 0.0)

    def test_total_equals_volume_weights(self, discs):
        for d in discs.values():
            Ml = lumped_mass(d.precomp)
            assert np.sum(Ml) == pytest.approx(np.sum(d.chi * d.V), rel=1e-12)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_matches_row_sums(self, dim, discs, refs):
        d = discs[dim]
        assert rel_err(lumped_mass(d.precomp), refs[dim].lumped_mass_direct()) < 1e-10

    def test_positive_at_active_nodes(self, discs):
        for d in discs.values():
            Ml = lumped_mass(d.precomp)
            assert np.all(Ml[d.chi > 0.5] > 0.0)


class TestTransformCounts:
    """Exact FFT/iFFT counts per operator call."""

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_counts(self, dim, discs, rng):
        d = discs[dim]
        s = d.table.size
        prov = CountingFFTProvider()
        coeff = d.chi * rng.standard_normal(d.grid.shape)

        prov.reset()
        internal_force(coeff, d.precomp, prov)
        assert prov.total == 2 * (s + 1)

        prov.reset()
        mass_force(coeff, d.precomp, prov)
        assert prov.total == 2 * (s + 1)

        prov.reset()
        external_force(coeff, d.precomp, prov)
        assert prov.total == s + 1

        prov.reset()
        evaluate_field(coeff, d.precomp, prov)
        assert prov.total == s + 1

        prov.reset()
        nonlinear_force_scalar(coeff, d.precomp, prov)
        assert prov.total == s + 1

        prov.reset()
        nonlinear_force_gradient([coeff] * dim, d.precomp, prov)
        assert prov.total == s + 1

        prov.reset()
        lumped_mass(d.precomp, prov)
        assert prov.total == s + 1

    def test_boundary_count(self, discs, rng):
        d = discs[2]
        s = d.table.size
        face, area = boundary_face_weights(
            d.grid, d.chi, d.case.bounds, axis=1, side="lo"
        )
        prov = CountingFFTProvider()
        boundary_force(face, area, d.precomp, prov)
        assert prov.total == s + 1
