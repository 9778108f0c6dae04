import numpy as np
import pytest

from acmsim import rod
from acmsim.errors import ArcLengthOutOfRange

RNG = np.random.default_rng(3)


def nitinol_rod(**overrides):
    values = dict(
        length=1.0,
        diameter=2e-3,
        density=6.45e3,
        young_modulus=5e10,
        poisson=0.33,
        damping_coeff=1e2,
    )
    values.update(overrides)
    return rod.RodProperties(**values)


def random_valid_props(rng):
    return rod.RodProperties(
        length=rng.uniform(0.2, 2.0),
        diameter=rng.uniform(5e-4, 2e-2),
        density=rng.uniform(1e3, 1e4),
        young_modulus=rng.uniform(1e9, 2e11),
        poisson=rng.uniform(0.05, 0.45),
        damping_coeff=rng.uniform(1.0, 1e3),
    )


class TestProperties:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            nitinol_rod(length=-1.0)
        with pytest.raises(ValueError):
            nitinol_rod(poisson=0.6)

    def test_area_and_mass_density(self):
        props = nitinol_rod()
        # hand arithmetic: A = pi d^2/4 = pi * 1e-6, rho*A = 6450 * pi * 1e-6
        assert props.cross_section_area == pytest.approx(3.1416e-6, rel=1e-4)
        assert props.density * props.cross_section_area == pytest.approx(
            2.0264e-2, rel=1e-3
        )


class TestSectionMatrices:
    def test_inertia_diagonal(self):
        props = nitinol_rod()
        m = rod.section_inertia(props)
        assert m[0, 0] == m[1, 1]  # circular symmetry
        assert m[3, 3] == pytest.approx(2.0264e-2, rel=1e-3)
        assert np.count_nonzero(m - np.diag(np.diag(m))) == 0

    def test_inertia_vanishes_with_diameter(self):
        tiny = rod.section_inertia(nitinol_rod(diameter=1e-9))
        assert np.max(np.abs(tiny)) < 1e-14

    def test_bending_stiffness_value(self):
        h = rod.section_stiffness(nitinol_rod())
        # E*Ix = 5e10 * pi*(2e-3)^4/64
        assert h[0, 0] == pytest.approx(3.927e-2, rel=1e-4)

    def test_zero_damping_limit(self):
        d = rod.section_damping(nitinol_rod(damping_coeff=1e-300))
        assert np.max(np.abs(d)) < 1e-12

    def test_spd_for_random_props(self):
        for _ in range(20):
            props = random_valid_props(RNG)
            for mat in (rod.section_inertia(props), rod.section_stiffness(props)):
                np.testing.assert_array_equal(mat, mat.T)
                assert np.min(np.linalg.eigvalsh(mat)) > 0
            d = rod.section_damping(props)
            assert np.min(np.linalg.eigvalsh(d)) >= 0


class TestStrainField:
    def test_reference_at_zero_coordinates(self):
        basis = rod.constant_bending_basis(1.0)
        np.testing.assert_array_equal(
            rod.strain_field(basis, np.zeros(2), 0.5), [0, 0, 0, 0, 0, 1]
        )

    def test_constant_bending_values(self):
        basis = rod.constant_bending_basis(1.0)
        for s in (0.0, 0.37, 1.0):
            xi = rod.strain_field(basis, np.array([0.3, 0.4]), s)
            np.testing.assert_array_equal(xi, [0.3, 0.4, 0, 0, 0, 1])

    def test_affine_in_coordinates(self):
        basis = rod.constant_bending_basis(1.0)
        q1, q2 = RNG.normal(size=2), RNG.normal(size=2)
        lhs = rod.strain_field(basis, q1 + q2, 0.2)
        rhs = (
            rod.strain_field(basis, q1, 0.2)
            + rod.strain_field(basis, q2, 0.2)
            - basis.reference
        )
        np.testing.assert_allclose(lhs, rhs, atol=1e-15)

    def test_out_of_range(self):
        basis = rod.constant_bending_basis(1.0)
        with pytest.raises(ArcLengthOutOfRange):
            rod.strain_field(basis, np.zeros(2), 1.5)


class TestTendonRouting:
    def test_opposite_tendons_cancel(self):
        b_a = rod.tendon_routing(nitinol_rod())(0.3)
        np.testing.assert_allclose(b_a[:3, 0], -b_a[:3, 2], atol=1e-15)
        np.testing.assert_allclose(b_a[:3, 1], -b_a[:3, 3], atol=1e-15)

    def test_parallel_routing_shares_linear_part(self):
        b_a = rod.tendon_routing(nitinol_rod())(0.0)
        for i in range(4):
            np.testing.assert_array_equal(b_a[3:, i], [0, 0, -1])

    def test_equal_tension_sums_to_axial_force(self):
        b_a = rod.tendon_routing(nitinol_rod())(0.5)
        total = b_a @ np.ones(4)
        np.testing.assert_allclose(total, [0, 0, 0, 0, 0, -4], atol=1e-15)

    def test_moment_magnitude(self):
        props = nitinol_rod()
        b_a = rod.tendon_routing(props)(0.1)
        # unit tension at offset r_t produces a bending moment of magnitude r_t
        for i in range(4):
            assert np.linalg.norm(b_a[:3, i]) == pytest.approx(
                props.tendon_offset_radius
            )
