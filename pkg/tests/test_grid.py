"""Grid fixed-point operators: pushforwards, deviation field, certificate."""

import numpy as np
import pytest
from scipy.integrate import dblquad, quad

import rdelab as rl
from rdelab import grid as grid_mod

from conftest import binomial_sigma


def nu1_survival(knots):
    return rl.NuA(1.0).survival_array(knots)


class TestTPush:
    def test_nu1_is_fixed_point_with_hand_antiderivative(self):
        # hand antiderivative: integral_0^x (G^2(u) - G^2(x)) du with
        # G(u) = min(1, 1/(2u)) evaluates to exactly 1 - 1/(2x)
        knots = rl.uniform_knots(3, 1024)
        pushed = rl.t_push(nu1_survival(knots), knots, 3)
        target = 1.0 - 1.0 / (2.0 * knots)
        assert np.abs(pushed - target).max() < 5e-7

    def test_hand_antiderivative_against_quadrature(self):
        # independent numeric oracle for the same integral at a few points
        for x in (0.6, 0.8, 1.0):
            def integrand(u):
                g = min(1.0, 1.0 / (2.0 * u)) ** 2
                gx = (1.0 / (2.0 * x)) ** 2
                return g - gx

            expected, _ = quad(integrand, 0.0, x, points=[0.5])
            assert expected == pytest.approx(1.0 - 1.0 / (2.0 * x), abs=1e-10)

    def test_all_mass_at_infinity_pushes_to_zero(self):
        knots = rl.uniform_knots(3, 257)
        pushed = rl.t_push(np.ones_like(knots), knots, 3)
        assert np.abs(pushed).max() == 0.0

    def test_point_mass_at_half(self):
        knots = rl.uniform_knots(3, 257)
        pushed = rl.t_push(np.zeros_like(knots), knots, 3)
        assert np.abs(pushed - 0.5).max() == 0.0

    def test_non_monotone_input_rejected(self):
        knots = rl.uniform_knots(3, 65)
        bad = np.linspace(0.2, 0.8, 65)
        with pytest.raises(rl.ValidationError):
            rl.t_push(bad, knots, 3)

    @pytest.mark.parametrize("a", [0.6, 0.8, 1.0])
    def test_nu_a_family_fixed(self, a):
        knots = rl.uniform_knots(3, 1024)
        dist = rl.NuA(a)
        pushed = rl.t_push(dist.survival_array(knots), knots, 3)
        assert np.abs(pushed - dist.cdf_array(knots)).max() < 5e-4

    @pytest.mark.parametrize("r", [4, 5])
    def test_nu_r_family_fixed(self, r):
        knots = rl.uniform_knots(r, 1024)
        dist = rl.NuR(r)
        pushed = rl.t_push(dist.survival_array(knots), knots, r)
        assert np.abs(pushed - dist.cdf_array(knots)).max() < 5e-4

    def test_second_order_refinement(self):
        dist = rl.NuR(4)
        res = {}
        for k in (512, 1024):
            knots = rl.uniform_knots(4, k)
            res[k] = float(
                np.abs(rl.t_push(dist.survival_array(knots), knots, 4) - dist.cdf_array(knots)).max()
            )
        assert 2.7 < res[512] / res[1024] < 5.5


class TestGridConstructors:
    def test_product_and_diagonal_shapes(self):
        prod = rl.product_grid(3, 64)
        diag = rl.diagonal_grid(3, 64)
        assert prod.values.shape == (64, 64)
        assert prod.role == "F" and diag.role == "F"
        # diagonal CDF at (x, y) is the marginal at min(x, y)
        cdf = rl.NuR(3).cdf_array(prod.knots)
        assert diag.values[5, 20] == cdf[5]
        assert diag.values[20, 5] == cdf[5]

    def test_grids_are_immutable(self):
        grid = rl.product_grid(3, 64)
        with pytest.raises(ValueError):
            grid.values[0, 0] = 1.0
        with pytest.raises(ValueError):
            grid.knots[0] = 0.0

    def test_role_range_validation(self):
        knots = rl.uniform_knots(3, 64)
        with pytest.raises(rl.ValidationError):
            rl.BivariateGrid(knots, np.full((64, 64), 1.5), "F", 3)
        with pytest.raises(rl.ValidationError):
            rl.BivariateGrid(knots, np.full((64, 64), -1.5), "H", 3)
        with pytest.raises(rl.ValidationError):
            rl.BivariateGrid(knots, np.zeros((64, 64)), "Q", 3)

    def test_marginal_validation_names_worst_knot(self):
        grid = rl.product_grid(3, 64)
        values = grid.values.copy()
        values[0, 10] = 0.25  # mass at the low edge
        bad = rl.BivariateGrid(grid.knots, values, "F", 3)
        with pytest.raises(rl.ValidationError, match="knot"):
            rl.tt_push(bad)


class TestTTPush:
    def test_product_is_fixed(self):
        for k in (256, 512):
            prod = rl.product_grid(3, k)
            pushed = rl.tt_push(prod)
            residual = np.abs(pushed.values - prod.values).max()
            assert residual < 1e-4
        assert np.abs(rl.tt_push(rl.product_grid(3, 512)).values - rl.product_grid(3, 512).values).max() < 1e-5

    def test_diagonal_contracts(self):
        diag = rl.diagonal_grid(3, 128)
        s0 = rl.h_from_f(diag).sup_norm()
        s1 = rl.h_from_f(rl.tt_push(diag)).sup_norm()
        assert s1 < s0

    def test_symmetry_preserved(self):
        diag = rl.diagonal_grid(3, 128)
        pushed = rl.tt_push(diag)
        assert pushed.max_asymmetry() < 1e-12

    def test_marginals_preserved_via_univariate_push(self):
        # each coordinate of the pushed coupling is the univariate
        # pushforward of the marginal, so the marginal residual is the
        # univariate fixed-point residual
        k = 256
        knots = rl.uniform_knots(3, k)
        dist = rl.NuR(3)
        uni_residual = np.abs(
            rl.t_push(dist.survival_array(knots), knots, 3) - dist.cdf_array(knots)
        ).max()
        assert uni_residual < 10.0 * rl.quadrature_floor(3, k)

    def test_r3_matches_hardcoded_squared_terms(self):
        # literal reimplementation with squared terms, same lattice
        grid = rl.diagonal_grid(3, 128)
        knots = grid.knots
        h = float(knots[1] - knots[0])
        lo = 0.5
        surv = 1.0 / (2.0 * knots)
        s_pow = surv * surv

        def cumtrap(arr, axis):
            csum = np.cumsum(arr, axis=axis)
            first = np.take(arr, [0], axis=axis)
            return (csum - 0.5 * (arr + first)) * h

        g_vals = grid.values + surv[:, None] + surv[None, :] - 1.0
        a_vals = g_vals * g_vals
        ix = cumtrap(a_vals, 1)
        iy = cumtrap(a_vals, 0)
        jj = cumtrap(ix, 0)
        sig = cumtrap(s_pow[:, None], 0)[:, 0]
        x = knots[:, None]
        y = knots[None, :]
        expected = (
            x * y * a_vals
            - x * (lo * s_pow[:, None] + ix)
            - y * (lo * s_pow[None, :] + iy)
            + lo * lo
            + lo * sig[:, None]
            + lo * sig[None, :]
            + jj
        )
        expected = np.clip(expected, 0.0, 1.0)
        pushed = rl.tt_push(grid)
        assert np.array_equal(pushed.values, expected)

    def test_one_push_of_diagonal_against_double_quadrature(self):
        # independent oracle: adaptive 2-d quadrature of the defining
        # integral at a handful of lattice points
        k = 512
        diag = rl.diagonal_grid(3, k)
        pushed = rl.tt_push(diag)

        def g_diag(u, v):
            m = max(u, v)
            if m <= 0.5:
                return 1.0
            return 1.0 / (2.0 * m)

        for i, j in [(255, 255), (k - 1, k - 1), (102, 450)]:
            x, y = float(diag.knots[i]), float(diag.knots[j])
            gx = g_diag(x, y)

            def integrand(v, u):
                return (
                    gx * gx
                    - g_diag(x, v) ** 2
                    - g_diag(u, y) ** 2
                    + g_diag(u, v) ** 2
                )

            expected, err = dblquad(integrand, 0.0, x, 0.0, y, epsabs=1e-10)
            assert pushed.values[i, j] == pytest.approx(expected, abs=5e-6)


class TestGFromF:
    def test_product_at_top_corner(self):
        prod = rl.product_grid(3, 256)
        assert rl.g_from_f(prod, 1.0, 1.0) == pytest.approx(0.25, abs=1e-12)

    def test_diagonal_collapses_to_one_survival(self):
        # exact on knots; between knots the diagonal CDF has a kink along
        # x = y, so bilinear interpolation is only first-order there
        diag = rl.diagonal_grid(3, 256)
        knots = diag.knots
        for i, j in [(51, 204), (204, 51), (128, 128)]:
            x, y = float(knots[i]), float(knots[j])
            assert rl.g_from_f(diag, x, y) == pytest.approx(
                1.0 / (2.0 * max(x, y)), abs=1e-12
            )

    def test_boundary_extension(self):
        prod = rl.product_grid(3, 256)
        assert rl.g_from_f(prod, 0.3, 0.2) == 1.0
        for y in (0.6, 0.8, 1.0):
            assert rl.g_from_f(prod, 0.3, y) == pytest.approx(1.0 / (2.0 * y), abs=1e-12)
            assert rl.g_from_f(prod, y, 0.3) == pytest.approx(1.0 / (2.0 * y), abs=1e-12)


class TestHFromF:
    def test_product_gives_zero_field(self):
        h = rl.h_from_f(rl.product_grid(3, 256))
        assert h.sup_norm() < 1e-12

    def test_diagonal_closed_form(self):
        grid = rl.diagonal_grid(3, 256)
        h = rl.h_from_f(grid)
        knots = grid.knots
        expected = 1.0 - 2.0 * np.minimum(knots[:, None], knots[None, :])
        assert np.abs(h.values - expected).max() < 1e-12
        assert h.values[0, 0] == pytest.approx(0.0, abs=1e-12)
        assert h.values[-1, -1] == pytest.approx(-1.0, abs=1e-12)

    def test_range_bound(self):
        for start in (rl.diagonal_grid(4, 128), rl.product_grid(5, 128)):
            grid = start
            for _ in range(3):
                h = rl.h_from_f(grid)
                assert h.values.min() >= -1.0 - 1e-9
                assert h.values.max() <= 1.0 + 1e-9
                grid = rl.tt_push(grid)


class TestIterateDiagonal:
    def test_product_start_is_flat(self):
        result = rl.iterate_diagonal(3, 128, max_iters=10, tol=1e-3, start="product")
        assert result.verdict == "converged-to-product"
        assert result.iterations == 0
        assert result.trace[0] < 1e-12

    def test_diagonal_start_r3(self):
        result = rl.iterate_diagonal(3, 128, max_iters=100, tol=1e-3)
        assert result.trace[0] == pytest.approx(1.0, abs=2.0 / 128)
        assert result.verdict == "converged-to-product"
        assert result.trace[-1] < 1e-3
        floor = rl.quadrature_floor(3, 128)
        diffs = np.diff(np.asarray(result.trace))
        assert np.all(diffs <= floor)

    def test_small_grid_rejected(self):
        with pytest.raises(rl.ValidationError):
            rl.iterate_diagonal(3, 32, 10, 1e-3)

    def test_bad_tol_rejected(self):
        with pytest.raises(rl.DomainError):
            rl.iterate_diagonal(3, 128, 10, 0.0)

    def test_budget_exhaustion_verdict(self):
        result = rl.iterate_diagonal(3, 128, max_iters=2, tol=1e-9)
        assert result.verdict in ("iteration-budget-exhausted", "stalled")
        assert not result.converged

    def test_stall_at_quadrature_floor(self):
        # tol far below the floor: the trace flattens out and stalls
        result = rl.iterate_diagonal(3, 64, max_iters=60, tol=1e-13)
        assert result.verdict == "stalled"

    def test_trace_csv_schema(self):
        result = rl.iterate_diagonal(3, 64, max_iters=3, tol=1e-2)
        lines = result.trace_csv_text().splitlines()
        assert lines[0] == "iter,sup_h"
        assert lines[1].startswith("0,")


class TestGridMonteCarloCrossValidation:
    @pytest.mark.parametrize("r", [3, 4])
    def test_one_push_matches_bivariate_sampler(self, r):
        # validates the exponent-(r-1) generalization against the
        # Monte Carlo sampler rather than a displayed equation
        k = 256
        pushed = rl.tt_push(rl.diagonal_grid(r, k))
        rde = rl.make_rde("frozen-perc", r=r)
        nu = rl.NuR(r)
        pairs = rl.sample_bivariate_batch(
            rde, rl.DiagonalBoundary(nu), 1, 200_000, 61
        )
        knots = pushed.knots
        for xi, yi in [(k // 3, k // 2), (k - 1, k - 1), (k // 5, k - 1)]:
            x, y = float(knots[xi]), float(knots[yi])
            expected = pushed.values[xi, yi]
            observed = float(np.mean((pairs.x <= x) & (pairs.y <= y)))
            assert abs(observed - expected) <= 4.0 * binomial_sigma(expected, 200_000) + 5e-5


class TestPartitionCertificate:
    def test_single_cell_is_exactly_five(self):
        assert rl.partition_check(1) == 5.0

    def test_monotone_in_cell_count(self):
        bounds = [rl.partition_check(k) for k in range(1, 65)]
        assert all(a >= b for a, b in zip(bounds, bounds[1:]))

    def test_corner_cell_is_the_maximum(self):
        for k in (1, 2, 3, 7, 24, 40):
            full = rl.partition_cell_bounds(k)
            assert rl.partition_check(k) == full.max()
            assert full.max() == full[0, 0]

    def test_cell_bounds_match_quadrature(self):
        full = rl.partition_cell_bounds(4)
        edges = np.linspace(0.5, 1.0, 5)
        for i in (0, 3):
            for j in (1, 2):
                double, _ = dblquad(
                    lambda v, u: 1.0 / (u * u * v * v),
                    edges[i], edges[i + 1], edges[j], edges[j + 1],
                )
                single_u, _ = quad(lambda u: 1.0 / (u * u), edges[i], edges[i + 1])
                single_v, _ = quad(lambda v: 1.0 / (v * v), edges[j], edges[j + 1])
                assert full[i, j] == pytest.approx(
                    double + 2.0 * single_u + 2.0 * single_v, abs=1e-12
                )

    def test_find_min_partition(self):
        eps = 1.0 / 3.0 - 1e-6
        k_min = rl.find_min_partition(eps)
        assert 20 <= k_min <= 30
        assert rl.partition_check(k_min) < eps
        assert rl.partition_check(k_min - 1) >= 1.0 / 3.0

    def test_domain_errors(self):
        with pytest.raises(rl.DomainError):
            rl.find_min_partition(0.0)
        with pytest.raises(rl.DomainError):
            rl.find_min_partition(0.5)
        with pytest.warns(RuntimeWarning):
            k = rl.find_min_partition(0.5, allow_noncontractive=True)
        assert rl.partition_check(k) < 0.5 <= rl.partition_check(k - 1)

    def test_r_other_than_three_rejected(self):
        with pytest.raises(rl.ValidationError):
            rl.partition_check(4, r=4)


class TestGridIo:
    def test_round_trip(self, tmp_path):
        grid = rl.tt_push(rl.diagonal_grid(3, 64))
        json_path, csv_path = rl.write_grid(grid, tmp_path / "grid_final")
        header = json_path.read_text()
        assert '"k": 64' in header and '"r": 3' in header and '"role": "F"' in header
        back = rl.read_grid(tmp_path / "grid_final")
        assert np.array_equal(back.values, grid.values)
        assert back.role == grid.role and back.r == grid.r

    def test_payload_is_row_major_ascending(self, tmp_path):
        grid = rl.diagonal_grid(3, 64)
        _, csv_path = rl.write_grid(grid, tmp_path / "g")
        first_row = csv_path.read_text().splitlines()[0].split(",")
        assert [float(v) for v in first_row] == list(grid.values[0, :])
