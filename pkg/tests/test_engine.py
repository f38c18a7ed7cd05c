"""Tests for the truncated-orbit entropy rate engine."""

import json
import math
import time
from collections.abc import Callable

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from entrate.engine import (
    EntropyEstimate,
    assemble_A,
    bound_constant,
    build_orbit,
    convergence_table,
    entropy_rate,
    gamma_map,
    gamma_sup,
    solve_phi,
    terms_for_accuracy,
)
from entrate.errors import (
    GammaNotContracting,
    ParameterOutOfRange,
    RankDeficient,
    ZeroNormalizer,
)
from entrate.model import HmpModel, validate_parameters

from .conftest import REFERENCE_EPSILON, REFERENCE_TRANSITION, make_model, random_model

# Reference H_N values with the reference err(N) column
REFERENCE_H_VALUES = {
    10: (1.520946691296695, 0.3561),
    20: (1.520947864830033, 0.0030),
    30: (1.520947864969799, 2.6758e-5),
    40: (1.520947864969815, 2.3193e-7),
    50: (1.520947864969815, 2.0103e-9),
}

# Epsilon this close to one pushes the zero-symbol probability past the ceiling
NEAR_ONE = 1.0 - 1e-13


def output_marginal_entropy(rho: list[float], epsilon: list[float]) -> float:
    """Entropy in bits of one output symbol of a memoryless source."""
    p0 = rho[0] + sum(e * r for e, r in zip(epsilon, rho[1:], strict=True))
    probs = [p0] + [(1 - e) * r for e, r in zip(epsilon, rho[1:], strict=True)]
    return -sum(p * math.log2(p) for p in probs)


class TestGammaMap:
    """Tests for the zero-symbol belief update."""

    def test_matches_direct_computation(self, reference_model: HmpModel) -> None:
        """Test Gamma_0(e_1) against a hand matrix-vector product."""
        e1 = np.array(REFERENCE_TRANSITION[1])
        d = np.array([1.0, *REFERENCE_EPSILON])
        E0 = d[:, None] * np.array(REFERENCE_TRANSITION)

        expected = E0.T @ e1 / (e1 @ d)
        np.testing.assert_allclose(gamma_map(reference_model, e1), expected, rtol=1e-14)

    @settings(max_examples=200, deadline=None)
    @given(
        raw=arrays(
            np.float64,
            3,
            elements=st.floats(min_value=0.0, max_value=1.0, allow_subnormal=False),
        ).filter(lambda v: v.sum() > 1e-6)
    )
    def test_simplex_preservation(self, raw: np.ndarray) -> None:
        """Test that the update maps the simplex into itself."""
        model = make_model(REFERENCE_TRANSITION, REFERENCE_EPSILON)
        nu = raw / raw.sum()

        out = gamma_map(model, nu)
        assert out.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(out >= 0.0)

    def test_memoryless_source_collapses(
        self, iid_model: Callable[[list[float], list[float]], HmpModel]
    ) -> None:
        """Test that an equal-row source maps every belief to its row."""
        rho = [0.5, 0.3, 0.2]
        model = iid_model(rho, [0.1, 0.2])

        for nu in ([1.0, 0.0, 0.0], [0.2, 0.2, 0.6]):
            np.testing.assert_allclose(gamma_map(model, np.array(nu)), rho)

    def test_zero_mass(self, reference_model: HmpModel) -> None:
        """Test that a belief with no zero-symbol mass is rejected."""
        with pytest.raises(ZeroNormalizer):
            gamma_map(reference_model, np.zeros(3))


class TestBuildOrbit:
    """Tests for the truncated orbit and its weights."""

    def test_shapes(self, reference_model: HmpModel) -> None:
        """Test the array shapes of a depth-10 orbit."""
        orbit = build_orbit(reference_model, 10)

        assert orbit.points.shape == (2, 11, 3)
        assert orbit.c.shape == (2, 11)
        assert orbit.zero_mass.shape == (2, 201)
        assert orbit.fixed_point_converged

    def test_first_weights(self, reference_model: HmpModel) -> None:
        """Test c[j, 0] = 1 and c[j, 1] = <e_j, d>."""
        orbit = build_orbit(reference_model, 5)

        np.testing.assert_allclose(orbit.c[:, 0], 1.0)
        np.testing.assert_allclose(
            orbit.c[:, 1], reference_model.seeds[1:] @ reference_model.d, rtol=1e-15
        )

    def test_telescoping_identity(self, reference_model: HmpModel) -> None:
        """Test c[j, m] = <e_j, E_0^m 1> against explicit matrix powers."""
        orbit = build_orbit(reference_model, 30)
        ones = np.ones(3)

        for j in (1, 2):
            for m in range(31):
                power = np.linalg.matrix_power(reference_model.E0, m)
                expected = reference_model.seeds[j] @ power @ ones
                assert orbit.c[j - 1, m] == pytest.approx(expected, abs=1e-12)

    def test_points_follow_gamma_map(self, reference_model: HmpModel) -> None:
        """Test that consecutive orbit points are related by Gamma_0."""
        orbit = build_orbit(reference_model, 8)

        for j in range(2):
            for m in range(8):
                np.testing.assert_allclose(
                    orbit.points[j, m + 1],
                    gamma_map(reference_model, orbit.points[j, m]),
                    rtol=1e-13,
                )

    def test_fixed_point_is_invariant(self, reference_model: HmpModel) -> None:
        """Test that the fixed point is left unchanged by Gamma_0."""
        orbit = build_orbit(reference_model, 0)

        np.testing.assert_allclose(
            gamma_map(reference_model, orbit.fixed_point), orbit.fixed_point, atol=1e-13
        )

    def test_depth_zero(self, reference_model: HmpModel) -> None:
        """Test that depth zero keeps only the collapse points."""
        orbit = build_orbit(reference_model, 0)

        np.testing.assert_allclose(orbit.points[:, 0], reference_model.seeds[1:])
        np.testing.assert_allclose(orbit.c, 1.0)

    def test_negative_depth(self, reference_model: HmpModel) -> None:
        """Test that a negative depth is rejected."""
        with pytest.raises(ValueError, match=">= 0"):
            build_orbit(reference_model, -1)


class TestGammaSup:
    """Tests for the contraction factor."""

    def test_reference_model(self, reference_model: HmpModel) -> None:
        """Test the contraction factor of the reference model."""
        gamma = gamma_sup(reference_model, build_orbit(reference_model, 50))
        assert 0.40 < gamma < 0.41

    def test_memoryless_source(
        self, iid_model: Callable[[list[float], list[float]], HmpModel]
    ) -> None:
        """Test gamma = <rho, d> for an equal-row source."""
        model = iid_model([0.5, 0.3, 0.2], [0.1, 0.2])

        gamma = gamma_sup(model, build_orbit(model, 10))
        assert gamma == pytest.approx(0.5 + 0.03 + 0.04, abs=1e-15)

    def test_not_contracting(self) -> None:
        """Test that a noise level next to one is reported."""
        model = make_model([[0.6, 0.4], [0.3, 0.7]], [NEAR_ONE])

        with pytest.raises(GammaNotContracting):
            gamma_sup(model, build_orbit(model, 0))

    def test_not_contracting_in_validation_report(self) -> None:
        """Test that the validity report carries the contraction failure."""
        violations = validate_parameters([[0.6, 0.4], [0.3, 0.7]], [NEAR_ONE])
        assert [v.condition for v in violations] == ["contraction"]


class TestLinearSystem:
    """Tests for assemble_A, solve_phi and bound_constant."""

    def test_two_symbol_system(self) -> None:
        """Test A_hat = (0, sum c) and phi = 1 / sum c when q = 2."""
        model = make_model([[0.7, 0.3], [0.4, 0.6]], [0.1])
        orbit = build_orbit(model, 20)

        A_hat, b = assemble_A(model, orbit)
        total = orbit.c.sum()

        np.testing.assert_allclose(A_hat, [[0.0], [total]])
        np.testing.assert_allclose(b, [0.0, 1.0])
        assert solve_phi(A_hat, b).phi[0] == pytest.approx(1.0 / total)

    def test_identity_like_system(self) -> None:
        """Test the trivial one-unknown system."""
        solution = solve_phi(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]))

        np.testing.assert_allclose(solution.phi, [1.0])
        assert solution.residual == 0.0

    def test_rank_deficient(self) -> None:
        """Test that singular normal equations are rejected."""
        A_hat = np.array([[1.0, 1.0], [2.0, 2.0], [0.0, 0.0]])

        with pytest.raises(RankDeficient):
            solve_phi(A_hat, np.array([0.0, 0.0, 1.0]))

    def test_normalization_row_partial_sums(self, reference_model: HmpModel) -> None:
        """Test that the last row grows with the depth."""
        rows = [
            assemble_A(reference_model, build_orbit(reference_model, N))[0][-1]
            for N in (5, 10, 20)
        ]

        assert np.all(rows[0] <= rows[1])
        assert np.all(rows[1] <= rows[2])

    def test_reference_weights(self, reference_model: HmpModel) -> None:
        """Test that the weights lie in (0, 1] with a small residual."""
        A_hat, b = assemble_A(reference_model, build_orbit(reference_model, 50))
        solution = solve_phi(A_hat, b)

        assert np.all(solution.phi > 0.0)
        assert np.all(solution.phi <= 1.0)
        assert solution.residual < 1e-12
        assert A_hat[-1] @ solution.phi == pytest.approx(1.0, abs=1e-12)

    def test_bound_constant(self) -> None:
        """Test B with the induced 1-norm of the pseudo-inverse."""
        pinv = np.array([[0.5, -1.0], [0.25, 2.0]])

        # Column sums are 0.75 and 3.0
        assert bound_constant(2, 0.5, pinv) == pytest.approx(4.0 * (1.0 + 12.0))


class TestEntropyRate:
    """Tests for the entropy rate estimate."""

    @pytest.mark.parametrize("N", sorted(REFERENCE_H_VALUES))
    def test_reference_values(self, reference_model: HmpModel, N: int) -> None:
        """Test H_N against the reference values."""
        expected, _ = REFERENCE_H_VALUES[N]
        estimate = entropy_rate(reference_model, N)

        assert estimate.value == pytest.approx(expected, abs=1e-9)
        assert estimate.N == N
        assert estimate.certified

    @pytest.mark.parametrize("N", sorted(REFERENCE_H_VALUES))
    def test_bound_not_looser_than_reference(
        self, reference_model: HmpModel, N: int
    ) -> None:
        """Test that the certified bound is at most the reference err(N)."""
        _, reference_bound = REFERENCE_H_VALUES[N]
        assert entropy_rate(reference_model, N).err_bound <= reference_bound

    @pytest.mark.parametrize("N", [10, 20, 30, 40])
    def test_bound_dominates_truncation_error(
        self, reference_model: HmpModel, N: int
    ) -> None:
        """Test |H_{N+10} - H_N| <= err_bound(N)."""
        estimate = entropy_rate(reference_model, N)
        later = entropy_rate(reference_model, N + 10)

        assert abs(later.value - estimate.value) <= estimate.err_bound + 1e-14

    def test_value_range_on_random_models(self) -> None:
        """Test 0 <= H_N <= log2 q on random models."""
        rng = np.random.default_rng(2024)
        for q in (2, 3, 4):
            for _ in range(5):
                value = entropy_rate(random_model(rng, q), 30).value
                assert 0.0 <= value <= math.log2(q)

    @pytest.mark.parametrize("N", [0, 1, 5, 40])
    def test_memoryless_two_symbols(
        self, iid_model: Callable[[list[float], list[float]], HmpModel], N: int
    ) -> None:
        """Test the closed form for a two-symbol memoryless source at any depth."""
        rho, epsilon = [0.6, 0.4], [0.25]
        estimate = entropy_rate(iid_model(rho, epsilon), N)

        expected = output_marginal_entropy(rho, epsilon)
        assert estimate.value == pytest.approx(expected, abs=1e-12)

    def test_memoryless_three_symbols(
        self, iid_model: Callable[[list[float], list[float]], HmpModel]
    ) -> None:
        """Test the closed form for a three-symbol source once the tail is small."""
        rho, epsilon = [0.5, 0.3, 0.2], [0.1, 0.2]
        estimate = entropy_rate(iid_model(rho, epsilon), 60)

        expected = output_marginal_entropy(rho, epsilon)
        assert estimate.value == pytest.approx(expected, abs=1e-12)

    def test_belief_summand(
        self, iid_model: Callable[[list[float], list[float]], HmpModel]
    ) -> None:
        """Test that the belief summand measures the belief vector itself."""
        rho = [0.6, 0.4]
        estimate = entropy_rate(iid_model(rho, [0.25]), 10, summand="belief")

        expected = -sum(p * math.log2(p) for p in rho)
        assert estimate.value == pytest.approx(expected, abs=1e-12)

    def test_unknown_summand(self, reference_model: HmpModel) -> None:
        """Test that an unknown summand name is rejected."""
        with pytest.raises(ValueError, match="unknown summand"):
            entropy_rate(reference_model, 5, summand="joint")  # type: ignore[arg-type]

    def test_natural_log_base(self, reference_model: HmpModel) -> None:
        """Test that base e scales both value and bound by ln 2."""
        bits = entropy_rate(reference_model, 20)
        nats = entropy_rate(reference_model, 20, base=math.e)

        assert nats.value == pytest.approx(bits.value * math.log(2), rel=1e-14)
        assert nats.err_bound == pytest.approx(bits.err_bound * math.log(2))
        assert nats.base == math.e

    def test_normalization(self, reference_model: HmpModel) -> None:
        """Test that the weights put total mass one on the truncated orbit."""
        assert entropy_rate(reference_model, 50).normalization == pytest.approx(
            1.0, abs=1e-12
        )

    def test_uncertified(self) -> None:
        """Test the estimate returned without a certified bound."""
        model = make_model([[0.6, 0.4], [0.3, 0.7]], [NEAR_ONE])

        with pytest.raises(GammaNotContracting):
            entropy_rate(model, 10)

        estimate = entropy_rate(model, 10, require_bound=False)
        assert not estimate.certified
        assert math.isinf(estimate.err_bound)
        assert estimate.to_dict()["err_bound"] is None
        assert estimate.to_dict()["B"] is None
        assert 0.0 <= estimate.value <= 1.0

    def test_to_dict_is_json_ready(self, reference_model: HmpModel) -> None:
        """Test that the estimate serializes to JSON."""
        payload = json.loads(json.dumps(entropy_rate(reference_model, 10).to_dict()))

        assert payload["N"] == 10
        assert len(payload["phi_hat"]) == 2
        assert payload["certified"] is True

    def test_runtime_grows_linearly_in_depth(self, reference_model: HmpModel) -> None:
        """Test that doubling N roughly doubles the run time."""

        def best_time(N: int) -> float:
            timings = []
            for _ in range(5):
                start = time.perf_counter()
                entropy_rate(reference_model, N)
                timings.append(time.perf_counter() - start)
            return min(timings)

        best_time(1000)  # warm-up
        ratio = best_time(2000) / best_time(1000)
        assert 1.5 <= ratio <= 3.0

    def test_runtime_growth_in_alphabet(self) -> None:
        """Test that doubling q grows the run time by less than cubic."""
        rng = np.random.default_rng(5)
        models = {q: random_model(rng, q) for q in (4, 8)}

        def best_time(model: HmpModel) -> float:
            timings = []
            for _ in range(5):
                start = time.perf_counter()
                entropy_rate(model, 1000)
                timings.append(time.perf_counter() - start)
            return min(timings)

        best_time(models[4])  # warm-up
        assert best_time(models[8]) / best_time(models[4]) <= 10.0


class TestTermsForAccuracy:
    """Tests for choosing the depth from a target accuracy."""

    def test_reference_model(self, reference_model: HmpModel) -> None:
        """Test that 1e-8 is reached by depth 50 with the smallest such N."""
        N = terms_for_accuracy(reference_model, 1e-8)

        assert N <= 50
        assert entropy_rate(reference_model, N).err_bound <= 1e-8
        assert entropy_rate(reference_model, N - 1).err_bound > 1e-8

    def test_loose_accuracy(self, reference_model: HmpModel) -> None:
        """Test that an accuracy above the depth-zero bound returns zero."""
        delta = entropy_rate(reference_model, 0).err_bound * 2
        assert terms_for_accuracy(reference_model, delta) == 0

    @pytest.mark.parametrize("delta", [1e-3, 1e-6, 1e-12])
    def test_returned_depth_meets_accuracy(
        self, reference_model: HmpModel, delta: float
    ) -> None:
        """Test that the returned depth always satisfies the accuracy."""
        N = terms_for_accuracy(reference_model, delta)
        assert entropy_rate(reference_model, N).err_bound <= delta

    @pytest.mark.parametrize("delta", [0.0, -1e-3])
    def test_non_positive_accuracy(
        self, reference_model: HmpModel, delta: float
    ) -> None:
        """Test that a non-positive accuracy is rejected."""
        with pytest.raises(ParameterOutOfRange, match="accuracy"):
            terms_for_accuracy(reference_model, delta)

    def test_not_contracting(self) -> None:
        """Test that no depth is chosen without a contraction."""
        model = make_model([[0.6, 0.4], [0.3, 0.7]], [NEAR_ONE])

        with pytest.raises(GammaNotContracting):
            terms_for_accuracy(model, 1e-6)


class TestConvergenceTable:
    """Tests for the multi-depth sweep."""

    def test_rows_match_single_runs(self, reference_model: HmpModel) -> None:
        """Test that each row equals the single-depth estimate."""
        rows = convergence_table(reference_model, [20, 10])

        assert [row.N for row in rows] == [20, 10]
        assert all(isinstance(row, EntropyEstimate) for row in rows)
        assert rows[1].value == entropy_rate(reference_model, 10).value

    def test_bounds_decrease(self, reference_model: HmpModel) -> None:
        """Test that deeper rows carry smaller bounds."""
        rows = convergence_table(reference_model, [10, 20, 30, 40, 50])
        bounds = [row.err_bound for row in rows]

        assert bounds == sorted(bounds, reverse=True)
