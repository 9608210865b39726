"""Tests for congestion models, the rescaling law and growth certificates."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from pywardrop.core.congestion import (
    ArcCongestion,
    CongestionModel,
    G_eval,
    H_eval,
    arc_costs,
    arc_times,
    g_eval,
    growth_certify,
    rescale,
    unscale,
)
from pywardrop.core.network import Network, build_custom
from pywardrop.exceptions import (
    CertificationError,
    ModelError,
    NegativeMassError,
    NegativeTimeError,
)
from pywardrop.utils import SpatialPolynomial

ORIGIN = np.zeros(2)


def _legendre_oracle(model: CongestionModel, t: float) -> float:
    """sup_m (m t - G(m)) by bounded scalar minimisation."""
    upper = 10.0 + 10.0 * (t / float(model.a[0](ORIGIN))) ** (1.0 / (model.q - 1.0))
    result = optimize.minimize_scalar(
        lambda m: float(model.G(ORIGIN, 0, m)) - m * t,
        bounds=(0.0, upper),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return max(-float(result.fun), 0.0)


class TestPowerLaw:
    """Test the closed-form power law."""

    def test_values(self) -> None:
        """g, G and H for q = 2, a = 2, delta = 1."""
        model = CongestionModel.power_law(q=2.0, a=2.0, delta=1.0)
        assert model.g(ORIGIN, 0, 3.0) == pytest.approx(7.0)
        assert model.G(ORIGIN, 0, 3.0) == pytest.approx(12.0)
        assert model.H(ORIGIN, 0, 7.0) == pytest.approx(9.0)
        assert model.H(ORIGIN, 0, 0.5) == 0.0
        assert model.p == pytest.approx(2.0)

    def test_module_evaluators(self) -> None:
        """g_eval, G_eval and H_eval agree with the model methods per class."""
        model = CongestionModel.power_law(q=2.0, a=[1.0, 2.0], delta=[0.5, 1.0], n_classes=2)
        assert g_eval(model, ORIGIN, 1, 3.0) == pytest.approx(7.0)
        assert G_eval(model, ORIGIN, 1, 3.0) == pytest.approx(12.0)
        assert H_eval(model, ORIGIN, 1, 7.0) == pytest.approx(9.0)
        np.testing.assert_allclose(g_eval(model, ORIGIN, np.array([0, 1]), np.array([1.0, 1.0])), [1.5, 3.0])
        with pytest.raises(NegativeMassError):
            G_eval(model, ORIGIN, 0, -0.1)

    def test_scalar_and_array_results(self) -> None:
        """Scalar inputs give floats, arrays give arrays."""
        model = CongestionModel.power_law(q=3.0, a=1.0, delta=0.5)
        assert isinstance(model.g(ORIGIN, 0, 1.0), float)
        values = model.g(ORIGIN, 0, np.array([0.0, 1.0, 2.0]))
        np.testing.assert_allclose(values, [0.5, 1.5, 4.5])

    def test_broadcast_classes(self) -> None:
        """Scalars are broadcast over the requested class count."""
        model = CongestionModel.power_law(q=2.0, a=1.0, delta=[0.1, 0.2, 0.3, 0.4], n_classes=4)
        assert model.n_classes == 4
        np.testing.assert_allclose(model.free_flow(np.arange(4)), [0.1, 0.2, 0.3, 0.4])

    def test_position_dependent_weight(self) -> None:
        """a_k(x) may be a polynomial in x."""
        model = CongestionModel(
            q=2.0,
            a=(SpatialPolynomial((((0, 0), 1.0), ((1, 0), 1.0))),),
            delta=(0.0,),
        )
        assert model.g([2.0, 0.0], 0, 1.0) == pytest.approx(3.0)

    @settings(max_examples=1000, deadline=None)
    @given(
        a=st.floats(0.5, 2.0),
        delta=st.floats(0.0, 1.0),
        q=st.floats(1.5, 3.0),
        t=st.floats(0.0, 4.0),
    )
    def test_conjugate_matches_legendre_transform(self, a: float, delta: float, q: float, t: float) -> None:
        """Closed-form H equals sup_m (m t - G(m))."""
        model = CongestionModel.power_law(q=q, a=a, delta=delta)
        assert model.H(ORIGIN, 0, t) == pytest.approx(_legendre_oracle(model, t), rel=1e-6, abs=1e-8)

    @settings(max_examples=200, deadline=None)
    @given(
        a=st.floats(0.5, 2.0),
        delta=st.floats(0.0, 1.0),
        q=st.floats(1.5, 3.0),
        m=st.floats(0.0, 5.0),
    )
    def test_fenchel_young_equality(self, a: float, delta: float, q: float, m: float) -> None:
        """G(m) + H(g(m)) = m g(m)."""
        model = CongestionModel.power_law(q=q, a=a, delta=delta)
        t = model.g(ORIGIN, 0, m)
        assert model.G(ORIGIN, 0, m) + model.H(ORIGIN, 0, t) == pytest.approx(m * t, rel=1e-10, abs=1e-12)

    def test_inverse(self) -> None:
        """g_inverse undoes g and is zero below free flow."""
        model = CongestionModel.power_law(q=2.5, a=1.5, delta=0.3)
        m = np.array([0.0, 0.7, 3.0])
        np.testing.assert_allclose(model.g_inverse(ORIGIN, 0, model.g(ORIGIN, 0, m)), m, atol=1e-12)
        assert model.g_inverse(ORIGIN, 0, 0.1) == 0.0


class TestModelValidation:
    """Test model invariants and error reporting."""

    def test_exponent(self) -> None:
        """q must exceed 1."""
        with pytest.raises(ModelError):
            CongestionModel.power_law(q=1.0, a=1.0, delta=0.0)

    def test_negative_free_flow(self) -> None:
        """delta must be nonnegative."""
        with pytest.raises(ModelError):
            CongestionModel.power_law(q=2.0, a=1.0, delta=-0.1)

    def test_nonpositive_weight(self) -> None:
        """Constant weights must be positive."""
        with pytest.raises(ModelError):
            CongestionModel.power_law(q=2.0, a=0.0, delta=0.1)

    def test_negative_mass(self) -> None:
        """g and G reject negative masses."""
        model = CongestionModel.power_law(q=2.0, a=1.0, delta=0.1)
        with pytest.raises(NegativeMassError):
            model.g(ORIGIN, 0, -1.0)
        with pytest.raises(NegativeMassError):
            model.G(ORIGIN, 0, -1.0)

    def test_negative_time(self) -> None:
        """H rejects negative times."""
        model = CongestionModel.power_law(q=2.0, a=1.0, delta=0.1)
        with pytest.raises(NegativeTimeError):
            model.H(ORIGIN, 0, -0.5)

    def test_solver_requirements(self) -> None:
        """Solvers need delta > 0; subcritical growth needs q < d / (d - 1)."""
        model = CongestionModel.power_law(q=2.0, a=1.0, delta=0.0)
        with pytest.raises(ModelError):
            model.require_positive_free_flow()
        with pytest.raises(ModelError):
            model.require_subcritical(2)
        CongestionModel.power_law(q=1.5, a=1.0, delta=0.0).require_subcritical(2)

    def test_config_round_trip(self) -> None:
        """to_config and from_config agree."""
        model = CongestionModel.power_law(q=2.5, a=[1.0, 2.0], delta=[0.1, 0.2])
        again = CongestionModel.from_config(model.to_config())
        assert again.q == 2.5
        assert again.delta == (0.1, 0.2)
        assert again.g(ORIGIN, 1, 1.0) == pytest.approx(2.2)

    def test_config_broadcast(self) -> None:
        """A single class entry is broadcast to the family size."""
        model = CongestionModel.from_config({"q": 2, "classes": [{"a_const": 1.0, "delta": 0.5}]}, 6)
        assert model.n_classes == 6

    def test_malformed_config(self) -> None:
        """A block without q is rejected."""
        with pytest.raises(ModelError):
            CongestionModel.from_config({"classes": []})


class TestCustomModel:
    """Test numerically evaluated custom congestion functions."""

    @pytest.fixture
    def bpr(self) -> CongestionModel:
        """g(m) = 1 + 0.15 m^4, a BPR-type curve."""
        return CongestionModel(
            q=5.0,
            a=(SpatialPolynomial.constant(1.0),),
            delta=(1.0,),
            custom_g=lambda x, k, m: 1.0 + 0.15 * m**4,
        )

    def test_numeric_primitive(self, bpr: CongestionModel) -> None:
        """G is the integral of g."""
        assert bpr.G(ORIGIN, 0, 2.0) == pytest.approx(2.0 + 0.03 * 32.0, rel=1e-8)

    def test_numeric_conjugate(self, bpr: CongestionModel) -> None:
        """Numeric H satisfies Fenchel-Young at m = 1.5."""
        t = bpr.g(ORIGIN, 0, 1.5)
        assert bpr.G(ORIGIN, 0, 1.5) + bpr.H(ORIGIN, 0, t) == pytest.approx(1.5 * t, rel=1e-6)
        assert bpr.g_inverse(ORIGIN, 0, t) == pytest.approx(1.5, rel=1e-8)

    def test_not_serialisable(self, bpr: CongestionModel) -> None:
        """Custom models have no configuration block."""
        with pytest.raises(ModelError):
            bpr.to_config()


class TestRescaling:
    """Test the arc rescaling law."""

    @pytest.fixture
    def short_arc(self) -> Network:
        """One arc of length 1/4 in the plane and its reverse."""
        return build_custom(
            [[0.0, 0.0], [0.25, 0.0]],
            [[0, 1, 0], [1, 0, 1]],
            epsilon=0.25,
            vectors=[[1.0, 0.0], [-1.0, 0.0]],
        )

    def test_rescale_formula(self, short_arc: Network) -> None:
        """t = |e|^(d/2) g(m / |e|^(d/2)) and xi = t / |e|^(d/2)."""
        model = CongestionModel.power_law(q=2.0, a=1.0, delta=1.0, n_classes=2)
        t, xi = rescale(model, short_arc, 0, 0.5)
        assert xi == pytest.approx(0.5 / 0.25 + 1.0)
        assert t == pytest.approx(0.25 * xi)
        assert unscale(model, short_arc, 0, t) == pytest.approx(0.5)

    def test_bound_model(self, short_arc: Network) -> None:
        """Vectorised arc quantities agree with the scalar law."""
        model = CongestionModel.power_law(q=3.0, a=2.0, delta=0.5, n_classes=2)
        masses = np.array([0.3, 0.0])
        bound = ArcCongestion.bind(model, short_arc)
        t, xi = rescale(model, short_arc, 0, 0.3)
        assert bound.times(masses)[0] == pytest.approx(t)
        assert bound.xi(masses)[0] == pytest.approx(xi)
        np.testing.assert_allclose(arc_times(model, short_arc, masses), bound.times(masses))
        scale = 0.25
        expected = scale**2 * float(model.G(ORIGIN, 0, 0.3 / scale))
        assert arc_costs(model, short_arc, masses)[0] == pytest.approx(expected)

    def test_arc_cost_is_integral_of_time(self, short_arc: Network) -> None:
        """G^eps(m) = int_0^m t(s) ds."""
        model = CongestionModel.power_law(q=2.5, a=1.0, delta=0.2, n_classes=2)
        bound = ArcCongestion.bind(model, short_arc)
        grid = np.linspace(0.0, 0.8, 4001)
        times = np.array([bound.times(np.array([s, 0.0]))[0] for s in grid])
        integral = float(np.sum(0.5 * (times[1:] + times[:-1]) * np.diff(grid)))
        assert bound.costs(np.array([0.8, 0.0]))[0] == pytest.approx(integral, rel=1e-6)

    def test_conjugate_identity_per_arc(self, short_arc: Network) -> None:
        """|e|^d H(xi) + G^eps(m) = m t on every arc."""
        model = CongestionModel.power_law(q=2.0, a=1.5, delta=0.4, n_classes=2)
        bound = ArcCongestion.bind(model, short_arc)
        masses = np.array([0.6, 0.1])
        lhs = bound.conjugate(bound.xi(masses)) + bound.costs(masses)
        np.testing.assert_allclose(lhs, masses * bound.times(masses), rtol=1e-12)

    def test_class_count_mismatch(self, short_arc: Network) -> None:
        """Models must cover every class of the network."""
        model = CongestionModel.power_law(q=2.0, a=1.0, delta=1.0, n_classes=4)
        with pytest.raises(ModelError):
            ArcCongestion.bind(model, short_arc)


class TestGrowthCertificate:
    """Test sampled growth constants."""

    def test_power_law_certifies(self) -> None:
        """Power laws are certified with ordered constants."""
        model = CongestionModel.power_law(q=2.0, a=1.0, delta=0.5)
        certificate = growth_certify(model)
        assert 0 < certificate.lam <= certificate.Lam
        assert certificate.p == pytest.approx(2.0)
        assert 1.0 <= certificate.a <= 1.01

    def test_wrong_exponent_rejected(self) -> None:
        """Claiming the wrong growth exponent fails certification."""
        model = CongestionModel.power_law(q=2.0, a=1.0, delta=0.5)
        with pytest.raises(CertificationError):
            growth_certify(model, p=3.0)
