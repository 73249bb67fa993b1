import numpy as np
import pytest

from gramscore.irt import DEGENERATE, AbilityEstimate, ItemParameters, irf
from gramscore.profiler import PFVector
from gramscore.weighting import TransformSpec, apply_transform


def make_items(rng, k):
    return [
        ItemParameters(j, a=float(rng.uniform(0.3, 2.5)), b=float(rng.uniform(-2, 2)))
        for j in range(k)
    ]


def make_g(rng, k):
    return PFVector(values=(rng.random(k) < 0.5).astype(np.float64), binary=True)


THETA = AbilityEstimate(theta=0.4, posterior_sd=0.3)


class TestModes:
    def test_identity(self):
        g = PFVector(values=np.array([1.0, 0.0, 1.0]), binary=True)
        out = apply_transform(g, None, None, TransformSpec("identity"))
        assert out.tolist() == [1.0, 0.0, 1.0]

    def test_multiply_b(self):
        g = PFVector(values=np.array([1.0, 0.0]), binary=True)
        items = [ItemParameters(0, 1.0, 1.3), ItemParameters(1, 1.0, -2.0)]
        out = apply_transform(g, items, None, TransformSpec("multiply_b"))
        assert out.tolist() == [1.3, 0.0]

    def test_prob_replaces_indicator(self):
        items = [ItemParameters(0, 1.0, 0.0)]
        g = PFVector(values=np.array([0.0]), binary=True)
        out = apply_transform(g, items, AbilityEstimate(2.0, 0.2), TransformSpec("prob"))
        assert out[0] == pytest.approx(irf(2.0, items[0]))

    def test_add_prob_hand_value(self):
        # 0.5*1 + 0.5*0.6
        items = [ItemParameters(0, 1.0, 0.0)]
        g = PFVector(values=np.array([1.0]), binary=True)
        theta = AbilityEstimate(theta=float(np.log(0.6 / 0.4)), posterior_sd=0.5)
        out = apply_transform(g, items, theta, TransformSpec("add_prob", alpha=0.5))
        assert out[0] == pytest.approx(0.8, abs=1e-12)

    def test_multiply_prob_annihilates_unused(self):
        items = [ItemParameters(0, 2.0, -1.0)]
        g = PFVector(values=np.array([0.0]), binary=True)
        out = apply_transform(g, items, THETA, TransformSpec("multiply_prob"))
        assert out[0] == 0.0


class TestValidation:
    def test_length_mismatch(self):
        g = PFVector(values=np.ones(3), binary=True)
        items = [ItemParameters(0, 1.0, 0.0)]
        with pytest.raises(ValueError, match="per feature"):
            apply_transform(g, items, THETA, TransformSpec("prob"))

    def test_missing_theta_for_prob_family(self):
        g = PFVector(values=np.ones(1), binary=True)
        items = [ItemParameters(0, 1.0, 0.0)]
        with pytest.raises(ValueError, match="ability"):
            apply_transform(g, items, None, TransformSpec("multiply_prob"))

    def test_bad_mode_and_alpha(self):
        with pytest.raises(ValueError):
            TransformSpec("squared")
        with pytest.raises(ValueError):
            TransformSpec("add_prob", alpha=1.5)


class TestDegenerateItems:
    ITEMS = [
        ItemParameters(0, 1.0, 0.8),
        ItemParameters(1, 1.0, 0.0, status=DEGENERATE),
    ]
    G = PFVector(values=np.array([1.0, 1.0]), binary=True)

    def test_multiplicative_modes_pass_through(self):
        out_b = apply_transform(self.G, self.ITEMS, None, TransformSpec("multiply_b"))
        assert out_b[1] == 1.0
        out_p = apply_transform(self.G, self.ITEMS, THETA, TransformSpec("multiply_prob"))
        assert out_p[1] == 1.0

    def test_prob_modes_use_half(self):
        out = apply_transform(self.G, self.ITEMS, THETA, TransformSpec("prob"))
        assert out[1] == 0.5
        out = apply_transform(self.G, self.ITEMS, THETA, TransformSpec("add_prob", alpha=0.5))
        assert out[1] == pytest.approx(0.75)


class TestTransformLaws:
    def test_laws_over_random_inputs(self):
        rng = np.random.default_rng(2024)
        for _ in range(200):
            k = int(rng.integers(1, 30))
            items = make_items(rng, k)
            g = make_g(rng, k)
            theta = AbilityEstimate(float(rng.normal()), 0.4)
            ident = apply_transform(g, items, theta, TransformSpec("identity"))
            prob = apply_transform(g, items, theta, TransformSpec("prob"))
            mult = apply_transform(g, items, theta, TransformSpec("multiply_prob"))
            add1 = apply_transform(g, items, theta, TransformSpec("add_prob", alpha=1.0))
            add0 = apply_transform(g, items, theta, TransformSpec("add_prob", alpha=0.0))
            addh = apply_transform(g, items, theta, TransformSpec("add_prob", alpha=0.5))
            mb = apply_transform(g, items, theta, TransformSpec("multiply_b"))

            assert ((prob > 0) & (prob < 1)).all()
            assert (mult <= ident + 1e-15).all()
            np.testing.assert_allclose(mult, ident * prob, atol=1e-15)
            np.testing.assert_allclose(add1, ident, atol=0)
            np.testing.assert_allclose(add0, prob, atol=0)
            assert ((addh >= 0) & (addh <= 1)).all()
            used = ident == 1.0
            b = np.array([item.b for item in items])
            assert (np.sign(mb[used]) == np.sign(b[used])).all() or not used.any()
