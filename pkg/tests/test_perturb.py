import numpy as np
import pytest

from fairsearch import nncore, perturb
from fairsearch.errors import NumericError, ShapeError

from conftest import random_net

NO_SENS = np.zeros(3, dtype=bool)


class TestDirectionHandTraces:
    def test_ff_mixed_signs(self):
        g = np.array([0.5, -0.3, 0.2])
        gp = np.array([0.1, 0.3, 0.4])
        np.testing.assert_allclose(perturb.directions_ff(g, gp, NO_SENS), [0.5, 0.0, 0.2])

    def test_ff_identical_gradients(self):
        g = np.array([0.7, -0.2, 0.0])
        np.testing.assert_allclose(perturb.directions_ff(g, g, NO_SENS), np.abs(g))

    def test_ff_all_signs_differ(self):
        g = np.array([0.5, -0.3, 0.2])
        np.testing.assert_allclose(perturb.directions_ff(g, -g, NO_SENS), np.zeros(3))

    def test_tb_mixed(self):
        g = np.array([0.4, -0.2, 0.0])
        gp = np.array([-0.1, 0.3, 0.5])
        np.testing.assert_allclose(perturb.directions_tb(g, gp, NO_SENS), [-0.4, -0.2, 0.5])

    def test_tb_equal_signs_gives_zero(self):
        g = np.array([0.4, -0.2, 0.1])
        np.testing.assert_allclose(perturb.directions_tb(g, g, NO_SENS), np.zeros(3))

    def test_tb_zero_gradient_takes_counterpart_magnitude(self):
        g = np.zeros(1)
        gp = np.array([-0.7])
        np.testing.assert_allclose(
            perturb.directions_tb(g, gp, np.zeros(1, dtype=bool)), [0.7]
        )

    def test_fb_mixed(self):
        g = np.array([0.4, -0.2, 0.0])
        gp = np.array([-0.1, 0.3, 0.5])
        np.testing.assert_allclose(perturb.directions_fb(g, gp, NO_SENS), [0.4, 0.2, -0.5])

    def test_fb_disjoint_nonzero_signs(self):
        g = np.array([0.4, -0.2])
        gp = np.array([-0.1, 0.3])
        np.testing.assert_allclose(
            perturb.directions_fb(g, gp, np.zeros(2, dtype=bool)), np.abs(g)
        )

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            perturb.directions_ff(np.zeros(3), np.zeros(4), NO_SENS)

    def test_wrapper_kinds(self):
        g = np.array([0.1, -0.2, 0.0])
        assert perturb.dir_ff(g, g, NO_SENS).kind == perturb.FF
        assert perturb.dir_tb(g, -g, NO_SENS).kind == perturb.TB
        assert perturb.dir_fb(g, -g, NO_SENS).kind == perturb.FB


def random_pair(rng, d=7):
    # Gradients with occasional exact zeros to hit the sign(0) branches.
    g = rng.normal(size=d) * (rng.random(d) > 0.2)
    gp = rng.normal(size=d) * (rng.random(d) > 0.2)
    mask = rng.random(d) < 0.3
    return g, gp, mask


class TestDirectionProperties:
    def test_thousand_random_cases(self, rng):
        for _ in range(1000):
            g, gp, mask = random_pair(rng)
            ff = perturb.directions_ff(g, gp, mask)
            tb = perturb.directions_tb(g, gp, mask)
            fb = perturb.directions_fb(g, gp, mask)
            # sensitive coordinates exactly zero
            assert (ff[mask] == 0.0).all()
            assert (tb[mask] == 0.0).all()
            assert (fb[mask] == 0.0).all()
            # antisymmetry
            np.testing.assert_array_equal(fb, -tb)
            # sign-equal vs sign-differ partition of supports
            assert not ((ff != 0) & (tb != 0)).any()
            assert not ((ff != 0) & (fb != 0)).any()
            # every nonzero magnitude comes from g or g'
            for d_vec in (ff, tb, fb):
                nz = d_vec != 0
                match = (np.abs(d_vec) == np.abs(g)) | (np.abs(d_vec) == np.abs(gp))
                assert match[nz].all()

    def test_batch_matches_per_row(self, rng):
        G = rng.normal(size=(20, 5))
        Gp = rng.normal(size=(20, 5))
        mask = np.array([False, True, False, False, True])
        batch = perturb.directions_tb(G, Gp, mask)
        for i in range(20):
            np.testing.assert_array_equal(batch[i], perturb.directions_tb(G[i], Gp[i], mask))


class TestGroundTruth:
    def test_identity_perturbation_recovers_label(self, rng):
        for _ in range(100):
            net = random_net(rng, 4)
            v = rng.random(4)
            y = float(rng.integers(0, 2))
            g = nncore.input_gradient(net, v, y)
            assert perturb.ground_truth(v, y, g, net, v) == pytest.approx(y, abs=1e-9)

    def test_worked_example(self):
        # y=1, f(v)=0.8, g.(v_p - v)=0.02, f(v_p)=0.7 -> y_p ~ 0.944949
        out = perturb.ground_truth_batch(
            loss_v=np.array([0.04]),
            g_dot_step=np.array([0.02]),
            f_vp=np.array([0.7]),
            y=np.array([1.0]),
        )
        assert out[0] == pytest.approx(0.7 + np.sqrt(0.06), abs=1e-9)
        assert out[0] == pytest.approx(0.9449489742783178, abs=1e-6)

    def test_residual_identity(self, rng):
        for _ in range(200):
            net = random_net(rng, 5)
            v = rng.random(5)
            y = float(rng.random())
            g = nncore.input_gradient(net, v, y)
            v_p = np.clip(v + rng.normal(0, 0.05, 5), 0, 1)
            y_p = perturb.ground_truth(v, y, g, net, v_p)
            lhs = (y_p - nncore.forward(net, v_p)) ** 2
            rhs = abs(nncore.loss_mse(y, nncore.forward(net, v)) + g @ (v_p - v))
            assert lhs == pytest.approx(rhs, abs=1e-9)

    def test_picks_root_closer_to_label(self):
        # y=0 with the same pieces flips the choice to the minus root.
        out = perturb.ground_truth_batch(
            loss_v=np.array([0.04]), g_dot_step=np.array([0.02]),
            f_vp=np.array([0.7]), y=np.array([0.0]),
        )
        assert out[0] == pytest.approx(0.7 - np.sqrt(0.06), abs=1e-9)

    def test_tie_returns_plus_root(self):
        # f_vp == y makes |y- - y| == |y+ - y|; the plus root wins.
        # 0.25 has an exact square root, so the tie is exact in floats.
        out = perturb.ground_truth_batch(
            loss_v=np.array([0.25]), g_dot_step=np.array([0.0]),
            f_vp=np.array([0.5]), y=np.array([0.5]),
        )
        assert out[0] == 1.0

    def test_shape_mismatch(self, rng):
        net = random_net(rng, 3)
        with pytest.raises(ShapeError):
            perturb.ground_truth(np.zeros(3), 1.0, np.zeros(4), net, np.zeros(3))

    def test_nonfinite_rejected(self, rng):
        net = random_net(rng, 3)
        v = np.zeros(3)
        with pytest.raises(NumericError):
            perturb.ground_truth(v, 1.0, np.array([np.inf, 0, 0]), net, np.ones(3))


class TestBinarize:
    @pytest.mark.parametrize(
        "value,expected", [(0.944949, 1), (0.455051, 0), (0.5, 1), (0.0, 0), (1.0, 1)]
    )
    def test_examples(self, value, expected):
        assert perturb.binarize_ground_truth(value) == expected
