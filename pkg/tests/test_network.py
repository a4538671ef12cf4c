import numpy as np
import pytest

from pixelpde import (
    Activation,
    Field,
    FilterBank,
    RELU,
    RELU2,
    TwoLayerNetParams,
    activate,
    advection_spec,
    construct_linear,
    construct_quadratic,
    conv2d_same,
    count_params,
    eval_net,
    eval_rhs,
    fisher_spec,
    heat_spec,
    leaky_relu,
)
from pixelpde.network import checkpoint_from_json, checkpoint_to_json, load_checkpoint, save_checkpoint
from pixelpde.stencils import Interaction, PDESpec, Stencil


def random_stencil(rng):
    return Stencil(rng.uniform(-1, 1, size=(3, 3)))


class TestActivation:
    def test_relu_negative_branch(self):
        assert activate(RELU, -3.0) == 0.0
        assert activate(RELU, 2.0) == 2.0

    def test_relu2_square_identity(self):
        x = 1.7
        assert abs(activate(RELU2, x) + activate(RELU2, -x) - 2.89) <= 1e-15

    def test_leaky_linear_identity(self):
        a, x = 0.1, -2.5
        act = leaky_relu(a)
        recovered = (activate(act, x) - activate(act, -x)) / (1 + a)
        assert abs(recovered - x) <= 1e-15

    def test_invalid_kind_and_slope(self):
        with pytest.raises(ValueError):
            Activation("gelu")
        with pytest.raises(ValueError):
            leaky_relu(1.5)


class TestEvalNet:
    def test_zero_weights_zero_output(self):
        theta = TwoLayerNetParams(
            FilterBank(np.zeros((2, 1, 3, 3))),
            FilterBank(np.zeros((1, 2, 3, 3))),
            np.zeros(2),
            0.0,
            RELU,
        )
        u = Field(np.random.default_rng(0).standard_normal((6, 6)), 1 / 6)
        assert np.all(eval_net(theta, u).data == 0.0)

    def test_linear_construction_reproduces_stencil(self):
        rng = np.random.default_rng(21)
        L = random_stencil(rng)
        theta = construct_linear(L, 3, RELU)
        for _ in range(50):
            u = Field(rng.uniform(-1, 1, size=(8, 8)), 1 / 8)
            diff = eval_net(theta, u).data - conv2d_same(u, L.coeffs).data
            assert np.max(np.abs(diff)) <= 1e-13

    def test_constant_path_cancellation(self):
        # zero first layer, bias pair (1,-1), squared relu, second-layer
        # coefficients (1/2,1/2,-1/2,-1/2), output bias -1/2: everything cancels
        theta = TwoLayerNetParams(
            FilterBank(np.zeros((4, 1, 3, 3))),
            FilterBank(
                np.array([0.5, 0.5, -0.5, -0.5]).reshape(1, 4, 1, 1)
            ),
            np.array([1.0, -1.0, 0.0, 0.0]),
            -0.5,
            RELU2,
        )
        u = Field(np.random.default_rng(1).standard_normal((5, 5)), 0.2)
        assert np.max(np.abs(eval_net(theta, u).data)) == 0.0


class TestConstructLinear:
    def test_heat_stencil_exact(self):
        rng = np.random.default_rng(22)
        dx = 1 / 16
        spec = heat_spec(0.01, dx)
        theta = construct_linear(spec.linear, 5, RELU)
        for _ in range(100):
            u = Field(rng.uniform(-1, 1, size=(16, 16)), dx)
            diff = eval_net(theta, u).data - eval_rhs(spec, u).data
            assert np.max(np.abs(diff)) <= 1e-12

    def test_zero_stencil_zero_network(self):
        theta = construct_linear(Stencil(np.zeros((3, 3))), 3, RELU)
        u = Field(np.random.default_rng(2).standard_normal((6, 6)), 1 / 6)
        assert np.all(eval_net(theta, u).data == 0.0)

    def test_leaky_variant_exact(self):
        rng = np.random.default_rng(23)
        L = random_stencil(rng)
        theta = construct_linear(L, 3, leaky_relu(0.3))
        for _ in range(50):
            u = Field(rng.uniform(-1, 1, size=(8, 8)), 1 / 8)
            diff = eval_net(theta, u).data - conv2d_same(u, L.coeffs).data
            assert np.max(np.abs(diff)) <= 1e-12

    def test_relu2_rejected(self):
        with pytest.raises(ValueError):
            construct_linear(Stencil(np.zeros((3, 3))), 3, RELU2)


class TestConstructQuadratic:
    def test_linear_only_spec(self):
        rng = np.random.default_rng(24)
        dx = 1 / 12
        spec = advection_spec(1.0, 1.0, dx)
        theta = construct_quadratic(spec, 3)
        assert theta.channels == 4
        for _ in range(50):
            u = Field(rng.uniform(-1, 1, size=(12, 12)), dx)
            diff = eval_net(theta, u).data - eval_rhs(spec, u).data
            assert np.max(np.abs(diff)) <= 1e-12

    def test_fisher_ten_channels_exact(self):
        rng = np.random.default_rng(25)
        dx = 1 / 32
        spec = fisher_spec(0.01, dx)
        theta = construct_quadratic(spec, 5)
        assert theta.channels == 10
        for _ in range(100):
            u = Field(rng.uniform(0, 2, size=(32, 32)), dx)
            diff = eval_net(theta, u).data - eval_rhs(spec, u).data
            assert np.max(np.abs(diff)) <= 1e-11

    def test_zero_input_zero_output(self):
        spec = fisher_spec(0.01, 1 / 8)
        theta = construct_quadratic(spec, 3)
        u = Field(np.zeros((8, 8)), 1 / 8)
        assert np.max(np.abs(eval_net(theta, u).data)) == 0.0

    def test_random_specs_quadratic_exact(self):
        rng = np.random.default_rng(26)
        for n_inter in (1, 2, 3):
            linear = random_stencil(rng)
            inter = tuple(
                Interaction(float(rng.uniform(-2, 2)), random_stencil(rng), random_stencil(rng))
                for _ in range(n_inter)
            )
            spec = PDESpec(linear, inter)
            theta = construct_quadratic(spec, 3)
            assert theta.channels == 4 + 6 * n_inter
            for _ in range(20):
                u = Field(rng.uniform(-1, 1, size=(10, 10)), 0.1)
                ref = eval_rhs(spec, u).data
                diff = eval_net(theta, u).data - ref
                assert np.max(np.abs(diff)) <= 1e-10 * (1.0 + np.max(np.abs(ref)))


class TestIdentities:
    def test_relu_odd_part_recovers_linear(self):
        rng = np.random.default_rng(27)
        D = random_stencil(rng)
        u = Field(rng.uniform(-1, 1, size=(9, 9)), 1 / 9)
        du = conv2d_same(u, D.coeffs).data
        recovered = activate(RELU, du) - activate(RELU, -du)
        assert np.max(np.abs(recovered - du)) <= 1e-14

    def test_squared_relu_polarization(self):
        rng = np.random.default_rng(28)
        d1, d2 = random_stencil(rng), random_stencil(rng)
        u = Field(rng.uniform(-1, 1, size=(9, 9)), 1 / 9)
        a = conv2d_same(u, d1.coeffs).data
        b = conv2d_same(u, d2.coeffs).data
        s = conv2d_same(u, d1.coeffs + d2.coeffs).data
        sq = lambda x: activate(RELU2, x) + activate(RELU2, -x)
        recovered = 0.5 * (sq(s) - sq(a) - sq(b))
        assert np.max(np.abs(recovered - a * b)) <= 1e-12

    def test_filter_size_three_and_five_agree(self):
        rng = np.random.default_rng(29)
        dx = 1 / 16
        spec = fisher_spec(0.01, dx)
        small = construct_quadratic(spec, 3)
        large = construct_quadratic(spec, 5)
        lin3 = construct_linear(spec.linear, 3, RELU)
        lin5 = construct_linear(spec.linear, 5, RELU)
        for _ in range(10):
            u = Field(rng.uniform(0, 2, size=(16, 16)), dx)
            dq = eval_net(small, u).data - eval_net(large, u).data
            dl = eval_net(lin3, u).data - eval_net(lin5, u).data
            assert np.max(np.abs(dq)) <= 1e-13 * (1 + np.max(np.abs(eval_net(small, u).data)))
            assert np.max(np.abs(dl)) <= 1e-13


class TestCountParams:
    def test_minimal_linear_shape(self):
        theta = construct_linear(Stencil(np.zeros((3, 3))), 3, RELU, h_filter_size=1)
        assert count_params(theta) == 23  # 2*9 + 2*1 + 2 + 1

    def test_minimal_quadratic_shape(self):
        spec = fisher_spec(0.01, 0.1)
        theta = construct_quadratic(spec, 3, h_filter_size=1)
        assert count_params(theta) == 111  # 10*9 + 10*1 + 10 + 1

    def test_experiment_shape(self):
        theta = construct_linear(Stencil(np.zeros((3, 3))), 5, RELU)
        assert count_params(theta) == 103  # 2*25 + 2*25 + 2 + 1


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(30)
        theta = TwoLayerNetParams(
            FilterBank(rng.standard_normal((3, 1, 5, 5))),
            FilterBank(rng.standard_normal((1, 3, 5, 5))),
            rng.standard_normal(3),
            float(rng.standard_normal()),
            leaky_relu(0.3),
        )
        path = tmp_path / "theta.ckpt.json"
        save_checkpoint(theta, path)
        loaded = load_checkpoint(path)
        assert np.array_equal(loaded.k_bank.weights, theta.k_bank.weights)
        assert np.array_equal(loaded.h_bank.weights, theta.h_bank.weights)
        assert np.array_equal(loaded.b1, theta.b1)
        assert loaded.b2 == theta.b2
        assert loaded.activation == theta.activation
        # bit patterns, not just close values
        assert loaded.k_bank.weights.tobytes() == theta.k_bank.weights.tobytes()

    def test_reserialization_is_stable(self):
        theta = construct_linear(Stencil(np.full((3, 3), 1 / 3)), 3, RELU)
        text = checkpoint_to_json(theta)
        again = checkpoint_to_json(checkpoint_from_json(text))
        assert text == again

    def test_rejects_foreign_json(self):
        with pytest.raises(ValueError):
            checkpoint_from_json('{"format": "something-else"}')

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ValueError):
            TwoLayerNetParams(
                FilterBank(np.zeros((2, 1, 3, 3))),
                FilterBank(np.zeros((1, 3, 3, 3))),
                np.zeros(2),
                0.0,
                RELU,
            )
