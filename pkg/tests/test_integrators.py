import json

import numpy as np
import pytest

from pixelpde import (
    Field,
    RELU,
    StepperConfig,
    construct_linear,
    default_dt,
    euler_step,
    eval_rhs,
    fisher_spec,
    heat_spec,
    local_error_diagnostic,
    network_vector_field,
    norm_projected_euler_step,
    project_tangent,
    rk4_flow,
    rollout,
    step,
    tangent_projected_field,
)
from pixelpde.errors import DegenerateInputError, DivergenceError
from pixelpde.training import init_params


def fnorm(a):
    return float(np.sqrt(np.sum(a * a)))


def smooth_field(p):
    x = np.arange(p) / p
    data = np.sin(2 * np.pi * x)[:, None] * np.sin(2 * np.pi * x)[None, :] + 0.3
    return Field(data, 1.0 / p)


class TestStepperConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            StepperConfig(dt=0.0)
        with pytest.raises(ValueError):
            StepperConfig(dt=0.1, substeps=0)
        with pytest.raises(ValueError):
            StepperConfig(dt=0.1, scheme="rk4")


class TestEulerStep:
    def test_zero_step_identity(self):
        u = smooth_field(8)
        out = euler_step(lambda v: v, u, 0.0)
        np.testing.assert_array_equal(out.data, u.data)

    def test_zero_field_identity(self):
        u = smooth_field(8)
        out = euler_step(lambda v: v.like(np.zeros_like(v.data)), u, 0.3)
        np.testing.assert_array_equal(out.data, u.data)

    def test_uniform_logistic_step(self):
        # uniform field under the reaction-diffusion RHS: diffusion vanishes,
        # one Euler step is the scalar logistic update
        c, h = 0.4, 0.1
        spec = fisher_spec(0.7, 1 / 8)
        u = Field(np.full((8, 8), c), 1 / 8)
        out = euler_step(lambda v: eval_rhs(spec, v), u, h)
        np.testing.assert_allclose(out.data, c + h * c * (1 - c), atol=1e-14)


class TestProjectTangent:
    def test_parallel_removed(self):
        u = smooth_field(6)
        out = project_tangent(u, u)
        assert np.max(np.abs(out.data)) <= 1e-14 * np.max(np.abs(u.data))

    def test_orthogonal_unchanged(self):
        u = Field(np.eye(4) + 1.0, 0.25)
        v_data = np.zeros((4, 4))
        v_data[0, 1], v_data[1, 0] = 1.0, -1.0  # orthogonal to the symmetric u
        v = Field(v_data, 0.25)
        assert abs(np.sum(u.data * v.data)) == 0.0
        np.testing.assert_array_equal(project_tangent(u, v).data, v.data)

    def test_output_orthogonal_to_state(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            u = Field(rng.standard_normal((8, 8)), 1 / 8)
            v = Field(rng.standard_normal((8, 8)), 1 / 8)
            out = project_tangent(u, v)
            bound = 1e-13 * fnorm(u.data) * fnorm(v.data)
            assert abs(np.sum(u.data * out.data)) <= bound

    def test_zero_state_rejected(self):
        u = Field(np.zeros((4, 4)), 0.25)
        with pytest.raises(DegenerateInputError):
            project_tangent(u, u)


class TestNormProjectedEuler:
    def test_zero_step_exact_identity(self):
        u = smooth_field(8)
        out = norm_projected_euler_step(lambda v: v, u, 0.0)
        np.testing.assert_array_equal(out.data, u.data)

    def test_zero_field_exact_identity(self):
        u = smooth_field(8)
        out = norm_projected_euler_step(lambda v: v.like(np.zeros_like(v.data)), u, 0.1)
        np.testing.assert_array_equal(out.data, u.data)

    def test_norm_preserved_random_network(self):
        rng = np.random.default_rng(32)
        theta = init_params(2, 5, RELU, seed=4)
        f = network_vector_field(theta)
        u = Field(rng.standard_normal((12, 12)), 1 / 12)
        out = norm_projected_euler_step(f, u, 0.02)
        assert abs(fnorm(out.data) - fnorm(u.data)) <= 1e-13 * fnorm(u.data)


class TestStepAndRollout:
    def test_single_substep_matches_scheme(self):
        theta = init_params(2, 3, RELU, seed=5)
        f = network_vector_field(theta)
        u = smooth_field(8)
        cfg = StepperConfig(dt=0.05, substeps=1)
        np.testing.assert_array_equal(step(cfg, f, u).data, euler_step(f, u, 0.05).data)

    def test_five_substeps_equal_unrolled(self):
        dx = 1 / 16
        theta = construct_linear(heat_spec(0.01, dx).linear, 5, RELU)
        f = network_vector_field(theta)
        u = smooth_field(16)
        cfg = StepperConfig(dt=0.02, substeps=5)
        manual = u
        for _ in range(5):
            manual = euler_step(f, manual, 0.02 / 5)
        np.testing.assert_array_equal(step(cfg, f, u).data, manual.data)

    def test_projected_composition_preserves_norm(self):
        theta = init_params(2, 5, RELU, seed=6)
        f = network_vector_field(theta, "norm_projected_euler")
        u = smooth_field(16)
        cfg = StepperConfig(dt=0.02, substeps=5, scheme="norm_projected_euler")
        out = step(cfg, f, u)
        assert abs(fnorm(out.data) - fnorm(u.data)) <= 5e-13 * fnorm(u.data)

    def test_rollout_one_equals_step(self):
        theta = init_params(2, 3, RELU, seed=8)
        f = network_vector_field(theta)
        u = smooth_field(8)
        cfg = StepperConfig(dt=0.05, substeps=2)
        frames = rollout(cfg, f, u, 1)
        assert len(frames) == 1
        np.testing.assert_array_equal(frames[0].data, step(cfg, f, u).data)

    def test_rollout_zero_field_repeats_start(self):
        u = smooth_field(8)
        cfg = StepperConfig(dt=0.05, substeps=3)
        frames = rollout(cfg, lambda v: v.like(np.zeros_like(v.data)), u, 4)
        for fr in frames:
            np.testing.assert_array_equal(fr.data, u.data)

    def test_rollout_reports_divergence_step(self):
        u = smooth_field(8)
        cfg = StepperConfig(dt=1.0, substeps=1)
        blower = lambda v: v.like(v.data * 1e200)
        with pytest.raises(DivergenceError) as err:
            rollout(cfg, blower, u, 5)
        assert err.value.step == 2  # step 1 reaches ~1e200, step 2 overflows

    def test_long_projected_rollout_norm_drift(self):
        rng = np.random.default_rng(33)
        theta = init_params(2, 5, RELU, seed=9)
        f = network_vector_field(theta, "norm_projected_euler")
        u = Field(rng.standard_normal((10, 10)), 0.1)
        n0 = fnorm(u.data)
        cfg = StepperConfig(dt=0.02, substeps=1, scheme="norm_projected_euler")
        frames = rollout(cfg, f, u, 1000)
        drift = max(abs(fnorm(fr.data) - n0) for fr in frames)
        assert drift / n0 <= 1e-12

    def test_determinism(self):
        theta = init_params(2, 5, RELU, seed=10)
        f = network_vector_field(theta)
        u = smooth_field(12)
        cfg = StepperConfig(dt=0.01, substeps=5)
        a = rollout(cfg, f, u, 7)
        b = rollout(cfg, f, u, 7)
        for fa, fb in zip(a, b):
            np.testing.assert_array_equal(fa.data, fb.data)


class TestEulerConsistency:
    def test_substep_refinement_order_one(self):
        dx = 1 / 32
        spec = heat_spec(0.01, dx)
        theta = construct_linear(spec.linear, 5, RELU)
        f = network_vector_field(theta)
        u = smooth_field(32)
        dt = default_dt("heat", 32, 0.01)
        ref = rk4_flow(lambda v: eval_rhs(spec, v), u, dt, 400)[-1]
        errs, hs = [], []
        for k in (1, 2, 4, 8):
            out = step(StepperConfig(dt=dt, substeps=k), f, u)
            errs.append(fnorm(out.data - ref.data))
            hs.append(dt / k)
        order = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
        assert 0.85 <= order <= 1.15


class TestLocalErrorDiagnostic:
    def setup_method(self):
        self.dx = 1 / 32
        self.spec = heat_spec(0.01, self.dx)
        self.theta = construct_linear(self.spec.linear, 5, RELU)
        self.u0 = smooth_field(32)
        self.cfg = StepperConfig(dt=default_dt("heat", 32, 0.01), substeps=5)

    def test_flow_error_scales_quadratically(self):
        base = self.cfg.dt
        errs = []
        for dt in (base, base / 2):
            rep = local_error_diagnostic(self.spec, self.theta, self.cfg, self.u0, 150, dt=dt)
            errs.append(rep.flow_error)
        ratio = errs[0] / errs[1]
        assert 4 * 0.85 <= ratio <= 4 * 1.15

    def test_zero_dt_zero_error(self):
        rep = local_error_diagnostic(self.spec, self.theta, self.cfg, self.u0, 100, dt=0.0)
        assert rep.flow_error == 0.0

    def test_constructive_weights_have_no_field_mismatch(self):
        rep = local_error_diagnostic(self.spec, self.theta, self.cfg, self.u0, 100)
        assert rep.vf_mismatch_sup <= 1e-10

    def test_proxy_steps_floor_enforced(self):
        with pytest.raises(ValueError):
            local_error_diagnostic(self.spec, self.theta, self.cfg, self.u0, 50)

    def test_report_json_fields(self):
        rep = local_error_diagnostic(self.spec, self.theta, self.cfg, self.u0, 100)
        doc = json.loads(rep.to_json())
        assert set(doc) == {"dt", "k", "flow_error", "vf_mismatch_sup", "lipschitz_estimate"}
        assert doc["k"] == 5
        assert doc["lipschitz_estimate"] > 0


class TestTangentProjectedField:
    def test_projected_field_is_orthogonal(self):
        theta = init_params(2, 5, RELU, seed=11)
        f = tangent_projected_field(network_vector_field(theta))
        rng = np.random.default_rng(34)
        for _ in range(5):
            u = Field(rng.standard_normal((8, 8)), 1 / 8)
            fu = f(u)
            assert abs(np.sum(u.data * fu.data)) <= 1e-12 * fnorm(u.data) * max(fnorm(fu.data), 1.0)
