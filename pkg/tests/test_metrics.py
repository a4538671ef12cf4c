import numpy as np
import pytest

from pixelpde import (
    Dataset,
    Field,
    FilterBank,
    MetricSeries,
    RELU,
    StepperConfig,
    TwoLayerNetParams,
    eval_metrics,
    network_vector_field,
    rollout,
    save_metrics_csv,
)
from pixelpde.errors import DegenerateInputError
from pixelpde.training import init_params


def drift_theta(c):
    """Zero network except the output bias: F(u) = c everywhere."""
    return TwoLayerNetParams(
        FilterBank(np.zeros((2, 1, 3, 3))),
        FilterBank(np.zeros((1, 2, 3, 3))),
        np.zeros(2),
        c,
        RELU,
    )


def replay_dataset(theta, cfg, rng, n, m, p):
    frames = np.empty((n, m + 1, p, p))
    f = network_vector_field(theta, cfg.scheme)
    for i in range(n):
        u0 = Field(rng.uniform(0.2, 1.0, size=(p, p)), 1.0 / p)
        frames[i, 0] = u0.data
        for j, fr in enumerate(rollout(cfg, f, u0, m), start=1):
            frames[i, j] = fr.data
    return Dataset(frames=frames, dt=cfg.dt, dx=1.0 / p, pde_tag="heat")


class TestMetricSeries:
    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            MetricSeries(horizon=2, max_abs=[0.0], mse=[0.0, 0.0], rel=[0.0, 0.0])

    def test_negative_entries_rejected(self):
        with pytest.raises(ValueError):
            MetricSeries(horizon=1, max_abs=[-1.0], mse=[0.0], rel=[0.0])


class TestEvalMetrics:
    def test_perfect_replay_is_zero(self):
        rng = np.random.default_rng(60)
        theta = init_params(2, 3, RELU, seed=12)
        cfg = StepperConfig(dt=0.02, substeps=3)
        ds = replay_dataset(theta, cfg, rng, n=4, m=5, p=8)
        series = eval_metrics(theta, cfg, ds, 5)
        assert series.max_abs == [0.0] * 5
        assert series.mse == [0.0] * 5
        assert series.rel == [0.0] * 5

    def test_hand_computed_single_sequence(self):
        # constant-drift model: prediction = u0 + dt*c; pick the stored frame
        # so the error is a known constant field
        p, dt, c = 3, 0.5, 0.8
        u0 = np.full((p, p), 2.0)
        u1 = np.full((p, p), 2.3)  # prediction is 2.4, so error = 0.1
        ds = Dataset(frames=np.stack([u0, u1])[None], dt=dt, dx=1 / 3, pde_tag="heat")
        series = eval_metrics(drift_theta(c), StepperConfig(dt=dt, substeps=1), ds, 1)
        err, ref_norm = 0.1, np.sqrt(9 * 2.3**2)
        assert abs(series.max_abs[0] - err) <= 1e-12
        assert abs(series.mse[0] - err**2) <= 1e-13
        assert abs(series.rel[0] - err * 3 / ref_norm) <= 1e-13

    def test_error_scaling_homogeneity(self):
        # fixed reference frame, prediction error proportional to the drift c:
        # maxE scales with |c|, mse with c^2, rE with |c|
        p, dt = 8, 0.1
        rng = np.random.default_rng(61)
        base = rng.uniform(0.5, 1.0, size=(p, p))
        ds = Dataset(frames=np.stack([base, base])[None], dt=dt, dx=1 / p, pde_tag="heat")
        cfg = StepperConfig(dt=dt, substeps=1)
        r1 = eval_metrics(drift_theta(1.0), cfg, ds, 1)
        r2 = eval_metrics(drift_theta(-2.5), cfg, ds, 1)
        assert abs(r2.max_abs[0] - 2.5 * r1.max_abs[0]) <= 1e-12
        assert abs(r2.mse[0] - 2.5**2 * r1.mse[0]) <= 1e-12
        assert abs(r2.rel[0] - 2.5 * r1.rel[0]) <= 1e-12

    def test_decomposes_over_sequences(self):
        rng = np.random.default_rng(62)
        theta = init_params(2, 3, RELU, seed=13)
        cfg = StepperConfig(dt=0.02, substeps=2)
        frames = rng.uniform(0.3, 1.2, size=(5, 4, 8, 8))
        ds = Dataset(frames=frames, dt=cfg.dt, dx=1 / 8, pde_tag="heat")
        combined = eval_metrics(theta, cfg, ds, 3)
        singles = [
            eval_metrics(
                theta, cfg,
                Dataset(frames=frames[n : n + 1], dt=cfg.dt, dx=1 / 8, pde_tag="heat"),
                3,
            )
            for n in range(5)
        ]
        for m in range(3):
            assert combined.max_abs[m] == max(s.max_abs[m] for s in singles)
            assert abs(combined.mse[m] - np.mean([s.mse[m] for s in singles])) <= 1e-14
            assert abs(combined.rel[m] - np.mean([s.rel[m] for s in singles])) <= 1e-14

    def test_zero_norm_reference_frame_named(self):
        p = 8
        frames = np.zeros((1, 3, p, p))
        frames[0, 0] = 1.0
        frames[0, 1] = 0.5
        # frame (0, 2) stays identically zero
        ds = Dataset(frames=frames, dt=0.1, dx=1 / p, pde_tag="heat")
        with pytest.raises(DegenerateInputError) as err:
            eval_metrics(drift_theta(0.0), StepperConfig(dt=0.1), ds, 2)
        assert "n=0" in str(err.value) and "m=2" in str(err.value)

    def test_horizon_beyond_data_rejected(self):
        ds = Dataset(frames=np.ones((1, 3, 8, 8)), dt=0.1, dx=1 / 8, pde_tag="heat")
        with pytest.raises(ValueError):
            eval_metrics(drift_theta(0.0), StepperConfig(dt=0.1), ds, 5)


class TestCsv:
    def test_csv_layout(self, tmp_path):
        series = MetricSeries(horizon=2, max_abs=[0.5, 1.0], mse=[0.25, 1.0], rel=[0.1, 0.2])
        path = tmp_path / "metrics.csv"
        save_metrics_csv(series, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "m,maxE,mse,rE"
        assert len(lines) == 3
        assert lines[1].startswith("1,") and lines[2].startswith("2,")
