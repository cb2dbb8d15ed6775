import numpy as np
import pytest

from microgrid_ems.scenarios import (
    DiscreteDistribution,
    GeneratorConfig,
    ScenarioError,
    ScenarioSet,
    fit_ar,
    generate_scenarios,
    lloyd_max,
    load_distributions,
    load_scenarios,
    quantize_stagewise,
    save_distributions,
    save_scenarios,
    scenario_means,
    update_forecast,
)


def small_set(role="pool"):
    rng = np.random.default_rng(0)
    data = rng.uniform(0, 2, (12, 9, 2))
    return ScenarioSet(data=data, role=role)


class TestScenarioSet:
    def test_shape_validation(self):
        with pytest.raises(ScenarioError):
            ScenarioSet(data=np.zeros((3, 9)))

    def test_negative_hot_water_rejected(self):
        data = np.zeros((2, 5, 2))
        data[0, 1, 1] = -0.1
        with pytest.raises(ScenarioError):
            ScenarioSet(data=data)

    def test_roles(self):
        with pytest.raises(ScenarioError):
            ScenarioSet(data=np.zeros((1, 2, 2)), role="bogus")
        assert small_set("assessment").role == "assessment"

    def test_hygiene_blocks_assessment_data(self):
        s = small_set("assessment")
        with pytest.raises(ScenarioError, match="assessment"):
            fit_ar(s)
        with pytest.raises(ScenarioError, match="assessment"):
            scenario_means(s)
        with pytest.raises(ScenarioError, match="assessment"):
            quantize_stagewise(s, s=3)


class TestGenerator:
    def test_deterministic_given_seed(self):
        cfg = GeneratorConfig(pv_daily_kwh=10.0)
        a = generate_scenarios(cfg, 5, seed=4)
        b = generate_scenarios(cfg, 5, seed=4)
        np.testing.assert_array_equal(a.data, b.data)
        c = generate_scenarios(cfg, 5, seed=5)
        assert not np.array_equal(a.data, c.data)

    def test_hot_water_capped(self):
        cfg = GeneratorConfig(hw_events_per_window=6.0)
        s = generate_scenarios(cfg, 30, seed=1)
        assert np.max(s.data[:, :, 1]) <= cfg.d_hw_cap + 1e-12

    def test_pv_creates_negative_net_demand(self):
        cfg = GeneratorConfig(pv_daily_kwh=25.0)
        s = generate_scenarios(cfg, 20, seed=2)
        assert np.min(s.data[:, :, 0]) < 0.0

    def test_night_demand_low(self):
        cfg = GeneratorConfig()
        s = generate_scenarios(cfg, 50, seed=3)
        night = s.data[:, 8:16, 0]      # around 02:00-04:00
        evening = s.data[:, 78:86, 0]   # around 19:30-21:30
        assert night.mean() < evening.mean() / 3

    def test_from_dict_unknown_field(self):
        with pytest.raises(ScenarioError, match="unknown"):
            GeneratorConfig.from_dict({"bogus_field": 1})


class TestCsvRoundTrip:
    def test_round_trip(self, tmp_path):
        s = generate_scenarios(GeneratorConfig(horizon_steps=12), 4, seed=9)
        path = tmp_path / "scen.csv"
        save_scenarios(s, path)
        loaded = load_scenarios(path)
        np.testing.assert_array_equal(s.data, loaded.data)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(ScenarioError, match="header"):
            load_scenarios(path)

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("scenario,t,d_el_net,d_hw\n0,0,oops,1\n")
        with pytest.raises(ScenarioError, match=":2"):
            load_scenarios(path)


class TestFitAr:
    def test_hand_example(self):
        # pairs (0,1), (1,2), (2,4): least squares gives slope 3/2 and
        # intercept ybar - slope * xbar = 7/3 - 3/2 = 5/6
        data = np.zeros((3, 2, 2))
        data[:, 0, 0] = [0.0, 1.0, 2.0]
        data[:, 1, 0] = [1.0, 2.0, 4.0]
        data[:, 0, 1] = [0.0, 1.0, 2.0]
        data[:, 1, 1] = [1.0, 2.0, 4.0]
        ar = fit_ar(ScenarioSet(data=data, role="optimization"))
        assert ar.alpha[0, 0] == pytest.approx(1.5, abs=1e-12)
        assert ar.beta[0, 0] == pytest.approx(5.0 / 6.0, abs=1e-12)
        assert not ar.fallback[0, 0]

    def test_degenerate_regressor_falls_back(self):
        data = np.zeros((4, 2, 2))
        data[:, 1, 0] = [1.0, 2.0, 3.0, 4.0]  # constant regressor at t=0
        ar = fit_ar(ScenarioSet(data=data))
        assert ar.fallback[0, 0]
        assert ar.alpha[0, 0] == 0.0
        assert ar.beta[0, 0] == pytest.approx(2.5)

    def test_needs_two_scenarios(self):
        with pytest.raises(ScenarioError):
            fit_ar(ScenarioSet(data=np.zeros((1, 3, 2))))


class TestForecast:
    def test_first_step_uses_ar_then_means(self):
        s = small_set("optimization")
        ar = fit_ar(s)
        means = scenario_means(s)
        w = np.array([1.2, 0.4])
        f = update_forecast(ar, 2, w, means)
        assert f.shape == (s.horizon - 2, 2)
        expected = ar.alpha[2] * w + ar.beta[2]
        assert f[0, 0] == pytest.approx(expected[0])
        np.testing.assert_allclose(f[1:], np.maximum(
            means[4:], [[-np.inf, 0.0]]), atol=1e-12)

    def test_hot_water_clamped(self):
        s = small_set("optimization")
        ar = fit_ar(s)
        means = scenario_means(s)
        f = update_forecast(ar, 0, np.array([0.0, -50.0]), means)
        assert np.all(f[:, 1] >= 0.0)

    def test_step_range(self):
        s = small_set("optimization")
        ar = fit_ar(s)
        with pytest.raises(ScenarioError):
            update_forecast(ar, s.horizon, np.zeros(2), scenario_means(s))


class TestLloydMax:
    def test_four_point_example(self):
        result = lloyd_max(np.array([0.0, 0.0, 10.0, 10.0]), s=2, seed=0)
        d = result.distribution
        np.testing.assert_allclose(d.points[:, 0], [0.0, 10.0])
        np.testing.assert_allclose(d.weights, [0.5, 0.5])

    def test_saturated_collapses(self):
        result = lloyd_max(np.array([1.0, 1.0, 1.0]), s=2, seed=0)
        assert result.distribution.size == 1
        assert result.distribution.collapsed

    def test_distortion_non_increasing(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            pts = rng.standard_normal((60, 2)) * rng.uniform(0.5, 3)
            result = lloyd_max(pts, s=4, seed=trial)
            diffs = np.diff(result.distortions)
            assert np.all(diffs <= 1e-12)

    def test_weights_are_cell_frequencies(self):
        rng = np.random.default_rng(8)
        pts = np.concatenate([rng.normal(0, 0.1, 30), rng.normal(5, 0.1, 10)])
        d = lloyd_max(pts, s=2, seed=0).distribution
        assert sorted(d.weights) == pytest.approx([0.25, 0.75])

    def test_invalid_sizes(self):
        with pytest.raises(ScenarioError):
            lloyd_max(np.array([1.0]), s=2)


class TestQuantizeStagewise:
    def test_shapes_and_mass(self):
        s = small_set("optimization")
        dists = quantize_stagewise(s, s=3, seed=1)
        assert len(dists) == s.horizon
        for d in dists:
            assert d.size <= 3
            assert d.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_deterministic(self):
        s = small_set("optimization")
        a = quantize_stagewise(s, s=3, seed=1)
        b = quantize_stagewise(s, s=3, seed=1)
        for da, db in zip(a, b):
            np.testing.assert_array_equal(da.points, db.points)

    def test_json_round_trip(self, tmp_path):
        s = small_set("optimization")
        dists = quantize_stagewise(s, s=3, seed=1)
        path = tmp_path / "dists.json"
        save_distributions(dists, path)
        loaded = load_distributions(path)
        for da, db in zip(dists, loaded):
            np.testing.assert_array_equal(da.points, db.points)
            np.testing.assert_array_equal(da.weights, db.weights)


class TestDiscreteDistribution:
    def test_weight_validation(self):
        with pytest.raises(ScenarioError):
            DiscreteDistribution(points=np.zeros((2, 2)),
                                 weights=np.array([0.6, 0.6]))

    def test_distinct_points(self):
        with pytest.raises(ScenarioError):
            DiscreteDistribution(points=np.zeros((2, 2)),
                                 weights=np.array([0.5, 0.5]))

    def test_mean_and_sample(self):
        d = DiscreteDistribution(points=np.array([[0.0, 0.0], [2.0, 4.0]]),
                                 weights=np.array([0.25, 0.75]))
        np.testing.assert_allclose(d.mean(), [1.5, 3.0])
        rng = np.random.default_rng(0)
        assert d.sample(rng).shape == (2,)
