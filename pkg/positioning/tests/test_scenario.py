import json
import math
import statistics
import time
from dataclasses import replace

import pytest

from positioning.services.exceptions import ConfigError
from positioning.services.geometry import Position
from positioning.services.reporting import emit_csv
from positioning.services.scenario import (
    LOS,
    NLOS,
    NoiseConfig,
    RstaSpec,
    ScenarioConfig,
    compare_scenarios,
    fig4a_scenario,
    injected_aoa_error,
    load_scenario,
    noise_profile,
    run_scenario,
)


def minimal_config(**overrides):
    data = {
        'name': 'corridor',
        'geometry': {'room': {'width_m': 10.0, 'depth_m': 4.0, 'height_m': 3.0}, 'ista': [1.0, 2.0, 1.0]},
        'rsta_specs': [{'label': 'a', 'position': [4.0, 2.0, 1.0], 'los_or_nlos': 'LOS'}],
        'repetitions': 2,
        'seed': 11,
    }
    data.update(overrides)
    return data


class RecordingProgress:
    def __init__(self):
        self.steps = []
        self.done = None

    def update(self, step, status, stage=None):
        self.steps.append((step, stage))

    def complete(self, status):
        self.done = status


class TestConfig:
    def test_from_dict(self):
        config = ScenarioConfig.from_dict(minimal_config())
        assert config.name == 'corridor'
        assert config.repetitions == 2
        assert config.rsta_specs[0].is_los
        assert config.ista_position.x_m == 1.0

    def test_dict_round_trip(self):
        config = fig4a_scenario(noise_profile('fig4b'), repetitions=3, seed=5)
        again = ScenarioConfig.from_dict(json.loads(json.dumps(config.to_dict())))
        assert again.to_dict() == config.to_dict()
        assert again.rsta_specs == config.rsta_specs

    @pytest.mark.parametrize('overrides, path', [
        ({'repetitions': 0}, 'repetitions'),
        ({'seed': -1}, 'seed'),
        ({'rsta_specs': []}, 'rsta_specs'),
        ({'rsta_specs': [{'label': 'a', 'position': [40.0, 2.0, 1.0]}]}, 'rsta_specs[0].position'),
        ({'rsta_specs': [{'label': 'a', 'position': [4.0, 2.0]}]}, 'rsta_specs[0].position'),
        ({'rsta_specs': [{'position': [4.0, 2.0, 1.0]}]}, 'rsta_specs[0].label'),
        ({'rsta_specs': [{'label': 'a', 'position': [4.0, 2.0, 1.0], 'los_or_nlos': 'maybe'}]},
         'rsta_specs[0].los_or_nlos'),
        ({'noise': 'loud'}, 'noise'),
        ({'noise': {'aoa_error_max_deg_los': -1.0}}, 'noise'),
        ({'array': {'bandwidth_ghz': 1.0}}, 'array'),
    ])
    def test_errors_name_the_field(self, overrides, path):
        with pytest.raises(ConfigError) as excinfo:
            ScenarioConfig.from_dict(minimal_config(**overrides))
        assert excinfo.value.path == path

    def test_missing_geometry(self):
        data = minimal_config()
        del data['geometry']
        with pytest.raises(ConfigError) as excinfo:
            ScenarioConfig.from_dict(data)
        assert excinfo.value.path == 'geometry'

    def test_ista_outside_the_room(self):
        data = minimal_config()
        data['geometry']['ista'] = [0.0, 2.0, 1.0]
        with pytest.raises(ConfigError) as excinfo:
            ScenarioConfig.from_dict(data)
        assert excinfo.value.path == 'geometry.ista'

    def test_duplicate_labels(self):
        spec = {'label': 'a', 'position': [4.0, 2.0, 1.0]}
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict(minimal_config(rsta_specs=[spec, dict(spec, position=[5.0, 2.0, 1.0])]))

    def test_reserved_label(self):
        with pytest.raises(ValueError):
            RstaSpec('ista', fig4a_scenario().ista_position)

    def test_load_scenario(self, tmp_path):
        path = tmp_path / 'scenario.json'
        path.write_text(json.dumps(minimal_config(noise='fig4b')), encoding='utf-8')
        config = load_scenario(path)
        assert config.noise.aoa_error_max_deg_los == 5.1
        assert config.noise.aoa_error_max_deg_nlos == 8.3

    def test_load_invalid_json(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{"name": ', encoding='utf-8')
        with pytest.raises(ConfigError):
            load_scenario(path)

    def test_noise_profiles(self, settings):
        settings.FTM_TIMESTAMP_JITTER_PS = 50.0
        assert noise_profile('none') == NoiseConfig()
        assert noise_profile('fig4b') == NoiseConfig(50.0, 5.1, 8.3)
        assert noise_profile('az').aoa_error_max_deg_los < noise_profile('fig4b').aoa_error_max_deg_los
        with pytest.raises(ConfigError):
            noise_profile('loud')

    def test_overrides_ignore_none(self):
        config = fig4a_scenario(repetitions=4)
        assert config.with_overrides(repetitions=None, seed=9) == replace(config, seed=9)

    def test_default_scenarios(self):
        config = fig4a_scenario()
        kinds = [spec.los_or_nlos for spec in config.rsta_specs]
        assert kinds == [LOS] * 3 + [NLOS] * 3
        assert all(spec.position.z_m == 1.0 for spec in config.rsta_specs)
        for scenario, distance in zip(compare_scenarios(), (7.0, 7.07, 9.0, 11.2, 14.2)):
            spec = scenario.rsta_specs[0]
            assert scenario.ista_position.distance_to(spec.position) == pytest.approx(distance)


class TestRunScenario:
    def test_noiseless_room_scenario_is_exact(self):
        result = run_scenario(fig4a_scenario())
        assert set(result.per_rsta) == {'los-2m', 'los-4m', 'los-8m', 'nlos-2m', 'nlos-4m', 'nlos-8m'}
        for label, outcomes in result.per_rsta.items():
            assert len(outcomes) == 1
            assert outcomes[0].position_error_cm < 1e-4, label
            assert outcomes[0].distance_error_cm < 1e-4, label
            assert (outcomes[0].los_likelihood >= 0.5) == label.startswith('los')

    def test_same_seed_same_csv(self, tmp_path):
        config = fig4a_scenario(noise_profile('fig4b'), repetitions=3, seed=21)
        first = emit_csv(run_scenario(config), tmp_path / 'first.csv').read_bytes()
        second = emit_csv(run_scenario(config), tmp_path / 'second.csv').read_bytes()
        assert first == second

    def test_seed_changes_the_draws(self):
        config = fig4a_scenario(noise_profile('fig4b'), repetitions=2, seed=1)
        assert run_scenario(config).per_rsta != run_scenario(replace(config, seed=2)).per_rsta

    def test_aoa_error_bounds_the_position_error(self):
        base = fig4a_scenario(NoiseConfig(0.0, 5.1, 8.3), repetitions=100, seed=7)
        config = replace(base, rsta_specs=tuple(s for s in base.rsta_specs if s.label == 'los-2m'))
        outcomes = run_scenario(config).per_rsta['los-2m']
        errors = [o.position_error_cm for o in outcomes]
        assert len(errors) == 100
        assert max(errors) <= 2 * 200 * math.sin(math.radians(2.55)) + 1e-3
        for outcome in outcomes:
            assert abs(outcome.aoa_error_deg) <= 5.1 + 1e-6
            expected = 2 * 200 * math.sin(math.radians(abs(outcome.aoa_error_deg)) / 2)
            assert outcome.position_error_cm == pytest.approx(expected, abs=1e-3)

    def test_two_metre_los_error_distribution(self):
        config = fig4a_scenario(NoiseConfig(0.0, 5.1, 8.3), seed=7)
        spec = next(s for s in config.rsta_specs if s.label == 'los-2m')
        errors = [
            2 * 200 * math.sin(math.radians(abs(injected_aoa_error(config, spec, repetition, 2.0))) / 2)
            for repetition in range(2000)
        ]
        assert max(errors) <= 18.0
        assert statistics.median(errors) < 10.0

    def test_los_stations_see_smaller_angle_errors(self):
        result = run_scenario(fig4a_scenario(noise_profile('fig4b'), repetitions=10, seed=3))
        los = [abs(o.aoa_error_deg) for label, v in result.per_rsta.items() if label.startswith('los') for o in v]
        nlos = [abs(o.aoa_error_deg) for label, v in result.per_rsta.items() if label.startswith('nlos') for o in v]
        assert max(los) <= 5.1 + 1e-6 < max(nlos)
        assert max(nlos) <= 8.3 + 1e-6

    @pytest.mark.parametrize('path_length_m', [2.0, 4.0, 8.0])
    def test_los_median_angle_error_is_lower_at_equal_path_length(self, path_length_m):
        config = fig4a_scenario(noise_profile('fig4b'), seed=3)
        los = RstaSpec('los', Position(0.0, 0.0, 1.0), LOS)
        nlos = RstaSpec('nlos', Position(0.0, 0.0, 1.0), NLOS)
        los_errors = [abs(injected_aoa_error(config, los, r, path_length_m)) for r in range(2000)]
        nlos_errors = [abs(injected_aoa_error(config, nlos, r, path_length_m)) for r in range(2000)]
        assert statistics.median(los_errors) < statistics.median(nlos_errors)
        assert max(los_errors) <= 5.1
        assert max(nlos_errors) <= 8.3

    def test_no_injected_error_without_noise(self):
        config = fig4a_scenario()
        assert injected_aoa_error(config, config.rsta_specs[0], 0, 2.0) == 0.0

    def test_room_scenario_runs_within_ten_seconds(self):
        started = time.perf_counter()
        result = run_scenario(fig4a_scenario(repetitions=100))
        elapsed = time.perf_counter() - started
        assert all(error < 1e-4 for error in result.errors_cm())
        assert len(result.errors_cm()) == 600
        assert elapsed < 10.0

    def test_seven_metre_comparison_median(self):
        config = next(c for c in compare_scenarios(noise_profile('az'), repetitions=100) if c.name == '7m')
        errors = run_scenario(config).errors_cm()
        assert len(errors) == 100
        assert 1.0 <= statistics.median(errors) <= 10.0

    def test_legacy_mismatch_mode_runs(self):
        result = run_scenario(fig4a_scenario(legacy_mismatch=True))
        assert all(len(outcomes) == 1 for outcomes in result.per_rsta.values())

    def test_progress_is_reported(self):
        progress = RecordingProgress()
        config = ScenarioConfig.from_dict(minimal_config())
        result = run_scenario(config, progress)
        assert [step for step, _ in progress.steps] == [1, 2]
        assert progress.steps[-1][1] == '2/2'
        assert progress.done is not None
        assert result.repetitions == 2
