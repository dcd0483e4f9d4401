import numpy as np
import pytest

from helpers import make_frame, make_obstacle, make_vehicle, red_light_pair

from roadlogic.edl import TrainingSchedule, train
from roadlogic.geometry import Box
from roadlogic.perception import (
    BEV_CLASSES,
    PerceptionConfig,
    baseline_obstacle_label,
    bev_rasterize,
    collect_light_training,
    epis_ahead,
    extract_light_features,
    frame_rng,
    light_ground_truth,
    occlusion_check,
    perceive_recording,
    sense_frame,
)
from roadlogic.sim import EgoConfig, MapConfig, ObstacleSpec, Town, WorldConfig, run_scenario


def rng():
    return np.random.default_rng(0)


def intersection_frame(color="red", ego_x=108.0):
    return make_frame(
        [make_vehicle(0, ego_x, -1.75)],
        lights=red_light_pair(main=color),
        intersections=((113.0, -7.0, 127.0, 7.0),),
    )


class TestFeatures:
    def test_noiseless_red_signature(self):
        frame = intersection_frame("red")
        fv = extract_light_features(frame, PerceptionConfig(weather_noise=0.0), rng())
        assert fv.values[0] == 1.0 and fv.values[1] == 0.0 and fv.values[2] == 0.0
        assert 0.0 < fv.values[3] <= 1.0

    def test_no_light_null_signature(self):
        frame = make_frame([make_vehicle(0, 10.0, -1.75)])
        fv = extract_light_features(frame, PerceptionConfig(weather_noise=0.0), rng())
        assert np.allclose(fv.values, 0.0)

    def test_injective_over_states(self):
        signatures = set()
        for color in ("red", "yellow", "green"):
            fv = extract_light_features(
                intersection_frame(color), PerceptionConfig(weather_noise=0.0), rng()
            )
            signatures.add(tuple(fv.values))
        assert len(signatures) == 3

    def test_noise_applied(self):
        frame = intersection_frame("red")
        a = extract_light_features(frame, PerceptionConfig(weather_noise=1.0), np.random.default_rng(1))
        b = extract_light_features(frame, PerceptionConfig(weather_noise=1.0), np.random.default_rng(2))
        assert not np.allclose(a.values, b.values)


@pytest.fixture(scope="module")
def light_recordings():
    train_rec = run_scenario(WorldConfig(seed=100, duration_s=100.0, npc_count=6))
    eval_rec = run_scenario(WorldConfig(seed=101, duration_s=100.0, npc_count=6))
    return train_rec, eval_rec


def classifier_error(train_rec, eval_rec, noise):
    config = PerceptionConfig(weather_noise=noise)
    features, labels = collect_light_training(train_rec, config)
    model, _ = train(features, labels, TrainingSchedule(epochs=40, learning_rate=0.1, seed=5))
    eval_features, eval_labels = collect_light_training(eval_rec, config)
    predicted = model.alphas(eval_features).argmax(axis=1)
    return float((predicted != eval_labels.argmax(axis=1)).mean())


class TestClassifierOverWeather:
    def test_perfect_at_zero_noise(self, light_recordings):
        train_rec, eval_rec = light_recordings
        assert classifier_error(train_rec, eval_rec, 0.0) == 0.0

    def test_error_monotone_in_noise(self, light_recordings):
        train_rec, eval_rec = light_recordings
        errors = [classifier_error(train_rec, eval_rec, noise) for noise in (0.0, 0.5, 2.0)]
        assert errors[0] <= errors[1] <= errors[2]
        assert errors[2] > errors[1]


class TestOcclusion:
    def test_empty_scene_visible(self):
        frame = make_frame([make_vehicle(0, 0.0, 0.0)])
        assert occlusion_check(frame, 0, Box(20.0, -1.0, 24.0, 1.0))

    def test_blocker_on_segment(self):
        frame = make_frame([
            make_vehicle(0, 0.0, 0.0),
            make_vehicle(1, 11.0, 0.0),  # straddles the segment midpoint
        ])
        assert not occlusion_check(frame, 0, Box(20.0, -1.0, 24.0, 1.0))

    def test_blocker_offset_laterally(self):
        frame = make_frame([
            make_vehicle(0, 0.0, 0.0),
            make_vehicle(1, 11.0, 5.0),
        ])
        assert occlusion_check(frame, 0, Box(20.0, -1.0, 24.0, 1.0))

    def test_unknown_observer(self):
        frame = make_frame([make_vehicle(0, 0.0, 0.0)])
        with pytest.raises(KeyError):
            occlusion_check(frame, 9, Box(20.0, -1.0, 24.0, 1.0))


class TestBev:
    def make_town(self, blocks=1):
        return Town(MapConfig(blocks=blocks))

    def test_grid_shape(self):
        frame = make_frame([make_vehicle(0, 50.0, -1.75)])
        grid = bev_rasterize(frame, PerceptionConfig(), rng(), self.make_town())
        assert grid.shape == (100, 100)

    def test_road_cell_confident_drivable(self):
        frame = make_frame([make_vehicle(0, 50.0, -1.75)])
        grid = bev_rasterize(frame, PerceptionConfig(weather_noise=0.0), rng(), self.make_town())
        # cell directly ahead of the ego, on the road
        x, y = grid.world_points()
        mask = (np.abs(x - 60.0) <= 0.75) & (np.abs(y + 1.75) <= 0.75)
        idx = np.argwhere(mask)[0]
        cell = grid.alphas[idx[0], idx[1]]
        assert BEV_CLASSES[cell.argmax()] == "drivable"
        assert len(BEV_CLASSES) / cell.sum() < 0.1

    def test_animal_cells_keep_high_epistemic(self):
        animal = make_obstacle(0, 60.0, -1.75, "h0_e_0", kind="animal")
        frame = make_frame([make_vehicle(0, 50.0, -1.75)], obstacles=[animal])
        grid = bev_rasterize(frame, PerceptionConfig(weather_noise=0.5), rng(), self.make_town())
        x, y = grid.world_points()
        mask = (x >= animal.c1x - 0.5) & (x <= animal.c2x + 0.5) & (y >= animal.c1y - 0.5) & (y <= animal.c2y + 0.5)
        assert mask.any()
        assert grid.u_epis()[mask].mean() > 0.8

    def test_ood_separation_from_in_distribution(self):
        animal = make_obstacle(0, 60.0, -1.75, "h0_e_0", kind="animal")
        frame = make_frame([make_vehicle(0, 50.0, -1.75)], obstacles=[animal])
        grid = bev_rasterize(frame, PerceptionConfig(weather_noise=1.0), rng(), self.make_town())
        x, y = grid.world_points()
        ood = (x >= animal.c1x - 0.5) & (x <= animal.c2x + 0.5) & (y >= animal.c1y - 0.5) & (y <= animal.c2y + 0.5)
        epis = grid.u_epis()
        assert np.median(epis[ood]) - np.median(epis[~ood]) > 0.5

    def test_vehicle_cells_labeled(self):
        frame = make_frame([make_vehicle(0, 50.0, -1.75), make_vehicle(1, 60.0, -1.75)])
        grid = bev_rasterize(frame, PerceptionConfig(weather_noise=0.0), rng(), self.make_town())
        x, y = grid.world_points()
        mask = (np.abs(x - 60.0) <= 1.25) & (np.abs(y + 1.75) <= 0.75)
        classes = grid.class_index()[mask]
        assert (classes == BEV_CLASSES.index("vehicle")).any()

    def test_epis_ahead_sees_animal(self):
        town = self.make_town()
        animal = make_obstacle(0, 60.0, -1.75, "h0_e_0", kind="animal")
        frame = make_frame([make_vehicle(0, 50.0, -1.75)], obstacles=[animal])
        grid = bev_rasterize(frame, PerceptionConfig(weather_noise=0.5), rng(), town)
        assert epis_ahead(grid, frame, town) > 0.8
        clear = make_frame([make_vehicle(0, 50.0, -1.75)])
        grid2 = bev_rasterize(clear, PerceptionConfig(weather_noise=0.5), rng(), town)
        assert epis_ahead(grid2, clear, town) < 0.5


class TestSenseFrame:
    def test_ego_alone(self):
        town = Town(MapConfig())
        frame = make_frame([make_vehicle(0, 30.0, -1.75)])
        obs = sense_frame(frame, PerceptionConfig(), None, rng(), town)
        assert len(obs.vehicles) == 1 and obs.vehicles[0].id == 0
        assert obs.obstacles == ()
        assert obs.light is None

    def test_occluded_obstacle_missed(self):
        town = Town(MapConfig())
        blocker = make_vehicle(1, 60.0, -1.75)
        obstacle = make_obstacle(0, 70.0, -1.75, "h0_e_0")
        frame = make_frame([make_vehicle(0, 50.0, -1.75), blocker], obstacles=[obstacle])
        obs = sense_frame(frame, PerceptionConfig(), None, rng(), town)
        assert obs.obstacles == ()
        clear_frame = make_frame([make_vehicle(0, 50.0, -1.75)], obstacles=[obstacle])
        obs2 = sense_frame(clear_frame, PerceptionConfig(), None, rng(), town)
        assert len(obs2.obstacles) == 1

    def test_animals_never_detected(self):
        town = Town(MapConfig())
        animal = make_obstacle(0, 60.0, -1.75, "h0_e_0", kind="animal")
        frame = make_frame([make_vehicle(0, 50.0, -1.75)], obstacles=[animal])
        obs = sense_frame(frame, PerceptionConfig(), None, rng(), town)
        assert obs.obstacles == ()
        assert obs.bev_summary.max_epis_ahead > 0.8

    def test_out_of_range_missed(self):
        town = Town(MapConfig())
        far = make_vehicle(1, 150.0, -1.75)
        frame = make_frame([make_vehicle(0, 10.0, -1.75), far])
        obs = sense_frame(frame, PerceptionConfig(detection_range=60.0), None, rng(), town)
        assert [v.id for v in obs.vehicles] == [0]

    def test_miss_only_property(self):
        recording = run_scenario(WorldConfig(seed=21, duration_s=10.0, npc_count=12))
        observations = perceive_recording(recording, PerceptionConfig(), None, with_bev=False)
        for frame, obs in zip(recording.frames, observations):
            truth_ids = {v.id for v in frame.vehicles}
            assert {v.id for v in obs.vehicles} <= truth_ids
            truth_obstacles = {o.id for o in frame.obstacles}
            assert {o.id for o in obs.obstacles} <= truth_obstacles

    def test_reproducible(self):
        town = Town(MapConfig())
        animal = make_obstacle(0, 60.0, -1.75, "h0_e_0", kind="animal")
        frame = make_frame([make_vehicle(0, 50.0, -1.75)], obstacles=[animal])
        config = PerceptionConfig(weather_noise=0.7)
        a = sense_frame(frame, config, None, frame_rng(1, 0), town)
        b = sense_frame(frame, config, None, frame_rng(1, 0), town)
        assert np.array_equal(a.bev.alphas, b.bev.alphas)
        assert a.bev_summary == b.bev_summary


class TestFalseNegativeInjection:
    def test_flip_rate_degrades_recall(self):
        recording = run_scenario(
            WorldConfig(seed=31, duration_s=60.0, npc_count=4,
                        ego=EgoConfig(position_s=30.0))
        )
        clean_cfg = PerceptionConfig(weather_noise=0.0)
        features, labels = collect_light_training(recording, clean_cfg)
        model, _ = train(features, labels, TrainingSchedule(epochs=40, learning_rate=0.1, seed=2))

        noisy_cfg = PerceptionConfig(weather_noise=0.0, false_negative_rate=0.8)
        observations = perceive_recording(recording, noisy_cfg, model, with_bev=False)
        truths = [light_ground_truth(f) for f in recording.frames]
        red_frames = [i for i, t in enumerate(truths) if t]
        assert red_frames, "scenario produced no red frames"
        missed = [i for i in red_frames if not observations[i].light_red]
        assert len(missed) > 0.5 * len(red_frames)
        # flips only ever turn red into clear
        clean_obs = perceive_recording(recording, clean_cfg, model, with_bev=False)
        for noisy, clean in zip(observations, clean_obs):
            if clean.light_red is False:
                assert noisy.light_red is False


class TestBaselineObstacleLabel:
    def test_detected_ahead(self):
        town = Town(MapConfig())
        obstacle = make_obstacle(0, 70.0, -1.75, "h0_e_0")
        frame = make_frame([make_vehicle(0, 50.0, -1.75)], obstacles=[obstacle])
        obs = sense_frame(frame, PerceptionConfig(), None, rng(), town)
        assert baseline_obstacle_label(obs)

    def test_nothing_detected(self):
        town = Town(MapConfig())
        frame = make_frame([make_vehicle(0, 50.0, -1.75)])
        obs = sense_frame(frame, PerceptionConfig(), None, rng(), town)
        assert not baseline_obstacle_label(obs)
