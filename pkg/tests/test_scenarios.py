import numpy as np

from vastream.cross_camera import load_trajectory_log, three_camera_log
from vastream.domain import load_profile, load_trace, mbps
from vastream.motion import load_mv_log
from vastream.scenarios import (
    DEMO_CHUNKS,
    asset_path,
    demo_profile,
    demo_trace,
    load_demo,
    toy_scenario,
    toy_trace,
    write_demo_assets,
)


def test_bundled_assets_match_generators(tmp_path):
    fresh = write_demo_assets(tmp_path)
    for name, path in fresh.items():
        assert path.read_bytes() == asset_path(name).read_bytes(), name


def test_demo_profile_round_trips():
    prof = load_profile(asset_path("profile"), asset_path("complexity"))
    ref = demo_profile()
    assert np.array_equal(prof.accuracy, ref.accuracy)
    assert np.array_equal(prof.size_bytes, ref.size_bytes)
    assert prof.n_chunks == DEMO_CHUNKS and prof.n_configs == 216


def test_demo_trace_range():
    tr = load_trace(asset_path("trace"))
    assert tr.bandwidth.min() == mbps(0.2) and tr.bandwidth.max() == mbps(2.0)
    assert tr.duration == 600.0
    assert np.array_equal(tr.bandwidth, demo_trace().bandwidth)


def test_demo_scenario_shapes(demo):
    assert len(demo.feature_maps) == DEMO_CHUNKS
    assert demo.feature_maps[0].values.shape == (68, 120)
    assert load_mv_log(asset_path("mv_log")).shape[1] == 7
    assert load_demo(with_maps=False).feature_maps is None


def test_fixture_file_is_three_camera_log():
    assert load_trajectory_log(asset_path("trajectories")).visits == three_camera_log().visits


def test_toy_scenario():
    sc = toy_scenario()
    assert len(sc.space) == 4 and sc.profile.n_chunks == 60
    tr = toy_trace()
    assert sorted(set(tr.bandwidth)) == [60_000.0, 300_000.0]
    assert toy_trace(5.0).bytes_until(16.0) == tr.bytes_until(16.0)
