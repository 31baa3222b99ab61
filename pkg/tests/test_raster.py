import numpy as np
import pytest
from helpers import straight_track, two_lane_map

from hybridpred.data_io import SampleWindow, Track, TrackSet
from hybridpred.lane_geometry import Lane, LaneMap
from hybridpred.raster import (
    RasterConfig, RasterImage, RasterInputError, fade, rasterize, track_color, world_to_pixel,
)
from hybridpred.synth import SynthConfig, generate_synthetic

EMPTY = LaneMap([])
CFG = RasterConfig()


def ego_only(heading=0.0, x=5.0, y=-3.0, n=2):
    t = Track(1, np.arange(n), np.full(n, x), np.full(n, y), np.zeros(n), np.zeros(n),
              np.full(n, heading), np.full(n, 4.0), np.full(n, 2.0))
    return TrackSet([t])


def red_mask(img):
    p = img.pixels
    return (p[..., 0] == 255) & (p[..., 1] == 0) & (p[..., 2] == 0)


def test_world_to_pixel_examples():
    pose = (10.0, -4.0, 0.0)
    assert world_to_pixel(pose, (10.0, -4.0), CFG) == (48.0, 48.0)
    assert world_to_pixel(pose, (11.0, -4.0), CFG) == (52.0, 48.0)
    assert world_to_pixel(pose, (10.0, -2.0), CFG) == (48.0, 40.0)
    turned = (0.0, 0.0, np.pi / 2)
    px = world_to_pixel(turned, (0.0, 1.0), CFG)
    assert px == pytest.approx((52.0, 48.0))
    batch = world_to_pixel(pose, np.array([[10.0, -4.0], [11.0, -4.0]]), CFG)
    np.testing.assert_allclose(batch, [[48, 48], [52, 48]])


@pytest.mark.parametrize("heading", [0.0, 0.3, -1.2, np.pi, 2.5])
def test_ego_footprint_pixel_count(heading):
    img = rasterize(EMPTY, ego_only(heading), SampleWindow(1, 1, 1, 1), CFG)
    assert abs(red_mask(img).sum() - 128) <= 12.8
    assert img.pixels[48, 48, 0] == 255


def test_ego_rectangle_identical_across_scenes():
    a = rasterize(EMPTY, ego_only(0.3, 100.0, 50.0), SampleWindow(1, 1, 1, 1), CFG)
    b = rasterize(EMPTY, ego_only(-2.0, -7.0, 1.0), SampleWindow(1, 1, 1, 1), CFG)
    np.testing.assert_array_equal(red_mask(a), red_mask(b))


def test_static_ego_deterministic():
    ts = ego_only()
    a = rasterize(EMPTY, ts, SampleWindow(1, 1, 1, 0), CFG)
    b = rasterize(EMPTY, ts, SampleWindow(1, 1, 1, 0), CFG)
    assert a.to_bytes() == b.to_bytes()
    assert len(a.to_bytes()) == 3 * a.width * a.height


def test_background_black_and_others_use_green_blue_only():
    ts = TrackSet([straight_track(1, 0, 0, 5, 0, 12), straight_track(2, 8, 1, 5, 0, 12),
                   straight_track(3, -8, -2, 6, 0, 12, agent="truck")])
    img = rasterize(EMPTY, ts, SampleWindow(1, 11, 10, 0), CFG).pixels
    others = (img.sum(axis=2) > 0) & ~((img[..., 1] == 0) & (img[..., 2] == 0))
    assert others.any()
    assert np.all(img[others, 0] == 0)
    assert img[0, 0].tolist() == [0, 0, 0]


def test_track_colors_are_deterministic_green_blue():
    for tid in (1, 2, 17, 4242):
        c = track_color(tid)
        assert c[0] == 0 and 64 <= c[1] < 256 and 64 <= c[2] < 256
        assert c == track_color(tid)
    assert len({track_color(t) for t in range(50)}) > 40


def test_fading_history_is_monotone():
    # a small fast object: its past rectangles never overlap
    n = 11
    t = Track(2, np.arange(n), -6.0 + 1.0 * np.arange(n), np.full(n, 2.0), np.full(n, 10.0),
              np.zeros(n), np.zeros(n), np.full(n, 0.5), np.full(n, 0.5), "pedestrian")
    ts = TrackSet([t, *ego_only(x=0.0, y=-3.0, n=n)])
    img = rasterize(EMPTY, ts, SampleWindow(1, 10, 10, 0), CFG)
    color = np.array(track_color(2))
    bright = []
    for age in range(0, 11):
        px, py = world_to_pixel((0.0, -3.0, 0.0), (t.x[10 - age], t.y[10 - age]), CFG)
        pix = img.pixels[int(py), int(px)].astype(float)
        factor = 1.0 if age == 0 else fade(age, 10)
        np.testing.assert_allclose(pix, np.round(color * factor), atol=0.5)
        bright.append(pix.sum())
    assert all(a >= b for a, b in zip(bright, bright[1:]))
    assert fade(10, 10) == pytest.approx(0.1) and fade(0, 10) == 1.0


def test_map_colors():
    lane_map = two_lane_map()
    ts = TrackSet([straight_track(1, 50.0, 0.0, 5.0, 0.0, 3)])
    img = rasterize(lane_map, ts, SampleWindow(1, 1, 1, 1), CFG).pixels
    rgb = {tuple(v) for v in img.reshape(-1, 3)}
    assert (255, 255, 255) in rgb and (128, 128, 128) in rgb
    # the shared boundary is gray, the outer edges white
    col = img[:, 70]
    assert tuple(col[48 - 7]) == (128, 128, 128)
    assert tuple(col[48 + 7]) == (255, 255, 255)


def test_virtual_lanes_dashed_blue():
    lanes = [Lane("a", [[-40, 0], [40, 0]], 3.5), Lane("b", [[0, -40], [0, 40]], 3.5)]
    ts = TrackSet([straight_track(1, -6.0, 0.0, 5.0, 0.0, 3)])
    img = rasterize(LaneMap(lanes), ts, SampleWindow(1, 1, 1, 1), CFG).pixels
    blue = (img[..., 0] == 0) & (img[..., 1] == 0) & (img[..., 2] == 255)
    assert blue.sum() > 40
    row = blue[48 - 7]          # left boundary of the ego's lane
    runs = np.flatnonzero(np.diff(row.astype(int)))
    assert len(runs) >= 6        # alternating on/off segments


def test_missing_ego_state():
    with pytest.raises(RasterInputError):
        rasterize(EMPTY, ego_only(), SampleWindow(1, 5, 1, 1), CFG)
    with pytest.raises(RasterInputError):
        rasterize(EMPTY, ego_only(), SampleWindow(9, 1, 1, 1), CFG)


def test_rigid_motion_pixel_agreement():
    lane_map, ts = generate_synthetic(SynthConfig("lane_merge", 2, seed=9))
    rng = np.random.default_rng(0)
    tid = sorted(ts.tracks)[0]
    w = SampleWindow(tid, ts[tid].first_frame + 40, 10, 30)
    base = rasterize(lane_map, ts, w, CFG).pixels
    for _ in range(3):
        angle, shift = rng.uniform(-np.pi, np.pi), rng.uniform(-1e3, 1e3, size=2)
        moved = rasterize(lane_map.transformed(angle, shift), ts.transformed(angle, shift), w, CFG).pixels
        agree = np.all(base == moved, axis=2).mean()
        assert agree >= 0.999


def test_ppm_round_trip(tmp_path):
    img = rasterize(two_lane_map(), TrackSet([straight_track(1, 50.0, 0.0, 5.0, 0.0, 3)]),
                    SampleWindow(1, 1, 1, 1), CFG)
    img.write_ppm(tmp_path / "a.ppm", comment="config_hash=abc")
    raw = (tmp_path / "a.ppm").read_bytes()
    assert raw.startswith(b"P6\n# config_hash=abc\n96 96\n255\n")
    back = RasterImage.read_ppm(tmp_path / "a.ppm")
    assert back.to_bytes() == img.to_bytes()
    (tmp_path / "bad.ppm").write_bytes(b"P3\n1 1\n255\n000")
    with pytest.raises(ValueError):
        RasterImage.read_ppm(tmp_path / "bad.ppm")
    (tmp_path / "short.ppm").write_bytes(b"P6\n2 2\n255\n\x00\x00")
    with pytest.raises(ValueError):
        RasterImage.read_ppm(tmp_path / "short.ppm")


def test_config_validation():
    with pytest.raises(ValueError):
        RasterConfig(resolution=95)
    with pytest.raises(ValueError):
        RasterConfig(pixel_size=0.0)
    assert RasterConfig(resolution=224).extent == 56.0
