import numpy as np
import pytest

from indoorloc.config import SceneConfig
from indoorloc.errors import ConfigError
from indoorloc.scene import build_scene, build_scene_spec, scene_hue_band


@pytest.fixture(scope="module")
def config():
    return SceneConfig(num_scenes=4)


class TestBuildScene:
    def test_deterministic(self, config):
        spec1, mesh1, b1 = build_scene(2, 123, config)
        spec2, mesh2, b2 = build_scene(2, 123, config)
        assert spec1.to_json() == spec2.to_json()
        assert mesh1.tobytes() == mesh2.tobytes()
        np.testing.assert_array_equal(b1.min_corner, b2.min_corner)
        np.testing.assert_array_equal(b1.max_corner, b2.max_corner)

    def test_scene_ids_differ(self, config):
        spec0, mesh0, _ = build_scene(0, 123, config)
        spec1, mesh1, _ = build_scene(1, 123, config)
        assert spec0.palette != spec1.palette
        assert spec0.objects != spec1.objects
        assert mesh0.tobytes() != mesh1.tobytes()

    def test_seed_changes_scene(self, config):
        a = build_scene_spec(0, 1, config)
        b = build_scene_spec(0, 2, config)
        assert a.to_json() != b.to_json()

    def test_single_scene_rejected(self):
        cfg = SceneConfig(num_scenes=1)
        with pytest.raises(ConfigError):
            build_scene_spec(0, 1, cfg)

    def test_scene_id_out_of_range(self, config):
        with pytest.raises(ValueError):
            build_scene_spec(4, 1, config)
        with pytest.raises(ValueError):
            build_scene_spec(-1, 1, config)

    def test_objects_strictly_inside_room(self, config):
        for sid in range(4):
            spec = build_scene_spec(sid, 55, config)
            w, d, h = spec.room_size
            assert 3 <= len(spec.objects) <= 8
            for obj in spec.objects:
                lo = np.array(obj.min_corner)
                hi = np.array(obj.max_corner)
                assert np.all(lo < hi)
                assert np.all(lo > 0) and np.all(hi < [w, d, h])

    def test_room_mesh_structure(self, config):
        spec, mesh, bounds = build_scene(0, 9, config)
        # shell (12) + 12 per object
        assert mesh.num_triangles == 12 + 12 * len(spec.objects)
        assert np.all(mesh.vertices >= bounds.min_corner - 1e-12)
        assert np.all(mesh.vertices <= bounds.max_corner + 1e-12)
        np.testing.assert_allclose(bounds.extent, spec.room_size)

    def test_hue_bands_disjoint(self, config):
        bands = [scene_hue_band(i, 4, 0.04) for i in range(4)]
        for i in range(4):
            assert bands[i][0] < bands[i][1]
            if i:
                assert bands[i - 1][1] < bands[i][0]

    def test_palettes_use_own_band(self, config):
        import colorsys

        for sid in range(4):
            spec = build_scene_spec(sid, 7, config)
            lo, hi = scene_hue_band(sid, 4, config.hue_margin)
            for color in spec.palette:
                hue = colorsys.rgb_to_hsv(*color)[0]
                assert lo - 1e-9 <= hue <= hi + 1e-9
