import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hairadapt.body import (
    SurfacePoint,
    compute_valid_regions,
    load_body,
    load_mesh_obj,
    load_skeleton_json,
    validate_pair,
)
from hairadapt.config import AdaptationConfig, load_config, save_config
from hairadapt.hair import (
    HairFileError,
    Hairstyle,
    hairstyle_to_bytes,
    load_hairstyle,
    save_hairstyle,
)
from hairadapt.synthetic import write_body_files


def make_hair(positions, counts):
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return Hairstyle(np.asarray(positions, dtype=np.float64), offsets)


class TestHairFile:
    def test_minimal_file(self, tmp_path):
        path = tmp_path / "one.hair"
        payload = b"HAIR" + struct.pack("<II", 1, 1) + struct.pack("<I", 2)
        payload += struct.pack("<6f", 0, 0, 0, 0, 1, 0)
        path.write_bytes(payload)
        hair = load_hairstyle(path)
        assert hair.n_particles == 2
        assert hair.n_strands == 1
        np.testing.assert_allclose(hair.positions[1], [0, 1, 0])

    def test_round_trip_bytes(self, tmp_path, small_hair):
        path = tmp_path / "rt.hair"
        save_hairstyle(path, small_hair)
        raw = path.read_bytes()
        again = load_hairstyle(path)
        save_hairstyle(path, again)
        assert path.read_bytes() == raw
        assert hairstyle_to_bytes(again) == raw

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(min_value=2, max_value=9), min_size=1, max_size=8),
           st.integers(min_value=0, max_value=2**31))
    def test_round_trip_random(self, counts, seed):
        import tempfile

        rng = np.random.default_rng(seed)
        n = sum(counts)
        hair = make_hair(rng.normal(size=(n, 3)).astype(np.float32), counts)
        raw = hairstyle_to_bytes(hair)
        with tempfile.NamedTemporaryFile(suffix=".hair") as f:
            f.write(raw)
            f.flush()
            again = load_hairstyle(f.name)
        assert hairstyle_to_bytes(again) == raw
        assert np.array_equal(again.offsets, hair.offsets)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.hair"
        p.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(HairFileError) as exc:
            load_hairstyle(p)
        assert exc.value.offset == 0

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "trunc.hair"
        p.write_bytes(b"HAIR" + struct.pack("<II", 1, 1) + struct.pack("<I", 5))
        with pytest.raises(HairFileError) as exc:
            load_hairstyle(p)
        assert exc.value.offset == 16

    def test_non_finite(self, tmp_path):
        p = tmp_path / "nan.hair"
        data = b"HAIR" + struct.pack("<II", 1, 1) + struct.pack("<I", 2)
        data += struct.pack("<6f", 0, 0, 0, np.nan, 0, 0)
        p.write_bytes(data)
        with pytest.raises(HairFileError):
            load_hairstyle(p)

    def test_large_fixture_scale(self, tmp_path):
        # same strand/particle scale as a dense production curly style
        strands = 113_000
        per = 26  # ~2.9M particles
        rng = np.random.default_rng(0)
        base = rng.normal(size=(strands, 3)).astype(np.float32)
        path = tmp_path / "big.hair"
        with open(path, "wb") as f:
            f.write(b"HAIR" + struct.pack("<II", 1, strands))
            offsets = np.tile(np.arange(per, dtype=np.float32)[:, None], (1, 3))
            for s in range(strands):
                f.write(struct.pack("<I", per))
                f.write((base[s][None, :] * 0.01 + offsets * 0.001).astype("<f4").tobytes())
        hair = load_hairstyle(path)
        assert hair.n_strands == strands
        assert hair.n_particles == strands * per
        assert hair.n_particles > 2_900_000

    def test_strand_iteration_partition(self, small_hair):
        seen = np.zeros(small_hair.n_particles, dtype=int)
        for s in range(small_hair.n_strands):
            seen[small_hair.strand_slice(s)] += 1
        assert np.all(seen == 1)
        assert small_hair.strand_counts.sum() == small_hair.n_particles


class TestBodyIO:
    def test_obj_and_skeleton_round_trip(self, tmp_path, small_body):
        mesh, skel = write_body_files(small_body, tmp_path, "b")
        body = load_body(mesh, skel)
        np.testing.assert_allclose(body.vertices, small_body.vertices, atol=1e-8)
        assert np.array_equal(body.faces, small_body.faces)
        assert [b.name for b in body.bones] == [b.name for b in small_body.bones]

    def test_single_bone_region_is_everything(self, tmp_path):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
        faces = np.array([[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
        (tmp_path / "t.obj").write_text(
            "".join(f"v {v[0]} {v[1]} {v[2]}\n" for v in verts)
            + "".join(f"f {f[0]+1} {f[1]+1} {f[2]+1}\n" for f in faces)
        )
        doc = {
            "bones": [{"name": "only", "head": [0, 0, 0], "tail": [0, 1, 0]}],
            "weights": [{"0": 1.0} for _ in verts],
        }
        (tmp_path / "t.json").write_text(json.dumps(doc))
        body = load_body(tmp_path / "t.obj", tmp_path / "t.json")
        assert len(body.valid_regions[0]) == len(faces)

    def test_threshold_includes_both_regions(self):
        faces = np.array([[0, 1, 2]])
        from scipy import sparse

        weights = sparse.csr_matrix(np.array([[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]))
        regions = compute_valid_regions(faces, weights, clip=0.3)
        assert 0 in regions[0] and 0 in regions[1]

    def test_unnormalized_weights_warn(self, tmp_path):
        (tmp_path / "m.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        doc = {
            "bones": [{"name": "b", "head": [0, 0, 0], "tail": [1, 0, 0]}],
            "weights": [{"0": 0.97}, {"0": 1.0}, {"0": 1.0}],
        }
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.warns(UserWarning, match="renormalized"):
            bones, w = load_skeleton_json(tmp_path / "m.json", 3)
        assert abs(w[0].sum() - 1.0) < 1e-12

    def test_non_triangle_face_rejected(self, tmp_path):
        (tmp_path / "q.obj").write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        with pytest.raises(ValueError, match="triangle"):
            load_mesh_obj(tmp_path / "q.obj")

    def test_zero_length_bone_rejected(self, tmp_path, small_body):
        mesh, skel = write_body_files(small_body, tmp_path, "z")
        doc = json.loads(open(skel).read())
        doc["bones"][0]["tail"] = doc["bones"][0]["head"]
        open(skel, "w").write(json.dumps(doc))
        with pytest.raises(ValueError, match="zero length"):
            load_body(mesh, skel)


class TestValidatePair:
    def test_reflexive(self, small_body):
        assert validate_pair(small_body, small_body)

    def test_scaled_vertices_pass(self, small_pair):
        src, tgt = small_pair
        assert validate_pair(src, tgt)

    def test_flipped_winding_fails(self, small_body):
        from dataclasses import replace

        faces = small_body.faces.copy()
        faces[7] = faces[7][::-1]
        other = replace(small_body, faces=faces, _queries=None)
        report = validate_pair(small_body, other)
        assert not report
        assert "face 7" in report.mismatch


class TestSurfacePoint:
    def test_valid(self):
        sp = SurfacePoint(3, np.array([0.2, 0.3, 0.5]))
        assert sp.face == 3

    def test_invalid_sum(self):
        with pytest.raises(ValueError):
            SurfacePoint(0, np.array([0.5, 0.2, 0.2]))

    def test_negative(self):
        with pytest.raises(ValueError):
            SurfacePoint(0, np.array([-0.1, 0.6, 0.5]))


class TestConfig:
    def test_defaults(self):
        cfg = AdaptationConfig()
        assert cfg.alpha == 3e3 and cfg.beta == 1e3
        assert cfg.k == 5 and cfg.eps_c == 5e-4 and cfg.eps_s == 0.3
        assert cfg.sigma_bone == 100.0 and cfg.sigma_gamma == 0.2

    def test_round_trip(self, tmp_path):
        cfg = AdaptationConfig(alpha=10, k=3, n_guides=7, chart_kind="tutte")
        save_config(tmp_path / "c.cfg", cfg)
        assert load_config(tmp_path / "c.cfg") == cfg

    def test_unknown_key_rejected(self, tmp_path):
        (tmp_path / "c.cfg").write_text("alpha = 1\nbogus = 2\n")
        with pytest.raises(ValueError, match="bogus"):
            load_config(tmp_path / "c.cfg")

    def test_invalid_values(self):
        with pytest.raises(ValueError):
            AdaptationConfig(alpha=-1)
        with pytest.raises(ValueError):
            AdaptationConfig(k=0)
