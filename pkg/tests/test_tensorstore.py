"""Container round-trips, manifest validation and config parsing."""

import json

import numpy as np
import pytest

from l2a.tensorstore import (
    ConfigError,
    DatasetManifest,
    ManifestError,
    TensorFormatError,
    as_mask,
    as_video,
    load_manifest,
    load_run_config,
    manifest_from_dict,
    manifest_to_dict,
    read_tensor,
    run_config_from_dict,
    run_config_to_dict,
    save_manifest,
    write_tensor,
)


def _video(rng, t=4, h=6, w=5, c=2):
    return rng.random((t, h, w, c)).astype(np.float32)


def _mask(rng, t=4, h=6, w=5):
    return (rng.random((t, h, w)) < 0.5).astype(np.uint8)


class TestTensorContainer:
    def test_video_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        vid = _video(rng)
        p = tmp_path / "clip.ten"
        write_tensor(p, vid)
        back = read_tensor(p)
        assert back.dtype == np.float32
        assert back.shape == vid.shape
        assert np.array_equal(back, vid)

    def test_mask_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        m = _mask(rng)
        p = tmp_path / "mask.ten"
        write_tensor(p, m)
        back = read_tensor(p)
        assert back.dtype == np.uint8
        assert np.array_equal(back, m)

    def test_header_line_then_raw_payload(self, tmp_path):
        # A single f32 zero: header JSON line, newline, then exactly 4 payload bytes.
        arr = np.zeros((1, 1, 1, 1), dtype=np.float32)
        p = tmp_path / "tiny.ten"
        write_tensor(p, arr)
        blob = p.read_bytes()
        nl = blob.index(b"\n")
        header = json.loads(blob[:nl].decode("utf-8"))
        assert header == {"shape": [1, 1, 1, 1], "dtype": "f32"}
        assert blob[nl + 1 :] == b"\x00\x00\x00\x00"

    def test_payload_is_little_endian_row_major(self, tmp_path):
        arr = np.arange(6, dtype=np.float32).reshape(1, 2, 3, 1)
        p = tmp_path / "order.ten"
        write_tensor(p, arr / 10.0)
        blob = p.read_bytes()
        payload = blob[blob.index(b"\n") + 1 :]
        decoded = np.frombuffer(payload, dtype="<f4")
        assert np.array_equal(decoded, (arr / 10.0).ravel(order="C"))

    def test_video_domain_enforced(self, tmp_path):
        bad = np.full((2, 2, 2, 1), 1.5, dtype=np.float32)
        with pytest.raises(TensorFormatError):
            write_tensor(tmp_path / "bad.ten", bad)

    def test_mask_domain_enforced(self, tmp_path):
        bad = np.full((2, 2, 2), 3, dtype=np.uint8)
        with pytest.raises(TensorFormatError):
            write_tensor(tmp_path / "bad.ten", bad)

    def test_raw_tensor_may_leave_unit_interval(self, tmp_path):
        # 2-D f32 is a raw tensor (checkpoint weights), only finiteness is checked.
        w = np.array([[3.0, -2.5]], dtype=np.float32)
        p = tmp_path / "w.ten"
        write_tensor(p, w)
        assert np.array_equal(read_tensor(p), w)
        with pytest.raises(TensorFormatError):
            write_tensor(tmp_path / "nan.ten", np.array([[np.nan]], dtype=np.float32))

    def test_truncated_payload_rejected(self, tmp_path):
        rng = np.random.default_rng(2)
        p = tmp_path / "trunc.ten"
        write_tensor(p, _video(rng))
        blob = p.read_bytes()
        p.write_bytes(blob[:-3])
        with pytest.raises(TensorFormatError):
            read_tensor(p)

    def test_garbage_header_rejected(self, tmp_path):
        p = tmp_path / "junk.ten"
        p.write_bytes(b"not json at all\n\x00\x00")
        with pytest.raises(TensorFormatError):
            read_tensor(p)

    def test_unknown_dtype_tag_rejected(self, tmp_path):
        p = tmp_path / "odd.ten"
        p.write_bytes(b'{"shape":[1],"dtype":"f64"}\n' + b"\x00" * 8)
        with pytest.raises(TensorFormatError):
            read_tensor(p)

    def test_as_video_and_as_mask_validate(self):
        rng = np.random.default_rng(3)
        v = as_video(rng.random((2, 3, 3, 1)))
        assert v.dtype == np.float32
        m = as_mask((rng.random((2, 3, 3)) < 0.5).astype(np.uint8))
        assert m.dtype == np.uint8
        with pytest.raises(TensorFormatError):
            as_video(rng.random((3, 3)))  # wrong rank
        with pytest.raises(TensorFormatError):
            as_mask(np.zeros((2, 3, 3, 1), dtype=np.uint8))


def _manifest_dict():
    return {
        "classes": [
            {"id": 0, "name": "hop", "embedding": [1.0, 0.0]},
            {"id": 1, "name": "spin", "embedding": [0.9, 0.1]},
        ],
        "samples": [
            {"id": "s0", "class": 0, "video": "v0.ten", "mask": "m0.ten", "split": "train-labeled"},
            {"id": "s1", "class": 1, "video": "v1.ten", "mask": "m1.ten", "split": "val"},
        ],
    }


class TestManifest:
    def test_round_trip(self, tmp_path):
        man = manifest_from_dict(_manifest_dict())
        p = tmp_path / "manifest.json"
        save_manifest(man, p)
        back = load_manifest(p)
        assert manifest_to_dict(back) == manifest_to_dict(man)
        assert back.root == tmp_path

    def test_duplicate_sample_id_rejected(self):
        d = _manifest_dict()
        d["samples"].append(dict(d["samples"][0]))
        with pytest.raises(ManifestError, match="duplicate sample"):
            manifest_from_dict(d)

    def test_duplicate_class_id_rejected(self):
        d = _manifest_dict()
        d["classes"].append({"id": 0, "name": "dup", "embedding": [0.0, 1.0]})
        with pytest.raises(ManifestError, match="duplicate class"):
            manifest_from_dict(d)

    def test_unknown_class_reference_rejected(self):
        d = _manifest_dict()
        d["samples"][0]["class"] = 7
        with pytest.raises(ManifestError, match="unknown class"):
            manifest_from_dict(d)

    def test_class_with_zero_samples_rejected(self):
        d = _manifest_dict()
        d["classes"].append({"id": 2, "name": "ghost", "embedding": [0.0, 1.0]})
        with pytest.raises(ManifestError, match="zero samples"):
            manifest_from_dict(d)

    def test_embedding_dim_mismatch_rejected(self):
        d = _manifest_dict()
        d["classes"][1]["embedding"] = [1.0, 0.0, 0.0]
        with pytest.raises(ManifestError, match="dimension"):
            manifest_from_dict(d)

    def test_bad_split_tag_rejected(self):
        d = _manifest_dict()
        d["samples"][0]["split"] = "training"
        with pytest.raises(ManifestError, match="split"):
            manifest_from_dict(d)

    def test_optional_fields_survive_round_trip(self):
        d = _manifest_dict()
        d["samples"][0]["actor_mask"] = "a0.ten"
        d["samples"][0]["camera_motion"] = 0.25
        d["world"] = {"grid": 4}
        man = manifest_from_dict(d)
        s0 = man.sample_by_id("s0")
        assert s0.actor_mask_path == "a0.ten"
        assert s0.camera_motion == 0.25
        assert manifest_to_dict(man)["samples"][0]["camera_motion"] == 0.25

    def test_lookups(self):
        man = manifest_from_dict(_manifest_dict())
        assert man.class_by_id(1).name == "spin"
        assert [s.sample_id for s in man.samples_in_split("val")] == ["s1"]
        assert [s.sample_id for s in man.samples_of_class(0)] == ["s0"]
        with pytest.raises(ManifestError):
            man.sample_by_id("nope")

    def test_save_is_deterministic_bytes(self, tmp_path):
        man = manifest_from_dict(_manifest_dict())
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_manifest(man, p1)
        save_manifest(man, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestRunConfig:
    def test_defaults_match_published_recipe(self):
        cfg = run_config_from_dict({"dataset": "d/manifest.json"})
        assert cfg.optimizer.lr0 == 0.1
        assert cfg.optimizer.momentum == 0.9
        assert cfg.optimizer.weight_decay == 0.001
        assert cfg.optimizer.batch_size == 8
        assert cfg.selector.window == 5
        assert cfg.selector.omega_min == 0.6
        assert cfg.features.frames == 8
        assert cfg.pairing == "semantic"

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            run_config_from_dict({"dataset": "d", "leraning_rate": 0.1})

    def test_unknown_section_key_rejected(self):
        with pytest.raises(ConfigError, match="optimizer"):
            run_config_from_dict({"dataset": "d", "optimizer": {"lr": 0.1}})

    def test_out_of_range_values_rejected(self):
        with pytest.raises(ConfigError, match="momentum"):
            run_config_from_dict({"dataset": "d", "optimizer": {"momentum": 1.0}})
        with pytest.raises(ConfigError, match="omega_min"):
            run_config_from_dict({"dataset": "d", "selector": {"omega_min": 1.5}})
        with pytest.raises(ConfigError, match="labeled_fraction"):
            run_config_from_dict({"dataset": "d", "split": {"labeled_fraction": 0.0}})

    def test_needs_dataset_or_world(self):
        with pytest.raises(ConfigError, match="dataset"):
            run_config_from_dict({"seed": 1})

    def test_bad_enum_values_rejected(self):
        with pytest.raises(ConfigError, match="pairing"):
            run_config_from_dict({"dataset": "d", "pairing": "alphabetical"})
        with pytest.raises(ConfigError, match="setting"):
            run_config_from_dict({"dataset": "d", "setting": "zero-shot"})
        with pytest.raises(ConfigError, match="reward_sign"):
            run_config_from_dict({"dataset": "d", "selector": {"reward_sign": "flip"}})

    def test_round_trip_through_json(self, tmp_path):
        src = {
            "dataset": "d/manifest.json",
            "seed": 7,
            "selector": {"hidden": [16, 8], "budget": 40},
            "classifier_hidden": [32],
        }
        p = tmp_path / "run.json"
        p.write_text(json.dumps(src))
        cfg = load_run_config(p)
        assert cfg.selector.hidden == (16, 8)
        assert cfg.selector.budget == 40
        assert cfg.classifier_hidden == (32,)
        d = run_config_to_dict(cfg)
        assert d["selector"]["hidden"] == [16, 8]
        cfg2 = run_config_from_dict(d)
        assert cfg2 == cfg
