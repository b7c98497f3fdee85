import math

import numpy as np
import pytest

from mscsp.augment import EraseConfig, NoiseConfig
from mscsp.codec import Detection, ImageSize, encode_targets
from mscsp.formats import (
    ParseError,
    RunConfig,
    default_config,
    fuse_annotation_dirs,
    load_annotation_dir,
    load_image,
    parse_annotations,
    parse_config,
    parse_detections,
    read_target_maps,
    save_image,
    write_annotations,
    write_config,
    write_detections,
    write_target_maps,
)
from mscsp.geometry import Annotation, BBox, Label, Occlusion, SubsetSpec


def rand_annotations(rng, n):
    out = []
    for _ in range(n):
        out.append(
            Annotation(
                BBox(rng.uniform(0, 400), rng.uniform(0, 300), rng.uniform(0.5, 80), rng.uniform(2, 120)),
                list(Label)[int(rng.integers(0, 4))],
                Occlusion(int(rng.integers(0, 3))),
            )
        )
    return out


class TestAnnotations:
    def test_basic_line(self, tmp_path):
        p = tmp_path / "frame7.txt"
        p.write_text("person 10 10 20 40 0\n")
        frame_id, anns = parse_annotations(p)
        assert frame_id == "frame7"
        assert anns == [Annotation(BBox(10, 10, 20, 40), Label.PERSON, Occlusion.NONE)]

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.txt"
        p.write_text("")
        assert parse_annotations(p) == ("empty", [])

    def test_comments_and_blanks_skipped(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("# header\n\nperson 1 2 3 4 1\n")
        _, anns = parse_annotations(p)
        assert len(anns) == 1 and anns[0].occlusion is Occlusion.PARTIAL

    def test_negative_width_positioned_error(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("person 10 10 -5 40 0\n")
        with pytest.raises(ParseError, match="bad.txt:1.*non-positive width"):
            parse_annotations(p)

    def test_unknown_label(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("person 1 1 5 5 0\ndog 1 1 5 5 0\n")
        with pytest.raises(ParseError, match="bad.txt:2.*unknown label"):
            parse_annotations(p)

    def test_wrong_token_count(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("person 1 1 5 5\n")
        with pytest.raises(ParseError, match="expected 6 tokens"):
            parse_annotations(p)

    def test_bad_occlusion(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("person 1 1 5 5 7\n")
        with pytest.raises(ParseError, match="occlusion"):
            parse_annotations(p)

    def test_write_parse_round_trip(self, tmp_path):
        rng = np.random.default_rng(101)
        for i in range(30):
            p = tmp_path / f"rt{i}.txt"
            anns = rand_annotations(rng, int(rng.integers(0, 6)))
            write_annotations(p, anns)
            _, parsed = parse_annotations(p)
            write_annotations(tmp_path / "again.txt", parsed)
            assert (tmp_path / "again.txt").read_text() == p.read_text()


class TestDetections:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(102)
        for i in range(30):
            dets = {
                f"fr{k}": [
                    Detection(
                        BBox(rng.uniform(0, 300), rng.uniform(0, 300),
                             rng.uniform(1, 60), rng.uniform(2, 140)),
                        float(rng.uniform(0, 1)),
                    )
                    for _ in range(int(rng.integers(0, 5)))
                ]
                for k in range(int(rng.integers(1, 4)))
            }
            p = tmp_path / f"d{i}.txt"
            write_detections(p, dets)
            parsed = parse_detections(p)
            write_detections(tmp_path / "again.txt", parsed)
            assert (tmp_path / "again.txt").read_text() == p.read_text()

    def test_score_out_of_range(self, tmp_path):
        p = tmp_path / "d.txt"
        p.write_text("f0 1 1 5 5 1.5\n")
        with pytest.raises(ParseError, match="outside"):
            parse_detections(p)

    def test_frame_grouping(self, tmp_path):
        p = tmp_path / "d.txt"
        p.write_text("a 1 1 5 5 0.5\nb 1 1 5 5 0.4\na 2 2 5 5 0.3\n")
        parsed = parse_detections(p)
        assert list(parsed) == ["a", "b"]
        assert len(parsed["a"]) == 2

    def test_whitespace_frame_id_rejected_on_write(self, tmp_path):
        with pytest.raises(ValueError, match="whitespace"):
            write_detections(tmp_path / "d.txt", {"bad id": []})


class TestTargetMapDump:
    def test_round_trip_exact_float32(self, tmp_path):
        rng = np.random.default_rng(103)
        for i in range(10):
            h = Annotation(BBox(40, 40, 16.4, 40), Label.PERSON, Occlusion.NONE)
            maps = encode_targets([h], ImageSize(width=128, height=96))
            maps.center += rng.uniform(0, 1e-3, maps.center.shape)
            maps.center = np.clip(maps.center, 0, 1)
            p = tmp_path / f"m{i}.bin"
            write_target_maps(p, maps)
            back = read_target_maps(p)
            write_target_maps(tmp_path / "again.bin", back)
            assert (tmp_path / "again.bin").read_bytes() == p.read_bytes()
            assert back.shape == maps.shape
            assert np.array_equal(back.center, maps.center.astype(np.float32).astype(np.float64))

    def test_positive_mask_recovered(self, tmp_path):
        ann = Annotation(BBox(40, 40, 16.4, 40), Label.PERSON, Occlusion.NONE)
        maps = encode_targets([ann], ImageSize(width=128, height=96))
        p = tmp_path / "m.bin"
        write_target_maps(p, maps)
        back = read_target_maps(p)
        assert np.array_equal(back.positive_mask, maps.positive_mask)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "m.bin"
        p.write_bytes(b"WRONG!" + b"\x00" * 40)
        with pytest.raises(ParseError, match="magic"):
            read_target_maps(p)

    def test_truncated(self, tmp_path):
        ann = Annotation(BBox(40, 40, 16.4, 40), Label.PERSON, Occlusion.NONE)
        maps = encode_targets([ann], ImageSize(width=128, height=96))
        p = tmp_path / "m.bin"
        write_target_maps(p, maps)
        p.write_bytes(p.read_bytes()[:-10])
        with pytest.raises(ParseError, match="truncated"):
            read_target_maps(p)


class TestFuseAnnotationDirs:
    def fill(self, d, name, lines):
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(lines)

    def test_identical_dirs_identity(self, tmp_path):
        line = "person 10 10 20 40 0\n"
        self.fill(tmp_path / "vis", "f0.txt", line)
        self.fill(tmp_path / "ir", "f0.txt", line)
        fused = fuse_annotation_dirs(tmp_path / "vis", tmp_path / "ir")
        assert fused["f0"] == [Annotation(BBox(10, 10, 20, 40), Label.PERSON, Occlusion.NONE)]

    def test_union_example(self, tmp_path):
        self.fill(tmp_path / "vis", "f0.txt", "person 10 10 20 40 1\n")
        self.fill(tmp_path / "ir", "f0.txt", "person 12 8 20 44 0\n")
        fused = fuse_annotation_dirs(tmp_path / "vis", tmp_path / "ir")
        assert fused["f0"][0].box == BBox(10, 8, 22, 44)
        # label and occlusion come from the VIS entry
        assert fused["f0"][0].occlusion is Occlusion.PARTIAL

    def test_line_count_mismatch(self, tmp_path):
        self.fill(tmp_path / "vis", "f0.txt", "person 1 1 5 5 0\n" * 3)
        self.fill(tmp_path / "ir", "f0.txt", "person 1 1 5 5 0\n" * 2)
        with pytest.raises(ParseError, match="line-count mismatch.*f0.*3.*2"):
            fuse_annotation_dirs(tmp_path / "vis", tmp_path / "ir")

    def test_file_set_mismatch(self, tmp_path):
        self.fill(tmp_path / "vis", "f0.txt", "")
        self.fill(tmp_path / "vis", "f1.txt", "")
        self.fill(tmp_path / "ir", "f0.txt", "")
        with pytest.raises(ParseError, match="only in vis.*f1"):
            fuse_annotation_dirs(tmp_path / "vis", tmp_path / "ir")


class TestConfig:
    def test_defaults_without_file(self):
        cfg = default_config()
        assert cfg.codec.nms_threshold == 0.3
        assert cfg.codec.confidence_threshold == 0.01
        assert cfg.codec.aspect_ratio == 0.41
        assert cfg.input_size == (384, 480)
        assert cfg.training.learning_rate == pytest.approx(1e-4)
        assert cfg.training.epochs == 100
        assert cfg.training.samples_per_epoch == 2000
        assert cfg.training.batch_size == 12

    def test_missing_keys_take_defaults(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("codec.nms_threshold = 0.4\n")
        cfg = parse_config(p)
        assert cfg.codec.nms_threshold == 0.4
        assert cfg.codec.confidence_threshold == 0.01

    def test_unknown_key_is_hard_error(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("codec.nms_threshold = 0.4\nbogus.key = 1\n")
        with pytest.raises(ParseError, match="run.cfg:2.*unknown key"):
            parse_config(p)

    def test_duplicate_key_rejected(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("seed = 1\nseed = 2\n")
        with pytest.raises(ParseError, match="duplicate"):
            parse_config(p)

    def test_comments_allowed(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("# run settings\nseed = 9\n")
        assert parse_config(p).seed == 9

    def test_subset_parsing(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("subset.small = 20 40 none|partial|heavy\n")
        cfg = parse_config(p)
        assert cfg.subsets["small"] == SubsetSpec(
            "Small", 20.0, 40.0, frozenset(Occlusion)
        )
        assert "reasonable" in cfg.subsets  # defaults kept

    def test_default_subsets_match_protocol(self):
        cfg = default_config()
        r = cfg.subsets["reasonable"]
        assert r.min_height == 55.0 and math.isinf(r.max_height)
        assert r.allowed_occlusion == frozenset({Occlusion.NONE, Occlusion.PARTIAL})
        a = cfg.subsets["all"]
        assert a.min_height == 0.0 and a.allowed_occlusion == frozenset(Occlusion)

    def test_stage_list_and_noise_models(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text(
            "augment.stages = geometric erasing-sync masking noise\n"
            "augment.noise_vis_model = gaussian\n"
            "augment.noise_ir_model = poisson\n"
        )
        cfg = parse_config(p)
        assert cfg.stages == ("geometric", "erasing-sync", "masking", "noise")
        assert cfg.augment.noise.vis_model == "gaussian"
        assert cfg.augment.noise.ir_model == "poisson"

    def test_invalid_stage_rejected(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("augment.stages = warp\n")
        with pytest.raises(ParseError, match="invalid stage"):
            parse_config(p)

    def test_write_parse_write_fixed_point(self, tmp_path):
        rng = np.random.default_rng(104)
        for i in range(20):
            cfg = default_config()
            cfg.seed = int(rng.integers(0, 10_000))
            cfg.codec = type(cfg.codec)(
                stride=4,
                confidence_threshold=float(np.round(rng.uniform(0.001, 0.9), 6)),
                nms_threshold=float(np.round(rng.uniform(0.1, 0.9), 6)),
                aspect_ratio=float(np.round(rng.uniform(0.2, 0.8), 6)),
                gaussian_sigma_factor=float(np.round(rng.uniform(0.05, 0.5), 6)),
            )
            cfg.augment = type(cfg.augment)(
                target_size=(int(rng.integers(32, 500)), int(rng.integers(32, 600))),
                erase=EraseConfig(probability=float(np.round(rng.uniform(0, 1), 6))),
                noise=NoiseConfig(vis_model="gaussian", ir_model="salt_pepper"),
            )
            a = tmp_path / f"a{i}.cfg"
            b = tmp_path / f"b{i}.cfg"
            write_config(a, cfg)
            write_config(b, parse_config(a))
            assert a.read_text() == b.read_text()

    def test_size_bins(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("eval.size_bins = 20-40 40-inf\n")
        cfg = parse_config(p)
        assert cfg.size_bins == ((20.0, 40.0), (40.0, math.inf))


class TestImages:
    def test_round_trip_rgb_and_gray(self, tmp_path):
        rng = np.random.default_rng(105)
        vis = np.round(rng.uniform(size=(3, 20, 30)) * 255) / 255
        ir = np.round(rng.uniform(size=(1, 20, 30)) * 255) / 255
        save_image(tmp_path / "v.png", vis)
        save_image(tmp_path / "i.png", ir)
        assert np.allclose(load_image(tmp_path / "v.png", 3), vis, atol=1e-9)
        assert np.allclose(load_image(tmp_path / "i.png", 1), ir, atol=1e-9)

    def test_annotation_dir_loader(self, tmp_path):
        (tmp_path / "f1.txt").write_text("person 1 1 5 9 0\n")
        (tmp_path / "f0.txt").write_text("")
        loaded = load_annotation_dir(tmp_path)
        assert list(loaded) == ["f0", "f1"]

    def test_empty_annotation_dir_rejected(self, tmp_path):
        with pytest.raises(ParseError, match="no annotation files"):
            load_annotation_dir(tmp_path)
