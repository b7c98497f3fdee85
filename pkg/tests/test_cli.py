import numpy as np
import pytest

from mscsp.cli import main
from mscsp.codec import ImageSize, decode_detections
from mscsp.formats import (
    parse_annotations,
    parse_detections,
    read_target_maps,
    save_image,
    write_annotations,
)
from mscsp.geometry import Annotation, BBox, Label, Occlusion


@pytest.fixture
def gt_dir(tmp_path):
    d = tmp_path / "gt"
    d.mkdir()
    (d / "f0.txt").write_text("person 10 10 24.6 60 0\nperson 100 10 12.3 30 0\n")
    (d / "f1.txt").write_text("person 50 50 20.5 50 2\n")
    return d


@pytest.fixture
def det_file(tmp_path):
    p = tmp_path / "dets.txt"
    p.write_text(
        "f0 10 10 24.6 60 0.9\n"
        "f0 300 200 10 25 0.4\n"
        "f1 50 50 20.5 50 0.8\n"
    )
    return p


class TestEncodeDecode:
    def test_encode_then_decode_recovers_boxes(self, tmp_path):
        ann_path = tmp_path / "frameA.txt"
        write_annotations(
            ann_path,
            [Annotation(BBox(187.6, 60, 24.6, 60), Label.PERSON, Occlusion.NONE)],
        )
        maps_path = tmp_path / "frameA.maps"
        assert main(["encode", "--ann", str(ann_path), "--out", str(maps_path)]) == 0
        maps = read_target_maps(maps_path)
        assert maps.shape == (96, 120)

        det_path = tmp_path / "out.txt"
        assert main(["decode", "--maps", str(maps_path), "--out", str(det_path)]) == 0
        dets = parse_detections(det_path)
        assert list(dets) == ["frameA"]
        assert len(dets["frameA"]) == 1
        box = dets["frameA"][0].box
        assert box.h == pytest.approx(60, rel=1e-4)
        assert box.x == pytest.approx(187.6, abs=0.01)

    def test_encode_respects_explicit_size(self, tmp_path):
        ann_path = tmp_path / "f.txt"
        write_annotations(ann_path, [])
        out = tmp_path / "f.maps"
        main(["encode", "--ann", str(ann_path), "--height", "64", "--width", "80", "--out", str(out)])
        assert read_target_maps(out).shape == (16, 20)

    def test_decode_matches_library(self, tmp_path):
        ann_path = tmp_path / "g.txt"
        anns = [Annotation(BBox(100.2, 80.7, 16.4, 40), Label.PERSON, Occlusion.NONE)]
        write_annotations(ann_path, anns)
        maps_path = tmp_path / "g.maps"
        main(["encode", "--ann", str(ann_path), "--out", str(maps_path)])
        det_path = tmp_path / "g_dets.txt"
        main(["decode", "--maps", str(maps_path), "--out", str(det_path)])
        lib = decode_detections(read_target_maps(maps_path), ImageSize(480, 384))
        cli = parse_detections(det_path)["g"]
        assert len(cli) == len(lib) == 1
        assert cli[0].box.h == pytest.approx(lib[0].box.h, rel=1e-6)

    def test_error_exit_code_and_prefix(self, tmp_path, capsys):
        code = main(["encode", "--ann", str(tmp_path / "missing.txt"), "--out", "x"])
        assert code == 2
        err = capsys.readouterr().err
        assert err.startswith("error:")
        assert err.strip().count("\n") == 0


class TestSimulate:
    def test_report_line(self, capsys):
        assert main(["simulate", "--topology", "late-fusion", "--input", "64x80"]) == 0
        out = capsys.readouterr().out
        assert "head maps: 16x20" in out
        assert "total parameters:" in out

    def test_report_written_to_file(self, tmp_path):
        out = tmp_path / "report.txt"
        main(["simulate", "--topology", "vis-only", "--input", "64x80", "--out", str(out)])
        assert "head maps: 16x20" in out.read_text()

    def test_bad_size_is_cli_error(self, capsys):
        assert main(["simulate", "--topology", "vis-only", "--input", "60x80"]) == 2
        assert capsys.readouterr().err.startswith("error:")


class TestAugmentCommand:
    def make_pairs(self, tmp_path, n=2, h=48, w=64):
        rng = np.random.default_rng(7)
        root = tmp_path / "pairs"
        for sub in ("vis", "ir", "ann"):
            (root / sub).mkdir(parents=True)
        for i in range(n):
            save_image(root / "vis" / f"p{i}.png", rng.uniform(size=(3, h, w)))
            save_image(root / "ir" / f"p{i}.png", rng.uniform(size=(1, h, w)))
            write_annotations(
                root / "ann" / f"p{i}.txt",
                [Annotation(BBox(5, 5, 10, 20), Label.PERSON, Occlusion.NONE)],
            )
        return root

    def write_cfg(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "augment.stages = geometric erasing-sync masking\n"
            "augment.target_height = 32\n"
            "augment.target_width = 40\n"
        )
        return cfg

    def test_outputs_and_audit_log(self, tmp_path):
        root = self.make_pairs(tmp_path)
        cfg = self.write_cfg(tmp_path)
        out = tmp_path / "aug"
        log = tmp_path / "params.log"
        code = main([
            "augment", "--pairs", str(root), "--out", str(out),
            "--config", str(cfg), "--seed", "3", "--dump-params", str(log),
        ])
        assert code == 0
        for sub in ("vis", "ir", "ann"):
            assert sorted(p.name for p in (out / sub).iterdir()) == (
                [f"p0.png", f"p1.png"] if sub != "ann" else ["p0.txt", "p1.txt"]
            )
        lines = log.read_text().splitlines()
        assert len(lines) == 2  # one audit line per image pair
        assert lines[0].startswith("p0 ") and "stage=geometric" in lines[0]

    def test_byte_identical_reruns(self, tmp_path):
        root = self.make_pairs(tmp_path)
        cfg = self.write_cfg(tmp_path)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            main(["augment", "--pairs", str(root), "--out", str(out),
                  "--config", str(cfg), "--seed", "3"])
            outs.append(out)
        for sub in ("vis", "ir", "ann"):
            for f in sorted((outs[0] / sub).iterdir()):
                assert f.read_bytes() == (outs[1] / sub / f.name).read_bytes()

    def test_missing_ir_frame_is_error(self, tmp_path, capsys):
        root = self.make_pairs(tmp_path)
        (root / "ir" / "p1.png").unlink()
        assert main(["augment", "--pairs", str(root), "--out", str(tmp_path / "x")]) == 2
        assert "p1" in capsys.readouterr().err


class TestEvaluateCommand:
    def test_report_and_curves(self, tmp_path, gt_dir, det_file, capsys):
        out_dir = tmp_path / "eval"
        code = main([
            "evaluate", "--dets", str(det_file), "--ann", str(gt_dir),
            "--out-dir", str(out_dir),
        ])
        assert code == 0
        text = capsys.readouterr().out
        assert "Reasonable" in text and "All" in text
        report = (out_dir / "report.txt").read_text()
        assert "Reasonable" in report
        curves = sorted(p.name for p in out_dir.glob("curve_*.csv"))
        assert "curve_Reasonable.csv" in curves
        header = (out_dir / "curve_Reasonable.csv").read_text().splitlines()[0]
        assert header == "fppi,miss_rate"

    def test_unknown_subset(self, gt_dir, det_file, capsys):
        assert main(["evaluate", "--dets", str(det_file), "--ann", str(gt_dir),
                     "--subset", "unreasonable"]) == 2
        assert "unknown subset" in capsys.readouterr().err

    def test_custom_subset_from_config(self, tmp_path, gt_dir, det_file, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("subset.tall = 45 inf none|partial|heavy\n")
        code = main(["evaluate", "--dets", str(det_file), "--ann", str(gt_dir),
                     "--subset", "tall", "--config", str(cfg)])
        assert code == 0
        assert "Tall" in capsys.readouterr().out


class TestFuseAnnotationsCommand:
    def test_union_output(self, tmp_path):
        vis, ir = tmp_path / "vis", tmp_path / "ir"
        vis.mkdir(), ir.mkdir()
        (vis / "f0.txt").write_text("person 10 10 20 40 0\n")
        (ir / "f0.txt").write_text("person 12 8 20 44 0\n")
        out = tmp_path / "fused"
        assert main(["fuse-annotations", "--vis", str(vis), "--ir", str(ir),
                     "--out", str(out)]) == 0
        _, anns = parse_annotations(out / "f0.txt")
        assert anns[0].box == BBox(10, 8, 22, 44)

    def test_mismatch_is_error(self, tmp_path, capsys):
        vis, ir = tmp_path / "vis", tmp_path / "ir"
        vis.mkdir(), ir.mkdir()
        (vis / "f0.txt").write_text("person 1 1 5 5 0\n")
        (ir / "f0.txt").write_text("person 1 1 5 5 0\nperson 2 2 5 5 0\n")
        assert main(["fuse-annotations", "--vis", str(vis), "--ir", str(ir),
                     "--out", str(tmp_path / "o")]) == 2
        assert "line-count mismatch" in capsys.readouterr().err


class TestPlotCommand:
    def test_writes_vector_figure(self, tmp_path):
        csv = tmp_path / "curve.csv"
        csv.write_text("fppi,miss_rate\n0.01,0.9\n0.1,0.5\n1,0.2\n")
        out = tmp_path / "fig.pdf"
        assert main(["plot", "--curves", str(csv), "--out", str(out)]) == 0
        assert out.read_bytes().startswith(b"%PDF")

    def test_svg_output(self, tmp_path):
        csv = tmp_path / "curve.csv"
        csv.write_text("fppi,miss_rate\n0.5,0.5\n")
        out = tmp_path / "fig.svg"
        main(["plot", "--curves", str(csv), "--labels", "demo", "--out", str(out)])
        assert b"<svg" in out.read_bytes()[:500]

    def test_missing_header_is_error(self, tmp_path, capsys):
        csv = tmp_path / "c.csv"
        csv.write_text("0.5,0.5\n")
        assert main(["plot", "--curves", str(csv), "--out", str(tmp_path / "f.pdf")]) == 2
        assert "header" in capsys.readouterr().err


class TestDeterminismAcrossCommands:
    def test_encode_byte_identical(self, tmp_path):
        ann_path = tmp_path / "f.txt"
        write_annotations(
            ann_path, [Annotation(BBox(100.2, 80.7, 16.4, 40), Label.PERSON, Occlusion.NONE)]
        )
        a, b = tmp_path / "a.maps", tmp_path / "b.maps"
        main(["encode", "--ann", str(ann_path), "--out", str(a)])
        main(["encode", "--ann", str(ann_path), "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()
