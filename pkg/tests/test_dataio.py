import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from contextmix.dataio import (
    MLCC_PRESET,
    DatasetManifest,
    ManifestError,
    PPMError,
    SynthSpec,
    decode_ppm,
    encode_ppm,
    generate_synthetic,
    load_manifest,
    long_tailed_counts,
    quantize,
    read_ppm,
    split_manifest,
    synth_image,
    write_manifest,
    write_mix_records,
    write_ppm,
)
from contextmix.metrics import mean_ir
from contextmix.mixers import MixOutcome, MixPolicy, mix_batch, one_hot, passthrough
from contextmix.sampling import CropBox


class TestPPM:
    def test_single_red_pixel_bytes(self):
        assert encode_ppm(np.array([[[1.0, 0.0, 0.0]]])) == b"P6\n1 1\n255\n\xff\x00\x00"

    def test_grey_uses_p5(self):
        assert encode_ppm(np.zeros((1, 2, 1))).startswith(b"P5\n2 1\n255\n")

    @given(st.tuples(st.integers(1, 6), st.integers(1, 6)).flatmap(lambda s: arrays(np.uint8, s + (3,))))
    def test_round_trip_bit_exact(self, codes):
        img = codes / 255.0
        data = encode_ppm(img)
        back = decode_ppm(data)
        assert np.array_equal(quantize(back), codes)
        assert encode_ppm(back) == data

    def test_file_round_trip(self, tmp_path, random_image):
        img = quantize(random_image(5, 4)) / 255.0
        write_ppm(img, tmp_path / "a.ppm")
        assert read_ppm(tmp_path / "a.ppm").tobytes() == img.tobytes()

    def test_header_comments(self):
        img = decode_ppm(b"P6\n# made by hand\n1 1\n255\n\x00\x80\xff")
        assert quantize(img).tolist() == [[[0, 128, 255]]]

    @pytest.mark.parametrize(
        "data,msg",
        [
            (b"P3\n1 1\n255\n000", "bad magic"),
            (b"P6\n2 2\n255\n\x00\x00", "unexpected end of data"),
            (b"P6\n1 1\n65535\n\x00\x00\x00", "maxval must be 255"),
            (b"P6\n1", "unexpected end of data"),
        ],
    )
    def test_errors(self, data, msg):
        with pytest.raises(PPMError, match=msg):
            decode_ppm(data)


class TestManifest:
    def test_empty_file(self, tmp_path):
        (tmp_path / "m.tsv").write_text("")
        with pytest.raises(ManifestError, match="no entries"):
            load_manifest(tmp_path / "m.tsv")

    def test_file_order(self, tmp_path):
        (tmp_path / "m.tsv").write_text("b.ppm\t1\na.ppm\t0\nc.ppm\t2\n")
        m = load_manifest(tmp_path / "m.tsv")
        assert [e[0] for e in m.entries] == ["b.ppm", "a.ppm", "c.ppm"]
        assert m.n_classes == 3

    def test_out_of_range_names_line(self, tmp_path):
        (tmp_path / "m.tsv").write_text("a.ppm\t0\nimg.ppm\t12\n")
        with pytest.raises(ManifestError, match=r"m\.tsv:2"):
            load_manifest(tmp_path / "m.tsv", n_classes=10)

    def test_malformed_line(self, tmp_path):
        (tmp_path / "m.tsv").write_text("a.ppm 0\n")
        with pytest.raises(ManifestError, match=":1"):
            load_manifest(tmp_path / "m.tsv")

    def test_missing_file(self, tmp_path):
        with pytest.raises((ManifestError, OSError)):
            load_manifest(tmp_path / "none.tsv")

    def test_undecodable_image(self, tmp_path):
        (tmp_path / "bad.ppm").write_bytes(b"junk")
        (tmp_path / "m.tsv").write_text("bad.ppm\t0\n")
        with pytest.raises(ManifestError, match="cannot decode"):
            load_manifest(tmp_path / "m.tsv").load_image(0)

    def test_write_load_round_trip(self, tmp_path):
        m = DatasetManifest([("x.ppm", 0), ("y.ppm", 1)], ["normal", "chip"], tmp_path)
        write_manifest(m, tmp_path / "m.tsv")
        back = load_manifest(tmp_path / "m.tsv")
        assert back.entries == m.entries and back.class_names == m.class_names

    def test_split_is_stratified_and_disjoint(self):
        entries = [(f"{c}_{i}.ppm", c) for c, n in enumerate([40, 10, 3]) for i in range(n)]
        m = DatasetManifest(entries, ["a", "b", "c"])
        tr, va = split_manifest(m, 0.2, seed=1)
        assert len(tr) + len(va) == len(m)
        assert not {e[0] for e in tr.entries} & {e[0] for e in va.entries}
        assert all(n > 0 for n in tr.class_counts()) and all(n > 0 for n in va.class_counts())
        assert split_manifest(m, 0.2, seed=1)[1].entries == va.entries


class TestSynthetic:
    def test_counts_and_mean_ir(self, tmp_path):
        spec = SynthSpec(class_counts=[30, 3, 2], image_size=16, seed=4)
        m = generate_synthetic(spec, tmp_path)
        assert len(m) == 35 and m.class_counts() == [30, 3, 2]
        assert mean_ir(m.class_counts()) == pytest.approx((1 + 10 + 15) / 3)
        assert load_manifest(tmp_path / "manifest.tsv").entries == m.entries

    def test_spec_example_mean_ir(self):
        assert mean_ir([1000, 100, 50]) == pytest.approx(10.333333333, abs=1e-9)

    def test_single_class(self, tmp_path):
        m = generate_synthetic(SynthSpec(class_counts=[4], image_size=16), tmp_path)
        assert mean_ir(m.class_counts()) == 1.0

    def test_deterministic(self, tmp_path):
        spec = SynthSpec(class_counts=[3, 2, 2], image_size=16, seed=9)
        generate_synthetic(spec, tmp_path / "a")
        generate_synthetic(spec, tmp_path / "b")
        for f in sorted((tmp_path / "a" / "images").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / "images" / f.name).read_bytes()

    def test_defects_are_small_and_class_zero_clean(self):
        spec = SynthSpec(class_counts=[5] * 10, image_size=32, seed=2)
        for cls in range(10):
            for i in range(5):
                _, mask = synth_image(spec, cls, i)
                frac = mask.mean()
                if cls == 0:
                    assert frac == 0.0
                else:
                    assert 0.0 < frac <= spec.max_defect_fraction

    def test_shape_and_range(self):
        img, mask = synth_image(SynthSpec(class_counts=[1, 1], image_size=24, seed=0), 1, 0)
        assert img.shape == (24, 24, 3) and mask.shape == (24, 24)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            SynthSpec(class_counts=[2], image_size=12)

    def test_long_tail_presets(self):
        counts = long_tailed_counts(10, 5000, 12.0)
        assert sum(counts) == 5000 and counts == sorted(counts, reverse=True)
        assert abs(mean_ir(counts) - 12.0) < 0.1
        mlcc = long_tailed_counts(MLCC_PRESET["n_classes"], MLCC_PRESET["total"], MLCC_PRESET["mean_ir"])
        assert sum(mlcc) == 57_481
        assert abs(mean_ir(mlcc) - 16.51) < 0.05

    def test_empty_class_rejected(self):
        with pytest.raises(ValueError):
            SynthSpec(class_counts=[3, 0])


class TestMixRecords:
    def test_nomix_and_weights(self, tmp_path):
        x = np.zeros((4, 4, 3))
        nomix = passthrough(x, one_hot(1, 2))
        mixed = MixOutcome(x, np.array([0.75, 0.25]), CropBox(0, 0, 2, 2), 0.75, 1.0, 0.25, partner_index=1)
        write_mix_records([nomix, mixed], tmp_path / "r.txt", ["a.ppm", "b.ppm"])
        lines = (tmp_path / "r.txt").read_text().splitlines()
        assert lines[0].split()[2] == "nomix" and lines[0].endswith("0.000000000 1.000000000")
        assert lines[1].endswith("0.750000000 0.250000000")
        assert lines[1].split()[:6] == ["b.ppm", "1", "0", "0", "2", "2"]

    def test_empty_list(self, tmp_path):
        write_mix_records([], tmp_path / "r.txt")
        assert (tmp_path / "r.txt").read_bytes() == b""

    def test_written_weights_match_memory(self, tmp_path):
        x = np.random.default_rng(0).random((8, 10, 10, 3))
        outs = mix_batch(x, np.eye(8), MixPolicy("contextmix"), master_seed=3)
        write_mix_records(outs, tmp_path / "r.txt")
        for o, line in zip(outs, (tmp_path / "r.txt").read_text().splitlines()):
            written = [float(v) for v in line.split()[-8:]]
            assert np.all(np.abs(np.array(written) - o.label) <= 5e-10)
