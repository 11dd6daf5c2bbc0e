import subprocess
import sys

import pytest

from contextmix import dataio
from contextmix.cli import main
from contextmix.mixers import DEFAULT_SEED


def run(argv, capsys):
    """Exit code plus captured (stdout, stderr); usage errors surface as SystemExit."""
    try:
        code = main([str(a) for a in argv])
    except SystemExit as exc:
        code = exc.code
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--counts", "12,6,4", "--image-size", "16", "--seed", "3", "--out", str(root)]) == 0
    return root


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestUsage:
    def test_unknown_flag(self, capsys):
        assert run(["areas", "--bogus"], capsys)[0] == 2

    def test_missing_subcommand(self, capsys):
        assert run([], capsys)[0] == 2

    def test_samples_must_be_positive(self, capsys):
        assert run(["areas", "--samples", "0"], capsys)[0] == 2

    def test_epsilon_needs_contextmix(self, capsys, dataset, tmp_path):
        code, _, err = run(["augment", "--manifest", dataset / "manifest.tsv", "--policy", "cutmix", "--epsilon", "0.5", "--out", tmp_path], capsys)
        assert code == 2 and "--epsilon" in err

    def test_empty_epsilon_list(self, capsys, dataset):
        assert run(["sweep", "--epsilons", ",", "--manifest", dataset / "train.tsv"], capsys)[0] == 2

    def test_runtime_error_exit_one(self, capsys, tmp_path):
        code, _, err = run(["train", "--manifest", tmp_path / "missing.tsv", "--epochs", "1"], capsys)
        assert code == 1 and err.splitlines()[-1].startswith("error:")

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "contextmix", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0 and "augment" in proc.stdout


class TestAreas:
    def test_layout_and_seed_banner(self, capsys, tmp_path):
        code, out, err = run(["areas", "--samples", "2000", "--bins", "5", "--out", tmp_path / "h.tsv"], capsys)
        assert code == 0 and err.strip() == f"seed={DEFAULT_SEED}"
        lines = out.splitlines()
        assert lines[0] == "bin_lo\tbin_hi\tpre_count\tpost_count" and len(lines) == 6
        assert sum(int(l.split("\t")[2]) for l in lines[1:]) == 2000
        assert (tmp_path / "h.tsv").read_text() == out

    def test_reproducible(self, capsys):
        a = run(["areas", "--samples", "5000", "--seed", "4"], capsys)[1]
        b = run(["areas", "--samples", "5000", "--seed", "4"], capsys)[1]
        assert a == b


class TestSynth:
    def test_outputs(self, dataset):
        m = dataio.load_manifest(dataset / "manifest.tsv")
        assert m.class_counts() == [12, 6, 4]
        tr = dataio.load_manifest(dataset / "train.tsv")
        va = dataio.load_manifest(dataset / "valid.tsv")
        assert len(tr) + len(va) == 22

    def test_deterministic(self, capsys, tmp_path):
        for d in ("a", "b"):
            assert run(["synth", "--counts", "5,3", "--image-size", "16", "--out", tmp_path / d], capsys)[0] == 0
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


class TestAugment:
    def args(self, dataset, out, *extra):
        return ["augment", "--manifest", dataset / "manifest.tsv", "--n-batches", "3", "--batch-size", "6", "--out", out, *extra]

    def test_writes_images_and_records(self, capsys, dataset, tmp_path):
        code, out, _ = run(self.args(dataset, tmp_path), capsys)
        assert code == 0 and out.startswith("images=18")
        lines = (tmp_path / "mix_records.txt").read_text().splitlines()
        assert len(lines) == 18
        # file, partner, box (4 ints or 'nomix'), lambda_a, epsilon_b, 3 weights
        assert all(len(l.split()) in (2 + 1 + 2 + 3, 2 + 4 + 2 + 3) for l in lines)
        assert len(list((tmp_path / "images").glob("*.ppm"))) == 18

    @pytest.mark.parametrize("extra", [(), ("--per-image-boxes",), ("--policy", "mixup")])
    def test_threads_invariant(self, capsys, dataset, tmp_path, extra):
        run(self.args(dataset, tmp_path / "t1", "--threads", "1", *extra), capsys)
        run(self.args(dataset, tmp_path / "t8", "--threads", "8", *extra), capsys)
        assert tree_bytes(tmp_path / "t1") == tree_bytes(tmp_path / "t8")

    def test_zero_batches(self, capsys, dataset, tmp_path):
        code, _, err = run(self.args(dataset, tmp_path)[:-4] + ["--n-batches", "0", "--out", tmp_path], capsys)
        assert code == 0 and "warning" in err
        assert (tmp_path / "mix_records.txt").read_bytes() == b""


class TestTrainEvalInspect:
    def train_args(self, dataset, out, *extra):
        return ["train", "--manifest", dataset / "train.tsv", "--valid-manifest", dataset / "valid.tsv",
                "--epochs", "2", "--batch-size", "8", "--hidden", "8", "--out", out, *extra]

    def test_train_is_reproducible(self, capsys, dataset, tmp_path):
        a = run(self.train_args(dataset, tmp_path / "a"), capsys)
        b = run(self.train_args(dataset, tmp_path / "b"), capsys)
        assert a[0] == 0 and a[1] == b[1] and len(a[1].splitlines()) == 2
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_eval_and_inspect(self, capsys, dataset, tmp_path):
        run(self.train_args(dataset, tmp_path / "m"), capsys)
        code, out, _ = run(["eval", "--manifest", dataset / "valid.tsv", "--model", tmp_path / "m" / "model.npz"], capsys)
        keys = [l.split("=")[0] for l in out.splitlines()]
        assert code == 0 and {"top1_error", "macro_f1", "ece"} <= set(keys)

        m = dataio.load_manifest(dataset / "manifest.tsv")
        comp = tmp_path / "components.tsv"
        comp.write_text("".join(f"part{i // 2}\t{m.resolve(i)}\t0,0,16,16\n" for i in range(4)))
        code, out, _ = run(["inspect", "--components", comp, "--model", tmp_path / "m" / "model.npz"], capsys)
        rows = out.splitlines()
        assert code == 0 and [r.split("\t")[0] for r in rows] == ["part0", "part1"]
        assert all(r.split("\t")[2] in ("normal", "defective") for r in rows)

    def test_sweep_endpoint_matches_cutmix(self, capsys, dataset, tmp_path):
        base = ["--manifest", dataset / "train.tsv", "--epochs", "2", "--batch-size", "8", "--hidden", "8"]
        code, out, err = run(["sweep", "--epsilons", "1,fit,1", *base], capsys)
        assert code == 0 and "duplicate" in err
        rows = {r.split("\t")[0]: r.split("\t")[1:] for r in out.splitlines()[1:]}
        assert set(rows) == {"1", "fit"}
        cut = run(["train", "--policy", "cutmix", *base], capsys)[1].splitlines()[-1].split()
        ctx = run(["train", "--policy", "contextmix", *base], capsys)[1].splitlines()[-1].split()
        assert [float(v) for v in rows["1"]] == pytest.approx([float(v) for v in cut[1:]], abs=1e-6)
        assert [float(v) for v in rows["fit"]] == pytest.approx([float(v) for v in ctx[1:]], abs=1e-6)
