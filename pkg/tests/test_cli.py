import hashlib

import pytest

from modnmt.cli import dispatch, read_config_file
from modnmt.corpus import SyntheticLanguageSpec, cipher_oracle_translate

SMALL_TRAIN = [
    "--steps", "25", "--warmup-steps", "10", "--batch-tokens", "128",
    "--dim", "16", "--n-blocks", "1", "--n-heads", "2", "--ff-dim", "32",
]


def read(path):
    return path.read_text(encoding="utf-8")


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """gen-data + vocabularies + a short joint run, shared by CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    rc = dispatch(["gen-data", "--base-vocab", "16", "--langs", "3",
                   "--n", "80", "--n-test", "20", "--len-min", "3", "--len-max", "8",
                   "--seed", "5", "--out", str(data)])
    assert rc == 0
    for lang in "XYZ":
        rc = dispatch(["build-vocab", "--corpus", str(data / f"{lang}.txt"),
                       "--language", lang, "--size", "24",
                       "--out", str(data / f"vocab_{lang}.txt")])
        assert rc == 0
    run1 = root / "run1"
    rc = dispatch(["train-joint",
                   "--src-corpus", str(data / "X.txt"), "--tgt-corpus", str(data / "Y.txt"),
                   "--src-vocab", str(data / "vocab_X.txt"), "--tgt-vocab", str(data / "vocab_Y.txt"),
                   "--seed", "5", "--out", str(run1), *SMALL_TRAIN])
    assert rc == 0
    return root, data, run1


class TestGenData:
    def test_outputs_and_alignment(self, workspace):
        _, data, _ = workspace
        for lang in "XYZ":
            assert (data / f"spec_{lang}.txt").exists()
            assert (data / f"{lang}.txt").exists()
            assert (data / f"{lang}.test.txt").exists()
        specs = {L: SyntheticLanguageSpec.load(data / f"spec_{L}.txt") for L in "XYZ"}
        lx = read(data / "X.txt").splitlines()
        ly = read(data / "Y.txt").splitlines()
        assert len(lx) == len(ly) == 80
        for src, tgt in zip(lx, ly):
            assert cipher_oracle_translate(specs["X"], specs["Y"], src) == tgt

    def test_too_many_langs(self, tmp_path):
        assert dispatch(["gen-data", "--langs", "99", "--out", str(tmp_path / "d")]) == 1


class TestConfigFile:
    def test_parse(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("steps = 12  # comment\nmetric = l2\n\nlr_peak = 0.002\n")
        assert read_config_file(cfg) == {"steps": 12, "metric": "l2", "lr_peak": 0.002}

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("momentum = 0.9\n")
        with pytest.raises(Exception, match="unknown config key"):
            read_config_file(cfg)

    def test_flags_override_file(self, workspace, tmp_path):
        _, data, _ = workspace
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("steps = 99999\n")
        out = tmp_path / "run"
        rc = dispatch(["train-joint", "--config", str(cfg),
                       "--src-corpus", str(data / "X.txt"), "--tgt-corpus", str(data / "Y.txt"),
                       "--src-vocab", str(data / "vocab_X.txt"), "--tgt-vocab", str(data / "vocab_Y.txt"),
                       "--seed", "5", "--out", str(out), *SMALL_TRAIN])
        assert rc == 0
        assert "config.steps: 25" in read(out / "manifest.txt")


class TestTrainJoint:
    def test_artifacts(self, workspace):
        _, _, run1 = workspace
        assert (run1 / "checkpoint.bin").exists()
        assert (run1 / "vocab_X.txt").exists() and (run1 / "vocab_Y.txt").exists()
        loss = read(run1 / "loss.csv").splitlines()
        assert loss[0] == "step,l_xx,l_yy,l_xy,l_yx,d,total,lr"
        assert len(loss) == 26
        manifest = read(run1 / "manifest.txt")
        assert "kind: joint" in manifest and "status: ok" in manifest

    def test_rerun_identical(self, workspace, tmp_path):
        _, data, run1 = workspace
        out = tmp_path / "rerun"
        rc = dispatch(["train-joint",
                       "--src-corpus", str(data / "X.txt"), "--tgt-corpus", str(data / "Y.txt"),
                       "--src-vocab", str(data / "vocab_X.txt"), "--tgt-vocab", str(data / "vocab_Y.txt"),
                       "--seed", "5", "--out", str(out), *SMALL_TRAIN])
        assert rc == 0
        assert read(out / "loss.csv") == read(run1 / "loss.csv")
        assert hashlib.sha256((out / "checkpoint.bin").read_bytes()).hexdigest() == \
            hashlib.sha256((run1 / "checkpoint.bin").read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def run2(workspace):
    root, data, run1 = workspace
    out = root / "run2"
    rc = dispatch(["add-language", "--from", str(run1 / "checkpoint.bin"),
                   "--src-corpus", str(data / "Z.txt"), "--tgt-corpus", str(data / "X.txt"),
                   "--new-vocab", str(data / "vocab_Z.txt"), "--shared-lang", "X",
                   "--seed", "6", "--out", str(out), *SMALL_TRAIN])
    assert rc == 0
    return out


class TestAddLanguage:
    def test_artifacts_and_freeze(self, workspace, run2):
        _, _, run1 = workspace
        from modnmt.model import load_checkpoint
        from modnmt.tokenizer import Vocabulary
        vocabs = {L: Vocabulary.load(run2 / f"vocab_{L}.txt") for L in "XYZ"}
        before = load_checkpoint(run1 / "checkpoint.bin",
                                 {L: vocabs[L] for L in "XY"}).snapshot()
        after = load_checkpoint(run2 / "checkpoint.bin", vocabs).snapshot()
        assert "encoder:Z" in after
        for name in before:
            assert after[name] == before[name]
        loss = read(run2 / "loss.csv").splitlines()
        assert loss[0] == "step,l_zx,l_xz,total,lr"

    def test_bad_shared_lang(self, workspace, tmp_path):
        _, data, run1 = workspace
        rc = dispatch(["add-language", "--from", str(run1 / "checkpoint.bin"),
                       "--src-corpus", str(data / "Z.txt"), "--tgt-corpus", str(data / "X.txt"),
                       "--new-vocab", str(data / "vocab_Z.txt"), "--shared-lang", "Q",
                       "--out", str(tmp_path / "bad"), *SMALL_TRAIN])
        assert rc == 1


class TestTranslate:
    def test_translate_and_meta(self, workspace, run2, tmp_path):
        _, data, _ = workspace
        out_file = tmp_path / "hyp.txt"
        rc = dispatch(["translate", "--ckpt", str(run2 / "checkpoint.bin"),
                       "--src", "Z", "--tgt", "Y", "--route", "zero_shot",
                       "--in", str(data / "Z.test.txt"), "--out", str(out_file)])
        assert rc == 0
        assert len(read(out_file).splitlines()) == 20
        meta = read(tmp_path / "hyp.txt.meta")
        assert "route: zero_shot" in meta and "src: Z" in meta

    def test_missing_module_is_runtime_error(self, workspace, tmp_path):
        _, data, run1 = workspace
        rc = dispatch(["translate", "--ckpt", str(run1 / "checkpoint.bin"),
                       "--src", "Q", "--tgt", "Y",
                       "--in", str(data / "X.test.txt"), "--out", str(tmp_path / "o.txt")])
        assert rc == 2


class TestEvaluate:
    def test_grid_csv(self, workspace, run2, tmp_path, capsys):
        _, data, _ = workspace
        grid = tmp_path / "grid.cfg"
        grid.write_text(
            "# analog of the trained/zero-shot/pivot comparison\n"
            "added,direct,Z,X\n"
            "zeroshot,zero_shot,Z,Y\n"
            "pivot,pivot,Z,Y,X\n")
        out = tmp_path / "grid.csv"
        rc = dispatch(["evaluate", "--ckpt", str(run2 / "checkpoint.bin"),
                       "--grid", str(grid),
                       "--test", f"X={data / 'X.test.txt'}",
                       "--test", f"Y={data / 'Y.test.txt'}",
                       "--test", f"Z={data / 'Z.test.txt'}",
                       "--out", str(out)])
        assert rc == 0
        lines = read(out).splitlines()
        assert lines[0].startswith("label,route,src,tgt,via,bleu")
        assert len(lines) == 4
        assert lines[3].startswith("pivot,pivot,Z,Y,X,")
        assert "zeroshot" in capsys.readouterr().out

    def test_malformed_grid(self, workspace, run2, tmp_path):
        _, data, _ = workspace
        grid = tmp_path / "grid.cfg"
        grid.write_text("only,three,fields\n")
        rc = dispatch(["evaluate", "--ckpt", str(run2 / "checkpoint.bin"),
                       "--grid", str(grid), "--test", f"X={data / 'X.test.txt'}",
                       "--out", str(tmp_path / "g.csv")])
        assert rc == 1


class TestInspectReps:
    def test_outputs(self, workspace, run2, tmp_path):
        _, data, _ = workspace
        out = tmp_path / "reps"
        rc = dispatch(["inspect-reps", "--ckpt", str(run2 / "checkpoint.bin"),
                       "--test", f"X={data / 'X.test.txt'}",
                       "--test", f"Y={data / 'Y.test.txt'}",
                       "--sentences", "12", "--out", str(out)])
        assert rc == 0
        assert (out / "reps_X.csv").exists() and (out / "reps_Y.csv").exists()
        assert read(out / "projection.csv").splitlines()[0] == "lang,sentence_idx,x,y"
        report = read(out / "report.txt")
        assert "correlation_distance X-Y:" in report
        assert "collapse X:" in report


class TestDispatch:
    def test_unknown_command(self):
        assert dispatch(["frobnicate"]) == 1

    def test_missing_required_flag(self):
        assert dispatch(["build-vocab", "--language", "X"]) == 1
