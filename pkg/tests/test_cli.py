import csv
import io

import numpy as np
import pytest

from slfd import cli
from slfd.config import ConfigError, parse_config, parse_ranks
from slfd.data import load_dataset

SMALL = """
[data]
num_classes = 3
res = 8
n_train_per_class = 20
n_test_per_class = 10

[distill]
epochs = 1

[eval]
seeds = 0,1
epochs = 20
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(SMALL)
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("[distill]\nepoch = 3\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[distil]\nepochs = 3\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config("[distill]\nepochs = many\n")
    with pytest.raises(ConfigError):
        parse_config("[distill]\nobjective = DM\n")    # stochastic needs DC


def test_config_seed_inheritance_and_render():
    cfg = parse_config("[run]\nseed = 7\n[generator]\nseed = 2\n[distill]\nM = 4\n")
    assert cfg.distill_config().seed == 7 and cfg.data_seed() == 7
    assert cfg.generator_spec((1, 16, 16)).seed == 2
    again = parse_config(cfg.render())
    assert again.distill_config() == cfg.distill_config() and again.data == cfg.data


def test_parse_ranks():
    assert parse_ranks("0, 10,full") == [0, 10, -1]
    with pytest.raises(ConfigError):
        parse_ranks("-3")
    with pytest.raises(ConfigError):
        parse_ranks("low")


def test_gen_data(tmp_path, config, capsys):
    assert run("gen-data", "--config", config, "--out", tmp_path / "a") == 0
    assert run("gen-data", "--config", config, "--out", tmp_path / "b") == 0
    for name in ("train.slfd", "test.slfd"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    out = capsys.readouterr().out
    train = load_dataset(tmp_path / "a" / "train.slfd")
    counts = " ".join(str(c) for c in train.class_counts())
    assert f"train: N={len(train)} C=3" in out and f"[{counts}]" in out
    for name in ("config.ini", "config.effective.ini", "seeds.json", "VERSION"):
        assert (tmp_path / "a" / name).exists()
    assert (tmp_path / "a" / "config.ini").read_text() == SMALL


def test_distill_outputs(tmp_path, config):
    out = tmp_path / "d"
    assert run("distill", "--config", config, "--out", out) == 0
    rows = (out / "trace.csv").read_text().splitlines()
    assert rows[0] == "epoch,total_loss,grad_norm_w,grad_norm_f,grad_norm_heads,seconds"
    assert len(rows) == 2
    assert len(load_dataset(out / "synset.slfd")) == 3


def test_distill_resume_is_bit_identical(tmp_path):
    cfg = tmp_path / "r.ini"
    cfg.write_text(SMALL.replace("epochs = 1", "epochs = 4\nsnapshot_every = 2"))
    assert run("distill", "--config", cfg, "--out", tmp_path / "full") == 0
    ckpt = tmp_path / "full" / "checkpoints" / "ckpt_000002.bin"
    assert run("distill", "--config", cfg, "--out", tmp_path / "resumed", "--resume", ckpt) == 0
    a = (tmp_path / "full" / "synset.slfd").read_bytes()
    assert a == (tmp_path / "resumed" / "synset.slfd").read_bytes()
    assert len((tmp_path / "resumed" / "trace.csv").read_text().splitlines()) == 3


def test_seed_flag_changes_run(tmp_path, config):
    run("distill", "--config", config, "--out", tmp_path / "s0")
    run("distill", "--config", config, "--out", tmp_path / "s1", "--seed", "1")
    assert (tmp_path / "s0" / "synset.slfd").read_bytes() != (tmp_path / "s1" / "synset.slfd").read_bytes()
    assert '"root_seed": 1' in (tmp_path / "s1" / "seeds.json").read_text()


def test_eval_and_report(tmp_path, config, capsys):
    run("gen-data", "--config", config, "--out", tmp_path / "data")
    run("distill", "--config", config, "--out", tmp_path / "d")
    capsys.readouterr()
    assert run("eval", "--config", config, "--out", tmp_path / "e",
               "--synset", tmp_path / "d" / "synset.slfd", "--test", tmp_path / "data" / "test.slfd") == 0
    table = capsys.readouterr().out
    text = (tmp_path / "e" / "report.csv").read_text()
    rows = list(csv.reader(io.StringIO(text)))
    per_arch = {}
    for arch, *_ in rows[1:rows.index(["arch", "mean", "std"])]:
        per_arch[arch] = per_arch.get(arch, 0) + 1
    assert set(per_arch.values()) == {2} and len(per_arch) == 5
    # stdout table equals the CSV summary at the printed precision
    summary = {r[0]: r[1:] for r in rows[rows.index(["arch", "mean", "std"]) + 1:]}
    for line in table.splitlines()[1:]:
        name, *vals = line.split()
        csv_vals = summary[name]
        for printed, stored in zip(vals, csv_vals):
            if printed != "(seen)":
                assert printed == f"{float(stored):.4f}"
    cross = float(summary["cross_arch"][0])
    unseen = [float(summary[a][0]) for a in per_arch if a != "convnet_tiny"]
    assert cross == pytest.approx(np.mean(unseen), abs=1e-12)
    assert run("report", tmp_path / "e") == 0


def test_report_detects_tampering(tmp_path):
    text = "arch,seed,accuracy\nlinear,0,0.5\nlinear,1,0.7\narch,mean,std\nlinear,0.9,0.1\ncross_arch,0.9\n"
    (tmp_path / "report.csv").write_text(text)
    assert run("report", tmp_path / "report.csv") == 3


def test_ablate_rank(tmp_path, config):
    out = tmp_path / "ab"
    assert run("ablate-rank", "--config", config, "--out", out, "--ranks", "0,full",
               "--distill-seeds", "0,1") == 0
    lines = (out / "ablation.csv").read_text().splitlines()
    assert lines[0] == "rank,cross_arch_mean,cross_arch_std"
    assert [l.split(",")[0] for l in lines[1:]] == ["0", "full"]
    for seed in (0, 1):
        h0 = (out / "rank_0" / f"seed_{seed}" / "batch_hashes.txt").read_text()
        hf = (out / "rank_full" / f"seed_{seed}" / "batch_hashes.txt").read_text()
        assert h0 == hf


def test_exit_codes(tmp_path, config):
    with pytest.raises(SystemExit) as info:
        run("distill", "--out", tmp_path / "x", "--bogus")
    assert info.value.code == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[distill]\nepoch = 3\n")
    assert run("distill", "--config", bad, "--out", tmp_path / "x") == 1
    assert run("eval", "--out", tmp_path / "x", "--synset", tmp_path / "missing.slfd") == 3
    junk = tmp_path / "junk.slfd"
    junk.write_bytes(b"garbage!" * 8)
    assert run("eval", "--out", tmp_path / "x", "--synset", junk) == 3


def test_numerical_abort_exit_code(tmp_path):
    cfg = tmp_path / "nan.ini"
    cfg.write_text(SMALL.replace("epochs = 1", "epochs = 3\nlr_latent = 1e300"))
    with np.errstate(all="ignore"):
        assert run("distill", "--config", cfg, "--out", tmp_path / "n") == 2
    assert (tmp_path / "n" / "abort.json").exists()
    assert len((tmp_path / "n" / "trace.csv").read_text().splitlines()) == 2
