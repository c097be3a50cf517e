import json

import numpy as np
import pytest

from geninvert.cli import main
from geninvert.generator import load
from geninvert.imagefiles import read_pgm, write_json_tensor
from geninvert.net import forward
from geninvert.streams import LATENT, substream

from conftest import TINY_MLP

TINY_FLAGS = [
    "--arch", "mlp",
    "--latent-dim", str(TINY_MLP.latent_dim),
    "--hidden", ",".join(str(h) for h in TINY_MLP.hidden_sizes),
    "--out-shape", "x".join(str(s) for s in TINY_MLP.output_shape),
    "--seed", str(TINY_MLP.seed),
]


@pytest.fixture(scope="module")
def tiny_net_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("nets") / "tiny.net"
    assert main(["gen-weights", *TINY_FLAGS, "--out", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def reference_net_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("nets") / "ref.net"
    args = [
        "gen-weights", "--arch", "mlp", "--latent-dim", "100", "--hidden", "512",
        "--out-shape", "1x16x16", "--seed", "42", "--out", str(path),
    ]
    assert main(args) == 0
    return path


def test_gen_weights_output_is_loadable(tiny_net_file):
    net = load(tiny_net_file)
    assert net.spec == TINY_MLP


def test_gen_weights_prints_fingerprint(tmp_path, capsys):
    out = tmp_path / "t.net"
    assert main(["gen-weights", *TINY_FLAGS, "--out", str(out)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert set(doc) == {"weight_sum", "fnv1a64"}


def test_gen_weights_is_byte_deterministic(tmp_path, tiny_net_file):
    out = tmp_path / "again.net"
    assert main(["gen-weights", *TINY_FLAGS, "--out", str(out)]) == 0
    assert out.read_bytes() == tiny_net_file.read_bytes()


def test_gen_weights_manifest(tiny_net_file):
    manifest = json.loads(tiny_net_file.with_suffix(".manifest.json").read_text())
    assert manifest["subcommand"] == "gen-weights"
    assert manifest["config"]["latent_dim"] == TINY_MLP.latent_dim
    assert manifest["config"]["hidden"] == list(TINY_MLP.hidden_sizes)
    assert manifest["master_seed"] == TINY_MLP.seed
    assert manifest["outputs"] == [str(tiny_net_file)]


def test_gen_weights_rejects_bad_flags(tmp_path, capsys):
    out = str(tmp_path / "x.net")
    assert main(["gen-weights", "--latent-dim", "0", "--out", out]) == 2
    assert main(["gen-weights", "--out-shape", "16x16", "--out", out]) == 2
    assert main(["gen-weights", "--hidden", "4x", "--out", out]) == 2
    capsys.readouterr()


def test_invert_self_test_recovers(tmp_path, tiny_net_file):
    out = tmp_path / "res.json"
    rc = main([
        "invert", "--net", str(tiny_net_file), "--target-seed", "4",
        "--max-iters", "20000", "--out", str(out),
    ])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["converged"] is True
    assert doc["z_error"] < 1e-8
    assert len(doc["z_recovered"]) == TINY_MLP.latent_dim
    manifest = json.loads(out.with_suffix(".manifest.json").read_text())
    assert manifest["config"]["max_iters"] == 20000
    assert "workers" not in manifest["config"]


def test_invert_zero_budget(tmp_path, tiny_net_file):
    out = tmp_path / "res.json"
    rc = main([
        "invert", "--net", str(tiny_net_file), "--target-seed", "4",
        "--max-iters", "0", "--out", str(out),
    ])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["converged"] is False
    assert doc["iters_used"] == 0
    assert doc["final_loss"] > 0


def test_invert_snapshots_are_valid_pgm(tmp_path, tiny_net_file):
    out = tmp_path / "res.json"
    snaps = tmp_path / "snaps"
    rc = main([
        "invert", "--net", str(tiny_net_file), "--target-seed", "4",
        "--max-iters", "120", "--loss-tol", "0", "--out", str(out),
        "--snapshots", str(snaps),
    ])
    assert rc == 0
    names = sorted(p.name for p in snaps.iterdir())
    assert names == ["snap_000000.pgm", "snap_000100.pgm", "snap_000120.pgm"]
    for p in snaps.iterdir():
        assert read_pgm(p).shape == TINY_MLP.output_shape


def test_invert_reads_json_tensor_target(tmp_path, tiny_net_file):
    # route the self-test target through a file: everything after target
    # construction must match the seeded run bit for bit, minus the
    # ground-truth error field only the seeded mode can know
    net = load(tiny_net_file)
    z = substream(4, 0, LATENT).uniform(-1.0, 1.0, net.latent_dim)
    img, _ = forward(net, z)
    target = tmp_path / "target.json"
    write_json_tensor(target, img)
    file_out = tmp_path / "file.json"
    seed_out = tmp_path / "seed.json"
    rc = main([
        "invert", "--net", str(tiny_net_file), "--target-image", str(target),
        "--max-iters", "20000", "--out", str(file_out),
    ])
    assert rc == 0
    rc = main([
        "invert", "--net", str(tiny_net_file), "--target-seed", "4",
        "--max-iters", "20000", "--out", str(seed_out),
    ])
    assert rc == 0
    a = json.loads(file_out.read_text())
    b = json.loads(seed_out.read_text())
    assert a["z_error"] is None
    assert b["z_error"] < 1e-8
    assert a["converged"] is True
    assert a["z_recovered"] == b["z_recovered"]


def test_invert_is_byte_deterministic(tmp_path, tiny_net_file):
    outs = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        rc = main([
            "invert", "--net", str(tiny_net_file), "--target-seed", "9",
            "--max-iters", "300", "--out", str(out),
        ])
        assert rc == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_invert_io_errors(tmp_path, tiny_net_file, capsys):
    out = str(tmp_path / "res.json")
    rc = main(["invert", "--net", str(tmp_path / "no.net"), "--target-seed", "1", "--out", out])
    assert rc == 3
    corrupt = tmp_path / "bad.net"
    corrupt.write_bytes(b"GENNET v9 {}\n")
    assert main(["invert", "--net", str(corrupt), "--target-seed", "1", "--out", out]) == 3
    bad_img = tmp_path / "bad.pgm"
    bad_img.write_bytes(b"P5\n1 1\n255")
    rc = main(["invert", "--net", str(tiny_net_file), "--target-image", str(bad_img), "--out", out])
    assert rc == 3
    capsys.readouterr()


def test_invert_shape_mismatch_is_io_error(tmp_path, tiny_net_file, capsys):
    target = tmp_path / "wide.json"
    target.write_text('{"shape": [1, 2, 2], "data": [0.0, 0.0, 0.0, 0.0]}')
    rc = main([
        "invert", "--net", str(tiny_net_file), "--target-image", str(target),
        "--max-iters", "5", "--out", str(tmp_path / "r.json"),
    ])
    assert rc == 3
    capsys.readouterr()


def test_invert_divergence_exit_code(tmp_path, reference_net_file, capsys):
    rc = main([
        "invert", "--net", str(reference_net_file), "--target-seed", "1",
        "--mode", "none", "--eta0", "1e308", "--max-iters", "20",
        "--out", str(tmp_path / "r.json"),
    ])
    assert rc == 4
    assert "numerical abort" in capsys.readouterr().err


def _run_recovery(tmp_path, tiny_net_file, name, workers):
    out = tmp_path / name
    rc = main([
        "exp-recovery", "--net", str(tiny_net_file), "--seed", "11",
        "--trials", "4", "--max-iters", "1500", "--workers", str(workers),
        "--out", str(out),
    ])
    assert rc == 0
    return out


def test_exp_recovery_csv_schema(tmp_path, tiny_net_file):
    out = _run_recovery(tmp_path, tiny_net_file, "rec.csv", 1)
    lines = out.read_text().splitlines()
    assert lines[0] == "mode,eps,success_rate,n_trials"
    assert len(lines) == 1 + 3 * 4
    for line in lines[1:]:
        kind, eps, rate, n = line.split(",")
        assert kind in ("none", "standard", "stochastic")
        assert 0.0 <= float(rate) <= 1.0
        assert n == "4"
    manifest = json.loads(out.with_suffix(".manifest.json").read_text())
    assert manifest["config"]["max_iters"] == 1500
    assert manifest["config"]["eta0"] == 1.0
    assert "workers" not in manifest["config"]


def test_exp_recovery_byte_identical_across_workers(tmp_path, tiny_net_file):
    # identical flags except --workers, including the output path, so the
    # first run's bytes are snapshotted before the rerun overwrites them
    out = _run_recovery(tmp_path, tiny_net_file, "rec.csv", 1)
    csv_first = out.read_bytes()
    manifest_first = out.with_suffix(".manifest.json").read_bytes()
    _run_recovery(tmp_path, tiny_net_file, "rec.csv", 2)
    assert out.read_bytes() == csv_first
    assert out.with_suffix(".manifest.json").read_bytes() == manifest_first


def test_exp_noise_csv_schema(tmp_path, tiny_net_file):
    out = tmp_path / "noise.csv"
    rc = main([
        "exp-noise", "--net", str(tiny_net_file), "--seed", "11",
        "--trials", "3", "--max-iters", "400",
        "--variances", "0.0,0.01", "--out", str(out),
    ])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "mode,variance,median_zerr,mean_zerr,q25,q75,n_trials"
    assert len(lines) == 1 + 3 * 2
    variances = {line.split(",")[1] for line in lines[1:]}
    assert variances == {"0.0", "0.01"}


def test_exp_uniqueness_csv_schema(tmp_path, tiny_net_file):
    out = tmp_path / "uniq.csv"
    rc = main([
        "exp-uniqueness", "--net", str(tiny_net_file), "--seed", "11",
        "--m", "3", "--max-iters", "400", "--baseline-pairs", "2000",
        "--out", str(out),
    ])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "mode,mean_pairwise,m"
    assert len(lines) == 1 + 3 + 1
    last = lines[-1].split(",")
    assert last[0] == "baseline"
    assert float(last[1]) > 0
    assert last[2] == "2000"
    manifest = json.loads(out.with_suffix(".manifest.json").read_text())
    assert manifest["config"]["unseen_seed"] == TINY_MLP.seed + 1


def test_usage_errors(tmp_path, tiny_net_file, capsys):
    assert main([]) == 2
    assert main(["exp-recovery", "--net", str(tiny_net_file)]) == 2
    assert main([
        "exp-recovery", "--net", str(tiny_net_file), "--out",
        str(tmp_path / "o.csv"), "--trials", "0",
    ]) == 2
    assert main([
        "exp-recovery", "--net", str(tiny_net_file), "--out",
        str(tmp_path / "o.csv"), "--thresholds", "a,b",
    ]) == 2
    capsys.readouterr()


def test_version_exits_cleanly(capsys):
    assert main(["--version"]) == 0
    capsys.readouterr()


def test_reference_self_test_stochastic(tmp_path, reference_net_file):
    # one full-scale recovery through the CLI: stochastic clipping on the
    # seeded reference generator finds the latent to well under 1e-4
    out = tmp_path / "ref.json"
    rc = main([
        "invert", "--net", str(reference_net_file), "--target-seed", "5",
        "--mode", "stochastic", "--max-iters", "45000", "--out", str(out),
    ])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["converged"] is True
    assert doc["z_error"] < 1e-4
