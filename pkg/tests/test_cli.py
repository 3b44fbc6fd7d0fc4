import os

import pytest

from proxshuffle.cli import (
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_SPEC,
    EXIT_VERIFY,
    load_config,
    main,
)


BASE_CONFIG = """\
[problem]
kind = quadratic
n = 4
d = 3
seed = 1
mu_f = 0.5

[strategy]
kind = rr
seed = 0

[schedule]
rule = constant
eta = 0.02

[run]
K = 10
"""


@pytest.fixture
def base_cfg(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(BASE_CONFIG)
    return str(path)


def test_load_config_overrides_and_case(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("[run]\nK = 10\n")
    cfg = load_config(str(path), ["run.K=20", "schedule.rule=constant"])
    assert cfg["run"]["K"] == "20"  # keys keep their case
    assert cfg["schedule"]["rule"] == "constant"


def test_run_writes_trace_and_manifest(base_cfg, tmp_path):
    out = str(tmp_path / "out")
    assert main(["run", "--config", base_cfg, "--out", out]) == EXIT_OK
    lines = open(os.path.join(out, "trace.csv")).read().strip().split("\n")
    assert len(lines) == 11  # header + K rows
    assert lines[0].startswith("k,eta,gap")
    man = open(os.path.join(out, "manifest.txt")).read()
    assert "seeds.problem = '1'" in man
    assert os.path.exists(os.path.join(out, "instance.txt"))


def test_run_byte_identical_reruns(base_cfg, tmp_path):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["run", "--config", base_cfg, "--out", out1]) == EXIT_OK
    assert main(["run", "--config", base_cfg, "--out", out2]) == EXIT_OK
    for name in ("trace.csv", "manifest.txt", "instance.txt"):
        a = open(os.path.join(out1, name), "rb").read()
        b = open(os.path.join(out2, name), "rb").read()
        assert a == b, name


def test_run_refuses_nonempty_outdir(base_cfg, tmp_path):
    out = tmp_path / "busy"
    out.mkdir()
    (out / "junk.txt").write_text("x")
    assert main(["run", "--config", base_cfg, "--out", str(out)]) == EXIT_SPEC
    assert main(["run", "--config", base_cfg, "--out", str(out), "--force"]) == EXIT_OK


def test_run_k1_rejected(base_cfg, tmp_path):
    code = main(["run", "--config", base_cfg, "--out", str(tmp_path / "o"),
                 "--set", "run.K=1"])
    assert code == EXIT_SPEC


def test_run_missing_config_rejected(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == EXIT_SPEC


def test_run_huge_eta_numerical_abort(base_cfg, tmp_path):
    code = main(["run", "--config", base_cfg, "--out", str(tmp_path / "o"),
                 "--set", "schedule.eta=1e6", "--set", "run.K=400"])
    assert code == EXIT_NUMERIC


def test_run_unknown_problem_kind(base_cfg, tmp_path):
    code = main(["run", "--config", base_cfg, "--out", str(tmp_path / "o"),
                 "--set", "problem.kind=banana"])
    assert code == EXIT_SPEC


def test_sweep_summary_and_cells(base_cfg, tmp_path, capsys):
    out = str(tmp_path / "sw")
    code = main(["sweep", "--config", base_cfg, "--out", out,
                 "--set", "sweep.k_list=4 8 16 32", "--set", "sweep.seeds=0 1 2"])
    assert code == EXIT_OK
    lines = open(os.path.join(out, "summary.csv")).read().strip().split("\n")
    assert lines[0] == "K,median_final_gap,runs"
    assert [row.split(",")[0] for row in lines[1:]] == ["4", "8", "16", "32"]
    assert all(row.split(",")[2] == "3" for row in lines[1:])
    cells = os.listdir(os.path.join(out, "cells"))
    assert len(cells) == 12
    assert "K8_seed2.csv" in cells
    assert "slope" in capsys.readouterr().out


def test_sweep_duplicate_seeds_rejected(base_cfg, tmp_path):
    code = main(["sweep", "--config", base_cfg, "--out", str(tmp_path / "sw"),
                 "--set", "sweep.k_list=4 8 16 32", "--set", "sweep.seeds=0 0"])
    assert code == EXIT_SPEC


def test_rate_fit_and_window(tmp_path, capsys):
    summary = tmp_path / "summary.csv"
    rows = ["K,median_final_gap,runs"]
    for K in (10, 20, 40, 80):
        rows.append(f"{K},{2.0 * K**-1.0!r},1")
    summary.write_text("\n".join(rows) + "\n")
    assert main(["rate", str(summary)]) == EXIT_OK
    assert "slope -1.0000" in capsys.readouterr().out
    assert main(["rate", str(summary), "--window=-1.2,-0.8"]) == EXIT_OK
    assert main(["rate", str(summary), "--window=-0.5,-0.1"]) == EXIT_VERIFY


def test_verify_default_suite_passes(capsys):
    assert main(["verify"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out
    assert "sigma identity" in out
    assert "descent inequality" in out


def test_verify_injected_failure(base_cfg, tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    # overstated variance makes the sigma identity check fail
    code = main(["verify", "--config", base_cfg])
    assert code == EXIT_OK
    from proxshuffle import analysis

    real = analysis.sigma_report

    def corrupted(p, ref):
        rep = real(p, ref)
        rep.sigma_rand_sq += 1.0
        return rep

    monkeypatch.setattr(analysis, "sigma_report", corrupted)
    import proxshuffle.cli as climod

    monkeypatch.setattr(climod.analysis, "sigma_report", corrupted)
    code = main(["verify", "--config", base_cfg])
    assert code == EXIT_VERIFY
    assert "FAIL" in capsys.readouterr().out
    assert any(name.startswith("verify_failure_instance") for name in os.listdir(tmp_path))


def test_verify_big_n_refused(base_cfg, tmp_path):
    code = main(["verify", "--config", base_cfg, "--set", "problem.n=9"])
    assert code == EXIT_SPEC


def test_show_manifest(base_cfg, tmp_path, capsys):
    out = str(tmp_path / "out")
    main(["run", "--config", base_cfg, "--out", out])
    capsys.readouterr()
    assert main(["show-manifest", out]) == EXIT_OK
    assert "schedule" in capsys.readouterr().out


def test_fixed_strategy_from_file(base_cfg, tmp_path):
    perms = tmp_path / "perms.txt"
    perms.write_text("\n".join("1 2 3 4" for _ in range(10)) + "\n")
    out = str(tmp_path / "out")
    code = main(["run", "--config", base_cfg, "--out", out,
                 "--set", "strategy.kind=fixed", f"--set", f"strategy.file={perms}"])
    assert code == EXIT_OK


def test_ig_order_is_one_based(base_cfg, tmp_path):
    out = str(tmp_path / "out")
    code = main(["run", "--config", base_cfg, "--out", out,
                 "--set", "strategy.kind=ig", "--set", "strategy.order=4 3 2 1"])
    assert code == EXIT_OK
