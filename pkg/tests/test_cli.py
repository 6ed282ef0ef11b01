import json

import pytest
from hypothesis import given, strategies as st

from arithwaves.cli import main
from arithwaves.records import (
    RunManifest,
    dumps_line,
    loads_line,
    numeric_bytes,
    parse_csv_manifest,
    csv_manifest_line,
    read_lines,
    record_from_data,
    record_to_data,
)
from arithwaves.sampler import ExperimentRecord


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_lambda(capsys):
    code, out, _ = run(capsys, "lambda", "25", "--json")
    rec = json.loads(out)
    assert code == 0 and rec["N"] == 12 and rec["mu4_exact"] == "-143/625"
    assert rec["c_n"] == pytest.approx((1 + 0.2288**2) / 512)
    code, out, _ = run(capsys, "lambda", "--n", "1", "--json")
    assert json.loads(out)["c_n"] == 1 / 256


def test_lambda_domain_error(capsys):
    code, _, err = run(capsys, "lambda", "3")
    assert code == 2 and "not a sum of two squares" in err


@pytest.mark.parametrize("argv", [[], ["identities"], ["lambda", "--bogus"], ["k2-probe", "--n", "5"]])
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 1


def test_identities(capsys):
    code, out, _ = run(capsys, "identities", "1", "5", "25", "65")
    assert code == 0
    assert out.count("PASS") == len(out.splitlines()) and "FAIL" not in out


def test_identities_cap_gives_skip(capsys):
    code, out, _ = run(capsys, "identities", "65", "--cap", "8")
    assert code == 0
    assert "SKIP n=65 s6_moment_duality" in out


def test_identities_failure_exit_code(capsys, monkeypatch):
    from arithwaves import cli
    from arithwaves.identities import IdentityResult

    monkeypatch.setattr(cli, "run_identities", lambda n, **kw: [IdentityResult(n, "x", "FAIL")])
    assert run(capsys, "identities", "5")[0] == 3


def test_scan_s6_and_resume(tmp_path, capsys, monkeypatch):
    out = tmp_path / "s6.csv"
    assert run(capsys, "scan-s6", "5", "65", "--out", str(out))[0] == 0
    lines = out.read_text().splitlines()
    assert parse_csv_manifest(lines[0]).command == "scan-s6"
    assert lines[1] == "n,N,s6,s6_over_N4,s6_over_N3"
    assert lines[2].startswith("5,8,5840,")

    from arithwaves import cli

    seen = []
    real = cli.s6_decay_scan
    monkeypatch.setattr(cli, "s6_decay_scan", lambda ns, cap: seen.extend(ns) or real(ns, cap))
    assert run(capsys, "scan-s6", "5", "65", "1105", "--out", str(out))[0] == 0
    assert seen == [1105]
    rows = out.read_text().splitlines()[2:]
    ratios = [float(r.split(",")[3]) for r in rows]
    assert ratios == sorted(ratios, reverse=True)


def test_experiment_rerun_from_manifest(tmp_path, capsys):
    first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert run(capsys, "experiment", "--n", "5", "--n", "25", "--trials", "20", "--grid", "64",
               "--seed", "7", "--out", str(first))[0] == 0
    assert run(capsys, "experiment", "--manifest", str(first), "--threads", "2",
               "--out", str(second))[0] == 0
    a, b = list(read_lines(first)), list(read_lines(second))
    assert len(a) == 2 and [numeric_bytes(x) for x in a] == [numeric_bytes(x) for x in b]
    assert a[0]["manifest"].params["seed"] == 7


def test_experiment_skips_huge_levels(capsys):
    code, out, err = run(capsys, "experiment", "--sequence", "nu_a", "--a", "0.3927", "--terms", "2",
                         "--trials", "4")
    kinds = [json.loads(line)["kind"] for line in out.splitlines()]
    assert code == 0 and kinds == ["experiment", "skipped"]
    assert "skipped" in err


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nn = 5\ntrials = 6\ngrid = 32\nseed = 3\n")
    code, out, _ = run(capsys, "--config", str(cfg), "experiment", "--seed", "4")
    data = json.loads(out.splitlines()[0])["data"]
    assert code == 0 and data["trials"] == 6 and data["seed"] == 4 and data["grid_M"] == 32
    cfg.write_text("bogus = 1\n")
    assert run(capsys, "--config", str(cfg), "lambda", "5")[0] == 1


def test_singular_set_and_k2_probe(capsys):
    code, out, _ = run(capsys, "singular-set", "25", "--json")
    rec = json.loads(out)
    assert code == 0 and rec["min_abs_r"] >= 5 / 16
    code, out, _ = run(capsys, "k2-probe", "--n", "25", "--x", "0.13", "0.31", "--json")
    rec = json.loads(out)
    assert code == 0 and abs(rec["difference"]) < 0.05


finite = st.floats(allow_nan=False, allow_infinity=False)


@given(st.integers(1, 10**6), finite, finite, finite, st.lists(st.integers(0, 10), max_size=3),
       st.sampled_from([float("inf"), float("nan"), 1.5]))
def test_record_round_trip(n, mean, var, se, aborted, odd):
    rec = ExperimentRecord(n=n, N=8, E=1.0, seed=0, trials=10, grid_M=64, sample_mean_L=mean,
                           sample_var_L=var, se_mean=se, se_var=odd, theory_mean=1.0,
                           theory_var_leading=2.0, mu4=0.5, c_n=0.002, aborted=tuple(aborted))
    m = RunManifest("experiment", {"levels": [n]})
    parsed = loads_line(dumps_line("experiment", m, record_to_data(rec), {"wall_time": 1.0}))
    back = record_from_data(parsed["data"])
    assert parsed["manifest"] == m
    for f in ("n", "sample_mean_L", "sample_var_L", "se_mean", "aborted"):
        assert getattr(back, f) == getattr(rec, f)
    assert repr(back.se_var) == repr(rec.se_var)


def test_manifest_csv_line_round_trip():
    m = RunManifest("scan-s6", {"levels": [5, 65], "cap": 256}, outputs=("x.csv",))
    assert parse_csv_manifest(csv_manifest_line(m)) == m
    assert parse_csv_manifest("n,N") is None


def test_schema_version_is_checked():
    line = dumps_line("experiment", RunManifest("experiment", {}), {})
    with pytest.raises(ValueError):
        loads_line(line.replace('"schema": 1', '"schema": 99'))
