import csv
from fractions import Fraction

import pytest

from sharedcache import cli
from sharedcache.errors import ConfigError


def run(tmp_path, *args):
    return cli.main(["run", *args, "-o", str(tmp_path)])


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_shipped_configs_listed():
    names = cli.shipped_configs()
    for name in ("example1_offline", "example2_online", "profile_sweep"):
        assert name in names


def test_example1_offline(tmp_path):
    assert run(tmp_path, "example1_offline") == 0
    report = (tmp_path / "example1_offline" / "report.txt").read_text()
    assert "measured 7/4 = formula 7/4" in report
    assert "OPTIMAL" in report
    rows = read_csv(tmp_path / "example1_offline" / "results.csv")
    assert rows[0]["measured"] == "7/4" and rows[0]["verdict"] == "OPTIMAL"
    assert (tmp_path / "example1_offline" / "transmissions.tsv").exists()


def test_example1_nondistinct_and_ecc(tmp_path):
    assert run(tmp_path, "example1_nondistinct") == 0
    assert read_csv(tmp_path / "example1_nondistinct" / "results.csv")[0]["measured"] == "1"
    assert run(tmp_path, "example1_ecc") == 0
    rows = read_csv(tmp_path / "example1_ecc" / "results.csv")
    assert rows[0]["coded_time"] == "11/4"


def test_example2_online(tmp_path):
    assert run(tmp_path, "example2_online") == 0
    rows = read_csv(tmp_path / "example2_online" / "results.csv")
    assert [r["measured"] for r in rows] == ["54/25", "64/25"]
    assert [r["evicted"] for r in rows] == ["", "1"]
    assert all(r["verdict"] == "OPTIMAL" for r in rows)


@pytest.mark.parametrize("name,evicted", [("lrs_tie_orders", "5"), ("lrs_tie_sent", "1")])
def test_tie_configs(tmp_path, name, evicted):
    assert run(tmp_path, name) == 0
    assert read_csv(tmp_path / name / "results.csv")[-1]["evicted"] == evicted


def test_profile_sweep_parallel(tmp_path):
    assert cli.main(["sweep", "profile_sweep", "-o", str(tmp_path), "-j", "2"]) == 0
    rows = read_csv(tmp_path / "profile_sweep" / "results.csv")
    got = {(r["L"], r["delta"]): (r["measured"], r["coded_time"]) for r in rows}
    assert got[("(4,0)", "0")][0] == "2"
    assert got[("(3,1)", "0")][0] == "7/4"
    assert got[("(2,2)", "0")][0] == "3/2"
    assert got[("(3,1)", "1")][1] == "11/4"
    assert list(rows[0]) == cli.SWEEP_COLUMNS


def test_memory_sweep_is_decreasing(tmp_path):
    assert run(tmp_path, "memory_sweep") == 0
    times = [Fraction(r["measured"]) for r in read_csv(tmp_path / "memory_sweep" / "results.csv")]
    assert times == sorted(times, reverse=True) and len(set(times)) == 3


def test_dedicated_sweep_columns_agree(tmp_path):
    assert run(tmp_path, "dedicated_sweep") == 0
    for r in read_csv(tmp_path / "dedicated_sweep" / "results.csv"):
        assert r["t_uniform"] == r["t_dedicated"] == r["t_offline"] == r["measured"]


def test_env_overrides_default_output(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.main(["run", "example1_nondistinct"]) == 0
    assert (tmp_path / "env" / "example1_nondistinct" / "report.txt").exists()


def test_formula_mismatch_fails_loudly(tmp_path, monkeypatch):
    monkeypatch.setattr(cli.analytics, "t_offline", lambda L, p: Fraction(2))
    assert run(tmp_path, "example1_offline") == 1
    assert "FAIL" in (tmp_path / "example1_offline" / "report.txt").read_text()


BAD_CONFIGS = [
    ("[scenario]\nmode = offline\n", 2, "expected one of"),
    ("[scenario]\nmode = offline-distinct\n[system]\nN = 4\nK = 4\ncaches = 2\nM = 2\n"
     "[association]\nprofile = 3, 1\n[demand]\nd = 1, 2, 3, 4\ncolour = blue\n", 12, "unknown key"),
    ("[scenario]\nmode = offline-distinct\n[system]\nN = 4\nK = four\n", 5, "K"),
    ("[scenario]\nmode = offline-distinct\n[sytem]\nN = 4\n", 3, "unknown section"),
    ("[scenario]\nmode = offline-distinct\n[system]\nN = 4\nK = 4\ncaches = 2\nM = 2\n"
     "[association]\nprofile = 3, 1\n", None, "needs [demand] d"),
]


@pytest.mark.parametrize("text,line,fragment", BAD_CONFIGS)
def test_config_errors_carry_lines(text, line, fragment):
    with pytest.raises(ConfigError) as exc:
        cli.parse_config(text, "bad.ini")
    assert fragment in str(exc.value)
    if line is not None:
        assert exc.value.line == line


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nmode = offline-distinct\n[system]\nN = 4\n")
    assert run(tmp_path, str(bad)) == 2
    assert "bad.ini" in capsys.readouterr().err
    assert run(tmp_path, "no_such_config") == 2


def test_invalid_parameters_are_config_errors(tmp_path):
    bad = tmp_path / "quota.ini"
    bad.write_text("[scenario]\nmode = offline-distinct\n[system]\nN = 4\nK = 4\ncaches = 2\n"
                   "M = 2\nF = 6\n[association]\nprofile = 3, 1\n[demand]\nd = 1, 2, 3, 4\n")
    assert run(tmp_path, str(bad)) == 2


def test_user_config_with_relative_trace(tmp_path):
    (tmp_path / "t.trace").write_text("- | 1 2\n3:1 | 3 2\n")
    cfg = tmp_path / "mine.ini"
    cfg.write_text("[scenario]\nmode = online\n[system]\nN = 2\nK = 2\ncaches = 2\nM = 1\n"
                   "F = 36\nbeta = 3\n[association]\ngroups = 1 | 2\n[demand]\ntrace = t.trace\n"
                   "[online]\nfiles = 1 2 3 4 5 6\npopular = 1 2\norder = 1 2 3 4 5 6\n")
    assert run(tmp_path / "out", str(cfg)) == 0
    rows = read_csv(tmp_path / "out" / "mine" / "results.csv")
    assert len(rows) == 2


def test_auto_file_size():
    assert cli.auto_file_size(4, Fraction(2), 2) == 4
    assert cli.auto_file_size(5, Fraction(2), 2) == 25
