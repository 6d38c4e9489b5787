import csv
import io
import json
from datetime import date

import pytest

from emt.cli import run
from emt.ingest import format_mortality_csv, MortalitySeries

from conftest import belgian_like


@pytest.fixture
def weekly_csv(tmp_path, german_like):
    p = tmp_path / "de_weekly.csv"
    p.write_text(format_mortality_csv(german_like))
    return p


@pytest.fixture(scope="module")
def daily_csv(tmp_path_factory):
    y, _ = belgian_like(seed=2, n=730)
    s = MortalitySeries(y, date(2009, 1, 1), population=11_500_000, country="BE")
    p = tmp_path_factory.mktemp("daily") / "be_daily.csv"
    p.write_text(format_mortality_csv(s))
    return p


def call(*argv, env=None):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err, env or {})
    return code, out.getvalue(), err.getvalue()


def kv(text):
    return dict(tok.split("=", 1) for line in text.splitlines() for tok in line.split())


def test_baseline_quantile(weekly_csv, tmp_path):
    out = tmp_path / "o"
    code, stdout, err = call("baseline", "--input", str(weekly_csv), "--method", "quantile", "--q", "0.10",
                             "--years", "2016-2019", "--out", str(out))
    assert code == 0, err
    info = kv(stdout)
    assert info["method"] == "quantile" and info["years"] == "2016-2019"
    assert "level_per_million" in info
    assert (out / "baseline.csv").read_text().startswith("week,level,method,q,years,excluded\n")


def test_excess_with_exclusion(weekly_csv, tmp_path, german_like):
    from emt.baselines import exclude_years, historical_baseline
    from emt.ingest import to_weekly_panel
    from emt.scores import cumulative_excess, excess_series

    code, stdout, err = call("excess", "--input", str(weekly_csv), "--weeks", "11:23", "--method", "hist",
                             "--exclude", "2018", "--out", str(tmp_path / "o"))
    assert code == 0, err
    p = to_weekly_panel(german_like, [2016, 2017, 2018, 2019])
    b = exclude_years(historical_baseline(p, p.years), [2018])
    expected = cumulative_excess(excess_series(german_like, b), (11, 23))
    assert float(kv(stdout)["cumulative_excess"]) == pytest.approx(expected, rel=1e-5)


def test_unknown_flag_exit_1():
    code, stdout, err = call("baseline", "--bogus")
    assert code == 1
    assert "usage:" in err
    assert json.loads(err.strip().splitlines()[-1])["exit"] == 1


def test_missing_seed_and_bad_values(weekly_csv):
    for argv in (
        ("dispersion", "--input", str(weekly_csv)),
        ("baseline", "--input", str(weekly_csv), "--q", "1.5"),
        ("baseline", "--input", str(weekly_csv), "--weeks", "5:2"),
        ("baseline", "--input", str(weekly_csv), "--years", "20x6"),
        ("baseline",),
    ):
        code, _, err = call(*argv)
        assert code == 1, argv
        assert json.loads(err.strip().splitlines()[-1])["exit"] == 1


def test_validation_errors_exit_1(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("date,deaths\n2024-01-01,5\n2024-01-03,5\n")
    code, _, err = call("ingest", "--input", str(bad), "--out", str(tmp_path / "o"))
    assert code == 1
    msg = json.loads(err.strip())
    assert msg["error"] == "GapInDates" and "row 3" in msg["message"]
    code, _, err = call("ingest", "--input", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o"))
    assert code == 1


def test_computation_error_exit_2(daily_csv, tmp_path, monkeypatch):
    from emt import errors, tvsmooth

    def boom(*a, **k):
        raise errors.Infeasible("residual bounds do not match the fit")

    monkeypatch.setattr(tvsmooth, "tv_smooth", boom)
    code, _, err = call("smooth", "--input", str(daily_csv), "--out", str(tmp_path))
    assert code == 2
    assert json.loads(err.strip()) == {"exit": 2, "error": "Infeasible", "message": "residual bounds do not match the fit"}


def test_env_out_and_config(weekly_csv, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nmethod = quantile\nq=0.2\n")
    env = {"EMT_OUT": str(tmp_path / "envout"), "EMT_CONFIG": str(cfg)}
    code, stdout, err = call("baseline", "--input", str(weekly_csv), "--years", "2016-2019", env=env)
    assert code == 0, err
    assert kv(stdout)["q"] == "0.2"
    assert (tmp_path / "envout" / "baseline.csv").exists()
    code, stdout, _ = call("baseline", "--input", str(weekly_csv), "--years", "2016-2019", "--method", "hist", env=env)
    assert kv(stdout)["method"] == "historical_mean"
    cfg.write_text("colour=blue\n")
    assert call("baseline", "--input", str(weekly_csv), env=env)[0] == 1


def _outputs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_daily_report_byte_identical(daily_csv, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        code, _, err = call("report", "--input", str(daily_csv), "--seed", "1", "--nsim", "30", "--out", str(d), "--plot")
        assert code == 0, err
    assert _outputs(a) == _outputs(b)
    names = set(_outputs(a))
    assert {"fit.csv", "extremes.csv", "epidemics.csv", "dispersion.csv", "selection_harmonic.csv",
            "selection_lag.csv", "smooth_order1.csv", "smooth_order1_meta.txt", "fit.svg"} <= names


def test_weekly_report_and_csvs_reparse(weekly_csv, tmp_path):
    out = tmp_path / "w"
    code, _, err = call("report", "--input", str(weekly_csv), "--seed", "1", "--out", str(out), "--plot",
                        "--weeks", "11:23")
    assert code == 0, err
    csvs = [p for p in out.iterdir() if p.suffix == ".csv"]
    assert {p.name for p in csvs} >= {"baseline.csv", "excess.csv", "pscore.csv", "zscore.csv"}
    for p in csvs:
        rows = list(csv.reader(io.StringIO(p.read_text(encoding="utf-8"))))
        assert len(rows) >= 2
        assert all(len(r) == len(rows[0]) for r in rows)


def test_ingest_round_trip(daily_csv, tmp_path):
    code, stdout, _ = call("ingest", "--input", str(daily_csv), "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "series.csv").read_text() == daily_csv.read_text()
    assert kv(stdout)["rows"] == "730"


def test_country_filter(daily_csv, tmp_path):
    code, _, err = call("ingest", "--input", str(daily_csv), "--country", "DE", "--out", str(tmp_path))
    assert code == 1


def test_compare_zp(tmp_path):
    code, stdout, _ = call("compare-zp", "--seed", "4", "--nsim", "2000", "--out", str(tmp_path))
    assert code == 0
    assert float(kv(stdout)["z_ratio"]) == pytest.approx(10, rel=0.1)
    assert (tmp_path / "compare_zp.csv").read_text().startswith("n,delta,mean_z,mean_p,ci_lo,ci_hi,coverage\n")


def test_smooth_order_2_and_peaks(daily_csv, tmp_path):
    code, stdout, err = call("smooth", "--input", str(daily_csv), "--order", "2", "--out", str(tmp_path))
    assert code == 0, err
    assert (tmp_path / "smooth_order2_meta.txt").read_text().startswith("solver=")
    code, stdout, err = call("peaks", "--input", str(daily_csv), "--tau", "3", "--out", str(tmp_path))
    assert code == 0, err
    assert kv(stdout)["converged"] == "True"
