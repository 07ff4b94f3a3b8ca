import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

import basket_wing
from basket_wing import cli

CONFIGS = Path(basket_wing.__file__).parent / "configs"
SHIPPED = sorted(p.name for p in CONFIGS.glob("*.toml"))
HEADER = "k,strike,iv_asymptotic,iv_oracle,abs_error,source"


def run(command, config, out):
    return cli.main([command, "--config", str(config), "--out", str(out)])


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_shipped_configs_present():
    assert {"bs_single.toml", "bs_two_asset.toml", "bs_exceptional.toml", "tc_gamma.toml", "tc_basket.toml",
            "copula_gaussian.toml", "copula_gumbel.toml"} <= set(SHIPPED)


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_configs_validate(name, tmp_path):
    assert run("validate", CONFIGS / name, tmp_path) == 0
    report = json.loads((tmp_path / "validate.json").read_text())
    assert report["status"] == "passed" and report["criteria"]
    assert all(c["passed"] for c in report["criteria"])
    assert all(c["measured"] <= c["tolerance"] for c in report["criteria"])


@pytest.mark.parametrize("name", SHIPPED)
@pytest.mark.parametrize("command", ["leftwing", "rightwing"])
def test_wings_run_and_write_schema(name, command, tmp_path):
    assert run(command, CONFIGS / name, tmp_path) == 0
    side = command[:-4]
    csv_path = tmp_path / f"{side}wing.csv"
    assert csv_path.read_text().splitlines()[0] == HEADER
    payload = json.loads((tmp_path / f"{side}wing.json").read_text())
    assert payload["command"] == command
    assert len(payload["points"]) == len(rows(csv_path))


def test_single_asset_left_curve_is_flat(tmp_path):
    assert run("leftwing", CONFIGS / "bs_single.toml", tmp_path) == 0
    assert max(float(r["abs_error"]) for r in rows(tmp_path / "leftwing.csv")) < 1e-6


def test_reference_left_error_decays(tmp_path):
    assert run("leftwing", CONFIGS / "bs_two_asset.toml", tmp_path) == 0
    errs = [float(r["abs_error"]) for r in rows(tmp_path / "leftwing.csv")]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_exceptional_config_reports_regime(tmp_path):
    assert run("leftwing", CONFIGS / "bs_exceptional.toml", tmp_path) == 0
    payload = json.loads((tmp_path / "leftwing.json").read_text())
    assert payload["summary"]["regime"] == "exceptional"
    assert {float(r["iv_asymptotic"]) for r in rows(tmp_path / "leftwing.csv")} == {0.2}


def test_bs_right_wing_is_constant_max_vol(tmp_path):
    assert run("rightwing", CONFIGS / "bs_two_asset.toml", tmp_path) == 0
    assert {float(r["iv_asymptotic"]) for r in rows(tmp_path / "rightwing.csv")} == {0.3}


def test_copula_right_wing_notes_ignored_copula(tmp_path):
    assert run("rightwing", CONFIGS / "copula_gaussian.toml", tmp_path) == 0
    payload = json.loads((tmp_path / "rightwing.json").read_text())
    assert "copula is ignored" in payload["summary"]["note"]
    for r in rows(tmp_path / "rightwing.csv"):
        assert r["iv_oracle"] == "" and r["abs_error"] == ""
        assert r["source"].startswith("asymptotic-")


def test_timechange_right_wing_grows_like_sqrt_k(tmp_path):
    assert run("rightwing", CONFIGS / "tc_basket.toml", tmp_path) == 0
    r = rows(tmp_path / "rightwing.csv")
    ratios = [float(x["iv_asymptotic"]) / float(x["k"]) ** 0.5 for x in r]
    assert max(ratios) - min(ratios) < 1e-12


@pytest.mark.parametrize("name", ["tc_basket.toml", "bs_two_asset.toml"])
def test_outputs_are_byte_identical_across_runs_and_threads(name, tmp_path, monkeypatch):
    for threads, out in (("1", "a"), ("4", "b")):
        monkeypatch.setenv("BASKET_WING_THREADS", threads)
        for command in ("leftwing", "validate"):
            assert run(command, CONFIGS / name, tmp_path / out) == 0
    for f in ("leftwing.csv", "leftwing.json", "validate.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_missing_config_exits_2(tmp_path):
    assert run("leftwing", tmp_path / "nope.toml", tmp_path / "out") == 2


def test_malformed_toml_exits_2(tmp_path):
    cfg = write(tmp_path, "model = \n")
    assert run("leftwing", cfg, tmp_path / "out") == 2
    err = json.loads((tmp_path / "out" / "leftwing.error.json").read_text())
    assert err["exit_code"] == 2 and err["error"] == "ConfigError"


@pytest.mark.parametrize(
    "text",
    [
        'model = "bs"\nk_grid = [4.0, 2.0]\n[basket]\nweights = [1.0]\nvols = [0.2]\n',
        'model = "heston"\nk_grid = [4.0]\n',
        'model = "bs"\nk_grid = []\n[basket]\nweights = [1.0]\nvols = [0.2]\n',
        'model = "bs"\nk_grid = [4.0]\n[basket]\nweights = [1.0]\nvols = [0.2]\n[oracle]\nkind = "mc"\npaths = 1001\n',
        'model = "bs"\nk_grid = [4.0]\n[basket]\nweights = [1.0]\n',
        'model = "copula"\nk_grid = [4.0]\n[copula]\nfamily = "gaussian"\nrho = 0.5\n[oracle]\nkind = "quad"\n',
        'model = "bs"\nk_grid = [4.0]\nmaturity = "soon"\n[basket]\nweights = [1.0]\nvols = [0.2]\n',
    ],
    ids=["decreasing-grid", "unknown-model", "empty-grid", "odd-paths", "missing-vols", "copula-oracle", "bad-maturity"],
)
def test_invalid_configs_exit_2(text, tmp_path):
    assert run("leftwing", write(tmp_path, text), tmp_path / "out") == 2


def test_validate_without_oracle_exits_2(tmp_path):
    cfg = write(tmp_path, 'model = "bs"\nk_grid = [4.0]\n[basket]\nweights = [1.0]\nvols = [0.2]\n')
    assert run("validate", cfg, tmp_path / "out") == 2


def test_moment_condition_violation_exits_3(tmp_path):
    cfg = write(tmp_path, """
model = "timechange"
k_grid = [5.0]
[basket]
weights = [1.0]
vols = [1.5]
mu = [0.3]
[timechange]
family = "gamma"
c = 1.0
rate = 1.0
""")
    assert run("leftwing", cfg, tmp_path / "out") == 3
    err = json.loads((tmp_path / "out" / "leftwing.error.json").read_text())
    assert err["error"] == "MomentError" and "moment condition" in err["message"]


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "basket_wing.cli", "leftwing", "--config", str(CONFIGS / "bs_single.toml"),
         "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "leftwing.csv").exists()


def test_usage_error_from_argparse():
    with pytest.raises(SystemExit) as exc:
        cli.main(["sideways", "--config", "x", "--out", "y"])
    assert exc.value.code == 2
