import csv
import json
import math
from importlib import resources

import pytest

from collapse_bounds import cli
from collapse_bounds.config import DEFAULTS, config_hash, validate_config
from collapse_bounds.core import ValidationError

DATA = resources.files("collapse_bounds") / "data"


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def read_curve(path):
    header, rows = [], []
    with open(path, newline="") as fh:
        for line in fh.read().split("\r\n"):
            if line.startswith("#"):
                header.append(line)
            elif line:
                rows.append(line)
    return header, rows


# ---------------------------------------------------------------- config

def test_defaults_validate():
    cfg = validate_config({})
    assert cfg["gamma0"]["linewidth_hz"] == 9e-6
    assert config_hash(cfg) == config_hash(validate_config({}))


def test_strict_and_lax_modes():
    with pytest.raises(ValidationError) as exc:
        validate_config({"sphere": {"radius": 1e-6, "colour": "red"}})
    assert "colour" in exc.value.field
    with pytest.warns(UserWarning):
        cfg = validate_config({"sphere": {"radius": 1e-6, "colour": "red"}}, strict=False)
    assert cfg["sphere"]["radius"] == 1e-6
    with pytest.raises(ValidationError) as exc:
        validate_config({"sphere": {"radius": -1.0}})
    assert exc.value.field == "sphere.radius"


def test_hash_ignores_output_block_only():
    a = validate_config({"output": {"dir": "x", "threads": 8}})
    b = validate_config({})
    c = validate_config({"gamma0": {"linewidth_hz": 26.7e-6}})
    assert config_hash(a) == config_hash(b) != config_hash(c)


# ---------------------------------------------------------------- predict

def test_predict_examples(capsys):
    code, out, _ = run(["predict", "--model", "dcsl"], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["gamma_per_s"] == pytest.approx(4.95e3, rel=2e-3)
    assert rep["linewidth_hz"] == pytest.approx(rep["gamma_per_s"] / (2 * math.pi))
    code, out, _ = run(["predict", "--model", "dcsl", "--set", "T_c=inf"], capsys)
    assert json.loads(out)["gamma_per_s"] == 0.0
    code, out, _ = run(["predict", "--model", "cgf", "--set", "xi=0"], capsys)
    assert json.loads(out)["gamma_per_s"] == 0.0


def test_predict_ddp_fit_warning(capsys):
    code, out, _ = run(["predict", "--model", "ddp", "--set", "R0=1e-4"], capsys)
    assert code == 0 and json.loads(out)["warnings"]


def test_predict_errors(capsys):
    code, _, err = run(["predict", "--model", "dcsl", "--set", "r_c=-1"], capsys)
    assert code == 2 and "r_c" in err
    code, _, err = run(["predict", "--model", "dcsl", "--set", "colour=1"], capsys)
    assert code == 2 and "colour" in err
    code, _, err = run(["predict", "--model", "dcsl", "--set", "r_c=abc"], capsys)
    assert code == 2


def test_config_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run(["predict", "--model", "dcsl", "--config", str(bad)], capsys)
    assert code == 2 and "line 1" in err
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"gamma0": {"linewidth_hz": 1e-5, "unit": "Hz"}}))
    code, _, err = run(["predict", "--model", "dcsl", "--config", str(unknown)], capsys)
    assert code == 2 and "gamma0.unit" in err
    with pytest.warns(UserWarning, match="unit"):
        code, _, _ = run(["predict", "--model", "dcsl", "--config", str(unknown), "--lax"], capsys)
    assert code == 0


# ---------------------------------------------------------------- exclude

def test_exclude_dcsl_files(tmp_path, capsys):
    code, out, _ = run(["exclude", "--model", "dcsl", "--out", str(tmp_path),
                        "--grid", "1e-9,1e-3,120,log"], capsys)
    assert code == 0
    files = json.loads(out)["files"]
    assert len(files) == 4
    for path in files:
        header, rows = read_curve(path)
        assert any(h.startswith("# config_sha256: ") for h in header)
        xs = [float(r.split(",")[0]) for r in rows[1:]]
        assert all(b > a for a, b in zip(xs, xs[1:]))
        side = json.loads(open(path[:-4] + ".json").read())
        assert side["metadata"]["min_r_c_over_R"] == pytest.approx(0.6, abs=0.05)
        # 17 significant digits round-trip exactly
        for r in rows[1:3]:
            x = r.split(",")[0]
            assert format(float(x), ".17g") == x


def test_exclude_ddp_none_rows(tmp_path, capsys):
    code, out, _ = run(["exclude", "--model", "ddp", "--out", str(tmp_path),
                        "--grid", "1e-9,1e-4,40,log"], capsys)
    assert code == 0
    header, rows = read_curve(json.loads(out)["files"][0])
    tail = [r.split(",") for r in rows[1:] if float(r.split(",")[0]) > 3e-5]
    assert tail and all(y == "none" for _, y in tail)


def test_exclude_deterministic_with_threads(tmp_path, capsys):
    outs = []
    for threads, sub in ((1, "a"), (4, "b")):
        d = tmp_path / sub
        run(["exclude", "--model", "cgf", "--out", str(d), "--threads", str(threads),
             "--grid", "1e-9,1,60,log"], capsys)
        outs.append({p.name: p.read_bytes() for p in d.glob("*.csv")})
    assert outs[0] == outs[1] and len(outs[0]) == 5


def test_exclude_gamma0_override_and_overlay(tmp_path, capsys):
    overlay = tmp_path / "adler.csv"
    overlay.write_text("r_c,lambda\n1e-7,1e-10\n1e-7,1e-6\n")
    code, out, _ = run(["exclude", "--model", "dcsl", "--out", str(tmp_path / "o"),
                        "--gamma0-hz", "26.7e-6", "--grid", "1e-8,1e-4,20,log",
                        "--overlay", str(overlay)], capsys)
    assert code == 0
    files = json.loads(out)["files"]
    assert files[-1].endswith("overlay_adler.csv")
    side = json.loads(open(files[0][:-4] + ".json").read())
    assert side["bound_linewidth_hz"] == pytest.approx(26.7e-6, rel=1e-15)


def test_exclude_bad_grid(tmp_path, capsys):
    code, _, err = run(["exclude", "--model", "dcsl", "--out", str(tmp_path), "--grid", "1,2,3"], capsys)
    assert code == 2 and "grid" in err
    code, _, _ = run(["exclude", "--model", "dcsl", "--out", str(tmp_path), "--grid", "1e-3,1e-9,10,log"], capsys)
    assert code == 2


# ---------------------------------------------------------------- fits

def test_fit_ringdown_fixture(capsys):
    code, out, _ = run(["fit-ringdown", str(DATA / "ringdown_synthetic.csv")], capsys)
    rep = json.loads(out)
    assert code == 0
    assert abs(rep["tau_s"] - 1.19e4) <= 3 * rep["tau_sigma_s"]
    assert rep["linewidth_hz"] == pytest.approx(26.7e-6, abs=3 * rep["linewidth_sigma_hz"] + 0.05e-6)


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def test_fit_ringdown_contracts(tmp_path, capsys):
    three = tmp_path / "three.csv"
    _write(three, ["t_s", "amplitude", "sigma"],
           [[t, math.exp(-t / 1.19e4), 1e-3] for t in (0.0, 1e3, 2e3)])
    code, out, _ = run(["fit-ringdown", str(three)], capsys)
    assert code == 0 and json.loads(out)["warnings"]

    back = tmp_path / "back.csv"
    _write(back, ["t_s", "amplitude", "sigma"], [[0, 1, 0.01], [2, 0.9, 0.01], [1, 0.8, 0.01]])
    code, _, _ = run(["fit-ringdown", str(back)], capsys)
    assert code == 2

    junk = tmp_path / "junk.csv"
    _write(junk, ["t_s", "amplitude", "sigma"], [[0, 1, 0.01], [1, "x", 0.01]])
    code, _, err = run(["fit-ringdown", str(junk)], capsys)
    assert code == 2 and "line 3" in err

    nohead = tmp_path / "nohead.csv"
    _write(nohead, ["0", "1", "0.01"], [[1, 0.9, 0.01]])
    code, _, _ = run(["fit-ringdown", str(nohead)], capsys)
    assert code == 2

    flat = tmp_path / "flat.csv"
    _write(flat, ["t_s", "amplitude", "sigma"], [[t, 1.0, 1e-3] for t in range(20)])
    code, _, _ = run(["fit-ringdown", str(flat)], capsys)
    assert code == 3


def test_fit_pressure_fixture(capsys):
    code, out, _ = run(["fit-pressure", str(DATA / "pressure_synthetic.csv")], capsys)
    rep = json.loads(out)
    assert code == 0
    c0_sigma = math.sqrt(rep["covariance"][0][0])
    assert abs(rep["coefficients"]["c0_hz"] - 5e-6) <= 3 * c0_sigma
    assert abs(rep["coefficients"]["c1_hz_per_mbar"] - 2.1) <= 3 * math.sqrt(rep["covariance"][1][1])
    _, out99, _ = run(["fit-pressure", str(DATA / "pressure_synthetic.csv"), "--confidence", "0.99"], capsys)
    assert json.loads(out99)["upper_bound_linewidth_hz"] > rep["upper_bound_linewidth_hz"]


def test_fit_pressure_thermomolecular(capsys):
    _, raw, _ = run(["fit-pressure", str(DATA / "pressure_synthetic.csv")], capsys)
    _, cor, _ = run(["fit-pressure", str(DATA / "pressure_synthetic.csv"),
                     "--correct-thermomolecular"], capsys)
    raw, cor = json.loads(raw), json.loads(cor)
    factor = math.sqrt(4.2 / 300)
    assert cor["coefficients"]["c1_hz_per_mbar"] == pytest.approx(
        raw["coefficients"]["c1_hz_per_mbar"] / factor, rel=1e-9)
    assert cor["coefficients"]["c0_hz"] == pytest.approx(raw["coefficients"]["c0_hz"], rel=1e-9)
    assert cor["thermomolecular_corrected"] is True


# ---------------------------------------------------------------- validate

def test_validate_report(capsys):
    code, out, _ = run(["validate"], capsys)
    rep = json.loads(out)
    names = {c["name"]: c for c in rep["checks"]}
    assert code == 0 and rep["passed"]
    assert names["dcsl_quadrature_vs_closed_form"]["measured"] < 1e-6
    assert names["dcsl_lattice_vs_granular"]["measured"] < 1e-10
    assert names["ddp_uniform_to_granular_limit"]["measured"] < 1e-3
    ep = names["epstein_hz_per_mbar"]["detail"]
    assert ep["discrepancy_flag"] is True
    assert ep["ratio_to_quoted"] == pytest.approx(2.0, rel=0.05)


def test_defaults_are_plain_json():
    json.dumps(DEFAULTS, allow_nan=False)
