"""CLI: headers, formatting, exit codes, determinism, parameter rules."""

import numpy as np
import pytest

from bqcf import cli
from bqcf.stability import CriticalStrainResult

EXPECTED_HEADERS = {
    "expansion1d": "K,alpha,blend,gamma_a,gamma_bqcf,abs_err",
    "expansion2d": "K,Ra,alpha,blend,gamma_a,gamma_bqcf,abs_err",
    "shear2d": "N,Ra,K,gamma_a,gamma_bqcf,rel_err",
    "stabregion": "model,s,r,stable",
    "microcrack": "K,Ra,N,gamma_a,gamma_bqcf,rel_err",
    "accuracy": "method,case,Ra,K,N,dof,err",
}


def test_headers_fixed():
    assert cli.HEADERS == EXPECTED_HEADERS


def _run(tmp_path, args, name="out.csv"):
    out = tmp_path / name
    rc = cli.main(args + ["--out", str(out)])
    return rc, out


def test_expansion1d_csv_and_determinism(tmp_path):
    args = ["expansion1d", "--n", "200", "--k-list", "4,8", "--alpha", "3"]
    rc1, f1 = _run(tmp_path, args, "a.csv")
    rc2, f2 = _run(tmp_path, args, "b.csv")
    assert rc1 == rc2 == 0
    assert f1.read_bytes() == f2.read_bytes()
    lines = f1.read_text().splitlines()
    assert lines[0] == EXPECTED_HEADERS["expansion1d"]
    assert len(lines) == 3
    k, alpha, blend, ga, gb, err = lines[1].split(",")
    assert k == "4" and blend == "quintic"
    assert float(err) == pytest.approx(abs(float(ga) - float(gb)))
    # larger blending width gives a smaller critical strain error
    assert float(lines[2].split(",")[5]) < float(err)


def test_float_serialization_17_digits(tmp_path):
    rc, f = _run(tmp_path, ["expansion1d", "--n", "200", "--k-list", "4"])
    assert rc == 0
    ga = f.read_text().splitlines()[1].split(",")[3]
    assert ga == format(float(ga), ".17g")


def test_nn_only_debug_models_coincide(tmp_path):
    dgamma = 1.0 / 200**2
    rc, f = _run(tmp_path, ["expansion1d", "--n", "200", "--k-list", "4,16",
                            "--nn-only"])
    assert rc == 0
    for line in f.read_text().splitlines()[1:]:
        assert float(line.split(",")[5]) <= 2 * dgamma


def test_validation_errors_exit_2(tmp_path, capsys):
    assert cli.main(["expansion1d", "--n", "0"]) == 2
    assert cli.main(["expansion1d", "--n", "abc"]) == 2
    assert cli.main(["expansion1d", "--k-list", ""]) == 2
    assert cli.main(["expansion1d", "--dgamma", "-1"]) == 2
    assert cli.main(["shear2d", "--ra-rule", "cubed"]) == 2
    assert cli.main(["accuracy", "--methods", "qce"]) == 2
    assert cli.main(["accuracy", "--methods", ""]) == 2
    capsys.readouterr()


def test_solver_failure_exit_3(monkeypatch, capsys):
    def fail(*args, **kwargs):
        return CriticalStrainResult(0.0, 1e-6, False, 1,
                                    metadata={"reason": "unstable at zero strain"})

    monkeypatch.setattr(cli, "critical_strain_linear", fail)
    assert cli.main(["expansion1d", "--n", "100", "--k-list", "4"]) == 3
    assert "solver failure" in capsys.readouterr().err


def test_ra_rules():
    assert cli.parse_ra_rule("fixed:14")(3, 100) == 14
    assert cli.parse_ra_rule("pow53")(4, 100) == int(np.floor(4 ** (5 / 3)))
    assert cli.parse_ra_rule("sqrtN")(4, 200) == 14
    assert cli.parse_ra_rule("maxK2")(1, 100) == 6
    assert cli.parse_ra_rule("maxK2")(4, 100) == 16
    with pytest.raises(cli.ConfigError):
        cli.parse_ra_rule("fixed:x")
    with pytest.raises(cli.ConfigError):
        cli.parse_ra_rule("fixed:0")


def test_stdout_output(capsys):
    rc = cli.main(["expansion1d", "--n", "200", "--k-list", "4"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith(EXPECTED_HEADERS["expansion1d"] + "\n")
    assert out.endswith("\n")


def test_microcrack_zero_vacancy_matches_defect_free(tmp_path):
    # without the crack the critical strain reverts to the homogeneous level
    rc, f = _run(tmp_path, ["microcrack", "--n", "24", "--k-list", "2",
                            "--dgamma", "1e-3", "--crack-length", "0",
                            "--ra-rule", "fixed:4"])
    assert rc == 0
    row = f.read_text().splitlines()[1].split(",")
    assert float(row[3]) > 0.15  # homogeneous stretch stability range


def test_shear2d_multiple_n(tmp_path):
    rc, f = _run(tmp_path, ["shear2d", "--n", "16,24", "--k-list", "2",
                            "--dgamma", "1e-4", "--ra-rule", "fixed:4"])
    assert rc == 0
    lines = f.read_text().splitlines()
    assert len(lines) == 3
    assert [line.split(",")[0] for line in lines[1:]] == ["16", "24"]
