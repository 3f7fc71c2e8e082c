import csv
import json

import pytest

from pwreg.cli import EXIT_CONSTRUCTION, EXIT_INPUT, EXIT_OK, EXIT_VERIFY, main

S1_JOB = ["approximate", "--input", "builtin:triangle-boundary", "--target", "sphere:1", "--oracle", "radial",
          "--eps", "0.05"]
TOLERANCE_KEYS = ["tau_rank", "tau_proj", "tau_den", "tau_iso", "chart_margin", "oscillation_bound",
                  "subdivision_bound", "gluing_tol", "degree_cap", "subdiv_cap", "pitch", "eps", "seed"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def s1_artifact(tmp_path, capsys):
    path = tmp_path / "s1.json"
    code, _, report = run(S1_JOB + ["--out", str(path)], capsys)
    assert code == EXIT_OK
    return path, report


class TestApproximate:
    def test_s1_job(self, s1_artifact):
        path, report = s1_artifact
        art = json.loads(path.read_text())
        assert art["certificate"]["eps_achieved"] < 0.05
        eps_line = next(ln for ln in report.splitlines() if "eps_achieved" in ln)
        assert float(eps_line.split()[-1]) < 0.05

    def test_config_echo(self, s1_artifact):
        _, report = s1_artifact
        for key in TOLERANCE_KEYS:
            assert f"  {key}" in report

    def test_artifact_layout(self, s1_artifact):
        art = json.loads(s1_artifact[0].read_text())
        for key in ("complex", "target", "per_simplex", "stratification", "certificate", "oracle", "config"):
            assert key in art

    def test_bit_identical(self, tmp_path, capsys):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        job = ["approximate", "--input", "builtin:triangle", "--target", "grassmann:H:2:1", "--oracle", "wave:0.2",
               "--eps", "0.05", "--seed", "3"]
        assert run(job + ["--out", str(a)], capsys)[0] == EXIT_OK
        assert run(job + ["--out", str(b), "--jobs", "3"], capsys)[0] == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_construction_failure(self, capsys):
        code, _, err = run(["approximate", "--input", "builtin:interval", "--target", "sphere:1", "--oracle",
                            "rotation:200", "--eps", "1e-3", "--subdiv-cap", "1"], capsys)
        assert code == EXIT_CONSTRUCTION and json.loads(err)["error"] == "DegreeCapExceeded"


class TestBadInput:
    @pytest.mark.parametrize("argv", [
        ["approximate", "--input", "builtin:nowhere", "--target", "sphere:1", "--oracle", "radial", "--eps", "1"],
        ["approximate", "--input", "builtin:interval", "--target", "torus:1", "--oracle", "radial", "--eps", "1"],
        ["approximate", "--input", "builtin:interval", "--target", "sphere:1", "--oracle", "radial", "--eps", "0"],
        ["approximate", "--input", "builtin:interval", "--target", "sphere:1", "--oracle", "nope", "--eps", "1"],
        ["approximate", "--input", "builtin:interval"],
        ["frobnicate"],
        ["verify", "--input", "/nonexistent.json"],
    ])
    def test_exit_three(self, argv, capsys):
        code, _, err = run(argv, capsys)
        assert code == EXIT_INPUT
        assert json.loads(err.strip().splitlines()[-1])["error"] == "BadInput"


class TestVerify:
    def test_round_trip(self, s1_artifact, capsys):
        assert run(["verify", "--input", str(s1_artifact[0])], capsys)[0] == EXIT_OK

    def test_corrupted(self, s1_artifact, tmp_path, capsys):
        art = json.loads(s1_artifact[0].read_text())
        sid = next(s for s in sorted(art["per_simplex"]) if s.count("-") == 1)
        art["per_simplex"][sid]["Y"][0]["terms"][0]["coef"] = "5/7"
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(art))
        code, _, err = run(["verify", "--input", str(bad)], capsys)
        assert code == EXIT_VERIFY and json.loads(err)["error"] == "CertificateMismatch"

    def test_tampered_eps(self, s1_artifact, tmp_path, capsys):
        art = json.loads(s1_artifact[0].read_text())
        art["certificate"]["eps_achieved"] = 1e-9
        bad = tmp_path / "eps.json"
        bad.write_text(json.dumps(art))
        assert run(["verify", "--input", str(bad)], capsys)[0] == EXIT_VERIFY

    @pytest.mark.parametrize("job", [
        ["--input", "builtin:interval", "--target", "grassmann:R:2:1", "--oracle", "rotation", "--eps", "1e-3"],
        ["--input", "builtin:triangle", "--target", "sphere:2", "--oracle", "wave:0.3", "--eps", "0.02"],
        ["--input", "builtin:triangle-boundary", "--target", "grassmann:R:2:1", "--oracle", "mobius", "--eps", "0.01"],
    ])
    def test_approximate_then_verify(self, job, tmp_path, capsys):
        path = tmp_path / "art.json"
        assert run(["approximate"] + job + ["--out", str(path)], capsys)[0] == EXIT_OK
        assert run(["verify", "--input", str(path)], capsys)[0] == EXIT_OK


class TestOtherCommands:
    def test_stratify_triangle(self, tmp_path, capsys):
        out = tmp_path / "strata.json"
        code, _, report = run(["stratify", "--input", "builtin:triangle", "--out", str(out)], capsys)
        assert code == EXIT_OK
        lines = [ln for ln in report.splitlines() if ln.startswith("S")]
        assert len(lines) == 3 and "1*x1 = 0" in lines[1]
        assert len(json.loads(out.read_text())["strata"]) == 3

    def test_subdivide(self, tmp_path, capsys):
        out = tmp_path / "sub.json"
        assert run(["subdivide", "--input", "builtin:triangle", "--iterations", "1", "--out", str(out)],
                   capsys)[0] == EXIT_OK
        assert len(json.loads(out.read_text())["simplices"]) == 6

    def test_subdivided_complex_loads(self, tmp_path, capsys):
        sub = tmp_path / "sub.json"
        run(["subdivide", "--input", "builtin:interval", "--out", str(sub)], capsys)
        code, _, _ = run(["approximate", "--input", str(sub), "--target", "grassmann:C:2:1", "--oracle",
                          "rotation", "--eps", "1e-2", "--out", str(tmp_path / "a.json")], capsys)
        assert code == EXIT_OK

    def test_report_csv(self, s1_artifact, tmp_path, capsys):
        out = tmp_path / "pieces.csv"
        assert run(["report", "--input", str(s1_artifact[0]), "--csv", str(out)], capsys)[0] == EXIT_OK
        rows = list(csv.DictReader(out.open()))
        art = json.loads(s1_artifact[0].read_text())
        assert len(rows) == len(art["per_simplex"])

    def test_bundle_iso_identity(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        run(["approximate", "--input", "builtin:triangle-boundary", "--target", "grassmann:R:2:1", "--oracle",
             "constant", "--eps", "0.01", "--out", str(path)], capsys)
        out = tmp_path / "iso.json"
        code, _, _ = run(["bundle-iso", "--input", str(path), "--target", str(path), "--out", str(out)], capsys)
        assert code == EXIT_OK and json.loads(out.read_text())["certificate"]["sigma_min"] >= 1 - 1e-6

    def test_bundle_iso_rejection(self, tmp_path, capsys):
        mob, prod = tmp_path / "m.json", tmp_path / "p.json"
        base = ["--input", "builtin:triangle-boundary", "--target", "grassmann:R:2:1", "--eps", "0.01",
                "--subdiv-cap", "6"]
        run(["approximate"] + base + ["--oracle", "mobius", "--out", str(mob)], capsys)
        run(["approximate"] + base + ["--oracle", "constant", "--out", str(prod)], capsys)
        code, _, err = run(["bundle-iso", "--input", str(mob), "--target", str(prod)], capsys)
        assert code in (EXIT_CONSTRUCTION, EXIT_VERIFY)
