import json

import pytest

from extremax.cli import EXIT_CONVERGENCE, EXIT_INVALID, EXIT_OK, main

UNI = '{"kind":"uniform","a":0,"b":1}'
DISC4 = '{"kind":"discrete","support":[1,2,3,4],"pmf":[0.25,0.25,0.25,0.25]}'


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_lossless(capsys):
    code, out, _ = run(capsys, "lossless", "--source", DISC4, "--users", "3", "--target", "argmax")
    assert code == EXIT_OK
    d = json.loads(out)
    assert d["rate_bits"] == pytest.approx(4.5) and d["saving_bits"] == pytest.approx(1.5)


def test_lossless_from_file(capsys, tmp_path):
    p = tmp_path / "src.json"
    p.write_text(DISC4)
    code, out, _ = run(capsys, "lossless", "--source", str(p), "--users", "2", "--target", "max")
    assert code == EXIT_OK and json.loads(out)["rate_bits"] == pytest.approx(4.0)


def test_quantize(capsys):
    code, out, _ = run(capsys, "quantize", "--source", UNI, "--bins", "4")
    assert code == EXIT_OK
    d = json.loads(out)
    assert d["distortion"] == pytest.approx(1 / 96, abs=1e-9)
    code, out, _ = run(capsys, "quantize", "--source", UNI, "--sweep", "2..3")
    lines = out.strip().splitlines()
    assert lines[0] == "K,rate_per_user_bits,distortion,normalized_distortion" and len(lines) == 3
    code, out, _ = run(capsys, "quantize", "--source", UNI, "--bins", "2", "--het")
    assert json.loads(out)["rate_bits"] == pytest.approx(1.0)


def test_quantize_rate_limit(capsys):
    src = '{"kind":"exponential","rate":1,"truncate":10}'
    code, out, _ = run(capsys, "quantize", "--source", src, "--bins", "2", "--rate-limit", "1.75")
    d = json.loads(out)
    assert code == EXIT_OK and d["rate_bits"] <= 1.75 + 1e-9 and d["constraint_active"]


def test_rdf(capsys):
    code, out, _ = run(capsys, "rdf", "--source", UNI, "--disc", "8", "--points", "10")
    lines = out.strip().splitlines()
    assert code == EXIT_OK and lines[0] == "mu,rate_bits,distortion,normalized_distortion"
    assert len(lines) == 11


def test_interactive(capsys):
    code, out, _ = run(capsys, "interactive", "--source", DISC4, "--users", "3", "--trials", "2000")
    d = json.loads(out)
    assert code == EXIT_OK and d["all_correct"]
    assert {"dp_expected_bits", "simulated_mean_bits", "simulated_std", "rounds_mean"} <= set(d)
    code, out, _ = run(capsys, "interactive", "--source", DISC4, "--baseline", "median")
    assert json.loads(out)["recursion_bits"] < 6
    code, out, _ = run(capsys, "interactive", "--source", DISC4, "--users", "3", "--baseline", "nbis",
                       "--trials", "100")
    assert json.loads(out)["phases"] == 5
    code, out, _ = run(capsys, "interactive", "--source", DISC4, "--sweep-levels", "2..4", "--trials", "200")
    assert out.splitlines()[0] == "N,L,dp_expected_bits,simulated_mean_bits,simulated_std"


def test_experiment(capsys, tmp_path):
    p = tmp_path / "scaling.csv"
    code, _, _ = run(capsys, "experiment", "--id", "scaling-saving", "--sweep", "8..9", "--out", str(p))
    assert code == EXIT_OK and p.read_text().startswith("N,")
    code, out, _ = run(capsys, "experiment", "--id", "median-bound", "--sweep", "2..3")
    assert out.startswith("L,")


def test_invalid_input_exit_code(capsys):
    code, _, err = run(capsys, "lossless", "--source", '{"kind":"uniform"}', "--users", "2")
    assert code == EXIT_INVALID and "discrete" in err
    code, _, err = run(capsys, "lossless", "--source", "{not json", "--users", "2")
    assert code == EXIT_INVALID
    code, _, _ = run(capsys, "interactive", "--source", DISC4, "--sweep-users", "4")
    assert code == EXIT_INVALID


def test_convergence_exit_code(capsys, monkeypatch):
    from extremax import quantizer
    from extremax.errors import ConvergenceError

    def fail(*a, **k):
        raise ConvergenceError("no start met the tolerance")

    monkeypatch.setattr(quantizer, "design_min_distortion_homsq", fail)
    code, _, err = run(capsys, "quantize", "--source", UNI, "--bins", "3")
    assert code == EXIT_CONVERGENCE and "tolerance" in err


def test_argparse_rejects_unknown_target():
    with pytest.raises(SystemExit):
        main(["lossless", "--source", DISC4, "--users", "2", "--target", "median"])
