import pytest

from shadowstep.dynamics import total_energy
from shadowstep.main import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_RESIDUAL,
    EXIT_SCHEME,
    build_parser,
    main,
    overrides_from_args,
    parse_claims,
)
from shadowstep.errors import ConfigurationError
from shadowstep.threebody import build_sun_earth_moon

KDK = "K(FULL,1/2,0) D(1) K(FULL,1/2,0)"


def test_shadow_verify_report(capsys):
    assert main(["shadow-verify", "--scheme", "omelyan5", "--degree", "3"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "scheme: omelyan5"
    assert out[1] == "stages: K(FULL,1/6,0) D(1/2) K(FULL,2/3,0) D(1/2) K(FULL,1/6,0)"
    assert out[2] == "palindromic: yes"
    assert "grade2: 0" in out
    assert "grade3: -1/72 * [V,[T,V]]" in out
    assert out[-1] == "residual: 0"


def test_shadow_verify_commuting_nested_scheme(capsys):
    assert main(["shadow-verify", "--scheme", "nested-leapfrog", "--M", "2", "--degree", "3", "--commuting"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert "relations: [V1,V2] = 0" in out
    assert out[-1] == "residual: 0"


def test_custom_scheme_without_claims_leaves_a_residual(capsys):
    assert main(["shadow-verify", "--scheme-text", KDK, "--degree", "3"]) == EXIT_RESIDUAL
    assert "residual: 0" not in capsys.readouterr().out


def test_custom_scheme_with_matching_claim(capsys):
    argv = ["shadow-verify", "--scheme-text", KDK, "--degree", "3", "--claim", "3:-1/24 [V,[V,T]] + 1/12 [T,[T,V]]"]
    assert main(argv) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[-1] == "residual: 0"


def test_inconsistent_custom_scheme_exits_with_scheme_error():
    assert main(["shadow-verify", "--scheme-text", "K(FULL,1/2,0) D(1) K(FULL,1/4,0)"]) == EXIT_SCHEME
    assert main(["shadow-verify", "--scheme-text", "K(FULL,1/2,0) D(1"]) == EXIT_SCHEME


def test_claim_of_wrong_degree_exits_with_scheme_error():
    assert main(["shadow-verify", "--scheme", "leapfrog", "--claim", "2:[V,[T,V]]"]) == EXIT_SCHEME


def test_non_palindromic_custom_scheme_is_reported(capsys):
    main(["shadow-verify", "--scheme-text", "D(1/3) K(FULL,1,0) D(2/3)", "--degree", "3"])
    assert "palindromic: no" in capsys.readouterr().out.splitlines()


@pytest.mark.parametrize(
    "argv",
    [
        ["shadow-verify", "--scheme", "alike5", "--lambda", "0.7"],
        ["shadow-verify", "--scheme", "verlet"],
        ["simulate", "--scheme", "leapfrog", "--h", "0.04", "--t-end", "-1"],
        ["simulate", "--scheme", "leapfrog", "--h", "0.05", "--t-end", "0.12"],
        ["simulate", "--scheme", "leapfrog"],
        ["converge", "--scheme", "leapfrog", "--h", "0.01,0.02,0.04,0.08"],
        ["shadow-verify", "--scheme", "omelyan5", "--claim", "three:[T,V]"],
        ["schemes", "--M", "0"],
    ],
)
def test_invalid_configuration_exits_with_config_error(argv):
    assert main(argv) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def test_simulate_csv(capsys):
    assert main(["simulate", "--scheme", "nested-fg", "--M", "3", "--h", "0.04", "--t-end", "1.2"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "step,time_mo,energy,rel_energy_error"
    state, model = build_sun_earth_moon()
    assert lines[1] == f"0,0.0,{total_energy(state, model)!r},0.0"
    assert len(lines) == 32
    assert lines[-1].startswith("30,")


def test_simulate_from_config_file(tmp_path, capsys):
    path = tmp_path / "run.yaml"
    path.write_text("experiment: simulate\nschemes: [leapfrog]\nh: 0.04\nt_end: 0.4\nsample_every: 5\n", encoding="utf-8")
    assert main(["simulate", "--config", str(path), "--h", "0.08"]) == EXIT_OK
    rows = [line.split(",")[0] for line in capsys.readouterr().out.splitlines()[1:]]
    assert rows == ["0", "5"]


def test_simulate_is_deterministic(tmp_path):
    outputs = []
    for name in ("a.csv", "b.csv"):
        target = tmp_path / name
        argv = ["simulate", "--scheme", "omelyan5-fg", "--h", "0.04", "--t-end", "2.0", "--output", str(target)]
        assert main(argv) == EXIT_OK
        outputs.append(target.read_bytes())
    assert outputs[0] == outputs[1]


def test_several_schemes_write_suffixed_files(tmp_path):
    target = tmp_path / "run.csv"
    argv = ["simulate", "--scheme", "leapfrog,nested-fg", "--M", "3", "--h", "0.04", "--t-end", "0.4", "--output", str(target)]
    assert main(argv) == EXIT_OK
    assert (tmp_path / "run-leapfrog.csv").exists()
    assert (tmp_path / "run-nested-fg-M-3.csv").exists()
    assert not target.exists()


def test_benchmark_csv(tmp_path):
    target = tmp_path / "bench.csv"
    argv = ["benchmark", "--scheme", "leapfrog", "--h", "0.4,0.2", "--t-end", "1.2", "--w-fast-force", "0.5", "--output", str(target)]
    assert main(argv) == EXIT_OK
    lines = target.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "scheme,h,weighted_cost,max_rel_err"
    assert lines[1].startswith("leapfrog,0.4,6.0,")


def test_schemes_listing(capsys):
    assert main(["schemes", "--M", "2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "leapfrog: K(FULL,1/2,0) D(1) K(FULL,1/2,0)" in out
    assert "nested-fg: " in out


def test_overrides_from_args():
    args = build_parser().parse_args(
        ["benchmark", "--scheme", "leapfrog,omelyan5", "--lambda", "1/4", "--w-slow-force", "2", "--h", "0.1,0.05"]
    )
    data = overrides_from_args(args)
    assert data["experiment"] == "benchmark"
    assert data["schemes"] == ["leapfrog", "omelyan5"]
    assert data["lambda"] == "1/4"
    assert data["weights"] == {"slow_force": 2.0}
    assert data["h_grid"] == [0.1, 0.05]


def test_parse_claims():
    claims = parse_claims(["3:-1/72 [V,[T,V]]", "4:0"])
    assert sorted(claims) == [3, 4]
    assert claims[4].is_empty()
    with pytest.raises(ConfigurationError):
        parse_claims(["[T,V]"])
    with pytest.raises(ConfigurationError):
        parse_claims(["3:[T,"])


@pytest.mark.slow
def test_converge_reports_second_order_for_leapfrog(capsys):
    assert main(["converge", "--scheme", "leapfrog", "--h", "0.16,0.08,0.04,0.02", "--t-end", "12"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "h,max_rel_err"
    assert len(lines) == 6
    assert lines[-1].startswith("slope=")
    assert float(lines[-1].split("=")[1]) == pytest.approx(2.0, abs=0.3)
