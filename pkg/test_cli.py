"""Command-line surface and file adapters."""

import json

import numpy as np
import pytest

from prescurv.adapters.files import (
    curve_from_json, curve_to_json, read_curve_csv, write_curve_csv, write_obj,
)
from prescurv.cli import (
    EXIT_CHECKS_FAILED, EXIT_INFEASIBLE, EXIT_NO_CONVERGENCE, EXIT_OK, EXIT_USAGE, RunConfig, build_parser,
    exit_code_for, main, parse_kappa,
)
from prescurv.core.curves import Domain
from prescurv.core.errors import (
    CertificateFailed, CurveParseError, ExpressionError, NoConvergence, UnsupportedFormat,
)
from prescurv.core.presets import circle, helix


def test_generate_writes_preset_csv(tmp_path):
    out = tmp_path / "circle.csv"
    assert main(["generate", "--preset", "circle", "--count", "64", "-o", str(out)]) == EXIT_OK
    curve = read_curve_csv(out)
    assert curve.count == 64
    assert curve.domain.periodic
    assert out.read_text().startswith("# domain=circle,0.0,")


def test_export_obj_closes_loops(tmp_path):
    src = tmp_path / "circle.csv"
    main(["generate", "--preset", "circle", "--count", "64", "-o", str(src)])
    obj = tmp_path / "circle.obj"
    assert main(["export", "-i", str(src), "-f", "obj", "-o", str(obj)]) == EXIT_OK

    lines = obj.read_text().splitlines()
    vertices = [line for line in lines if line.startswith("v ")]
    elements = [line for line in lines if line.startswith("l ")]
    assert len(vertices) == 64
    assert len(elements) == 1
    indices = [int(i) for i in elements[0].split()[1:]]
    assert indices == list(range(1, 65)) + [1]


def test_obj_of_open_curve_does_not_close(tmp_path):
    path = write_obj(tmp_path / "helix.obj", helix(count=16))
    element = [line for line in path.read_text().splitlines() if line.startswith("l ")][0]
    assert element.split()[1:] == [str(i) for i in range(1, 17)]


def test_obj_needs_three_dimensions(tmp_path):
    domain = Domain("circle", 0.0, 2 * np.pi)
    t = domain.grid(32)
    curve = circle(count=32).with_samples(np.stack([np.cos(t), np.sin(t), 0 * t, 0 * t], axis=1))
    with pytest.raises(UnsupportedFormat):
        write_obj(tmp_path / "c.obj", curve)


def test_csv_json_round_trip(tmp_path):
    curve = helix(count=40)
    path = write_curve_csv(tmp_path / "helix.csv", curve)
    back = read_curve_csv(path)
    assert np.array_equal(back.samples, curve.samples)
    assert back.domain.matches(curve.domain)
    again = curve_from_json(json.loads(json.dumps(curve_to_json(back))))
    assert np.array_equal(again.samples, curve.samples)


def test_csv_errors_carry_line_numbers(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x1,x2,x3\n0.0,1,0,0\n0.1,abc,0,0\n0.2,1,0,0\n0.3,1,0,0\n")
    with pytest.raises(CurveParseError) as info:
        read_curve_csv(bad)
    assert info.value.line == 3
    assert "line 3" in str(info.value)
    assert main(["export", "-i", str(bad)]) == EXIT_USAGE


def test_nonuniform_parameters_are_rejected(tmp_path):
    bad = tmp_path / "uneven.csv"
    bad.write_text("t,x1,x2,x3\n0.0,1,0,0\n0.1,0,1,0\n0.3,0,0,1\n0.4,1,1,0\n")
    with pytest.raises(CurveParseError):
        read_curve_csv(bad)


def test_bad_preset_parameters(tmp_path):
    out = str(tmp_path / "x.csv")
    assert main(["generate", "--preset", "helix", "--param", "a=-1", "-o", out]) == EXIT_USAGE
    assert main(["generate", "--preset", "helix", "--param", "radius=2", "-o", out]) == EXIT_USAGE
    assert main(["generate", "--preset", "helix", "--param", "a", "-o", out]) == EXIT_USAGE


def test_infeasible_target_exits_with_manifest(tmp_path):
    out = tmp_path / "out.csv"
    manifest = tmp_path / "run.json"
    code = main(["prescribe", "--preset", "helix", "--kappa", "0.5",
                 "-o", str(out), "--manifest", str(manifest)])
    assert code == EXIT_INFEASIBLE
    data = json.loads(manifest.read_text())
    assert data["error"]["type"] == "InfeasibleMargin"
    assert data["config"]["kappa"] == "0.5"
    assert not out.exists()


def test_bad_kappa_expression_is_a_usage_error(tmp_path):
    code = main(["prescribe", "--preset", "helix", "--kappa", "t ** 2",
                 "-o", str(tmp_path / "o.csv"), "--manifest", str(tmp_path / "m.json")])
    assert code == EXIT_USAGE


def test_verify_reports_metrics(tmp_path, capsys):
    src = tmp_path / "helix.csv"
    write_curve_csv(src, helix(count=512))
    capsys.readouterr()

    assert main(["verify", "-i", str(src), "-r", str(src), "--kappa", "0.8", "--pinned", "1.0"]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["metrics"]["c1_distance"] == 0.0
    assert all(result["checks"].values())

    assert main(["verify", "-i", str(src), "--kappa", "2"]) == EXIT_CHECKS_FAILED
    result = json.loads(capsys.readouterr().out)
    assert result["checks"]["curvature"] is False


def test_verify_rejects_mismatched_domains(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_curve_csv(a, helix(count=64))
    write_curve_csv(b, circle(count=64))
    assert main(["verify", "-i", str(a), "-r", str(b)]) == EXIT_USAGE


def test_parse_kappa():
    domain = Domain("interval", 0.0, 1.0)
    assert parse_kappa("3", domain).evaluate(0.5) == pytest.approx(3.0)
    assert parse_kappa("2 + sin(t)", domain).evaluate(0.0) == pytest.approx(2.0)
    with pytest.raises(ExpressionError):
        parse_kappa("x + 1", domain)


def test_exit_code_table():
    assert exit_code_for(NoConvergence("stuck")) == EXIT_NO_CONVERGENCE
    assert exit_code_for(CertificateFailed("crossed")) == EXIT_CHECKS_FAILED
    assert exit_code_for(ValueError("bad")) == EXIT_USAGE
    with pytest.raises(KeyError):
        exit_code_for(KeyError("not ours"))


def test_run_config_tolerances():
    config = RunConfig(command="prescribe", loop_mode="single", k=9, seed=3)
    tolerances = config.tolerances()
    assert (tolerances.loop_mode, tolerances.k, tolerances.seed) == ("single", 9, 3)
    with pytest.raises(ValueError):
        RunConfig(command="prescribe", loop_mode="spiral").tolerances()


def test_loop_mode_defaults_to_single():
    args = build_parser().parse_args(["prescribe", "--preset", "helix"])
    assert args.loop_mode == "single"
    assert RunConfig(command="prescribe").tolerances().loop_mode == "single"


@pytest.mark.slow
def test_prescribe_succeeds_with_identical_manifests(tmp_path):
    src = tmp_path / "arc.csv"
    write_curve_csv(src, helix(count=1024).restrict(0.0, 0.5, 128))
    out, manifest = tmp_path / "out.csv", tmp_path / "run.json"
    argv = ["prescribe", "-i", str(src), "--kappa", "2", "--epsilon", "0.2",
            "-o", str(out), "--manifest", str(manifest)]

    runs = []
    for _ in range(2):
        assert main(argv) == EXIT_OK
        runs.append(manifest.read_text())
    assert runs[0] == runs[1]

    data = json.loads(runs[0])
    assert data["ok"] is True
    assert all(data["checks"].values())
    assert data["report"]["loops"]["drift_bound_relaxed"] is False
    assert read_curve_csv(out).domain.matches(read_curve_csv(src).domain)
