import json
import os
import textwrap

import numpy as np
import pytest

from varopt.cli import main
from varopt.harness import (
    ConfigError,
    parse_config,
    run_convergence,
    run_damping_demo,
    run_ocp,
)

MINIMAL_OCP = """\
    [model]
    kind = pendulum_minimal
    [grid]
    t_final = 0.3
    n_steps = 300
    h = 1e-3
    [objective]
    s_q = 1e3
    s_p = 1e-2
    r = 1e-8
    [optimizer]
    max_iterations = 6
    initial_control = 1.0
"""

BEAM_WINDUP = """\
    [model]
    kind = beam
    e_mod = 50000
    nu = 0.35
    rho = 1000
    side = 0.05
    length = 1.0
    eta = 0.1
    zeta = 0.01
    gravity_x = 9.81
    [grid]
    t_final = 0.01
    n_steps = 12
    n_space = 5
    [objective]
    s_q = 1e2
    [optimizer]
    max_iterations = 5
    initial_control = 50.0
"""


def write_cfg(tmp_path, body, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return str(path)


def read_rows(out_dir, name):
    lines = (out_dir / name).read_text().splitlines()
    return lines[0].split(","), [
        [float(tok) for tok in line.split(",")] for line in lines[1:]
    ]


def test_parse_fills_the_grid(tmp_path):
    cfg = parse_config(write_cfg(tmp_path, MINIMAL_OCP), "ocp")
    assert cfg.kind == "pendulum_minimal"
    assert cfg.h == pytest.approx(1e-3)
    assert cfg.pendulum.n_steps == 300
    assert cfg.shooting.max_iterations == 6
    assert cfg.s_p == pytest.approx(1e-2)


def test_unknown_key_is_named(tmp_path):
    bad = MINIMAL_OCP.replace("mass", "masss")  # no mass key present, add one
    bad = MINIMAL_OCP + "    masss = 2.0\n"
    with pytest.raises(ConfigError, match="masss"):
        parse_config(write_cfg(tmp_path, bad), "ocp")


def test_unknown_section_rejected(tmp_path):
    bad = MINIMAL_OCP + "[extra]\nfoo = 1\n"
    with pytest.raises(ConfigError, match="extra"):
        parse_config(write_cfg(tmp_path, bad), "ocp")


def test_missing_required_key_is_named(tmp_path):
    bad = MINIMAL_OCP.replace("    s_q = 1e3\n", "")
    with pytest.raises(ConfigError, match="s_q"):
        parse_config(write_cfg(tmp_path, bad), "ocp")


def test_grid_consistency_checked(tmp_path):
    bad = MINIMAL_OCP.replace("t_final = 0.3", "t_final = 0.4")
    with pytest.raises(ConfigError, match="t_final"):
        parse_config(write_cfg(tmp_path, bad), "ocp")


def test_steps_must_be_multiples_of_reference(tmp_path):
    body = """\
        [model]
        kind = pendulum_minimal
        [grid]
        t_final = 0.4
        reference_h = 2e-3
        steps = 2e-2, 5e-3
    """
    with pytest.raises(ConfigError, match="multiple"):
        parse_config(write_cfg(tmp_path, body), "converge")


def test_sp_rejected_for_constrained(tmp_path):
    body = MINIMAL_OCP.replace("pendulum_minimal", "pendulum_constrained")
    with pytest.raises(ConfigError, match="s_p"):
        parse_config(write_cfg(tmp_path, body), "ocp")


def test_homotopy_keys_need_momentum_weight(tmp_path):
    body = MINIMAL_OCP.replace("s_p = 1e-2", "s_p = 0") + "    homotopy_beta = 0.4\n"
    with pytest.raises(ConfigError, match="homotopy"):
        parse_config(write_cfg(tmp_path, body), "ocp")


def test_convergence_artifacts(tmp_path):
    body = """\
        [model]
        kind = pendulum_minimal
        [grid]
        t_final = 0.4
        reference_h = 2.5e-3
        steps = 2e-2, 1e-2, 2.5e-3
    """
    cfg = parse_config(write_cfg(tmp_path, body), "converge")
    out = tmp_path / "out"
    manifest = run_convergence(cfg, str(out))
    header, rows = read_rows(out, "errors.csv")
    assert header == ["h", "err_q", "err_lambda"]
    assert [r[0] for r in rows] == [2e-2, 1e-2, 2.5e-3]
    # coarser steps err more; the reference compared against itself is exact
    assert rows[0][1] > rows[1][1] > 0
    assert rows[2][1] == 0 and rows[2][2] == 0
    assert 1.5 < manifest["orders"]["q"] < 2.5
    assert 1.5 < manifest["orders"]["lambda"] < 2.5
    assert (out / "orders.csv").exists()


def test_orders_csv_lists_both_series(tmp_path):
    body = """\
        [model]
        kind = pendulum_minimal
        [grid]
        t_final = 0.4
        reference_h = 2.5e-3
        steps = 2e-2, 1e-2
    """
    cfg = parse_config(write_cfg(tmp_path, body), "converge")
    out = tmp_path / "out"
    run_convergence(cfg, str(out))
    lines = (out / "orders.csv").read_text().splitlines()
    assert lines[0] == "series,order"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["q", "lambda"]


def test_ocp_artifacts_and_reproducibility(tmp_path):
    cfg = parse_config(write_cfg(tmp_path, MINIMAL_OCP), "ocp")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    manifest = run_ocp(cfg, str(out1))
    run_ocp(cfg, str(out2))
    names = [
        "states.csv", "adjoints.csv", "controls.csv", "energies.csv",
        "objective.csv", "gradient_norm.csv", "control_effort.csv",
    ]
    for name in names:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    header, rows = read_rows(out1, "states.csv")
    assert header == ["t", "phi"]
    assert len(rows) == 301
    header, rows = read_rows(out1, "energies.csv")
    assert header == ["t", "T_kin", "U", "U_grav", "deformation", "H"]
    assert len(rows) == 300
    _, obj_rows = read_rows(out1, "objective.csv")
    assert len(obj_rows) == manifest["iterations"]
    assert manifest["status"] in ("converged", "max_iterations")
    assert manifest["momentum_mismatch"] < 1e-9
    assert manifest["config_sha256"] == cfg.sha256
    # values survive a text round trip unchanged
    assert "%.17g" % obj_rows[0][1] == "%.17g" % float("%.17g" % obj_rows[0][1])


def test_ocp_constrained_states_include_angle(tmp_path):
    body = MINIMAL_OCP.replace("pendulum_minimal", "pendulum_constrained")
    body = body.replace("s_p = 1e-2", "s_p = 0")
    cfg = parse_config(write_cfg(tmp_path, body), "ocp")
    out = tmp_path / "out"
    manifest = run_ocp(cfg, str(out))
    header, rows = read_rows(out, "states.csv")
    assert header == ["t", "x", "y", "phi"]
    assert len(rows) == 301
    # bob stays on the rod circle in the emitted data
    radii = [np.hypot(r[1], r[2]) for r in rows]
    assert max(abs(r - 1.0) for r in radii) < 1e-8
    assert manifest["pass_iterations"] == [manifest["iterations"]]


def test_beam_ocp_artifacts(tmp_path):
    body = """\
        [model]
        kind = beam
        e_mod = 100
        nu = 0.3
        rho = 1.0
        side = 0.1
        length = 1.0
        [grid]
        t_final = 0.02
        n_steps = 4
        n_space = 2
        [objective]
        s_q = 1.0
        r = 1e-4
        [optimizer]
        max_iterations = 2
        initial_control = 0.01
    """
    cfg = parse_config(write_cfg(tmp_path, body), "ocp")
    out = tmp_path / "out"
    manifest = run_ocp(cfg, str(out))
    header, rows = read_rows(out, "states.csv")
    assert header[0] == "t" and len(header) == 1 + 8 * 3
    assert len(rows) == 5
    header, rows = read_rows(out, "adjoints.csv")
    assert len(header) == 1 + 6 * 3 and len(rows) == 4
    _, dist = read_rows(out, "distance_to_target.csv")
    _, chg = read_rows(out, "iterate_change.csv")
    assert len(dist) == manifest["iterations"]
    assert len(chg) == manifest["iterations"] - 1
    assert chg[0][0] == 2  # change rows start at the second iterate


def test_damping_demo_dissipates(tmp_path):
    body = """\
        [model]
        kind = beam
        e_mod = 10000
        nu = 0.3
        rho = 10
        side = 0.2
        length = 1.0
        eta = 70
        zeta = 2
        gravity_y = -9.81
        [grid]
        t_final = 0.4
        n_steps = 200
        n_space = 3
    """
    cfg = parse_config(write_cfg(tmp_path, body), "damping")
    out = tmp_path / "out"
    manifest = run_damping_demo(cfg, str(out))
    assert manifest["status"] == "ok"
    assert manifest["energy_net_change"] < 0
    header, rows = read_rows(out, "tip.csv")
    assert header == ["t", "x", "y", "z"]
    assert len(rows) == 201
    # tip falls from the horizontal start
    assert min(r[2] for r in rows) < -0.05


def test_cli_success_and_config_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, MINIMAL_OCP)
    assert main(["ocp", "--config", cfg, "--out", str(tmp_path / "out")]) == 0
    bad = write_cfg(tmp_path, MINIMAL_OCP + "    typo_key = 1\n", "bad.cfg")
    assert main(["ocp", "--config", bad, "--out", str(tmp_path / "o2")]) == 2
    assert "typo_key" in capsys.readouterr().err


def test_cli_needs_an_output_directory(tmp_path, capsys):
    cfg = write_cfg(tmp_path, MINIMAL_OCP)
    assert main(["ocp", "--config", cfg]) == 2
    assert "output" in capsys.readouterr().err


def test_cli_solver_failure_keeps_manifest(tmp_path, capsys):
    cfg = write_cfg(tmp_path, BEAM_WINDUP)
    out = tmp_path / "out"
    assert main(["ocp", "--config", cfg, "--out", str(out)]) == 3
    assert "solver failure" in capsys.readouterr().err
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "forward_failure"
    assert manifest["iterations"] == 0


def test_cli_runs_converge_and_damping(tmp_path):
    conv = write_cfg(tmp_path, """\
        [model]
        kind = pendulum_constrained
        [grid]
        t_final = 0.4
        reference_h = 5e-3
        steps = 2e-2, 1e-2
    """, "conv.cfg")
    assert main(["converge", "--config", conv, "--out", str(tmp_path / "c")]) == 0
    orders = json.loads((tmp_path / "c" / "manifest.json").read_text())["orders"]
    assert 1.5 < orders["q"] < 2.5
    damp = write_cfg(tmp_path, """\
        [model]
        kind = beam
        e_mod = 10000
        nu = 0.3
        rho = 10
        side = 0.2
        length = 1.0
        eta = 70
        zeta = 2
        gravity_y = -9.81
        [grid]
        t_final = 0.2
        n_steps = 100
        n_space = 2
        [output]
        directory = %s
    """ % (tmp_path / "d"), "damp.cfg")
    assert main(["beam-damping", "--config", damp]) == 0
    assert (tmp_path / "d" / "tip.csv").exists()
