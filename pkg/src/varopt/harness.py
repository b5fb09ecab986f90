"""Config-driven experiment runs: flat INI files in, CSV/JSON artifacts out.

Three entry points back the command line tool:

  run_convergence  -- pendulum state/adjoint error sweep against a fine
                      reference run, fixed constant control
  run_ocp          -- shooting optimization of the benchmark control tasks
                      (pendulum upswing, beam half-turn)
  run_damping_demo -- clamped cantilever ring-down, no control

Config files are plain text with sections [model], [grid], [objective],
[optimizer] and [output].  Every key is checked against the schema of the
requested command, so a typo is a hard error instead of a silent default.
Values are plain numbers; lists are comma separated.  Key sets:

  [model]      kind = pendulum_minimal | pendulum_constrained | beam
               pendulum kinds: mass, length, gravity  (defaults 1, 1, 9.81)
               beam: e_mod, nu, rho, side, length  (required) and
               eta, zeta, gravity_x, gravity_y, gravity_z  (default 0)
  [grid]       ocp / beam-damping: t_final, n_steps  (h optional; when given
               it must equal t_final / n_steps); beam kinds add n_space
               converge: t_final, reference_h, steps (comma list; every step
               an integer multiple of reference_h and a divisor of t_final)
  [objective]  s_q, r, and for pendulum_minimal s_p (others must leave it 0)
  [optimizer]  max_iterations, gradient_tolerance, bb_variant, step_fallback,
               step_cap, initial_control, and for a minimal pendulum with
               s_p > 0 the homotopy_beta / homotopy_threshold pair; converge
               runs accept only initial_control (the constant control value)
  [output]     directory (default for the command line --out)

Artifacts land in the output directory: states.csv / adjoints.csv /
controls.csv / energies.csv for the final trajectory, per-iteration series
objective.csv / gradient_norm.csv / control_effort.csv (beam control runs add
distance_to_target.csv and iterate_change.csv), errors.csv / orders.csv for
convergence sweeps, tip.csv for the damping demo, and manifest.json with the
config hash, iteration counts, final residuals and the wall time.  Floats are
written with 17 significant digits, so identical configs produce
byte-identical CSV files.
"""

import configparser
import dataclasses
import hashlib
import json
import os
import time

import numpy as np

from varopt import dualquat as dq
from varopt.numerics import NonConvergence, SingularJacobian, ErrorTable, \
    estimate_order, infinity_error, DegenerateFit
from varopt.discrete import integrate, momentum_mismatch
from varopt.adjoint import backward_sweep
from varopt.constrained import integrate_constrained, constrained_backward_sweep
from varopt.models import PendulumParams, angle_history, initial_state, \
    pendulum_constrained, pendulum_energies, pendulum_minimal, \
    pendulum_objective, minimal_ocp_evaluate, constrained_ocp_evaluate
from varopt.optimizer import ShootingSettings, shoot, momentum_homotopy
from varopt.beam import BeamGrid, BeamMaterial, BeamStepFailure, \
    beam_energies, integrate_beam, straight_reference
from varopt.beam_ocp import BeamOcp, beam_backward_sweep, \
    beam_reduced_gradient, ocp_free_mask, scatter_adjoint, upswing_target


class ConfigError(ValueError):
    """A config file is missing, malformed, or carries bad keys."""


class EnergyCheckFailure(RuntimeError):
    """The damping demo saw total energy rise beyond tolerance."""


PENDULUM_KINDS = ("pendulum_minimal", "pendulum_constrained")
KINDS = PENDULUM_KINDS + ("beam",)
COMMANDS = ("converge", "ocp", "damping")
BB_VARIANTS = ("bb1", "bb2", "alternate")

_REQUIRED = object()


@dataclasses.dataclass
class ExperimentConfig:
    """Validated content of one config file, ready to run."""

    command: str
    kind: str
    sha256: str
    t_final: float
    n_steps: int = None
    h: float = None
    pendulum: PendulumParams = None
    material: BeamMaterial = None
    n_space: int = None
    beam_length: float = None
    s_q: float = 0.0
    s_p: float = 0.0
    r: float = 0.0
    shooting: ShootingSettings = None
    initial_control: float = 1.0
    homotopy_beta: float = 0.5
    homotopy_threshold: float = None
    reference_h: float = None
    step_sizes: tuple = None
    out_dir: str = None


def _pop(section, data, key, conv=float, default=_REQUIRED):
    if key not in data:
        if default is _REQUIRED:
            raise ConfigError("[%s] is missing required key '%s'" % (section, key))
        return default
    raw = data.pop(key)
    try:
        return conv(raw)
    except (TypeError, ValueError):
        raise ConfigError("[%s] key '%s': cannot interpret %r" % (section, key, raw))


def _finish(section, data):
    if data:
        raise ConfigError("[%s] has unknown key(s): %s"
                          % (section, ", ".join(sorted(data))))


def _float_list(raw):
    values = [float(tok) for tok in raw.replace(",", " ").split()]
    if not values:
        raise ValueError("empty list")
    return values


def _is_multiple(big, small, rtol=1e-9):
    ratio = big / small
    return abs(ratio - round(ratio)) <= rtol * max(1.0, abs(ratio))


def parse_config(path, command):
    """Read and validate a config file for one of the three commands."""
    if command not in COMMANDS:
        raise ValueError("unknown command %r" % (command,))
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("cannot read config file: %s" % exc)
    parser = configparser.ConfigParser(interpolation=None,
                                       inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("cannot parse config file: %s" % exc)
    sections = {name: dict(parser.items(name)) for name in parser.sections()}
    cfg = ExperimentConfig(command=command, kind="", t_final=0.0,
                           sha256=hashlib.sha256(text.encode()).hexdigest())

    model = sections.pop("model", None)
    if model is None:
        raise ConfigError("missing [model] section")
    cfg.kind = _pop("model", model, "kind", str)
    if cfg.kind not in KINDS:
        raise ConfigError("[model] kind must be one of %s, got %r"
                          % (", ".join(KINDS), cfg.kind))
    if command == "damping" and cfg.kind != "beam":
        raise ConfigError("beam-damping requires kind = beam")
    if command == "converge" and cfg.kind == "beam":
        raise ConfigError("converge supports the pendulum kinds only")
    if cfg.kind == "beam":
        e_mod = _pop("model", model, "e_mod")
        nu = _pop("model", model, "nu")
        rho = _pop("model", model, "rho")
        side = _pop("model", model, "side")
        cfg.beam_length = _pop("model", model, "length")
        eta = _pop("model", model, "eta", default=0.0)
        zeta = _pop("model", model, "zeta", default=0.0)
        grav = tuple(_pop("model", model, "gravity_" + ax, default=0.0)
                     for ax in "xyz")
        _finish("model", model)
        if cfg.beam_length <= 0 or side <= 0:
            raise ConfigError("[model] length and side must be positive")
        cfg.material = BeamMaterial.square(e_mod, nu, rho, side, eta=eta,
                                           zeta=zeta, gravity=grav)
    else:
        mass = _pop("model", model, "mass", default=1.0)
        length = _pop("model", model, "length", default=1.0)
        gravity = _pop("model", model, "gravity", default=9.81)
        _finish("model", model)
        if mass <= 0 or length <= 0:
            raise ConfigError("[model] mass and length must be positive")
        pend = (mass, length, gravity)

    grid = sections.pop("grid", None)
    if grid is None:
        raise ConfigError("missing [grid] section")
    cfg.t_final = _pop("grid", grid, "t_final")
    if cfg.t_final <= 0:
        raise ConfigError("[grid] t_final must be positive")
    if command == "converge":
        cfg.reference_h = _pop("grid", grid, "reference_h")
        steps = _pop("grid", grid, "steps", _float_list)
        _finish("grid", grid)
        if cfg.reference_h <= 0:
            raise ConfigError("[grid] reference_h must be positive")
        steps = sorted(steps, reverse=True)
        if len(set(steps)) != len(steps):
            raise ConfigError("[grid] steps has duplicate entries")
        for h in steps + [cfg.reference_h]:
            if h <= 0:
                raise ConfigError("[grid] steps must be positive")
            if not _is_multiple(cfg.t_final, h):
                raise ConfigError("[grid] step %g does not divide t_final %g"
                                  % (h, cfg.t_final))
            if not _is_multiple(h, cfg.reference_h):
                raise ConfigError("[grid] step %g is not an integer multiple "
                                  "of reference_h %g" % (h, cfg.reference_h))
        cfg.step_sizes = tuple(steps)
        cfg.pendulum = PendulumParams(m=pend[0], l=pend[1], grav=pend[2],
                                      h=cfg.reference_h, T=cfg.t_final)
    else:
        cfg.n_steps = _pop("grid", grid, "n_steps", int)
        if cfg.n_steps < 1:
            raise ConfigError("[grid] n_steps must be at least 1")
        h_given = _pop("grid", grid, "h", default=None)
        if cfg.kind == "beam":
            cfg.n_space = _pop("grid", grid, "n_space", int)
            if cfg.n_space < 1:
                raise ConfigError("[grid] n_space must be at least 1")
        _finish("grid", grid)
        cfg.h = cfg.t_final / cfg.n_steps
        if h_given is not None and \
                abs(h_given * cfg.n_steps - cfg.t_final) > 1e-9 * max(1.0, cfg.t_final):
            raise ConfigError("[grid] h * n_steps = %g does not match t_final = %g"
                              % (h_given * cfg.n_steps, cfg.t_final))
        if cfg.kind != "beam":
            cfg.pendulum = PendulumParams(m=pend[0], l=pend[1], grav=pend[2],
                                          h=cfg.h, T=cfg.t_final)

    objective = sections.pop("objective", None)
    if command == "damping":
        if objective is not None:
            raise ConfigError("beam-damping takes no [objective] section")
    else:
        if objective is None:
            if command == "ocp":
                raise ConfigError("missing [objective] section")
            objective = {}
        required = _REQUIRED if command == "ocp" else 1e3
        cfg.s_q = _pop("objective", objective, "s_q", default=required)
        cfg.r = _pop("objective", objective, "r", default=0.0)
        default_sp = 1e-2 if (command == "converge"
                              and cfg.kind == "pendulum_minimal") else 0.0
        cfg.s_p = _pop("objective", objective, "s_p", default=default_sp)
        _finish("objective", objective)
        if cfg.s_q < 0 or cfg.r < 0 or cfg.s_p < 0:
            raise ConfigError("[objective] weights must be non-negative")
        if cfg.s_p != 0.0 and cfg.kind == "pendulum_constrained":
            raise ConfigError("[objective] s_p must be 0 for pendulum_constrained: "
                              "the projected sweep carries no end-momentum term")
        if cfg.s_p != 0.0 and cfg.kind == "beam":
            raise ConfigError("[objective] s_p is not supported for the beam task")

    optimizer = sections.pop("optimizer", None)
    if command == "damping":
        if optimizer is not None:
            raise ConfigError("beam-damping takes no [optimizer] section")
    elif command == "converge":
        optimizer = optimizer or {}
        cfg.initial_control = _pop("optimizer", optimizer, "initial_control",
                                   default=1.0)
        _finish("optimizer", optimizer)
    else:
        optimizer = optimizer or {}
        max_iterations = _pop("optimizer", optimizer, "max_iterations", int,
                              default=200)
        gradient_tolerance = _pop("optimizer", optimizer, "gradient_tolerance",
                                  default=1e-6)
        bb_variant = _pop("optimizer", optimizer, "bb_variant", str,
                          default="bb1")
        step_fallback = _pop("optimizer", optimizer, "step_fallback",
                             default=None)
        step_cap = _pop("optimizer", optimizer, "step_cap", default=None)
        cfg.initial_control = _pop("optimizer", optimizer, "initial_control",
                                   default=1.0)
        beta = _pop("optimizer", optimizer, "homotopy_beta", default=None)
        threshold = _pop("optimizer", optimizer, "homotopy_threshold",
                         default=None)
        _finish("optimizer", optimizer)
        if bb_variant not in BB_VARIANTS:
            raise ConfigError("[optimizer] bb_variant must be one of %s"
                              % ", ".join(BB_VARIANTS))
        if max_iterations < 1:
            raise ConfigError("[optimizer] max_iterations must be at least 1")
        homotopic = cfg.kind == "pendulum_minimal" and cfg.s_p > 0
        if (beta is not None or threshold is not None) and not homotopic:
            raise ConfigError("[optimizer] homotopy keys require "
                              "kind = pendulum_minimal with s_p > 0")
        cfg.homotopy_beta = 0.5 if beta is None else beta
        if not 0.0 < cfg.homotopy_beta <= 1.0:
            raise ConfigError("[optimizer] homotopy_beta must lie in (0, 1]")
        cfg.homotopy_threshold = threshold
        cfg.shooting = ShootingSettings(max_iterations=max_iterations,
                                        gradient_tolerance=gradient_tolerance,
                                        bb_variant=bb_variant,
                                        step_fallback=step_fallback,
                                        step_cap=step_cap)

    output = sections.pop("output", None)
    if output is not None:
        cfg.out_dir = _pop("output", output, "directory", str, default=None)
        _finish("output", output)
    if sections:
        raise ConfigError("unknown section(s): %s"
                          % ", ".join("[%s]" % s for s in sorted(sections)))
    return cfg


def _write_csv(out_dir, name, header, rows):
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("%.17g" % float(x) for x in row) + "\n")
    return name


def _write_manifest(out_dir, payload):
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return payload


def _pendulum_weights(cfg, params):
    """Benchmark targets with the config's weights swapped in."""
    constrained = cfg.kind == "pendulum_constrained"
    base = pendulum_objective(params, constrained=constrained)
    dim = 2 if constrained else 1
    return dataclasses.replace(base, s_q=cfg.s_q * np.eye(dim),
                               s_p=cfg.s_p * np.eye(dim), r=[[cfg.r]])


def _iteration_series(out_dir, values, gnorms, efforts):
    files = [
        _write_csv(out_dir, "objective.csv", ("iteration", "objective"),
                   [(k + 1, v) for k, v in enumerate(values)]),
        _write_csv(out_dir, "gradient_norm.csv", ("iteration", "gradient_norm"),
                   [(k + 1, g) for k, g in enumerate(gnorms)]),
        _write_csv(out_dir, "control_effort.csv", ("iteration", "control_effort"),
                   [(k + 1, e) for k, e in enumerate(efforts)]),
    ]
    return files


# ---------------------------------------------------------------------------
# convergence sweep


def _converged_pair(cfg, h):
    """Integrate with constant control at step h and attach the adjoint."""
    params = dataclasses.replace(cfg.pendulum, h=h)
    n = params.n_steps
    u = np.full((n, 1), cfg.initial_control)
    obj = _pendulum_weights(cfg, params)
    if cfg.kind == "pendulum_minimal":
        sys = pendulum_minimal(params)
        q0, p0 = initial_state(params)
        traj = integrate(sys, q0, p0, u)
        traj.lam = backward_sweep(sys, traj, obj)
    else:
        csys = pendulum_constrained(params)
        q0, p0 = initial_state(params, constrained=True)
        traj = integrate_constrained(csys, q0, p0, u)
        traj.lam = constrained_backward_sweep(csys, traj, obj)
    return traj


def run_convergence(cfg, out_dir):
    """State/adjoint errors against the reference step, plus fitted orders."""
    t0 = time.perf_counter()
    os.makedirs(out_dir, exist_ok=True)
    reference = _converged_pair(cfg, cfg.reference_h)
    rows = []
    for h in cfg.step_sizes:
        coarse = _converged_pair(cfg, h)
        rows.append((h, infinity_error(coarse, reference, "q"),
                     infinity_error(coarse, reference, "lam")))
    files = [_write_csv(out_dir, "errors.csv", ("h", "err_q", "err_lambda"), rows)]
    orders = {}
    order_rows = []
    for label, column in (("q", 1), ("lambda", 2)):
        kept = [(r[0], r[column]) for r in rows if r[column] > 0.0]
        try:
            order = estimate_order(ErrorTable(tuple(k[0] for k in kept),
                                              tuple(k[1] for k in kept), label))
        except (DegenerateFit, ValueError):
            order = None
        orders[label] = order
        if order is not None:
            order_rows.append((label, order))
    files.append(_write_orders(out_dir, order_rows))
    return _write_manifest(out_dir, {
        "command": "converge",
        "kind": cfg.kind,
        "config_sha256": cfg.sha256,
        "status": "ok",
        "reference_h": cfg.reference_h,
        "step_sizes": list(cfg.step_sizes),
        "orders": orders,
        "wall_time_s": time.perf_counter() - t0,
        "outputs": sorted(files),
    })


def _write_orders(out_dir, order_rows):
    path = os.path.join(out_dir, "orders.csv")
    with open(path, "w", newline="") as fh:
        fh.write("series,order\n")
        for label, order in order_rows:
            fh.write("%s,%.17g\n" % (label, order))
    return "orders.csv"


# ---------------------------------------------------------------------------
# optimal control runs


class _PassFailure(Exception):
    """A homotopy pass lost its forward or adjoint solve."""

    def __init__(self, result):
        super().__init__(result.status)
        self.result = result


def _run_pendulum_ocp(cfg, out_dir, record, histories):
    params = cfg.pendulum
    n = params.n_steps
    obj = _pendulum_weights(cfg, params)
    constrained = cfg.kind == "pendulum_constrained"
    make = constrained_ocp_evaluate if constrained else minimal_ocp_evaluate
    evaluate = make(params, obj=obj)
    u0 = np.full((n, 1), cfg.initial_control)
    passes = []
    gaps = None
    if cfg.s_p > 0 and not constrained:
        def solve(variant, u_start):
            res = shoot(lambda u: evaluate(u, variant), u_start,
                        settings=cfg.shooting, callback=record)
            passes.append(res)
            if res.trajectory is None:
                raise _PassFailure(res)
            return res

        try:
            result, gaps = momentum_homotopy(solve, obj, u0,
                                             beta=cfg.homotopy_beta,
                                             threshold=cfg.homotopy_threshold)
        except _PassFailure as exc:
            result = exc.result
    else:
        result = shoot(lambda u: evaluate(u), u0, settings=cfg.shooting,
                       callback=record)
        passes.append(result)

    h = params.h
    files = _iteration_series(out_dir, *histories)
    u = np.asarray(result.controls, dtype=float).reshape(-1)
    files.append(_write_csv(out_dir, "controls.csv", ("t", "u"),
                            [(k * h, u[k]) for k in range(len(u))]))
    extra = {}
    traj = result.trajectory
    if traj is not None:
        t_nodes = np.arange(len(traj.q)) * h
        if constrained:
            phi = angle_history(traj, params)
            files.append(_write_csv(out_dir, "states.csv", ("t", "x", "y", "phi"),
                                    np.column_stack([t_nodes, traj.q, phi])))
        else:
            files.append(_write_csv(out_dir, "states.csv", ("t", "phi"),
                                    np.column_stack([t_nodes, traj.q])))
        lam = np.asarray(traj.lam, dtype=float)
        head = ["t"] + ["lambda%d" % i for i in range(lam.shape[1])]
        files.append(_write_csv(out_dir, "adjoints.csv", head,
                                np.column_stack([t_nodes[:-1], lam])))
        kin, pot, tot = pendulum_energies(traj, params)
        files.append(_write_csv(
            out_dir, "energies.csv",
            ("t", "T_kin", "U", "U_grav", "deformation", "H"),
            np.column_stack([t_nodes[:-1], kin, pot, pot,
                             np.zeros_like(kin), tot])))
        if not constrained:
            extra["momentum_mismatch"] = momentum_mismatch(
                pendulum_minimal(params), traj)
        extra["final_angle"] = float(phi[-1]) if constrained \
            else float(traj.q[-1, 0])
    if gaps is not None:
        extra["momentum_gaps"] = [float(g) for g in gaps]
    extra["pass_iterations"] = [p.iterations for p in passes]
    return result, files, extra


def _run_beam_ocp(cfg, out_dir, record, histories):
    mat = cfg.material
    ds = cfg.beam_length / cfg.n_space
    reference = straight_reference(cfg.n_space, cfg.beam_length)
    target = upswing_target(reference)
    mask = ocp_free_mask(cfg.n_space)
    ocp = BeamOcp(target=target, s_q=cfg.s_q, r=cfg.r, free_mask=mask)
    terminals = []

    def problem(u):
        grid = BeamGrid.from_rest(reference, cfg.n_steps, cfg.h, ds)
        integrate_beam(grid, mat, u, free_mask=mask)
        value, gradient = beam_reduced_gradient(grid, mat, ocp, u)
        terminals.append(grid.nodes[-1].copy())
        return value, gradient, grid

    u0 = np.full(cfg.n_steps, cfg.initial_control)
    result = shoot(problem, u0, settings=cfg.shooting, callback=record)

    files = _iteration_series(out_dir, *histories)
    u = np.asarray(result.controls, dtype=float).reshape(-1)
    files.append(_write_csv(out_dir, "controls.csv", ("t", "u"),
                            [(k * cfg.h, u[k]) for k in range(len(u))]))
    distances = [float(np.sum(np.linalg.norm(rows - target, axis=1)))
                 for rows in terminals]
    files.append(_write_csv(out_dir, "distance_to_target.csv",
                            ("iteration", "distance"),
                            [(k + 1, d) for k, d in enumerate(distances)]))
    changes = [float(np.sum(np.linalg.norm(terminals[k] - terminals[k - 1],
                                           axis=1)))
               for k in range(1, len(terminals))]
    files.append(_write_csv(out_dir, "iterate_change.csv",
                            ("iteration", "change"),
                            [(k + 2, c) for k, c in enumerate(changes)]))
    extra = {}
    grid = result.trajectory
    if grid is not None:
        n_nodes = cfg.n_space + 1
        t_nodes = np.arange(grid.n_steps + 1) * cfg.h
        head = ["t"] + ["q%d_c%d" % (a, c) for a in range(n_nodes)
                        for c in range(8)]
        files.append(_write_csv(out_dir, "states.csv", head,
                                np.column_stack([t_nodes,
                                                 grid.nodes.reshape(len(t_nodes), -1)])))
        lam = scatter_adjoint(grid, ocp, beam_backward_sweep(grid, mat, ocp, u))
        head = ["t"] + ["lambda%d_c%d" % (a, c) for a in range(n_nodes)
                        for c in range(6)]
        files.append(_write_csv(out_dir, "adjoints.csv", head,
                                np.column_stack([t_nodes[:-1],
                                                 lam.reshape(len(lam), -1)])))
        t_tr, t_rot, u_total, u_grav, u_def, h_total = beam_energies(grid, mat)
        files.append(_write_csv(
            out_dir, "energies.csv",
            ("t", "T_kin", "U", "U_grav", "deformation", "H"),
            np.column_stack([t_nodes[:-1], t_tr + t_rot, u_total, u_grav,
                             u_def, h_total])))
        extra["final_distance_to_target"] = distances[-1] if distances else None
    extra["pass_iterations"] = [result.iterations]
    return result, files, extra


def run_ocp(cfg, out_dir):
    """Shooting optimization; artifacts plus a manifest with solver status."""
    t0 = time.perf_counter()
    os.makedirs(out_dir, exist_ok=True)
    values, gnorms, efforts = [], [], []

    def record(it, u, value, grad):
        values.append(float(value))
        gnorms.append(float(np.max(np.abs(grad))))
        efforts.append(float(np.linalg.norm(np.asarray(u, dtype=float))))

    histories = (values, gnorms, efforts)
    if cfg.kind == "beam":
        result, files, extra = _run_beam_ocp(cfg, out_dir, record, histories)
    else:
        result, files, extra = _run_pendulum_ocp(cfg, out_dir, record, histories)
    payload = {
        "command": "ocp",
        "kind": cfg.kind,
        "config_sha256": cfg.sha256,
        "status": result.status,
        "iterations": len(values),
        "final_objective": values[-1] if values else None,
        "final_gradient_norm": gnorms[-1] if gnorms else None,
        "wall_time_s": time.perf_counter() - t0,
        "outputs": sorted(files),
    }
    payload.update(extra)
    return _write_manifest(out_dir, payload)


# ---------------------------------------------------------------------------
# damping demo


def run_damping_demo(cfg, out_dir):
    """Clamped-root cantilever ring-down; tip track and energy audit."""
    t0 = time.perf_counter()
    os.makedirs(out_dir, exist_ok=True)
    mat = cfg.material
    ds = cfg.beam_length / cfg.n_space
    reference = straight_reference(cfg.n_space, cfg.beam_length)
    mask = np.ones((cfg.n_space + 1, 6), dtype=bool)
    mask[0, :] = False
    grid = BeamGrid.from_rest(reference, cfg.n_steps, cfg.h, ds)
    try:
        integrate_beam(grid, mat, np.zeros(cfg.n_steps), free_mask=mask)
    except (NonConvergence, BeamStepFailure) as exc:
        return _write_manifest(out_dir, {
            "command": "beam-damping",
            "kind": cfg.kind,
            "config_sha256": cfg.sha256,
            "status": "forward_failure",
            "detail": str(exc),
            "wall_time_s": time.perf_counter() - t0,
            "outputs": [],
        })
    t_nodes = np.arange(cfg.n_steps + 1) * cfg.h
    tip = dq.translation_of(grid.nodes[:, -1])
    files = [_write_csv(out_dir, "tip.csv", ("t", "x", "y", "z"),
                        np.column_stack([t_nodes, tip]))]
    t_tr, t_rot, u_total, u_grav, u_def, h_total = beam_energies(grid, mat)
    files.append(_write_csv(
        out_dir, "energies.csv",
        ("t", "T_kin", "U", "U_grav", "deformation", "H"),
        np.column_stack([t_nodes[:-1], t_tr + t_rot, u_total, u_grav,
                         u_def, h_total])))
    damped = mat.eta > 0 or mat.zeta > 0
    # the discrete energy carries an O(h^2) bounce on top of the dissipation
    # trend, so per-step rises are compared against the mechanical energy
    # content of the run, not against the (often nearly cancelling) total
    scale = max(float(np.max(t_tr + t_rot + np.abs(u_total))), 1e-12)
    rise = float(np.max(np.diff(h_total))) if len(h_total) > 1 else 0.0
    net = float(h_total[-1] - h_total[0])
    status = "ok"
    if damped and (net >= 0.0 or rise > 1e-5 * scale):
        status = "energy_check_failed"
    manifest = _write_manifest(out_dir, {
        "command": "beam-damping",
        "kind": cfg.kind,
        "config_sha256": cfg.sha256,
        "status": status,
        "damped": bool(damped),
        "energy_initial": float(h_total[0]),
        "energy_final": float(h_total[-1]),
        "energy_net_change": net,
        "energy_max_step_rise": rise,
        "wall_time_s": time.perf_counter() - t0,
        "outputs": sorted(files),
    })
    if status == "energy_check_failed":
        raise EnergyCheckFailure(
            "total energy rose by %.3e in one step (net change %.3e) although "
            "the material is damped" % (rise, net))
    return manifest
