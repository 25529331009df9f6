"""Configuration ingestion, pipeline orchestration, and report emission.

JSON in, JSON + CSV out.  Exit codes: 0 all enabled verdicts pass, 1 a
verdict failed, 2 configuration error, 3 numerical-resolution error
(unresolved rank, under-resolved contour, inconsistent construction).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__
from .analysis import (
    continuity_sweep,
    lagrangian_and_cobordism,
    projection_invariants,
    ucp_defect_profile,
)
from .coefficients import CoefficientField
from .double import (
    assemble_double,
    calderon,
    correction_formula_check,
    ghost_solutions,
)
from .errors import (
    CalderonLabError,
    ConfigError,
    ContourResolutionError,
    NumericalInconsistencyError,
    RankGapError,
)
from .geometry import GeometryConfig, build_discretization, trace_and_dual
from .operator import (
    OperatorSpec,
    assemble_operator,
    cauchy_riemann_spec,
    check_ellipticity_and_sl,
    dirac_sigma1_spec,
    green_defect,
    transmission_morphism,
)
from .oracle import compare_to_oracle, constant_coeff_ucp, mode_oracle_cauchy
from .sectorial import sectorial_projection

REPORT_SCHEMA = "calderonlab-report/1"
COMMANDS = (
    "check",
    "double",
    "calderon",
    "invariants",
    "sweep",
    "ucp",
    "cobordism",
    "oracle-compare",
)

BUILTIN_SPECS = {
    "cauchy_riemann": cauchy_riemann_spec,
    "dirac_sigma1": dirac_sigma1_spec,
}


@dataclass
class Tolerances:
    """Every numeric verdict carries one of these thresholds."""

    idem: float = 1e-8
    compl: float = 1e-8
    sym: float = 1e-8
    ker: float = 1e-8
    green: float = 1e-8
    quad: float = 1e-8
    oracle_angle: float = 1e-6
    coupling: float = 1e-8
    correction: float = 1e-6
    isotropy: float = 1e-8
    transversality: float = 1e-3
    rank: float = 1e-10
    gap_min: float = 10.0

    def override(self, pairs):
        known = {f.name for f in fields(self)}
        for key, value in pairs:
            if key not in known:
                raise ConfigError(f"unknown tolerance key '{key}'")
            setattr(self, key, float(value))
        return self


@dataclass
class RunConfig:
    command: str
    spec: OperatorSpec
    tolerances: Tolerances
    out_dir: str
    mode_limit: int = None
    threads: int = 1
    sweep: dict = None
    ucp_samples: list = None
    raw: dict = field(default_factory=dict)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"missing key '{key}' in {where}")
    return obj[key]


def _geometry_from_json(obj: dict) -> GeometryConfig:
    known = {"length", "n_theta", "n_x", "rank"}
    extra = set(obj) - known
    if extra:
        raise ConfigError(f"unknown geometry key '{sorted(extra)[0]}'")
    return GeometryConfig(**obj)


def spec_from_json(obj: dict) -> OperatorSpec:
    """Operator spec from its JSON form (builtin reference or coefficients)."""
    if "builtin" in obj:
        name = obj["builtin"]
        if name not in BUILTIN_SPECS:
            raise ConfigError(
                f"unknown builtin spec '{name}'; choices: {sorted(BUILTIN_SPECS)}"
            )
        geo = obj.get("geometry", {})
        spec = BUILTIN_SPECS[name](**geo)
        if "boundary_morphism" in obj:
            spec = OperatorSpec(
                geometry=spec.geometry,
                J=spec.J,
                beta1=spec.beta1,
                beta0=spec.beta0,
                C=spec.C,
                boundary_morphism=obj["boundary_morphism"],
            )
        return spec
    geometry = _geometry_from_json(_require(obj, "geometry", "spec"))
    coeffs = {}
    for name in ("J", "beta1", "beta0", "C"):
        raw = obj.get(name)
        if raw is None:
            coeffs[name] = CoefficientField.zero(geometry.rank)
        else:
            coeffs[name] = CoefficientField.from_json(raw)
    return OperatorSpec(
        geometry=geometry,
        boundary_morphism=obj.get("boundary_morphism", "inverse_J_adjoint"),
        **coeffs,
    )


def spec_to_json(spec: OperatorSpec) -> dict:
    g = spec.geometry
    return {
        "geometry": {
            "length": g.length,
            "n_theta": g.n_theta,
            "n_x": g.n_x,
            "rank": g.rank,
        },
        "J": spec.J.to_json(),
        "beta1": spec.beta1.to_json(),
        "beta0": spec.beta0.to_json(),
        "C": spec.C.to_json(),
        "boundary_morphism": spec.boundary_morphism
        if isinstance(spec.boundary_morphism, str)
        else "explicit",
    }


def load_config(path: str, command: str, overrides=(), out_dir=None,
                mode_limit=None, threads=None) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    spec = spec_from_json(_require(raw, "spec", "config"))
    tols = Tolerances()
    for key, value in raw.get("tolerances", {}).items():
        tols.override([(key, value)])
    tols.override(overrides)
    thr = threads
    if thr is None:
        thr = int(os.environ.get("CALDERONLAB_THREADS", "1"))
    return RunConfig(
        command=command,
        spec=spec,
        tolerances=tols,
        out_dir=out_dir or raw.get("out_dir", "./out"),
        mode_limit=mode_limit if mode_limit is not None else raw.get("modes"),
        threads=thr,
        sweep=raw.get("sweep"),
        ucp_samples=raw.get("ucp", {}).get("x_samples"),
        raw=raw,
    )


# ----------------------------------------------------------------------
# report plumbing


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        if np.iscomplexobj(x):
            return [_jsonable(v) for v in x.tolist()]
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


@dataclass
class RunReport:
    command: str
    config_echo: dict
    blocks: dict
    verdicts: list
    timing_seconds: float
    schema: str = REPORT_SCHEMA
    version: str = __version__

    def add_verdict(self, name, value, tol, mode="<=") -> bool:
        if mode == "<=":
            ok = bool(value <= tol)
        elif mode == ">=":
            ok = bool(value >= tol)
        elif mode == "==":
            ok = bool(value == tol)
        else:
            raise ValueError(mode)
        self.verdicts.append(
            {"name": name, "value": _jsonable(value), "tolerance": _jsonable(tol),
             "comparison": mode, "pass": ok}
        )
        return ok

    @property
    def all_pass(self) -> bool:
        return all(v["pass"] for v in self.verdicts)

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "version": self.version,
            "command": self.command,
            "config": _jsonable(self.config_echo),
            "blocks": _jsonable(self.blocks),
            "verdicts": _jsonable(self.verdicts),
            "timing_seconds": self.timing_seconds,
            "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }


def write_report(report: RunReport, out_dir: str) -> list:
    """Write report.json plus any nonempty CSV tables; returns the paths.

    CSV bodies are deterministic (17 significant digits, no timestamps);
    the wall-clock stamp lives only in report.json.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    omitted = []
    tables = {
        "modes.csv": report.blocks.get("modes_table"),
        "spectrum.csv": report.blocks.get("spectrum_table"),
        "sweep.csv": report.blocks.get("sweep_table"),
    }
    for name, table in tables.items():
        if not table or not table.get("rows"):
            if table is not None:
                omitted.append(name)
            continue
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(table["columns"])
            for row in table["rows"]:
                writer.writerow([_fmt(v) for v in row])
        written.append(path)
    report.blocks["csv_written"] = [os.path.basename(p) for p in written]
    report.blocks["csv_omitted_empty"] = omitted
    jpath = os.path.join(out_dir, "report.json")
    with open(jpath, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(jpath)
    return written


# ----------------------------------------------------------------------
# command pipelines


def _base_pipeline(cfg: RunConfig):
    disc = build_discretization(cfg.spec.geometry)
    op = assemble_operator(cfg.spec, disc)
    traces = trace_and_dual(disc)
    return disc, op, traces


def _spectrum_table(op, disc):
    B0 = op.collar.B0_boundary(disc)
    ev = np.sort_complex(np.linalg.eigvals(B0))
    return {
        "columns": ["re", "im"],
        "rows": [[z.real, z.imag] for z in ev],
    }


def run_command(cfg: RunConfig) -> RunReport:
    t0 = time.time()
    handler = {
        "check": _cmd_check,
        "double": _cmd_double,
        "calderon": _cmd_calderon,
        "invariants": _cmd_invariants,
        "oracle-compare": _cmd_oracle_compare,
        "cobordism": _cmd_cobordism,
        "ucp": _cmd_ucp,
        "sweep": _cmd_sweep,
    }[cfg.command]
    report = RunReport(
        command=cfg.command,
        config_echo={
            "spec": spec_to_json(cfg.spec),
            "tolerances": {f.name: getattr(cfg.tolerances, f.name)
                           for f in fields(cfg.tolerances)},
            "mode_limit": cfg.mode_limit,
            "threads": cfg.threads,
        },
        blocks={},
        verdicts=[],
        timing_seconds=0.0,
    )
    handler(cfg, report)
    report.timing_seconds = time.time() - t0
    return report


def _cmd_check(cfg, report):
    disc, op, traces = _base_pipeline(cfg)
    T = transmission_morphism(op)
    sl = check_ellipticity_and_sl(op.collar, T, disc)
    gd = green_defect(op, disc, traces)
    report.blocks["check"] = {
        "ellipticity_constant": op.ellipticity_constant,
        "J_condition": op._v["J_condition"],
        "positivity_min_eig": sl["positivity_min_eig"],
        "sl_min_sv": sl["sl_min_sv"],
        "witnesses": sl["witnesses"],
        "green_defect": gd,
        "selfadjoint_defect": op.selfadjoint_defect(),
    }
    report.blocks["spectrum_table"] = _spectrum_table(op, disc)
    report.add_verdict("positivity", sl["positivity"], True, "==")
    report.add_verdict("shapiro_lopatinskii", sl["sl_pass"], True, "==")
    report.add_verdict("green_defect", gd, cfg.tolerances.green)


def _cmd_double(cfg, report):
    disc, op, traces = _base_pipeline(cfg)
    dbl = assemble_double(op, traces=traces)
    kd = dbl.kernel_data()
    ghosts = ghost_solutions(op, traces, rank_tol=cfg.tolerances.rank,
                             gap_min=cfg.tolerances.gap_min)
    report.blocks["double"] = {
        "kernel_dim": kd["dim"],
        "kernel_gap_ratio": kd["gap_ratio"],
        "smallest_kept_sv": kd["smallest_kept_sv"],
        "ghost_dim_A": ghosts["dim_A"],
        "ghost_dim_At": ghosts["dim_At"],
        "ghost_gap_ratio_A": ghosts["gap_ratio_A"],
        "ghost_gap_ratio_At": ghosts["gap_ratio_At"],
        "positivity_warning": dbl.positivity_warning,
    }
    report.blocks["spectrum_table"] = _spectrum_table(op, disc)
    report.add_verdict("kernel_gap_ratio", kd["gap_ratio"],
                       cfg.tolerances.gap_min, ">=")
    report.add_verdict("kernel_equals_ghosts", kd["dim"],
                       ghosts["dim_A"] + ghosts["dim_At"], "==")


def _cmd_calderon(cfg, report):
    disc, op, traces = _base_pipeline(cfg)
    dbl = assemble_double(op, traces=traces)
    bundle = calderon(dbl, op, traces, ker_tol=cfg.tolerances.ker)
    report.blocks["calderon"] = dict(bundle.diagnostics)
    report.blocks["spectrum_table"] = _spectrum_table(op, disc)
    tol = cfg.tolerances
    report.add_verdict("compl_residual", bundle.compl_residual, tol.compl)
    report.add_verdict("idem_residual", bundle.idem_residual, tol.idem)
    if bundle.diagnostics["orthogonal_choice"]:
        report.add_verdict("sym_residual", bundle.sym_residual, tol.sym)
    report.add_verdict("kernel_residual", bundle.kernel_residual, tol.ker)
    _modes_table(cfg, report, disc, op, dbl, bundle)


def _modes_table(cfg, report, disc, op, dbl, bundle):
    rows = []
    limit = cfg.mode_limit if cfg.mode_limit is not None else disc.n_theta // 2 - 1
    angles = None
    if cfg.spec.is_theta_constant():
        oracle = mode_oracle_cauchy(cfg.spec, disc)
        cmp_rep = compare_to_oracle(bundle, oracle, disc, mode_limit=limit)
        angles = cmp_rep["per_mode_angle"]
        corr = correction_formula_check(dbl, op, bundle, mode_limit=limit)
        report.blocks["correction"] = {
            "residual": corr["residual"],
            "commutator_order_flag": corr["commutator_order_flag"],
            "denominator_condition": corr["denominator_condition"],
        }
        modes = corr["modes"]
        order = np.argsort(modes)
        for i in order:
            if abs(int(modes[i])) > limit:
                continue
            rows.append(
                [
                    int(modes[i]),
                    float(angles[i]) if not np.isnan(angles[i]) else 0.0,
                    float(corr["per_mode_gap_to_sectorial"][i]),
                    float(corr["per_mode_residual"][i]),
                ]
            )
        report.blocks["modes_table"] = {
            "columns": ["mode", "oracle_angle", "gap_to_sectorial",
                        "correction_residual"],
            "rows": rows,
        }
        report.add_verdict("oracle_max_angle", cmp_rep["max_angle"],
                           cfg.tolerances.oracle_angle)
        report.add_verdict("mode_coupling", cmp_rep["mode_coupling"],
                           cfg.tolerances.coupling)
        report.add_verdict("correction_residual", corr["residual"],
                           cfg.tolerances.correction)
    else:
        report.blocks["modes_table"] = {"columns": [], "rows": []}


def _cmd_invariants(cfg, report):
    disc, op, traces = _base_pipeline(cfg)
    dbl = assemble_double(op, traces=traces)
    bundle = calderon(dbl, op, traces, ker_tol=cfg.tolerances.ker)
    inv = projection_invariants(bundle, op, traces)
    gd = green_defect(op, disc, traces)
    kd = dbl.kernel_data()
    block = dict(inv)
    block["green_defect"] = gd
    block["kernel_dim"] = kd["dim"]
    report.blocks["invariants"] = block
    report.blocks["spectrum_table"] = _spectrum_table(op, disc)
    tol = cfg.tolerances
    report.add_verdict("compl_residual", inv["compl_residual"], tol.compl)
    report.add_verdict("idem_residual", inv["idem_residual"], tol.idem)
    if inv["sym_flagged"]:
        report.add_verdict("sym_residual", inv["sym_residual"], tol.sym)
    report.add_verdict("direct_oracle_max_angle",
                       inv["direct_oracle_max_angle"], tol.oracle_angle)
    _modes_table(cfg, report, disc, op, dbl, bundle)


def _cmd_oracle_compare(cfg, report):
    if not cfg.spec.is_theta_constant():
        raise ConfigError("oracle-compare requires theta-constant coefficients")
    disc, op, traces = _base_pipeline(cfg)
    dbl = assemble_double(op, traces=traces)
    bundle = calderon(dbl, op, traces, ker_tol=cfg.tolerances.ker)
    limit = cfg.mode_limit if cfg.mode_limit is not None else 20
    oracle = mode_oracle_cauchy(cfg.spec, disc)
    cmp_rep = compare_to_oracle(bundle, oracle, disc, mode_limit=limit)
    report.blocks["oracle_compare"] = {
        "max_angle": cmp_rep["max_angle"],
        "mode_coupling": cmp_rep["mode_coupling"],
        "mode_limit": cmp_rep["mode_limit"],
    }
    rows = []
    order = np.argsort(cmp_rep["modes"])
    for i in order:
        a = cmp_rep["per_mode_angle"][i]
        if np.isnan(a):
            continue
        rows.append([int(cmp_rep["modes"][i]), float(a)])
    report.blocks["modes_table"] = {"columns": ["mode", "oracle_angle"],
                                    "rows": rows}
    report.add_verdict("oracle_max_angle", cmp_rep["max_angle"],
                       cfg.tolerances.oracle_angle)
    report.add_verdict("mode_coupling", cmp_rep["mode_coupling"],
                       cfg.tolerances.coupling)


def _cmd_cobordism(cfg, report):
    disc, op, traces = _base_pipeline(cfg)
    defect = op.selfadjoint_defect()
    if defect > 1e-10 * max(1.0, op.ellipticity_constant):
        raise ConfigError(
            "cobordism requires formally self-adjoint A "
            f"(collocation defect {defect:.3e})"
        )
    dbl = assemble_double(op, traces=traces)
    bundle = calderon(dbl, op, traces, ker_tol=cfg.tolerances.ker)
    cob = lagrangian_and_cobordism(bundle, op)
    report.blocks["cobordism"] = {
        k: v for k, v in cob.items() if not isinstance(v, np.ndarray)
    }
    report.blocks["spectrum_table"] = _spectrum_table(op, disc)
    tol = cfg.tolerances
    report.add_verdict("isotropy_residual", cob["isotropy_residual"],
                       tol.isotropy)
    report.add_verdict("transversality_angle", cob["transversality_angle"],
                       tol.transversality, ">=")
    report.add_verdict("signature", cob["signature"], 0, "==")
    if cob.get("graded_index_available"):
        report.add_verdict("graded_index", cob["graded_index"], 0, "==")


def _cmd_ucp(cfg, report):
    disc, op, traces = _base_pipeline(cfg)
    L = cfg.spec.geometry.length
    samples = cfg.ucp_samples or [0.0, L / 4, L / 2, 3 * L / 4]
    profile = ucp_defect_profile(op, traces, samples,
                                 rank_tol=cfg.tolerances.rank,
                                 gap_min=cfg.tolerances.gap_min)
    block = {
        "x_samples": profile.x_samples,
        "d": profile.d,
        "d_prime": profile.d_prime,
        "inner_index": profile.inner_index,
        "gap_ratios": profile.gap_ratios,
        "gap_ratios_prime": profile.gap_ratios_prime,
        "inconclusive": profile.inconclusive,
        "monotone": profile.monotone,
    }
    x_const = all(
        getattr(cfg.spec, n).x_degree == 0 for n in ("J", "beta1", "beta0", "C")
    )
    if cfg.spec.is_theta_constant() and x_const:
        verdict = constant_coeff_ucp(cfg.spec, disc, samples)
        block["oracle_verdict"] = verdict["verdict"]
        block["oracle_agrees"] = bool(
            verdict["d_zero_everywhere"] == bool(np.all(profile.d == 0))
        )
        report.add_verdict("ucp_oracle_agreement", block["oracle_agrees"],
                           True, "==")
    report.blocks["ucp"] = block
    report.add_verdict("ucp_all_certified",
                       bool(~np.any(profile.inconclusive)), True, "==")
    report.add_verdict("ucp_monotone", profile.monotone, True, "==")


def _sweep_family(cfg):
    sw = cfg.sweep or {}
    for key in ("s_grid",):
        if key not in sw:
            raise ConfigError("sweep config missing key 's_grid'")
    target = sw.get("target", "C")
    if target not in ("J", "beta1", "beta0", "C"):
        raise ConfigError(f"unknown sweep target '{target}'")
    if "perturbation" in sw:
        pert = CoefficientField.from_json(sw["perturbation"])
    else:
        k = cfg.spec.geometry.rank
        pert = CoefficientField.constant(np.eye(k))
    base = cfg.spec

    def family(s):
        parts = {
            "J": base.J,
            "beta1": base.beta1,
            "beta0": base.beta0,
            "C": base.C,
        }
        parts[target] = parts[target] + pert * s
        return OperatorSpec(
            geometry=base.geometry,
            boundary_morphism=base.boundary_morphism,
            **parts,
        )

    return family, [float(s) for s in sw["s_grid"]], float(sw.get("sobolev_s", 0.0))


def _cmd_sweep(cfg, report):
    family, s_grid, sobolev_s = _sweep_family(cfg)
    out = continuity_sweep(family, s_grid, sobolev_s=sobolev_s,
                           threads=cfg.threads)
    rows = []
    for i, s in enumerate(out["s_grid"]):
        rows.append(
            [
                s,
                out["d0"][i],
                out["d_str"][i],
                out["curve_C"][i],
                out["curve_P"][i],
                out["norm_C"][i],
                out["resolvent_curve"][i],
                out["resolvent_ratio"][i],
            ]
        )
    report.blocks["sweep_table"] = {
        "columns": ["s", "d0", "d_str", "dC_from_ref", "dP_from_ref",
                    "norm_C", "d_resolvent", "resolvent_ratio"],
        "rows": rows,
    }
    report.blocks["sweep"] = {
        "jump_flags_C": out["jump_flags_C"],
        "jump_flags_P": out["jump_flags_P"],
        "step_ratio": out["step_ratio"],
        "max_step_ratio": float(np.max(out["step_ratio"])),
    }
    report.add_verdict("no_jump_in_C", bool(~np.any(out["jump_flags_C"])),
                       True, "==")


# ----------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calderonlab",
        description="Invertible doubles, Calderon projections, and their "
        "invariants on the model cylinder.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--out", default=None, help="output directory (./out)")
    parser.add_argument(
        "--tol",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="tolerance override, repeatable",
    )
    parser.add_argument("--modes", type=int, default=None,
                        help="mode limit for per-mode comparisons")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for sweeps "
                        "(CALDERONLAB_THREADS as fallback)")
    return parser


def _parse_tol(pairs):
    out = []
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"--tol expects KEY=VALUE, got '{item}'")
        key, value = item.split("=", 1)
        try:
            out.append((key, float(value)))
        except ValueError as exc:
            raise ConfigError(f"--tol value for '{key}' is not a number") from exc
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            args.command,
            overrides=_parse_tol(args.tol),
            out_dir=args.out,
            mode_limit=args.modes,
            threads=args.threads,
        )
        report = run_command(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (RankGapError, ContourResolutionError, NumericalInconsistencyError) as exc:
        print(f"numerical resolution error: {exc}", file=sys.stderr)
        return 3
    except CalderonLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_report(report, cfg.out_dir)
    for v in report.verdicts:
        status = "pass" if v["pass"] else "FAIL"
        print(f"[{status}] {v['name']}: {v['value']} "
              f"({v['comparison']} {v['tolerance']})")
    return 0 if report.all_pass else 1


if __name__ == "__main__":
    sys.exit(main())
