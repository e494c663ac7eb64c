"""Command-line front end: sweeps and checks emitted as CSV or JSON tables.

Exit codes: 0 success, 1 invalid input or unwritable output, 2 solver failure.
"""

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .geometry import build_constrained_perturbation, constraint_residuals, mapped_measures
from .harmonics import sphere_area
from .oracle import mode_second_derivatives
from .radial import PhaseConfig, SolverError, radial_energy, radial_fd_oracle, radial_state
from .serrin import continue_from_outer, mode_linearization
from .spectrum import (
    classify_configuration,
    second_derivative_mode,
    second_derivative_mode_integral,
    sign_class,
    spectrum_table,
    zero_tolerance,
)

SCHEMA = "tptl/1"
COMMANDS = ("spectrum", "classify", "verify-radial", "verify-energy", "serrin", "geometry")

# per-command defaults for flags left unset
DEFAULTS = {
    "spectrum": dict(k_max=16),
    "classify": dict(k_max=64),
    "verify-radial": dict(n_r=1024),
    "verify-energy": dict(k_max=6, n_r=512, n_theta=256, fd_step=5e-3, tol=0.02),
    "serrin": dict(beta=1.0, k=2, k_max=16, n_r=128, n_theta=128, tol=1e-8, amplitude=1e-3),
    "geometry": dict(k_max=8),
}


@dataclass
class RunConfig:
    subcommand: str
    N: int = 2
    R: float = 0.5
    sigma_c: float = 1.0
    beta: float = 0.0
    gamma: float = 1.0
    k_max: int = None
    k: int = None
    n_r: int = None
    n_theta: int = None
    fd_step: float = None
    tol: float = None
    amplitude: float = None
    out: str = "json"
    output: str = None

    def __post_init__(self):
        for name in ("k_max", "k", "n_r", "n_theta"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"--{name.replace('_', '')} must be >= 1, got {v}")
        for name in ("fd_step", "tol", "amplitude"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"--{name.replace('_', '-')} must be positive, got {v}")
        self.phase  # validates N, R, sigma_c, beta, gamma

    @property
    def phase(self) -> PhaseConfig:
        return PhaseConfig(self.N, self.R, self.sigma_c, self.beta, self.gamma)

    def metadata(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValueError(message)


def build_parser():
    p = _Parser(prog="tptl", description="Shape derivatives of two-phase torsional energy at concentric balls.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--N", type=int, default=2)
        s.add_argument("--R", type=float, default=0.5)
        s.add_argument("--sigma-c", dest="sigma_c", type=float, default=1.0)
        s.add_argument("--beta", type=float)
        s.add_argument("--gamma", type=float, default=1.0)
        s.add_argument("--kmax", dest="k_max", type=int)
        s.add_argument("--k", type=int)
        s.add_argument("--nr", dest="n_r", type=int)
        s.add_argument("--ntheta", dest="n_theta", type=int)
        s.add_argument("--fd-step", dest="fd_step", type=float)
        s.add_argument("--tol", type=float)
        s.add_argument("--out", choices=("csv", "json"), default="json")
        s.add_argument("--output")
        if name == "serrin":
            s.add_argument("--amplitude", type=float, help="size of the outer perturbation g = a Y_{k,1}")
    return p


def parse_config(argv) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    for key, val in DEFAULTS[ns["subcommand"]].items():
        if ns.get(key) is None:
            ns[key] = val
    if ns.get("beta") is None:
        ns["beta"] = 0.0
    return RunConfig(**ns)


# ---------------------------------------------------------------------------
# Formatting


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def to_json(obj, indent=0):
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(to_json(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + to_json(v, indent + 1) for v in seq) + "\n" + end + "]"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    return _num(obj)


def _cell(v):
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    return _num(v)


def to_csv(run: RunConfig, columns, rows):
    buf = io.StringIO()
    for key, val in run.metadata().items():
        buf.write(f"# {key}={_cell(val)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def render(run: RunConfig, columns, rows, result):
    if run.out == "csv":
        return to_csv(run, columns, rows)
    return to_json({"schema": SCHEMA, "config": run.metadata(), "result": result}) + "\n"


# ---------------------------------------------------------------------------
# Subcommands: each returns (columns, rows, json result)


def cmd_spectrum(run: RunConfig):
    cfg = run.phase
    tol = zero_tolerance(cfg)
    rows = [
        {"k": r.k, "e_minus": r.e_minus, "e_plus": r.e_plus, "e_res": r.e_res, "delta": r.discriminant, "sign_class": sign_class(r, tol)}
        for r in spectrum_table(cfg, run.k_max)
    ]
    return ["k", "e_minus", "e_plus", "e_res", "delta", "sign_class"], rows, rows


def cmd_classify(run: RunConfig):
    res = classify_configuration(run.phase, run.k_max)
    rows = [
        {"verdict": res["verdict"], "k": w["k"], "a_minus": w["direction"][0], "a_plus": w["direction"][1], "value": w["value"], "sign": w["sign"]}
        for w in res["witnesses"]
    ] or [{"verdict": res["verdict"]}]
    return ["verdict", "k", "a_minus", "a_plus", "value", "sign"], rows, res


def cmd_verify_radial(run: RunConfig):
    cfg = run.phase
    prof = radial_state(cfg)
    E = radial_energy(cfg)
    rows = []
    for j in range(3):
        n = run.n_r * 2**j
        fd = radial_fd_oracle(cfg, n)
        err = float(np.max(np.abs(fd.values - prof(fd.centers))))
        rows.append({"n": n, "sup_error": err, "energy": fd.integral(), "energy_error": abs(fd.integral() - E)})
    for a, b in zip(rows, rows[1:]):
        b["order"] = math.log2(a["sup_error"] / b["sup_error"])
    result = {"energy_closed_form": E, "rows": rows}
    if cfg.N == 2 and cfg.sigma_c == 1 and cfg.beta == 0:
        result["energy_disk_reference"] = cfg.gamma * math.pi / 8
    return ["n", "sup_error", "order", "energy", "energy_error"], rows, result


def cmd_verify_energy(run: RunConfig):
    cfg = run.phase
    if cfg.N != 2:
        raise ValueError("verify-energy uses the two-dimensional oracle (N = 2)")
    ks = [run.k] if run.k is not None else list(range(1, run.k_max + 1))
    steps = (2 * run.fd_step, run.fd_step)
    rows = []
    for k in ks:
        ri = second_derivative_mode_integral(cfg, k)
        rc = second_derivative_mode(cfg, k)
        fd = mode_second_derivatives(cfg, k, run.n_r, run.n_theta, steps)
        ref = {"inner": ri.e_minus, "outer": ri.e_plus, "mixed": ri.e_minus + ri.e_plus + ri.e_res}
        closed = {"inner": rc.e_minus, "outer": rc.e_plus, "mixed": rc.e_minus + rc.e_plus + rc.e_res}
        # near-zero entries are measured against the mode's largest value
        scale = max(max(abs(v) for v in ref.values()), max(abs(v) for v in fd["paths"].values()))
        for path in ("inner", "outer", "mixed"):
            o = fd["paths"][path]
            dev = abs(o - ref[path]) / max(abs(ref[path]), scale)
            rows.append(
                {
                    "k": k,
                    "path": path,
                    "closed_form": closed[path],
                    "integral": ref[path],
                    "oracle": o,
                    "rel_dev": dev,
                    "closed_rel_dev": abs(closed[path] - ref[path]) / max(abs(ref[path]), scale),
                    "fd_error": fd["errors"][path],
                    "first_derivative": fd["first"][path],
                    "ok": dev <= run.tol,
                }
            )
    result = {"rows": rows, "all_ok": all(r["ok"] for r in rows)}
    cols = ["k", "path", "closed_form", "integral", "oracle", "rel_dev", "closed_rel_dev", "fd_error", "first_derivative", "ok"]
    return cols, rows, result


def cmd_serrin(run: RunConfig):
    cfg = run.phase
    g = {(run.k, 1): run.amplitude}
    res = continue_from_outer(cfg, g, tol=run.tol, k_max=run.k_max, n_r=run.n_r, n_theta=run.n_theta)
    rows = [{"iteration": i, "residual": r} for i, r in enumerate(res.history)]
    f = [[k, i, a] for (k, i), a in sorted(res.f.items())]
    result = {
        "iterations": res.iterations,
        "residual": res.residual,
        "d": res.d,
        "history": res.history,
        "f": f,
        "linearization": {str(k): mode_linearization(cfg, k) for k in range(1, run.k_max + 1)},
    }
    return ["iteration", "residual"], rows, result


def cmd_geometry(run: RunConfig):
    cfg = run.phase
    ks = [run.k] if run.k is not None else list(range(1, run.k_max + 1))
    v_in = sphere_area(cfg.N) * cfg.R**cfg.N / cfg.N
    v_out = sphere_area(cfg.N) / cfg.N
    rows = []
    for k in ks:
        Y = {(k, 1): 1.0}
        keep_bar = k > 1
        c = constraint_residuals(Y, Y if keep_bar else {}, cfg)
        path = build_constrained_perturbation(Y, Y, cfg, preserve_barycenter=keep_bar)
        dev_in = dev_out = dev_bar = 0.0
        for t in (0.025, 0.05, 0.1):
            mi = mapped_measures(path, t, "inner")
            mo = mapped_measures(path, t, "outer")
            dev_in = max(dev_in, abs(mi["Vol"] - v_in) / v_in)
            dev_out = max(dev_out, abs(mo["Vol"] - v_out) / v_out)
            if keep_bar:
                dev_bar = max(dev_bar, float(np.max(np.abs(mo["Bar"]))))
        rows.append(
            {
                "k": k,
                "vol1_inner": c["vol1_inner"],
                "vol1_outer": c["vol1_outer"],
                "bar1_outer": float(np.max(np.abs(c["bar1_outer"]))),
                "vol2_inner": c["vol2_inner"],
                "vol2_outer": c["vol2_outer"],
                "path_vol_inner": dev_in,
                "path_vol_outer": dev_out,
                "path_bar": dev_bar if keep_bar else None,
            }
        )
    cols = ["k", "vol1_inner", "vol1_outer", "bar1_outer", "vol2_inner", "vol2_outer", "path_vol_inner", "path_vol_outer", "path_bar"]
    return cols, rows, rows


HANDLERS = {
    "spectrum": cmd_spectrum,
    "classify": cmd_classify,
    "verify-radial": cmd_verify_radial,
    "verify-energy": cmd_verify_energy,
    "serrin": cmd_serrin,
    "geometry": cmd_geometry,
}


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else list(argv))
        text = render(cfg, *HANDLERS[cfg.subcommand](cfg))
        if cfg.output:
            with open(cfg.output, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            stdout.write(text)
    except SolverError as exc:
        print(f"tptl: solver failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"tptl: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())
