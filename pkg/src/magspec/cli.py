"""``magspec`` command line tool.

Exit codes: 0 success, 2 validation error, 3 inconsistent data,
4 a verification inequality failed.
"""

from __future__ import annotations

import ast
import json
import math
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import config
from .errors import (
    DataError,
    DegenerateError,
    DomainError,
    InvalidGramError,
    MagspecError,
    RankError,
    ShapeError,
    UnsupportedError,
)
from .invariants import global_minimum_search, invariant_report
from .lattice import Lattice, ModuliPoint, moduli_of, named_lattice
from .numeric import DiscreteTorus, convergence_study, verify_asymptotics, verify_flat_is_best
from .reconstruct import isospectral_compare, reconstruct
from .spectrum import (
    FluxVector,
    GroundStateTable,
    PotentialForm,
    ground_state_spectrum,
    lambda1,
    magnetic_spectrum,
)

EXIT_VALIDATION = 2
EXIT_DATA = 3
EXIT_VERIFY = 4

FORMATS = click.Choice(["json", "csv", "pretty"])


class Failure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _run(fn):
    """Map library errors onto the exit code contract."""
    try:
        fn()
    except Failure as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.code)
    except (DataError, InvalidGramError, DegenerateError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    except (DomainError, ShapeError, RankError, UnsupportedError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except MagspecError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)


def parse_lattice(text: str) -> Lattice:
    text = text.strip()
    if text[:1] in "[{":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DomainError(f"--lattice is not valid JSON: {exc}") from None
        if isinstance(data, list):
            data = {"basis": data}
        return Lattice.from_dict(data)
    path = Path(text)
    if path.suffix == ".json" and path.exists():
        return parse_lattice(path.read_text())
    return named_lattice(text)


def parse_floats(text: str, name: str, count: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise DomainError(f"--{name} must be comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise ShapeError(f"--{name} needs {count} numbers, got {len(vals)}")
    return vals


_ALLOWED_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)
_SHORTHANDS = {
    "sin": "sin(2*pi*x1)",
    "cos": "cos(2*pi*x1)",
    "sincos": "sin(2*pi*x1)*cos(2*pi*x2)",
    "sin2": "sin(2*pi*x2)",
}


def parse_phi(text: str):
    """Conformal log-factor from an expression in fractional coordinates
    x1, x2. ``0.2*sin`` is shorthand for ``0.2*sin(2*pi*x1)``; see
    ``_SHORTHANDS``."""
    expr = text.strip()
    head, _, tail = expr.rpartition("*")
    if tail in _SHORTHANDS:
        expr = f"{head}*{_SHORTHANDS[tail]}" if head else _SHORTHANDS[tail]
    elif expr in _SHORTHANDS:
        expr = _SHORTHANDS[expr]
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError:
        raise DomainError(f"--phi is not a valid expression: {text!r}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise DomainError(f"--phi uses a disallowed construct: {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in {"x1", "x2", "pi", *_ALLOWED_FUNCS}:
            raise DomainError(f"--phi uses unknown name {node.id!r}")
    code = compile(tree, "<phi>", "eval")

    def phi(x1, x2):
        env = {"x1": x1, "x2": x2, "pi": math.pi, **_ALLOWED_FUNCS}
        return eval(code, {"__builtins__": {}}, env)

    return phi


def resolve_potential(L: Lattice, potential: str | None, fluxes: str | None) -> PotentialForm:
    if potential and fluxes:
        raise DomainError("give either --potential or --fluxes, not both")
    if fluxes:
        if L.dim != 2:
            raise ShapeError("--fluxes is only defined for 2-D lattices")
        f = FluxVector(parse_floats(fluxes, "fluxes", 2))
        W = L.matrix
        # solve <P, w_i> = Phi_i for the given basis
        return PotentialForm(np.linalg.solve(W.T, f.fluxes))
    if potential is None:
        return PotentialForm(np.zeros(L.dim))
    return PotentialForm(parse_floats(potential, "potential", L.dim))


def emit(payload: dict, fmt: str, csv_text: str | None = None, pretty: str | None = None) -> None:
    if fmt == "csv" and csv_text is not None:
        click.echo(csv_text, nl=False)
    elif fmt == "pretty" and pretty is not None:
        click.echo(pretty)
    else:
        click.echo(json.dumps(payload, indent=2))


def read_config(path: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise click.BadParameter(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Key-value file supplying option defaults.")
@click.pass_context
def main(ctx, config_path):
    """Magnetic spectral geometry of flat tori."""
    env = os.environ.get("MAGSPEC_TOL")
    config.TOLERANCES.clear()
    config.TOLERANCES.update(config.DEFAULTS)
    if env:
        try:
            config.TOLERANCES.update(config.parse_overrides(env))
        except ValueError as exc:
            click.echo(f"error: MAGSPEC_TOL: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
    if config_path:
        values = read_config(config_path)
        ctx.default_map = {name: _defaults_for(cmd, values) for name, cmd in main.commands.items()
                           if name != "verify"}
        ctx.default_map["verify"] = {name: _defaults_for(cmd, values)
                                     for name, cmd in verify.commands.items()}


def _defaults_for(cmd: click.Command, values: dict) -> dict:
    """Config keys may use the flag spelling (``lattice``) or the parameter name."""
    out = {}
    for param in cmd.params:
        keys = {param.name} | {o.lstrip("-").replace("-", "_") for o in getattr(param, "opts", [])}
        for key in keys:
            if key in values:
                out[param.name] = values[key]
    return out


@main.command()
@click.option("--lattice", "lattice_text", default="Z2", show_default=True,
              help="Z2, Zd, hex, rect:a,b, a JSON basis (row per vector) or a .json file.")
@click.option("--potential", default=None, help="Position vector P_A, comma separated.")
@click.option("--fluxes", default=None, help="Fluxes through the basis loops (2-D).")
@click.option("--cutoff", type=float, default=100.0, show_default=True)
@click.option("--format", "fmt", type=FORMATS, default="json", show_default=True)
def spectrum(lattice_text, potential, fluxes, cutoff, fmt):
    """Closed-form magnetic spectrum up to CUTOFF."""

    def go():
        L = parse_lattice(lattice_text)
        A = resolve_potential(L, potential, fluxes)
        s = magnetic_spectrum(L, A, cutoff)
        payload = {"lattice": L.to_dict(), "position": A.position.tolist(),
                   "lambda1": lambda1(L, A), **s.to_dict()}
        lines = [f"{v:.10g}  x{k}  ({v / math.pi**2:.6g} pi^2)"
                 for v, k in zip(s.eigenvalues, s.multiplicities)]
        emit(payload, fmt, s.to_csv(), "\n".join(lines))

    _run(go)


def _moduli_or_normalize(p, q) -> tuple[ModuliPoint, str | None]:
    try:
        return ModuliPoint(p, q), None
    except DomainError:
        if not q > 0:
            raise
        norm = moduli_of(p, q)
        m = norm.moduli
        return m, f"(p, q) = ({p}, {q}) normalized to ({m.p:.12g}, {m.q:.12g})"


@main.command()
@click.option("--p", "p", type=float, required=True)
@click.option("--q", "q", type=float, required=True)
@click.option("--format", "fmt", type=FORMATS, default="pretty", show_default=True)
def invariants(p, q, fmt):
    """Lambda_1 of the conformal class and the optimal potential."""

    def go():
        m, notice = _moduli_or_normalize(p, q)
        if notice:
            click.echo(f"notice: {notice}", err=True)
        rep = invariant_report(m)
        pos = rep.optimal_position
        pretty = (f"Lambda1 = {rep.lambda1_class:.10f}\n"
                  f"optimal position = ({pos[0]:.10f}, {pos[1]:.10f})\n"
                  f"moduli = ({m.p:.10f}, {m.q:.10f})")
        csv_text = "p,q,lambda1_class,x,y\n" + f"{m.p!r},{m.q!r},{rep.lambda1_class!r},{pos[0]!r},{pos[1]!r}\n"
        emit(rep.to_dict(), fmt, csv_text, pretty)

    _run(go)


@main.command("global-min")
@click.option("--step", type=float, default=1e-3, show_default=True)
@click.option("--format", "fmt", type=FORMATS, default="pretty", show_default=True)
def global_min(step, fmt):
    """Minimize Lambda_1 over moduli space."""

    def go():
        m, value = global_minimum_search(step)
        pretty = f"minimizer = ({m.p:.6f}, {m.q:.6f})\nLambda1 = {value:.10f}"
        payload = {"moduli": m.to_dict(), "value": value}
        emit(payload, fmt, f"p,q,value\n{m.p!r},{m.q!r},{value!r}\n", pretty)

    _run(go)


@main.command()
@click.option("--lattice", "lattice_text", default="Z2", show_default=True)
@click.option("--n", "n_values", default="8,16,32", show_default=True)
@click.option("--mode", type=click.Choice(["surface", "flat-torus"]), default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def table(lattice_text, n_values, mode, out):
    """Ground state table of a flat torus (JSON)."""

    def go():
        L = parse_lattice(lattice_text)
        ns = [int(v) for v in parse_floats(n_values, "n")]
        t = ground_state_spectrum(L, ns, mode=mode)
        if t.flagged:
            click.echo(f"warning: {len(t.flagged)} entries below the gauge threshold", err=True)
        text = json.dumps(t.to_dict(), indent=2)
        if out:
            Path(out).write_text(text)
        else:
            click.echo(text)

    _run(go)


def _load_table(path: str) -> GroundStateTable:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read table {path}: {exc}") from None
    return GroundStateTable.from_dict(data)


@main.command("reconstruct")
@click.argument("table_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["surface", "flat-torus"]), default=None)
@click.option("--method", type=click.Choice(["richardson", "lstsq"]), default="richardson", show_default=True)
@click.option("--compare", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Second table: report whether both come from isometric tori.")
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.option("--format", "fmt", type=FORMATS, default="json", show_default=True)
def reconstruct_cmd(table_file, mode, method, compare, tol, fmt):
    """Volume, Gram matrix and moduli from a ground state table."""

    def go():
        t = _load_table(table_file)
        if compare:
            v = isospectral_compare(t, _load_table(compare), tol=tol, method=method)
            pretty = (f"{'isometric' if v.isometric else 'distinct'}\n"
                      f"volume difference (relative) = {v.volume_diff:.3e}\n"
                      f"Gram difference = {v.gram_diff:.3e}")
            emit(v.to_dict(), fmt, None, pretty)
            return
        r = reconstruct(t, method=method, mode=mode)
        lines = [f"volume = {r.volume:.12g}", "Gram ="]
        lines += ["  " + "  ".join(f"{x: .12g}" for x in row) for row in r.gram.matrix]
        if r.moduli is not None:
            lines.append(f"moduli = ({r.moduli.p:.12g}, {r.moduli.q:.12g})")
        lines.append(f"max residual = {max(r.residuals.values()):.3e}")
        emit(r.to_dict(), fmt, None, "\n".join(lines))

    _run(go)


@main.group()
def verify():
    """Numerical checks on the finite-difference operator."""


def _write_csv(path, text):
    if path:
        Path(path).write_text(text)


@verify.command()
@click.option("--lattice", "lattice_text", default="Z2", show_default=True)
@click.option("--phi", default="0.2*sin", show_default=True)
@click.option("--potential", default=None, help="Position of A (default: the form dx1).")
@click.option("--rs", default="0.25,0.125,0.0625,0.03125", show_default=True)
@click.option("--N", "N", type=int, default=96, show_default=True)
@click.option("--rtol", type=float, default=1e-2, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=FORMATS, default="json", show_default=True)
def asymptotics(lattice_text, phi, potential, rs, N, rtol, csv_path, fmt):
    """vol * lambda_1(rA) / r^2 -> ||A||^2 as r -> 0."""

    def go():
        L = parse_lattice(lattice_text)
        # default: the harmonic form dual to the first basis loop
        pos = parse_floats(potential, "potential", 2) if potential else np.linalg.inv(L.matrix)[0] / (2 * math.pi)
        A = PotentialForm(pos)
        t = DiscreteTorus.build(L, N, parse_phi(phi))
        rep = verify_asymptotics(t, A, parse_floats(rs, "rs"))
        _write_csv(csv_path, rep.to_csv())
        pretty = (f"limit = {rep.limit:.8f}\n||A||^2 = {rep.form_norm_sq:.8f}\n"
                  f"relative error = {rep.relative_error:.3e}\nupper bound holds: {rep.upper_bound_ok}")
        emit(rep.to_dict(), fmt, rep.to_csv(), pretty)
        if not (rep.upper_bound_ok and rep.relative_error <= rtol):
            raise Failure(EXIT_VERIFY, "asymptotics check failed")

    _run(go)


@verify.command("flat-best")
@click.option("--lattice", "lattice_text", default="Z2", show_default=True)
@click.option("--phi", default="0.3*sincos", show_default=True)
@click.option("--potential", default="0.5,0", show_default=True)
@click.option("--N", "N", type=int, default=96, show_default=True)
@click.option("--c", "c", type=float, default=5.0, show_default=True, help="Tolerance c / N^2.")
@click.option("--format", "fmt", type=FORMATS, default="json", show_default=True)
def flat_best(lattice_text, phi, potential, N, c, fmt):
    """|h| lambda_1(h) <= |h_flat| lambda_1(h_flat) in the conformal class."""

    def go():
        L = parse_lattice(lattice_text)
        A = PotentialForm(parse_floats(potential, "potential", 2))
        t = DiscreteTorus.build(L, N, parse_phi(phi))
        rep = verify_flat_is_best(t, A, c=c)
        pretty = (f"|h| lambda1 (grid)        = {rep.conformal_value:.10f}\n"
                  f"|h0| lambda1 (closed form) = {rep.flat_closed_form:.10f}\n"
                  f"gap = {rep.gap:.3e} (tolerance {rep.tolerance:.3e})\n"
                  f"gap vs flat grid = {rep.discrete_gap:.3e}")
        csv_text = "N,conformal,closed_form,flat_discrete,gap\n" + (
            f"{rep.N},{rep.conformal_value!r},{rep.flat_closed_form!r},{rep.flat_discrete!r},{rep.gap!r}\n")
        emit(rep.to_dict(), fmt, csv_text, pretty)
        if not rep.holds:
            raise Failure(EXIT_VERIFY, "flat-is-best inequality violated beyond tolerance")

    _run(go)


@verify.command()
@click.option("--lattice", "lattice_text", default="Z2", show_default=True)
@click.option("--potential", default="0.5,0", show_default=True)
@click.option("--N", "N", default="32,64,128", show_default=True)
@click.option("--order", type=float, default=2.0, show_default=True)
@click.option("--order-tol", type=float, default=0.3, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
@click.option("--format", "fmt", type=FORMATS, default="pretty", show_default=True)
def convergence(lattice_text, potential, N, order, order_tol, csv_path, fmt):
    """Observed order of the flat-torus lambda_1 error."""

    def go():
        L = parse_lattice(lattice_text)
        A = PotentialForm(parse_floats(potential, "potential", 2))
        Ns = [int(v) for v in parse_floats(N, "N")]
        rep = convergence_study(L, A, Ns)
        _write_csv(csv_path, rep.to_csv())
        lines = [f"N = {n:5d}  lambda1 = {v:.12f}  error = {e:.3e}"
                 for n, v, e in zip(rep.resolutions, rep.values, rep.errors)]
        lines += [f"order {a}->{b}: {o:.3f}" for a, b, o in zip(Ns, Ns[1:], rep.orders)]
        emit(rep.to_dict(), fmt, rep.to_csv(), "\n".join(lines))
        if any(not abs(o - order) <= order_tol for o in rep.orders):
            raise Failure(EXIT_VERIFY, "observed order outside the expected band")

    _run(go)


if __name__ == "__main__":
    main()
