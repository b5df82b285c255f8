"""Command-line front end.

Each subcommand reads an INI configuration with sections ``[domain]``,
``[coefficients]`` (and ``[coefficients.B]`` for a second tuple) and
``[experiment]``, and writes one CSV table preceded by ``#`` metadata
lines.  Exit codes: 0 on success, 1 when a requested membership fails,
2 on malformed input.

Coefficient sections take either ``file = <path>`` (the plain-text
coefficient format, relative paths resolved against the config file) or
inline constants::

    [coefficients]
    A = 1 0.2j; 0 1
    b = 0.1 0
    c = 0 0
    V = 1
    support = 0.25 0.75        ; optional box for b, c and V in field mode
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bellman import BellmanParams, PreconditionViolated, choose_delta, convexity_scan, delta_inputs
from .ellipticity import (
    CoefficientFileError,
    CoefficientTuple,
    MembershipError,
    classify,
    counterexample_tuple,
    exponent_window,
    in_Sp,
    load_coefficients,
    rotation_window,
    save_coefficients,
    site_mu_p,
)
from .realform import jp_apply
from .semigroup import (
    BoundarySpec,
    CoefficientFields,
    assemble,
    bilinear_functional,
    cutoff_lower_order,
    evolve,
    interval_mesh,
    mollify_coefficients,
    rectangle_mesh,
    truncation_convergence_experiment,
    truncation_threshold,
)
from .semigroup.experiments import flow_energy

DEFAULT_SEED = 0xBE11
EXIT_OK, EXIT_MEMBERSHIP, EXIT_INPUT = 0, 1, 2


class ConfigError(ValueError):
    """Malformed configuration."""


# --- configuration ------------------------------------------------------------


class RunConfig:
    """Parsed configuration plus the raw bytes used for the metadata hash."""

    def __init__(self, path=None, seed: int = DEFAULT_SEED):
        self.path = Path(path) if path else None
        self.seed = int(seed)
        self.parser = configparser.ConfigParser(inline_comment_prefixes=(";",))
        self.raw = b""
        if self.path is not None:
            try:
                self.raw = self.path.read_bytes()
                self.parser.read_string(self.raw.decode())
            except (OSError, UnicodeDecodeError, configparser.Error) as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.raw).hexdigest() if self.path else "none"

    def get(self, section, key, default=None):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key)
        if default is None:
            raise ConfigError(f"missing [{section}] {key}")
        return default

    def number(self, section, key, default=None, kind=float):
        raw = self.get(section, key, None if default is None else str(default))
        try:
            return kind(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}") from exc

    def numbers(self, section, key, default=None, kind=float):
        raw = self.get(section, key, None if default is None else default)
        try:
            return [kind(x) for x in raw.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: expected numbers, got {raw!r}") from exc

    def resolve(self, rel) -> Path:
        p = Path(rel)
        if not p.is_absolute() and self.path is not None:
            p = self.path.parent / p
        return p


def _complex_row(text):
    try:
        return [complex(x) for x in text.split()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse numbers in {text!r}") from exc


def _matrix(text):
    rows = [_complex_row(r) for r in text.split(";") if r.strip()]
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ConfigError(f"A must be a square matrix, got {text!r}")
    return np.array(rows)


def _section_constants(cfg: RunConfig, section: str):
    if not cfg.parser.has_section(section):
        raise ConfigError(f"missing section [{section}]")
    A = _matrix(cfg.get(section, "A"))
    d = A.shape[0]
    vec = {}
    for key in ("b", "c"):
        v = np.array(_complex_row(cfg.get(section, key, " ".join(["0"] * d))))
        if v.shape != (d,):
            raise ConfigError(f"[{section}] {key} must have {d} entries")
        vec[key] = v
    V = cfg.number(section, "V", 0.0)
    if V < 0:
        raise ConfigError(f"[{section}] V must be non-negative")
    return A, vec["b"], vec["c"], V


def load_tuple(cfg: RunConfig, section: str = "coefficients") -> CoefficientTuple:
    """Tuple from ``file =`` or from inline constants."""
    if cfg.parser.has_option(section, "file"):
        return load_coefficients(cfg.resolve(cfg.get(section, "file")))
    A, b, c, V = _section_constants(cfg, section)
    return CoefficientTuple.constant(A, b, c, V)


def load_fields(cfg: RunConfig, section: str = "coefficients"):
    """Fields for mesh experiments; ``support`` restricts ``b, c, V`` to a box."""
    if cfg.parser.has_option(section, "file"):
        return load_coefficients(cfg.resolve(cfg.get(section, "file")))
    A, b, c, V = _section_constants(cfg, section)
    if not cfg.parser.has_option(section, "support"):
        return CoefficientFields(A, b, c, V)
    box = np.array(cfg.numbers(section, "support")).reshape(-1, 2)
    if box.shape[0] != A.shape[0]:
        raise ConfigError(f"[{section}] support needs a (low, high) pair per dimension")

    def inside(x):
        return np.all((x > box[:, 0]) & (x < box[:, 1]), axis=1)

    return CoefficientFields(
        A,
        lambda x: inside(x)[:, None] * b,
        lambda x: inside(x)[:, None] * c,
        lambda x: inside(x) * V,
    )


def load_domain(cfg: RunConfig):
    kind = cfg.get("domain", "kind", "interval")
    if kind == "interval":
        n = cfg.number("domain", "n", 32, int)
        lo, hi = cfg.numbers("domain", "box", "0 1")
        domain = interval_mesh(n, lo, hi)
    elif kind == "rectangle":
        n = cfg.number("domain", "n", 16, int)
        ny = cfg.number("domain", "ny", n, int)
        vals = cfg.numbers("domain", "box", "0 1 0 1")
        if len(vals) != 4:
            raise ConfigError("[domain] box needs four numbers for a rectangle")
        domain = rectangle_mesh(n, ny, (tuple(vals[:2]), tuple(vals[2:])))
    else:
        raise ConfigError(f"[domain] kind must be interval or rectangle, got {kind!r}")
    return domain, _boundary(cfg, domain)


def _boundary(cfg: RunConfig, domain):
    spec = cfg.get("domain", "dirichlet", "all").strip()
    if spec == "all":
        return BoundarySpec.dirichlet(domain)
    if spec == "none":
        return BoundarySpec.neumann()
    lo, hi = domain.nodes.min(axis=0), domain.nodes.max(axis=0)
    faces = {"left": (0, lo), "right": (0, hi), "bottom": (1, lo), "top": (1, hi)}
    names = [s.strip() for s in spec.split(",")]
    bad = [s for s in names if s not in faces or faces[s][0] >= domain.dim]
    if bad:
        raise ConfigError(f"[domain] unknown Dirichlet faces {bad}")

    def pred(x):
        return np.any([np.isclose(x[:, faces[s][0]], faces[s][1][faces[s][0]]) for s in names], axis=0)

    return BoundarySpec.where(domain, pred)


def initial_data(cfg: RunConfig, domain, key="initial", seed_offset=0):
    kind = cfg.get("experiment", key, "sine")
    x = domain.nodes
    lo, hi = x.min(axis=0), x.max(axis=0)
    if kind == "sine":
        return np.prod(np.sin(np.pi * (x - lo) / (hi - lo)), axis=1).astype(complex)
    if kind == "random":
        rng = np.random.default_rng(cfg.seed + seed_offset)
        return rng.standard_normal(x.shape[0]) + 1j * rng.standard_normal(x.shape[0])
    if kind == "bump":
        mid = 0.5 * (lo + hi)
        return np.exp(-40.0 * np.sum((x - mid) ** 2, axis=1)).astype(complex)
    raise ConfigError(f"[experiment] {key} must be sine, random or bump")


# --- output -------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render(command: str, cfg: RunConfig, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# pellipt {__version__}\n# command {command}\n# seed {cfg.seed}\n")
    buf.write(f"# config_sha256 {cfg.digest}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _requested(cfg: RunConfig):
    return {s.strip() for s in cfg.get("experiment", "require", "none").split(",")} - {"none", ""}


# --- subcommands --------------------------------------------------------------


def cmd_ellipticity(cfg: RunConfig):
    co = load_tuple(cfg)
    req = _requested(cfg)
    unknown = req - {"Sp", "Bp", "BmuM"}
    if unknown:
        raise ConfigError(f"[experiment] require: unknown classes {sorted(unknown)}")
    header = ["p", "lam", "Lam", "delta_p", "mu_p", "M", "in_Sp", "in_Bp", "in_BmuM"]
    rows, failed = [], []
    for p in cfg.numbers("experiment", "p", "2"):
        r = classify(co, p)
        rows.append([r.p, r.lam, r.Lam, r.delta_p, r.mu_p, r.M_const, r.in_Sp, r.in_Bp, r.in_BmuM])
        flags = {"Sp": r.in_Sp, "Bp": r.in_Bp, "BmuM": r.in_BmuM}
        failed += [f"{k}@p={p}" for k in req if not flags[k]]
    return header, rows, failed


def cmd_mu(cfg: RunConfig):
    co = load_tuple(cfg)
    rows = []
    for p in cfg.numbers("experiment", "p", "2"):
        for i, m in enumerate(site_mu_p(co, p)):
            rows.append([p, i, m])
    return ["p", "site", "mu_p"], rows, []


def cmd_window(cfg: RunConfig):
    co = load_tuple(cfg)
    rows = []
    for p in cfg.numbers("experiment", "p", "2"):
        lo, hi = exponent_window(co, p)
        rows.append([p, lo, hi, rotation_window(co, p)])
    return ["p", "s_low", "s_high", "phi_max"], rows, []


def _pair(cfg):
    A = load_tuple(cfg, "coefficients")
    B = load_tuple(cfg, "coefficients.B") if cfg.parser.has_section("coefficients.B") else A
    return A, B


def _delta_for(cfg, A, B, p):
    raw = cfg.get("experiment", "delta", "auto")
    if raw == "auto":
        return choose_delta(**delta_inputs(A, B, p))
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError("[experiment] delta must be a number or auto") from exc


def cmd_bellman_delta(cfg: RunConfig):
    A, B = _pair(cfg)
    rows = []
    for p in cfg.numbers("experiment", "p", "3"):
        d = delta_inputs(A, B, p)
        rows.append([p, d["Lam"], d["mu2"], d["mu_q"], d["C0"], d["delta_B"], choose_delta(**d)])
    return ["p", "Lam", "mu2", "mu_q", "C0", "delta_B", "delta"], rows, []


def cmd_bellman_scan(cfg: RunConfig):
    A, B = _pair(cfg)
    n = cfg.number("experiment", "samples", 100000, int)
    refine = cfg.number("experiment", "refine", 0, int)
    export = cfg.get("experiment", "export", "summary")
    if export not in ("summary", "samples"):
        raise ConfigError("[experiment] export must be summary or samples")
    rows = []
    for p in cfg.numbers("experiment", "p", "3"):
        dl = _delta_for(cfg, A, B, p)
        res = convexity_scan(A, B, BellmanParams(p, dl), n_samples=n, seed=cfg.seed, refine=refine,
                             keep_samples=export == "samples")
        if export == "samples":
            s = res.samples
            rows += [[p, dl, s["site"][i], s["zeta"][i].real, s["zeta"][i].imag, s["eta"][i].real,
                      s["eta"][i].imag, s["ratio"][i]] for i in range(n)]
            continue
        w = res.witness
        rows.append([p, dl, n, res.C_emp, w["site"], w["zeta"].real, w["zeta"].imag,
                     w["eta"].real, w["eta"].imag])
    if export == "samples":
        return ["p", "delta", "site", "zeta_re", "zeta_im", "eta_re", "eta_im", "ratio"], rows, []
    return ["p", "delta", "samples", "C_emp", "site", "zeta_re", "zeta_im", "eta_re", "eta_im"], rows, []


def _run_params(cfg):
    T = cfg.number("experiment", "T", 0.1)
    dt = cfg.number("experiment", "dt", 1e-3)
    scheme = cfg.get("experiment", "scheme", "implicit-euler")
    mass = cfg.get("experiment", "mass", "consistent")
    return T, dt, scheme, mass


def _sine_decay(op, domain):
    """Decay rate of the lowest sine mode for constant scalar real coefficients, else None."""
    co = op.coeffs
    a = co.A[0, 0, 0]
    d = domain.dim
    const = (np.allclose(co.A, a * np.eye(d)) and abs(a.imag) < 1e-14 and np.allclose(co.b, 0)
             and np.allclose(co.c, 0) and np.allclose(co.V, co.V[0]))
    if not const:
        return None
    ext = domain.nodes.max(axis=0) - domain.nodes.min(axis=0)
    return float(a.real * np.pi**2 * np.sum(1.0 / ext**2) + op.rho.real * co.V[0])


def cmd_simulate(cfg: RunConfig):
    domain, bc = load_domain(cfg)
    fields = load_fields(cfg)
    op = assemble(fields, domain, bc)
    T, dt, scheme, mass = _run_params(cfg)
    f = initial_data(cfg, domain)
    tr = evolve(op, f, T, dt, scheme=scheme, mass=mass)
    norms = cfg.numbers("experiment", "norms", "2")
    header = ["t"] + [f"norm_{p:g}" for p in norms]
    cols = [tr.times] + [tr.lp_norms(p) for p in norms]
    if cfg.get("experiment", "reference", "none") == "sine":
        rate = _sine_decay(op, domain)
        if rate is None or cfg.get("experiment", "initial", "sine") != "sine":
            raise ConfigError("reference = sine needs sine data and constant scalar real coefficients")
        exact = np.exp(-rate * tr.times)[:, None] * op.restrict(f)[None]
        err = tr.states - exact
        header.append("l2_error")
        cols.append(np.sqrt(np.einsum("ni,ni->n", np.conj(err), (op.mass @ err.T).T).real))
    if cfg.parser.has_section("coefficients.B"):
        opB = assemble(load_fields(cfg, "coefficients.B"), domain, bc)
        g = initial_data(cfg, domain, "initial_B", seed_offset=1)
        trB = evolve(opB, g, T, dt, scheme=scheme, mass=mass)
        p = cfg.numbers("experiment", "p", "2")[0]
        dl = cfg.number("experiment", "delta", 0.05) if p > 2 else 0.5
        header.append("flow_energy")
        cols.append(flow_energy(BellmanParams(p, dl), op.lumped_mass, tr.states, trB.states))
    rows = list(zip(*cols))
    return header, rows, []


def cmd_bilinear(cfg: RunConfig):
    domain, bc = load_domain(cfg)
    opA = assemble(load_fields(cfg), domain, bc)
    opB = (assemble(load_fields(cfg, "coefficients.B"), domain, bc)
           if cfg.parser.has_section("coefficients.B") else opA)
    T, dt, scheme, mass = _run_params(cfg)
    runs = cfg.number("experiment", "runs", 1, int)
    rows = []
    for p in cfg.numbers("experiment", "p", "2"):
        for k in range(runs):
            if k == 0:
                f = initial_data(cfg, domain)
                g = initial_data(cfg, domain, "initial_B")
            else:
                rng = np.random.default_rng([cfg.seed, k])
                f = rng.standard_normal(domain.n_nodes) + 1j * rng.standard_normal(domain.n_nodes)
                g = rng.standard_normal(domain.n_nodes) + 1j * rng.standard_normal(domain.n_nodes)
            r = bilinear_functional(opA, opB, f, g, p, T, dt, scheme=scheme, mass=mass)
            rows.append([p, k, r.value, r.norm_f, r.norm_g, r.constant, r.tail, r.dt])
    return ["p", "run", "value", "norm_f_p", "norm_g_q", "ratio", "tail", "dt"], rows, []


def cmd_counterexample(cfg: RunConfig):
    p = cfg.number("experiment", "p", 4.0)
    r = cfg.number("experiment", "r", 2.0)
    rho = cfg.number("experiment", "rho", 1000.0)
    V = cfg.number("experiment", "V", 1.0)
    dim = cfg.number("experiment", "dim", 1, int)
    b, c = counterexample_tuple(p, r, V, rho, dim)
    co = CoefficientTuple.constant(np.eye(dim), b[0], c[0], V)
    if cfg.parser.has_option("experiment", "save"):
        save_coefficients(co, cfg.resolve(cfg.get("experiment", "save")))
    resid = float(np.abs(b + jp_apply(p, c)).max())
    lhs = float(np.sum(np.abs(b - c) ** 2))
    rhs = 2.0 * p**2 / (r - p) ** 2 * rho * V
    rows = [[p, r, rho, V, resid, lhs, rhs, in_Sp(co, p), in_Sp(co, r)]]
    return ["p", "r", "rho", "V", "residual", "bc_gap_sq", "bc_gap_sq_formula", "in_Sp", "in_Sr"], rows, []


def cmd_approximate(cfg: RunConfig):
    method = cfg.get("experiment", "method", "mollify")
    p = cfg.number("experiment", "p", 2.0)
    domain, bc = load_domain(cfg)
    fields = load_fields(cfg)
    if method == "mollify":
        if not isinstance(fields, CoefficientFields):
            raise ConfigError("mollify needs inline coefficients")
        sites = domain.barycenters
        base = fields.sample(sites)
        box = np.stack([domain.nodes.min(axis=0), domain.nodes.max(axis=0)], axis=1)
        rows = []
        for eps in cfg.numbers("experiment", "eps", "0.1 0.05 0.025"):
            out = mollify_coefficients(fields, sites, eps, p, box)
            dev = max(np.abs(out.A - base.A).max(), np.abs(out.V - base.V).max())
            rows.append([eps, float(site_mu_p(base, p).min()), float(site_mu_p(out, p).min()),
                         classify(out, p).in_Sp, dev])
        return ["eps", "mu_p_in", "mu_p_out", "in_Sp", "max_deviation"], rows, []
    if method == "cutoff":
        co = fields.sample(domain.barycenters) if isinstance(fields, CoefficientFields) else fields
        if co.sites is None:
            co = co.replace(sites=domain.barycenters)
        rows = []
        for n in cfg.numbers("experiment", "levels", "1 2 3", int):
            _, rep = cutoff_lower_order(co, n, p)
            rows.append([n, rep.mu_p_in, rep.mu_p_out, rep.support_nested, rep.class_preserved])
        return ["n", "mu_p_in", "mu_p_out", "support_nested", "class_preserved"], rows, []
    if method == "truncate":
        T, dt, sch, _ = _run_params(cfg)
        m0 = cfg.number("experiment", "m0", 1.0)
        levels = cfg.number("experiment", "levels", 4, int)
        f = initial_data(cfg, domain)
        st = truncation_convergence_experiment(fields, domain, bc, f, T, dt, m0, levels, sch)
        co = assemble(fields, domain, bc).coeffs
        m_eps = truncation_threshold(co, cfg.number("experiment", "eps", 0.05))
        rows = [[m, ge, pe, m_eps] for m, ge, pe in zip(st.levels, st.grad_errors, st.potential_errors)]
        return ["m", "grad_error", "potential_error", "m_eps"], rows, []
    raise ConfigError("[experiment] method must be mollify, cutoff or truncate")


COMMANDS = {
    "ellipticity": cmd_ellipticity,
    "mu": cmd_mu,
    "window": cmd_window,
    "bellman-scan": cmd_bellman_scan,
    "bellman-delta": cmd_bellman_delta,
    "simulate": cmd_simulate,
    "bilinear": cmd_bilinear,
    "counterexample": cmd_counterexample,
    "approximate": cmd_approximate,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pellipt", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"pellipt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="INI configuration file")
        sp.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED)
        sp.add_argument("--out", type=Path, help="directory for <command>.csv (stdout if omitted)")
        sp.add_argument("--format", choices=["csv"], default="csv")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(args.config, args.seed)
        header, rows, failed = COMMANDS[args.command](cfg)
    except (ConfigError, CoefficientFileError, ValueError) as exc:
        if isinstance(exc, (MembershipError, PreconditionViolated)):
            print(f"pellipt: membership failure: {exc}", file=sys.stderr)
            return EXIT_MEMBERSHIP
        print(f"pellipt: malformed input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = render(args.command, cfg, header, rows)
    if args.out is not None:
        try:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / f"{args.command}.csv").write_text(text)
        except OSError as exc:
            print(f"pellipt: cannot write output: {exc}", file=sys.stderr)
            return EXIT_INPUT
    else:
        sys.stdout.write(text)
    if failed:
        print(f"pellipt: requested membership failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_MEMBERSHIP
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
