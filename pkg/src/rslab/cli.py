"""Command-line driver: every check as a reproducible, seeded batch run.

Each subcommand samples ``trials`` states (trial ``t`` uses sampler seed
``seed + t``), runs the checks and writes a JSON report (and/or a CSV summary).

Exit codes: 0 all checks pass, 1 some residual fails, 2 I/O error, 3 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from rslab import contour
from rslab import elliptic as el
from rslab import fieldkit as fk
from rslab import flows
from rslab import limits
from rslab import verify as vf
from rslab.states import ModelParams, WEIGHT_VARIANTS, sample_chain, sample_rs, sample_spectral

EXIT_OK, EXIT_FAIL, EXIT_IO, EXIT_USAGE = 0, 1, 2, 3

VERIFY_CHOICES = ("rs", "cm", "chain", "monodromy", "appb", "field-ultralocal", "field-coefficient")
LIMIT_CHOICES = ("rs2cm-lax", "rs2cm-bracket", "residues", "field-U")
FIELD_CHOICES = ("zs-cm", "zs-rs", "density-agreement")

DEFAULT_TOLS = {
    "identities": 1e-10,
    "verify/rs": 1e-8,
    "verify/cm": 1e-9,
    "verify/chain": 1e-8,
    "verify/monodromy": 1e-8,
    "verify/appb": 1e-8,
    "verify/field-ultralocal": 1e-8,
    "verify/field-coefficient": 1e-10,
    "flow": 1e-7,
    "limit/rs2cm-lax": 1e-7,
    "limit/rs2cm-bracket": 1e-6,
    "limit/residues": 1e-7,
    "limit/field-U": 1e-7,
    "field/zs-cm": 1e-7,
    "field/zs-rs": 1e-7,
    "field/density-agreement": 1e-10,
}


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    params: ModelParams = field(default_factory=ModelParams)
    seed: int = 0
    trials: int = 1
    tolerance: float | None = None
    output_path: str | None = None
    emit: str = "json"
    which: str | None = None
    M: int = 2
    model: str = "RS"
    t_end: float = 1.0
    dt: float = 1e-3
    grid: int = 3
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise UsageError("trials must be >= 1")
        if self.tolerance is not None and not self.tolerance > 0:
            raise UsageError("tolerance must be positive")
        if self.emit not in ("json", "csv", "both"):
            raise UsageError(f"unknown emit format {self.emit!r}")

    @property
    def key(self) -> str:
        return self.command if self.which is None else f"{self.command}/{self.which}"

    @property
    def tol(self) -> float:
        return self.tolerance if self.tolerance is not None else DEFAULT_TOLS[self.key]

    def to_json(self) -> dict:
        return {
            "command": self.command, "which": self.which, "params": self.params.to_json(), "seed": self.seed,
            "trials": self.trials, "tolerance": self.tol, "M": self.M, "model": self.model,
            "t_end": self.t_end, "dt": self.dt, "grid": self.grid,
        }


# ---------------------------------------------------------------------------
# per-trial runners; each returns a list of ResidualReport


def _rng(cfg: RunConfig, t: int):
    return np.random.default_rng([cfg.seed, t])


def run_identities(cfg: RunConfig, t: int) -> list:
    """Addition formulas and degenerations, plus the residue of phi in z at 0."""
    seed = cfg.seed + t
    m = el.Modulus(cfg.params.tau)
    suite = el.identity_suite(seed, 100, m)
    out = [vf.make_report(f"identity-{name}", "elliptic function identities", cfg.params, seed, [], v, 1.0,
                          cfg.tol, tau=cfg.params.tau, npoints=100) for name, v in suite.items()]
    u = sample_spectral(_rng(cfg, t), cfg.params, 1)[0]
    res = contour.residue(lambda z: el.kronecker_phi(z, u, m), rho=min(0.05, el.lattice_distance(u, m) / 4))
    out.append(vf.make_report("phi-residue", "residue of the Kronecker function", cfg.params, seed, [(0.0, u)],
                              abs(res - 1), 1.0, max(cfg.tol, 1e-8), residue=complex(res)))
    return out


def run_verify_rs(cfg: RunConfig, t: int) -> list:
    seed = cfg.seed + t
    p = cfg.params
    st = sample_rs(seed, p)
    out = []
    for gi, (z, w) in enumerate(vf.spectral_grid(_rng(cfg, t), p, cfg.grid, avoid=vf.rs_avoid(st, p))):
        for variant in WEIGHT_VARIANTS:
            out.append(vf.verify_rs_quadratic(st, z, w, p, variant, cfg.tol, seed, fd_oracle=gi == 0))
    return out


def run_verify_cm(cfg: RunConfig, t: int) -> list:
    seed = cfg.seed + t
    p = cfg.params
    st = sample_rs(seed, p)
    return [vf.verify_cm_linear(st, z, w, p, cfg.tol, seed, fd_oracle=gi == 0)
            for gi, (z, w) in enumerate(vf.spectral_grid(_rng(cfg, t), p, cfg.grid, avoid=vf.rs_avoid(st, p)))]


def run_verify_chain(cfg: RunConfig, t: int) -> list:
    seed = cfg.seed + t
    p = cfg.params
    st = sample_chain(seed, p)
    out = []
    for z, w in vf.spectral_grid(_rng(cfg, t), p, cfg.grid, avoid=vf.chain_avoid(st, p)):
        out.extend(vf.sweep_chain_thm1(st, z, w, p, cfg.tol, seed))
    return out


def run_verify_monodromy(cfg: RunConfig, t: int) -> list:
    seed = cfg.seed + t
    p = cfg.params
    st = sample_chain(seed, p)
    out = []
    for z, w in vf.spectral_grid(_rng(cfg, t), p, cfg.grid, avoid=vf.chain_avoid(st, p)):
        out.append(vf.verify_monodromy_thm2(st, z, w, p, cfg.tol, seed))
        for k in (1, 2, 3):
            for m in (1, 2, 3):
                out.append(vf.verify_trace_involution("chain", st, z, w, k, m, p, cfg.tol, seed))
    return out


def run_verify_appb(cfg: RunConfig, t: int) -> list:
    seed = cfg.seed + t
    p = cfg.params
    st = sample_rs(seed, p)
    out = []
    for z, w in vf.spectral_grid(_rng(cfg, t), p, cfg.grid, avoid=vf.rs_avoid(st, p)):
        rep = vf.verify_appb(st, z, w, p, "standard", cfg.tol, seed)
        out.append(rep)
        out.append(vf.make_report("appb-gauge", "gauge relation of the two Lax matrices", p, seed, [(z, z)],
                                  rep.details["gauge"], 1.0, 1e-11))
    return out


def _field_point(cfg: RunConfig, t: int, count: int = 2):
    seed = cfg.seed + t
    p = cfg.params
    rng = _rng(cfg, t)
    fcfg = fk.sample_field(seed, p, cfg.M)
    x = float(rng.uniform(0, 2 * np.pi))
    fp = fk.eval_fieldpoint(fcfg, x, shifts=(-2, -1, 0, 1), params=p)
    q = [complex(v) for v in fp.qs(0)]
    avoid = [a - b for a in q for b in q if a != b]
    return fcfg, x, fp, sample_spectral(rng, p, count, avoid=avoid)


def run_verify_field_ultralocal(cfg: RunConfig, t: int) -> list:
    _, _, fp, (z, w) = _field_point(cfg, t)
    seed = cfg.seed + t
    out = [vf.verify_field_ultralocal(fp, z, w, cfg.params, cfg.tol, seed)]
    out.extend(vf.appc_block_sequence(fp, z, w, cfg.params, 1e-3, seed))
    return out


def run_verify_field_coefficient(cfg: RunConfig, t: int) -> list:
    _, _, fp, (z, w) = _field_point(cfg, t)
    return [vf.verify_nonultralocal_coefficient(fp, z, w, cfg.params, cfg.tol, cfg.seed + t)]


def run_limit(cfg: RunConfig, t: int) -> list:
    seed = cfg.seed + t
    p = cfg.params
    if cfg.which == "field-U":
        _, _, fp, (z, _w) = _field_point(cfg, t)
        return [limits.verify_field_U_limit(fp, z, p, tol=cfg.tol, seed=seed)]
    st = sample_rs(seed, p)
    avoid = [a - b for a in st.q for b in st.q if a != b]
    z, w = sample_spectral(_rng(cfg, t), p, 2, avoid=avoid)
    if cfg.which == "rs2cm-lax":
        return [limits.verify_rs_to_cm_lax(st, z, p, tol=cfg.tol, seed=seed)]
    if cfg.which == "rs2cm-bracket":
        return [limits.verify_rs_to_cm_bracket(st, z, w, p, tol=cfg.tol, seed=seed)]
    return [limits.verify_residue_s_terms(st, z, w, p, tol=cfg.tol, seed=seed)]


def run_field(cfg: RunConfig, t: int) -> list:
    seed = cfg.seed + t
    p = cfg.params
    fcfg, x, _fp, (z, _w) = _field_point(cfg, t)
    if cfg.which == "zs-cm":
        res = fk.cm_zs_residual(fcfg, x, z, p, scaled=True)
        return [vf.make_report("field-zs-cm", "CM field zero-curvature equation", p, seed, [(z, z)], res, 1.0,
                               cfg.tol, x=x, scaled=True)]
    if cfg.which == "zs-rs":
        eps = -1.0 / p.c
        res = fk.rs_zs_residual(fcfg, x, z, eps, p, scaled=True)
        return [vf.make_report("field-zs-rs", "RS field zero-curvature equation", p, seed, [(z, z)], res, 1.0,
                               cfg.tol, x=x, eps=eps, scaled=True)]
    st = sample_rs(seed, p)
    red = fk.k0_reduction(st, z, p)
    return [
        vf.make_report("field-density-forms", "expanded and compact CM field densities", p, seed, [],
                       fk.cm_density_gap(fcfg, x, p), 1.0, cfg.tol, x=x),
        vf.make_report("field-k0-reduction", "k to 0 reduction of the CM field to the mechanics", p, seed, [(z, z)],
                       max(red.values()), 1.0, 1e-12, **red),
    ]


def run_flow(cfg: RunConfig, t: int) -> list:
    """Conservation along one trajectory; the RS run also checks the Lax equation at the start."""
    seed = cfg.seed + t
    p = cfg.params
    model = cfg.model
    st = sample_chain(seed, p) if model == "chain" else sample_rs(seed, p)
    zs = sample_spectral(_rng(cfg, t), p, 2)
    out = []
    try:
        traj = flows.integrate(model, st, cfg.t_end, cfg.dt, p, guard=0.05)
    except flows.GuardViolationError as exc:
        return [vf.make_report("flow-drift", "conservation of spectral invariants", p, seed, [], float("inf"), 1.0,
                               cfg.tol, model=model, aborted=True, time=exc.time, pair=str(exc.pair))]
    stride = max(1, int(round(0.1 / cfg.dt)))
    rep = flows.conservation_report(model, traj, zs, [1, 2, 3], p, stride=stride)
    drift = max(rep["max_trace_drift"], rep["max_charpoly_drift"])
    out.append(vf.make_report("flow-drift", "conservation of spectral invariants", p, seed, [(z, z) for z in zs],
                              drift, 1.0, cfg.tol, model=model, aborted=False, steps=len(traj) - 1,
                              hamiltonian_drift=rep["hamiltonian_drift"], trace_drift=rep["max_trace_drift"],
                              charpoly_drift=rep["max_charpoly_drift"]))
    if model == "RS":
        z = zs[0]
        res = flows.lax_residual_rs(st, z, p)
        out.append(vf.make_report("flow-lax-equation", "Lax equation of the RS flow", p, seed, [(z, z)], res,
                                  flows.lax_scale_rs(st, z, p), 1e-9))
    return out


RUNNERS = {
    "identities": run_identities,
    "verify/rs": run_verify_rs,
    "verify/cm": run_verify_cm,
    "verify/chain": run_verify_chain,
    "verify/monodromy": run_verify_monodromy,
    "verify/appb": run_verify_appb,
    "verify/field-ultralocal": run_verify_field_ultralocal,
    "verify/field-coefficient": run_verify_field_coefficient,
    "flow": run_flow,
}
RUNNERS.update({f"limit/{w}": run_limit for w in LIMIT_CHOICES})
RUNNERS.update({f"field/{w}": run_field for w in FIELD_CHOICES})


def _one_trial(args):
    cfg, t = args
    return RUNNERS[cfg.key](cfg, t)


def run(cfg: RunConfig) -> list:
    """All trials in trial order."""
    if cfg.key not in RUNNERS:
        raise UsageError(f"unknown command {cfg.key!r}")
    jobs = [(cfg, t) for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            batches = list(pool.map(_one_trial, jobs))
    else:
        batches = [_one_trial(j) for j in jobs]
    return [r for b in batches for r in b]


def report_document(cfg: RunConfig, reports: list) -> dict:
    return {
        "config": cfg.to_json(),
        "reports": [r.to_dict() for r in reports],
        "pass": all(r.passed for r in reports),
        "failed": sorted({r.check_id for r in reports if not r.passed}),
    }


def render(cfg: RunConfig, reports: list) -> dict:
    """``{"json": text, "csv": text}`` restricted to the requested formats."""
    out = {}
    if cfg.emit in ("json", "both"):
        out["json"] = json.dumps(report_document(cfg, reports), sort_keys=True, indent=1) + "\n"
    if cfg.emit in ("csv", "both"):
        out["csv"] = vf.reports_to_csv(reports)
    return out


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_complex(text: str) -> complex:
    try:
        return complex(str(text).replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}")


def _common(p: argparse.ArgumentParser) -> None:
    d = ModelParams()
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--tol", type=float, default=None, help="tolerance (default depends on the check)")
    p.add_argument("--tau", type=parse_complex, default=d.tau)
    p.add_argument("--eta", type=parse_complex, default=d.eta)
    p.add_argument("--nu", type=parse_complex, default=d.nu)
    p.add_argument("--c", type=parse_complex, default=d.c)
    p.add_argument("--k", type=parse_complex, default=d.k)
    p.add_argument("--N", type=int, default=d.N)
    p.add_argument("--n", type=int, default=d.n)
    p.add_argument("--M", type=int, default=2, help="Fourier modes of sampled fields")
    p.add_argument("--grid", type=int, default=3, help="spectral grid is grid x grid")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="output path (with --emit both, a prefix)")
    p.add_argument("--emit", choices=("json", "csv", "both"), default="json")
    p.add_argument("--config", default=None, help="JSON file whose keys override the flags")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rslab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("identities", help="elliptic function identities"))
    for name, choices in (("verify", VERIFY_CHOICES), ("limit", LIMIT_CHOICES), ("field", FIELD_CHOICES)):
        sp = sub.add_parser(name)
        sp.add_argument("which", choices=choices)
        _common(sp)
    fp = sub.add_parser("flow", help="integrate a flow and report invariant drift")
    fp.add_argument("--model", choices=flows.MODELS, default="RS")
    fp.add_argument("--t-end", type=float, default=1.0)
    fp.add_argument("--dt", type=float, default=1e-3)
    _common(fp)
    return parser


_PARAM_KEYS = ("tau", "eta", "nu", "c", "k", "N", "n")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    opts = vars(args).copy()
    if args.config:
        try:
            with open(args.config) as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise OSError(f"cannot read config {args.config}: {exc}") from exc
        for key, val in overrides.items():
            key = key.replace("-", "_")
            if key in ("tau", "eta", "nu", "c", "k"):
                val = complex(*val) if isinstance(val, list) else parse_complex(val)
            opts[key] = val
    params = ModelParams(**{key: opts[key] for key in _PARAM_KEYS})
    return RunConfig(
        command=opts["command"], params=params, seed=opts["seed"], trials=opts["trials"],
        tolerance=opts["tol"], output_path=opts["out"], emit=opts["emit"], which=opts.get("which"),
        M=opts["M"], model=opts.get("model", "RS"), t_end=opts.get("t_end", 1.0), dt=opts.get("dt", 1e-3),
        grid=opts["grid"], workers=opts["workers"],
    )


def _write(cfg: RunConfig, texts: dict) -> None:
    if cfg.output_path is None:
        for key in ("json", "csv"):
            if key in texts:
                sys.stdout.write(texts[key])
        return
    if len(texts) == 1:
        paths = {key: cfg.output_path for key in texts}
    else:
        paths = {key: f"{cfg.output_path}.{key}" for key in texts}
    for key, text in texts.items():
        with open(paths[key], "w") as fh:
            fh.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except UsageError as exc:
        print(f"rslab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"rslab: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TypeError, ValueError) as exc:
        print(f"rslab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        reports = run(cfg)
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        # sampler exhaustion, pole proximity and degenerate weights end the run as a failure
        print(f"rslab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    texts = render(cfg, reports)
    if cfg.command == "flow" and cfg.emit in ("csv", "both"):
        texts["csv"] = _flow_csv(cfg)
    try:
        _write(cfg, texts)
    except OSError as exc:
        print(f"rslab: error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def _flow_csv(cfg: RunConfig) -> str:
    """Long-format drift table of every trial (trials that abort contribute no rows)."""
    chunks = []
    for t in range(cfg.trials):
        p = cfg.params
        st = sample_chain(cfg.seed + t, p) if cfg.model == "chain" else sample_rs(cfg.seed + t, p)
        zs = sample_spectral(_rng(cfg, t), p, 2)
        try:
            traj = flows.integrate(cfg.model, st, cfg.t_end, cfg.dt, p, guard=0.05)
        except flows.GuardViolationError:
            continue
        rep = flows.conservation_report(cfg.model, traj, zs, [1, 2, 3], p, stride=max(1, int(round(0.1 / cfg.dt))))
        text = flows.drift_csv(rep)
        chunks.append(text if not chunks else text.split("\n", 1)[1])
    return "".join(chunks) or "time,invariant_id,value_re,value_im,drift\n"


if __name__ == "__main__":
    sys.exit(main())
