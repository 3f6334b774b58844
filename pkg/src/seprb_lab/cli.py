"""Command-line front end.

Exit status: 0 success, 1 a verification failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .analysis import default_target, exact_target, mc_estimate
from .bell import (
    LOCAL_BOUND,
    TSIRELSON,
    Box,
    SignallingBoxError,
    chsh,
    default_settings_grid,
    independence_test,
    locality_check,
    model_box,
    model_table,
    polytope_membership,
    pr_box,
    quantum_box,
    quantum_chsh_optimum,
    quantum_table,
    white_noise_box,
)
from .config import ANGLE_KEYS, SEED_ENV, ConfigError, RunConfig, parse_config
from .core import PI, angle_grid, correlation, eprb_joint, seprb_conditional
from .geometry import (
    POSTSELECT_A_EQ_C,
    DiagramError,
    Experiment,
    action_proxy,
    canonical_diagram,
    diagram_to_dict,
    isomorphic,
    loads_diagram,
    s_transform,
)
from .ontology import (
    BeableModel,
    EprbSettings,
    ModelValidationError,
    SeprbSettings,
    builtin_model,
    make_local_hv,
    model_joint,
)

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_USAGE = 0, 1, 2

SIMULATE_COLUMNS = ("experiment", "settings", "estimate", "stderr", "n", "seed", "model", "target")
EXACT_COLUMNS = ("experiment", "model", "settings", "quantity", "value")
SWEEP_COLUMNS = ("experiment", "model", "angle1", "angle2", "p_agree")

DEFAULT_MODEL = {Experiment.EPRB: "quantum-eprb", Experiment.SEPRB: "cbeable-seprb"}
NAMED_BOXES = ("pr", "white-noise", "quantum-optimal")


class VerificationFailed(Exception):
    def __init__(self, text: str):
        super().__init__("verification failed")
        self.text = text


# -- helpers -------------------------------------------------------------------


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _model(cfg: RunConfig, kind: Optional[Experiment] = None, required: bool = True) -> Optional[BeableModel]:
    if cfg.local_hv is not None:
        m = make_local_hv(cfg.local_hv, name="inline-local-hv")
    elif cfg.model is not None:
        m = builtin_model(cfg.model)
    elif kind is not None and required:
        m = builtin_model(DEFAULT_MODEL[kind])
    else:
        return None
    if kind is not None and m.experiment_kind is not kind:
        raise ConfigError("model", f"{m.name} is an {m.experiment_kind.value} model, not {kind.value}")
    return m


def _need(cfg: RunConfig, *names: str) -> list[float]:
    missing = [n for n in names if cfg.angle(n) is None]
    if missing:
        raise ConfigError(missing[0], "missing")
    return [cfg.angle(n) for n in names]


def _settings(cfg: RunConfig, kind: Experiment):
    if kind is Experiment.EPRB:
        return EprbSettings(*_need(cfg, "alpha", "beta"))
    gamma, beta = _need(cfg, "gamma", "beta")
    return SeprbSettings(gamma, beta, cfg.c)


def _settings_str(s) -> str:
    return ";".join(f"{k}={v!r}" for k, v in s.as_dict().items())


def _experiment(cfg: RunConfig) -> Experiment:
    if cfg.experiment is not None:
        return cfg.experiment
    m = _model(cfg, required=False)
    if m is None:
        raise ConfigError("experiment", "missing")
    return m.experiment_kind


# -- commands ------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> str:
    kind = _experiment(cfg)
    m = _model(cfg, kind)
    s = _settings(cfg, kind)
    target = cfg.target or default_target(m)
    if cfg.n < 100:
        raise ConfigError("n", f"simulate needs at least 100 runs, got {cfg.n}")
    try:
        est = mc_estimate(m, s, target, n=cfg.n, seed=cfg.seed, workers=cfg.workers)
    except ValueError as exc:
        raise ConfigError("target", str(exc)) from None
    if cfg.format == "json":
        return _json({"experiment": kind.value, "model": m.name, "settings": s.as_dict(), "target": target, **est.as_dict()})
    return _csv(SIMULATE_COLUMNS, [(kind.value, _settings_str(s), est.value, est.stderr, est.n, est.seed, m.name, target)])


def _exact_rows(kind: Experiment, m: Optional[BeableModel], s) -> list[tuple]:
    name = "closed-form" if m is None else m.name
    if kind is Experiment.EPRB:
        j = eprb_joint(s.alpha, s.beta) if m is None else model_joint(m, s)
        rows = [(f"P(A={a},B={b})", j[a, b]) for a in (0, 1) for b in (0, 1)]
        rows += [("P(A=B)", j.p_equal), ("E", correlation(j))]
    else:
        d = seprb_conditional(s.gamma, s.beta, s.c) if m is None else model_joint(m, s)
        rows = [("P(B=1)", d.p1), ("P(B=C)", d.prob(s.c))]
    return [(kind.value, name, _settings_str(s), q, v) for q, v in rows]


def _agree(kind: Experiment, m: Optional[BeableModel], x: float, y: float) -> float:
    if kind is Experiment.EPRB:
        j = eprb_joint(x, y) if m is None else model_joint(m, EprbSettings(x, y))
        return j.p_equal
    if m is None:
        return seprb_conditional(x, y, 1).p1
    return 0.5 * sum(exact_target(m, SeprbSettings(x, y, c), "B=C") for c in (0, 1))


def _grid_table(kind: Experiment, m: Optional[BeableModel], grid: int, workers: int) -> str:
    angles = [float(a) for a in angle_grid(grid)]
    name = "closed-form" if m is None else m.name

    def row_block(x: float) -> list[tuple]:
        return [(kind.value, name, x, y, _agree(kind, m, x, y)) for y in angles]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(row_block, angles))
    else:
        blocks = [row_block(x) for x in angles]
    return _csv(SWEEP_COLUMNS, [r for block in blocks for r in block])


def cmd_exact(cfg: RunConfig) -> str:
    kind = _experiment(cfg)
    m = _model(cfg, kind, required=False)
    pair = ("alpha", "beta") if kind is Experiment.EPRB else ("gamma", "beta")
    if all(cfg.angle(k) is None for k in pair):
        return _grid_table(kind, m, cfg.grid, cfg.workers)
    s = _settings(cfg, kind)
    if cfg.format == "json":
        return _json([dict(zip(EXACT_COLUMNS, r)) for r in _exact_rows(kind, m, s)])
    return _csv(EXACT_COLUMNS, _exact_rows(kind, m, s))


def cmd_sweep(cfg: RunConfig) -> str:
    kind = _experiment(cfg)
    return _grid_table(kind, _model(cfg, kind, required=False), cfg.grid, cfg.workers)


def _angles_dict(settings) -> dict:
    return dict(zip(("a1", "a2", "b1", "b2"), map(float, settings)))


def cmd_chsh(cfg: RunConfig) -> str:
    if cfg.optimal:
        settings, value = quantum_chsh_optimum(PI / cfg.grid)
        return _json(
            {
                "settings": _angles_dict(settings),
                "value": value,
                "grid_step": PI / cfg.grid,
                "local_bound": LOCAL_BOUND,
                "tsirelson": TSIRELSON,
                "violated": value > LOCAL_BOUND + 1e-9,
            }
        )
    a1, a2, b1, b2 = _need(cfg, "a1", "a2", "b1", "b2")
    m = _model(cfg, Experiment.EPRB, required=False)
    table = quantum_table(a1, a2, b1, b2) if m is None else model_table(m, a1, a2, b1, b2)
    report = chsh(table)
    out = {"model": "closed-form" if m is None else m.name, "settings": _angles_dict(table.settings), "E": [list(r) for r in table.E], **report.as_dict()}
    text = _json(out)
    if m is not None and m.claims_locality and m.claims_independence and report.violated:
        raise VerificationFailed(text)
    return text


def cmd_transform(cfg: RunConfig) -> str:
    if cfg.diagram is not None:
        d = loads_diagram(Path(cfg.diagram).read_text(encoding="utf-8"))
    else:
        kind = _experiment(cfg)
        if kind is Experiment.EPRB:
            alpha, beta = _need(cfg, "alpha", "beta")
            d = canonical_diagram(kind, {"alpha": alpha, "beta": beta}, cfg.arm, POSTSELECT_A_EQ_C)
        else:
            gamma, beta = _need(cfg, "gamma", "beta")
            d = canonical_diagram(kind, {"gamma": gamma, "beta": beta}, cfg.arm)
    out = s_transform(d)
    s = out.settings()
    arm = out.segments[0].length
    if out.kind is Experiment.EPRB:
        ref = canonical_diagram(out.kind, {"alpha": s["A"], "beta": s["B"]}, arm, POSTSELECT_A_EQ_C)
    else:
        ref = canonical_diagram(out.kind, {"gamma": s["C"], "beta": s["B"]}, arm)
    checks = {
        "isomorphic_to_reference": isomorphic(out, ref),
        "roundtrip_isomorphic": isomorphic(s_transform(out), d),
        "action_preserved": action_proxy(out) == action_proxy(d),
    }
    text = _json({"input": diagram_to_dict(d), "output": diagram_to_dict(out), "checks": checks})
    if not all(checks.values()):
        raise VerificationFailed(text)
    return text


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def cmd_verify(cfg: RunConfig) -> str:
    m = _model(cfg, required=False)
    if m is None:
        raise ConfigError("model", "missing")
    grid = default_settings_grid(m, n=8)
    failures = []

    loc = locality_check(m, grid)
    loc_expected = m.claims_locality
    if loc.passed != loc_expected:
        failures.append("locality")

    ind = independence_test(m, grid, n=max(cfg.n, 1000), mode="exact" if m.exact else "empirical", seed=cfg.seed)
    if ind.independent != m.claims_independence:
        failures.append("independence")

    checks = {
        "locality": {"result": _verdict(loc.passed), "expected": _verdict(loc_expected), **loc.as_dict()},
        "independence": {
            "result": _verdict(ind.independent),
            "expected": _verdict(m.claims_independence),
            "max_tv": ind.max_tv,
            "mode": ind.mode,
        },
    }

    angles = angle_grid(16)
    if m.experiment_kind is Experiment.EPRB:
        dev = max(
            abs(model_joint(m, EprbSettings(a, b)).as_array() - eprb_joint(a, b).as_array()).max()
            for a in angles
            for b in angles
        )
        opt = (0.0, PI / 4, PI / 8, 7 * PI / 8)
        report = chsh(model_table(m, *opt))
        bound_ok = report.max_abs <= LOCAL_BOUND + 1e-9
        bound_expected = m.claims_locality and m.claims_independence
        if bound_expected and not bound_ok:
            failures.append("chsh_bound")
        checks["chsh_bound"] = {
            "result": _verdict(bound_ok),
            "required": bound_expected,
            "settings": _angles_dict(opt),
            "max_abs": report.max_abs,
        }
    else:
        dev = max(
            abs(model_joint(m, SeprbSettings(g, b, c)).p1 - seprb_conditional(g, b, c).p1)
            for g in angles
            for b in angles
            for c in (0, 1)
        )
    checks["joint_matches_quantum"] = {"result": _verdict(dev <= 1e-12), "max_deviation": float(dev)}

    text = _json(
        {
            "model": m.name,
            "experiment": m.experiment_kind.value,
            "dependence": sorted(m.dependence),
            "claims_locality": m.claims_locality,
            "checks": checks,
            "failures": failures,
        }
    )
    if failures:
        raise VerificationFailed(text)
    return text


def _box(cfg: RunConfig) -> Box:
    spec = cfg.box
    if spec is None:
        m = _model(cfg, Experiment.EPRB, required=False)
        if m is None:
            raise ConfigError("box", "missing")
        return model_box(m, *_need(cfg, "a1", "a2", "b1", "b2"))
    if isinstance(spec, str):
        if spec == "pr":
            return pr_box()
        if spec == "white-noise":
            return white_noise_box()
        if spec == "quantum-optimal":
            return quantum_box(0.0, PI / 4, PI / 8, 7 * PI / 8)
        path = Path(spec)
        if not path.exists():
            raise ConfigError("box", f"expected one of {', '.join(NAMED_BOXES)} or a JSON file, got {spec!r}")
        try:
            spec = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError("box", f"{path} is not valid JSON: {exc.msg}") from None
        if isinstance(spec, dict):
            spec = spec.get("box")
    try:
        return Box.from_array(spec)
    except (ValueError, TypeError) as exc:
        raise ConfigError("box", f"expected a 2x2x2x2 table P[i][j][a][b]: {exc}") from None


def cmd_polytope(cfg: RunConfig) -> str:
    box = _box(cfg)
    try:
        cert = polytope_membership(box)
    except SignallingBoxError as exc:
        raise ConfigError("box", str(exc)) from None
    text = _json({**cert.as_dict(), "consistent": cert.consistent})
    if not cert.consistent:
        raise VerificationFailed(text)
    return text


HANDLERS = {
    "simulate": cmd_simulate,
    "exact": cmd_exact,
    "chsh": cmd_chsh,
    "transform": cmd_transform,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "polytope": cmd_polytope,
}


def execute(cfg: RunConfig) -> tuple[str, int]:
    """Run a validated configuration; returns ``(output text, exit code)``."""
    try:
        return HANDLERS[cfg.command](cfg), EXIT_OK
    except VerificationFailed as exc:
        return exc.text, EXIT_VERIFY_FAILED


# -- argument parsing ----------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="JSON run configuration; flags override its fields")
    p.add_argument("--seed", type=int, help=f"master seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--output", "-o", metavar="PATH", help="write output here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--workers", type=int, help="parallel workers; output does not depend on this")
    p.add_argument("--degrees", action="store_const", const=True, help="angles are given in degrees")


def _angles(p: argparse.ArgumentParser, names: Sequence[str]) -> None:
    for name in names:
        p.add_argument(f"--{name}", type=float, metavar="ANGLE")


def _experiment_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--experiment", type=str.lower, choices=("eprb", "seprb"))


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="built-in model name")
    p.add_argument("--local-hv", metavar="FILE", help="JSON local hidden-variable spec")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seprb-lab",
        description="EPRB / sideways-EPRB correlation laboratory.",
        epilog=f"Environment: {SEED_ENV} sets the default seed. Exit codes: 0 ok, 1 verification failed, 2 usage/config error.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("simulate", help="Monte Carlo run of an experiment/model")
    _common(p)
    _experiment_flag(p)
    _model_flags(p)
    _angles(p, ("alpha", "beta", "gamma"))
    p.add_argument("--c", type=int, choices=(0, 1))
    p.add_argument("--n", type=int)
    p.add_argument("--target", choices=("A=B", "B=C", "A=1", "B=1"))

    p = sub.add_parser("exact", help="closed-form or enumerated probabilities (grid table if angles omitted)")
    _common(p)
    _experiment_flag(p)
    _model_flags(p)
    _angles(p, ("alpha", "beta", "gamma"))
    p.add_argument("--c", type=int, choices=(0, 1))
    p.add_argument("--grid", type=int)

    p = sub.add_parser("chsh", help="CHSH values for given settings, or the optimal quantum settings")
    _common(p)
    _model_flags(p)
    _angles(p, ("a1", "a2", "b1", "b2"))
    p.add_argument("--optimal", action="store_const", const=True)
    p.add_argument("--grid", type=int, help="search grid points over [0, pi) (default 64)")

    p = sub.add_parser("transform", help="apply the S-symmetry map to a diagram")
    _common(p)
    _experiment_flag(p)
    _angles(p, ("alpha", "beta", "gamma"))
    p.add_argument("--diagram", metavar="FILE")
    p.add_argument("--arm", help="arm length, a positive rational such as 1 or 3/2")

    p = sub.add_parser("verify", help="locality / independence / bound audit for a model")
    _common(p)
    _model_flags(p)
    p.add_argument("--n", type=int, help="samples per settings tuple for empirical independence")

    p = sub.add_parser("sweep", help="agreement-probability table on an angle grid")
    _common(p)
    _experiment_flag(p)
    _model_flags(p)
    p.add_argument("--grid", type=int)

    p = sub.add_parser("polytope", help="local-polytope membership of a box")
    _common(p)
    _model_flags(p)
    _angles(p, ("a1", "a2", "b1", "b2"))
    p.add_argument("--box", help=f"one of {', '.join(NAMED_BOXES)} or a JSON file")

    p = sub.add_parser("run", help="execute a JSON configuration document")
    p.add_argument("config", metavar="FILE")
    p.add_argument("--workers", type=int)
    p.add_argument("--output", "-o", metavar="PATH")
    return parser


_FLAG_FIELDS = (
    "experiment", "model", "c", "n", "target", "grid", "optimal", "arm", "diagram", "box",
    "seed", "output", "format", "workers", "degrees", *ANGLE_KEYS,
)


def _document(ns: argparse.Namespace) -> dict:
    doc: dict = {}
    config_path = getattr(ns, "config", None)
    if config_path is not None:
        try:
            text = Path(config_path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("config", f"cannot read {config_path}: {exc.strerror}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{config_path} is not valid JSON: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config", "top level must be an object")
    if ns.command != "run":
        doc["command"] = ns.command
    for key in _FLAG_FIELDS:
        value = getattr(ns, key, None)
        if value is not None:
            doc[key] = value
    hv_path = getattr(ns, "local_hv", None)
    if hv_path is not None:
        try:
            doc["local_hv"] = json.loads(Path(hv_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("local_hv", f"cannot load {hv_path}: {exc}") from None
    return doc


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if ns.command is None:
        parser.print_usage(sys.stderr)
        print("seprb-lab: error: a command is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = parse_config(_document(ns))
        text, code = execute(cfg)
    except ConfigError as exc:
        print(f"seprb-lab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelValidationError, DiagramError, KeyError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"seprb-lab: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    if cfg.output:
        Path(cfg.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run_command(argv)


if __name__ == "__main__":
    sys.exit(main())
