"""Command-line experiment runner.

Every subcommand writes its results CSV plus a JSON manifest (input
digests, package version, predicate-table version, thread count) into the
output directory; plotting subcommands additionally render SVG figures.
Exit codes: 0 success, 2 invalid configuration, 3 budget exhausted with
no result, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import FiniteMetricSpace, min_distortion_exact
from .euclid import min_distortion_l2
from .generators import FamilySpec
from .invariants import (
    BudgetExceededError,
    fit_beta,
    gamma_constant,
    psi_constant,
    revalidate_invariant,
    type_constant,
)
from .parallel import pmap, thread_count
from .report import (
    render_series_svg,
    sha256_hex,
    witness_hash,
    write_csv,
    write_manifest,
)
from .trees import (
    PREDICATE_TABLE_VERSION,
    HEtaHost,
    census_counts,
    find_delta_forks,
    fork_census,
    fork_tip_contraction,
    identity_distortion_heta,
    search_b4_nonembed,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_INTERNAL = 4

COMMANDS = (
    "gen",
    "distortion",
    "l2-distortion",
    "invariant",
    "dichotomy-fit",
    "heta",
    "forks",
    "b4-search",
    "sweep",
)


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


class BudgetExhausted(RuntimeError):
    """A budgeted computation produced no usable result."""


class InternalCheckError(RuntimeError):
    """A result failed one of its own consistency checks."""


@dataclass
class ExperimentConfig:
    command: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "out"
    budget: int | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")


def _resolve_space(spec, what: str) -> FiniteMetricSpace:
    """Build a space from {"file": path} or an inline family description."""
    if not isinstance(spec, dict):
        raise ConfigError(f"{what} must be an object, got {spec!r}")
    if "file" in spec:
        return FiniteMetricSpace.from_text(Path(spec["file"]).read_text())
    try:
        return FamilySpec.from_dict(spec).build()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {what} description: {exc}") from exc


def _out(config: ExperimentConfig, name: str) -> Path:
    return Path(config.output_dir) / name


def _manifest(config: ExperimentConfig, extra: dict) -> None:
    payload = {
        "command": config.command,
        "parameters": config.params,
        "seed": config.seed,
        "budget": config.budget,
        "version": __version__,
        "predicate_table_version": PREDICATE_TABLE_VERSION,
        "threads": thread_count(),
    }
    payload.update(extra)
    write_manifest(_out(config, "manifest.json"), payload)


def run(config: ExperimentConfig) -> int:
    """Execute one experiment; returns the process exit code."""
    handlers = {
        "gen": _cmd_gen,
        "distortion": _cmd_distortion,
        "l2-distortion": _cmd_l2,
        "invariant": _cmd_invariant,
        "dichotomy-fit": _cmd_fit,
        "heta": _cmd_heta,
        "forks": _cmd_forks,
        "b4-search": _cmd_b4,
        "sweep": _cmd_sweep,
    }
    try:
        handlers[config.command](config)
    except (ConfigError, BudgetExceededError) as exc:
        if isinstance(exc, BudgetExceededError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_BUDGET
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except InternalCheckError as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


# ---------------------------------------------------------------------------
# Handlers


def _cmd_gen(config: ExperimentConfig) -> None:
    family = config.params.get("family")
    if family is None:
        raise ConfigError("gen requires a family description")
    space = _resolve_space(family, "family")
    out = _out(config, config.params.get("out", "space.txt"))
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(space.to_text(), encoding="utf-8", newline="")
    _manifest(config, {"points": len(space), "space_digest": space.digest()})


def _cmd_distortion(config: ExperimentConfig) -> None:
    domain = _resolve_space(config.params.get("domain"), "domain")
    host = _resolve_space(config.params.get("host"), "host")
    report = min_distortion_exact(domain, host, budget=config.budget)
    if report.witness is None:
        _manifest(config, {"status": "budget-exhausted", "lower": report.lower})
        raise BudgetExhausted("search budget exhausted before any incumbent")
    rows = [
        (
            domain.digest(),
            host.digest(),
            report.lower,
            report.upper,
            report.certificate,
            witness_hash(report.witness.assignment),
        )
    ]
    write_csv(
        _out(config, "distortion.csv"),
        ["domain-digest", "host-digest", "lower", "upper", "certificate", "witness-hash"],
        rows,
    )
    _manifest(
        config,
        {"domain_digest": domain.digest(), "host_digest": host.digest()},
    )


def _cmd_l2(config: ExperimentConfig) -> None:
    space = _resolve_space(config.params.get("space"), "space")
    tol = float(config.params.get("tol", 1e-3))
    report = min_distortion_l2(space, tol=tol)
    write_csv(
        _out(config, "l2-distortion.csv"),
        ["space-digest", "lower", "upper", "certificate"],
        [(space.digest(), report.lower, report.upper, report.certificate)],
    )
    _manifest(config, {"space_digest": space.digest(), "tol": tol})


def _cmd_invariant(config: ExperimentConfig) -> None:
    kind = config.params.get("kind")
    if kind not in ("psi", "type", "gamma"):
        raise ConfigError(f"invariant kind must be psi, type, or gamma, got {kind!r}")
    host = _resolve_space(config.params.get("host"), "host")
    n_list = config.params.get("n_list")
    if not n_list:
        raise ConfigError("invariant requires a nonempty n_list")
    m = config.params.get("m")
    budget = config.budget or 2_000_000
    digest = host.digest()
    rows = []
    values = []
    for n in n_list:
        if kind == "psi":
            iv = psi_constant(host, int(n))
        elif kind == "type":
            iv = type_constant(host, int(n), budget=budget, seed=config.seed)
        else:
            if m is None:
                raise ConfigError("gamma requires the torus side m")
            iv = gamma_constant(host, int(n), int(m), budget=budget, seed=config.seed)
        again = revalidate_invariant(iv, host)
        if iv.exact and abs(again - iv.value) > 1e-9:
            raise InternalCheckError(
                f"witness revalidation drifted: {iv.value} vs {again}"
            )
        rows.append(
            (iv.kind, iv.n, iv.m, iv.value, iv.exact, witness_hash(iv.witness), digest)
        )
        values.append(iv.value)
    write_csv(
        _out(config, "invariant.csv"),
        ["kind", "n", "m", "value", "exact", "witness-hash", "host-digest"],
        rows,
    )
    _manifest(config, {"host_digest": digest})
    if config.params.get("plot") and len(n_list) >= 2 and all(v > 0 for v in values):
        render_series_svg(
            _out(config, f"{kind}_series.svg"),
            [int(n) for n in n_list],
            values,
            xlabel="n",
            ylabel=kind,
            title=f"{kind} decay on host {digest[:12]}",
            fit_slope=True,
        )


def _cmd_fit(config: ExperimentConfig) -> None:
    n0 = config.params.get("n0")
    eta = config.params.get("eta")
    if n0 is None or eta is None:
        raise ConfigError("dichotomy-fit requires n0 and eta")
    fit = fit_beta(int(n0), float(eta))
    write_csv(
        _out(config, "dichotomy-fit.csv"),
        ["n0", "eta", "beta", "no-decay"],
        [(fit.n0, fit.eta, fit.beta, fit.no_decay)],
    )
    _manifest(config, {"beta": fit.beta, "no_decay": fit.no_decay})


def _cmd_heta(config: ExperimentConfig) -> None:
    depth = config.params.get("depth")
    eta = config.params.get("eta")
    if depth is None or eta is None:
        raise ConfigError("heta requires depth and eta")
    host = HEtaHost(int(depth), float(eta))
    space = host.space()
    valid = True
    if config.params.get("validate", True):
        from .core import validate_metric

        try:
            validate_metric(space.dist, space.labels)
        except ValueError as exc:
            raise InternalCheckError(f"contracted host failed validation: {exc}")
    ident = identity_distortion_heta(int(depth), float(eta))
    expected = 1.0 / float(eta)
    if abs(ident - expected) > 1e-9:
        raise InternalCheckError(
            f"identity distortion {ident} differs from 1/eta = {expected}"
        )
    if config.params.get("emit"):
        out = _out(config, config.params.get("out", "heta.txt"))
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(space.to_text(), encoding="utf-8", newline="")
    write_csv(
        _out(config, "heta.csv"),
        ["depth", "eta", "points", "valid", "identity-distortion"],
        [(int(depth), float(eta), len(space), valid, ident)],
    )
    _manifest(config, {"space_digest": space.digest()})


def _cmd_forks(config: ExperimentConfig) -> None:
    delta = float(config.params.get("delta", 0.0))
    distinct = bool(config.params.get("distinct_prongs", True))
    if "depth" in config.params and "eta" in config.params:
        host = HEtaHost(int(config.params["depth"]), float(config.params["eta"]))
        space = host.space()
        forks = fork_census(host, delta)
        if not distinct:
            extra = [
                f
                for f in find_delta_forks(space, delta, distinct_prongs=False)
                if f.z == f.w
            ]
            forks = forks + extra
    else:
        space = _resolve_space(config.params.get("space"), "space")
        forks = find_delta_forks(space, delta, distinct_prongs=distinct)
    rows = [
        (
            space.labels[f.x],
            space.labels[f.y],
            space.labels[f.z],
            space.labels[f.w],
            f.delta,
            f.type_tag,
            fork_tip_contraction(f, space),
        )
        for f in forks
    ]
    write_csv(
        _out(config, "forks.csv"),
        ["x", "y", "z", "w", "delta", "type", "tip-contraction"],
        rows,
    )
    counts = census_counts(forks)
    total = max(1, len(forks))
    _manifest(
        config,
        {
            "census": counts,
            "forks": len(forks),
            "unclassified_fraction": counts.get("unclassified", 0) / total,
            "space_digest": space.digest(),
        },
    )


def _cmd_b4(config: ExperimentConfig) -> None:
    depth = config.params.get("depth")
    eta = config.params.get("eta")
    if depth is None or eta is None:
        raise ConfigError("b4-search requires depth and eta")
    delta = float(config.params.get("delta", 0.02))
    tree_depth = int(config.params.get("tree_depth", 4))
    budget = config.budget or 2_000_000
    report = search_b4_nonembed(
        HEtaHost(int(depth), float(eta)), delta, budget=budget, tree_depth=tree_depth
    )
    if report.min_distortion is None:
        _manifest(config, {"status": "budget-exhausted"})
        raise BudgetExhausted("no faithful embedding found within budget")
    write_csv(
        _out(config, "b4-search.csv"),
        [
            "eta",
            "delta",
            "tree-depth",
            "budget",
            "min-distortion",
            "explored-fraction",
            "nodes",
            "complete",
        ],
        [
            (
                report.eta,
                report.delta,
                report.tree_depth,
                report.budget,
                report.min_distortion,
                report.explored_fraction,
                report.nodes_expanded,
                report.complete,
            )
        ],
    )
    _manifest(
        config,
        {
            "fork_census": report.fork_census,
            "witness_hash": witness_hash(report.witness),
        },
    )


def _cmd_sweep(config: ExperimentConfig) -> None:
    families = config.params.get("families")
    hosts = config.params.get("hosts")
    if families is None or hosts is None:
        raise ConfigError("sweep requires families and hosts lists")
    cells = [(fam, hostspec) for fam in families for hostspec in hosts]

    def one(cell):
        fam, hostspec = cell
        key = json.dumps(fam, sort_keys=True)
        try:
            domain = _resolve_space(fam, "family")
            host = _resolve_space(hostspec, "host")
            rep = min_distortion_exact(domain, host, budget=config.budget)
            return (
                len(domain),
                key,
                host.digest(),
                rep.lower,
                rep.upper,
                rep.certificate,
                "ok",
            )
        except (ConfigError, ValueError) as exc:
            return (None, key, "", None, None, "", f"error: {exc}")

    results = sorted(
        pmap(one, cells),
        key=lambda r: (r[0] if r[0] is not None else -1, r[1], r[2]),
    )
    running = 0.0
    rows = []
    for size, key, digest, lower, upper, cert, status in results:
        dn = None
        if status == "ok":
            running = max(running, lower)
            dn = running
        rows.append((size, key, digest, lower, upper, cert, status, dn))
    write_csv(
        _out(config, "sweep.csv"),
        ["N", "family", "host-digest", "lower", "upper", "certificate", "status", "D_N"],
        rows,
    )
    _manifest(config, {"cells": len(cells)})
    ok_rows = [r for r in rows if r[6] == "ok"]
    if config.params.get("plot") and len(ok_rows) >= 2:
        render_series_svg(
            _out(config, "sweep_dn.svg"),
            [r[0] for r in ok_rows],
            [r[7] for r in ok_rows],
            xlabel="N",
            ylabel="D_N",
            title="worst-case distortion by size",
            fit_slope=True,
        )


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(sub):
    sub.add_argument("--config", help="JSON file with parameters (flags override)")
    sub.add_argument("--output-dir", default=None, help="artifact directory")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--budget", type=int, default=None)


def _family_args(sub, prefix: str):
    sub.add_argument(f"--{prefix}-kind")
    sub.add_argument(f"--{prefix}-n", type=int)
    sub.add_argument(f"--{prefix}-m", type=int)
    sub.add_argument(f"--{prefix}-depth", type=int)
    sub.add_argument(f"--{prefix}-alpha", type=float)
    sub.add_argument(f"--{prefix}-file")


def _family_dict(args, prefix: str) -> dict | None:
    ns = vars(args)
    path = ns.get(f"{prefix}_file")
    if path:
        return {"file": path}
    kind = ns.get(f"{prefix}_kind")
    if kind is None:
        return None
    out = {"kind": kind}
    for key in ("n", "m", "depth", "alpha"):
        v = ns.get(f"{prefix}_{key}")
        if v is not None:
            out[key] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metriclab",
        description="Embedding-distortion laboratory for finite metric spaces",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen", help="emit a generated metric space")
    _add_common(p)
    _family_args(p, "family")
    p.add_argument("--out", default=None, help="file name inside the output dir")

    p = subs.add_parser("distortion", help="exact minimum distortion into a finite host")
    _add_common(p)
    _family_args(p, "domain")
    _family_args(p, "host")

    p = subs.add_parser("l2-distortion", help="bracket the Euclidean distortion")
    _add_common(p)
    _family_args(p, "space")
    p.add_argument("--tol", type=float, default=None)

    p = subs.add_parser("invariant", help="evaluate psi/type/gamma constants")
    _add_common(p)
    p.add_argument("--kind", choices=["psi", "type", "gamma"])
    _family_args(p, "host")
    p.add_argument("--n-list", help="comma-separated list, e.g. 2,4,8")
    p.add_argument("--m", type=int, default=None, help="torus side for gamma")
    p.add_argument("--plot", action="store_true", default=None)

    p = subs.add_parser("dichotomy-fit", help="solve n0**(-beta) = eta")
    _add_common(p)
    p.add_argument("--n0", type=int)
    p.add_argument("--eta", type=float)

    p = subs.add_parser("heta", help="build and check the contracted tree host")
    _add_common(p)
    p.add_argument("--depth", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--emit", action="store_true", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--no-validate", dest="validate", action="store_false", default=None)

    p = subs.add_parser("forks", help="enumerate and classify delta-forks")
    _add_common(p)
    _family_args(p, "space")
    p.add_argument("--depth", type=int, help="contracted-host depth")
    p.add_argument("--eta", type=float, help="contracted-host eta")
    p.add_argument("--delta", type=float)
    p.add_argument(
        "--with-degenerate",
        dest="distinct_prongs",
        action="store_false",
        default=None,
    )

    p = subs.add_parser("b4-search", help="bounded faithful-embedding search")
    _add_common(p)
    p.add_argument("--depth", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--tree-depth", type=int, default=None)

    p = subs.add_parser("sweep", help="grid of exact distortion cells")
    _add_common(p)
    p.add_argument("--plot", action="store_true", default=None)

    return parser


_PARAM_KEYS = {
    "gen": ["out"],
    "distortion": [],
    "l2-distortion": ["tol"],
    "invariant": ["kind", "m", "plot"],
    "dichotomy-fit": ["n0", "eta"],
    "heta": ["depth", "eta", "emit", "out", "validate"],
    "forks": ["depth", "eta", "delta", "distinct_prongs"],
    "b4-search": ["depth", "eta", "delta", "tree_depth"],
    "sweep": ["plot"],
}

_SPACE_KEYS = {
    "gen": ["family"],
    "distortion": ["domain", "host"],
    "l2-distortion": ["space"],
    "invariant": ["host"],
    "forks": ["space"],
}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    params: dict = {}
    if args.config:
        loaded = json.loads(Path(args.config).read_text())
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        params.update(loaded.get("params", loaded))

    command = args.command
    for key in _PARAM_KEYS.get(command, []):
        v = getattr(args, key.replace("-", "_"), None)
        if v is not None:
            params[key] = v
    for key in _SPACE_KEYS.get(command, []):
        d = _family_dict(args, key)
        if d is not None:
            params[key] = d
    if command == "invariant" and getattr(args, "n_list", None):
        params["n_list"] = [int(x) for x in str(args.n_list).split(",") if x]

    seed = args.seed if args.seed is not None else int(params.pop("seed", 0))
    outdir = (
        args.output_dir
        if args.output_dir is not None
        else str(params.pop("output_dir", "out"))
    )
    budget = args.budget if args.budget is not None else params.pop("budget", None)
    if budget is not None:
        budget = int(budget)
    return ExperimentConfig(
        command=command, params=params, seed=seed, output_dir=outdir, budget=budget
    )


def main(argv=None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)
    sys.exit(run(config))


if __name__ == "__main__":
    main()
