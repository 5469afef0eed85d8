"""Command-line front end: config resolution, dispatch, output emission.

Subcommands: ``rtp`` (univariate root sampling + Kolmogorov summary),
``coupled`` (coupled-pair sampling, dependence report, decay curve),
``grid-biv`` (bivariate diagonal iteration), ``grid-uni`` (univariate
pushforward residuals), ``partition`` (contraction certificate),
``mod2-theta`` (parity fixed point), ``probe`` (long-range probe sweep).

Configuration comes from an optional TOML file plus flags that mirror
every key 1:1; flags win.  A table named after a subcommand overrides the
top-level keys for that subcommand only.  Unknown keys are rejected.

Every run writes CSV data plus a JSON sidecar embedding the resolved
configuration and seed.  The worker count is deliberately left out of the
embedded configuration: it only affects scheduling, and outputs are
byte-identical across worker counts.  Exit codes: 0 success, 1 usage or
validation error, 2 resource or numerical-instability error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

import numpy as np

from . import grid as grid_mod
from . import rde as rde_mod
from . import tail as tail_mod
from .dist import Bernoulli, Empirical, MarginalDist, NuA, NuR, PointMass, format_value, ks_distance
from .errors import (
    ArgumentError,
    DomainError,
    NumericalInstabilityError,
    RdelabError,
    ResourceBudgetError,
    ValidationError,
)
from .seeds import Seed, available_workers

SUBCOMMANDS = (
    "rtp",
    "coupled",
    "grid-biv",
    "grid-uni",
    "partition",
    "mod2-theta",
    "probe",
)

_DEPTH_SWEEP_KEY = 11


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Resolved experiment configuration; every field mirrors one flag."""

    rde: str = "frozen-perc"
    r: int = 3
    q: float = 0.5
    a: float = 1.0
    depth: int = 8
    depth_max: Optional[int] = None
    samples: int = 10_000
    k: int = 512
    tol: float = 1e-3
    iters: int = 200
    seed: int = 0
    workers: Optional[int] = None
    out: str = "out"
    start: str = "diagonal"
    probe_random: int = 4

    def validate(self) -> None:
        if self.rde not in rde_mod.rde_names():
            raise ValidationError(
                f"field 'rde': unknown value {self.rde!r}; known: {', '.join(rde_mod.rde_names())}"
            )
        if int(self.r) != self.r or self.r < 3:
            raise ValidationError(f"field 'r': must be an integer >= 3, got {self.r}")
        if not 0.0 <= self.q <= 1.0:
            raise ValidationError(f"field 'q': must lie in [0, 1], got {self.q}")
        if not 0.5 <= self.a <= 1.0:
            raise ValidationError(f"field 'a': must lie in [1/2, 1], got {self.a}")
        if self.depth < 0:
            raise ValidationError(f"field 'depth': must be nonnegative, got {self.depth}")
        if self.depth_max is not None and self.depth_max < self.depth:
            raise ValidationError(
                f"field 'depth_max': must be >= depth ({self.depth}), got {self.depth_max}"
            )
        if self.samples < 1:
            raise ValidationError(f"field 'samples': must be positive, got {self.samples}")
        if self.k < 2:
            raise ValidationError(f"field 'k': must be at least 2, got {self.k}")
        if self.tol <= 0.0:
            raise ValidationError(f"field 'tol': must be positive, got {self.tol}")
        if self.iters < 0:
            raise ValidationError(f"field 'iters': must be nonnegative, got {self.iters}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValidationError(f"field 'seed': must fit in 64 bits, got {self.seed}")
        if self.workers is not None and self.workers < 1:
            raise ValidationError(f"field 'workers': must be positive, got {self.workers}")
        if self.start not in ("diagonal", "product"):
            raise ValidationError(
                f"field 'start': must be 'diagonal' or 'product', got {self.start!r}"
            )
        if self.probe_random < 0:
            raise ValidationError(
                f"field 'probe_random': must be nonnegative, got {self.probe_random}"
            )

    def resolved_workers(self) -> int:
        return self.workers if self.workers is not None else available_workers()

    def embed_dict(self) -> dict:
        """Config as embedded in sidecars; scheduling-only fields excluded."""
        payload = dataclasses.asdict(self)
        payload.pop("workers")
        return payload


_CONFIG_KEYS = tuple(f.name for f in dataclasses.fields(RunConfig))
_INT_KEYS = {"r", "depth", "depth_max", "samples", "k", "iters", "seed", "workers", "probe_random"}
_FLOAT_KEYS = {"q", "a", "tol"}


def _coerce_key(key: str, value) -> object:
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ValidationError(f"field {key!r}: expected an integer, got {value!r}")
        return int(value)
    if key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"field {key!r}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ValidationError(f"field {key!r}: expected a string, got {value!r}")
    return value


def load_config(path: "str | Path", command: "str | None" = None) -> RunConfig:
    """Parse and validate a TOML config file.

    Top-level keys apply to every subcommand; a table named after one
    subcommand overrides them for that subcommand.  Unknown keys are
    rejected by name.
    """
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"config parse error in {path}: {exc}") from None

    updates: dict[str, object] = {}
    tables: dict[str, dict] = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            if key not in SUBCOMMANDS:
                raise ValidationError(f"unknown experiment table [{key}] in {path}")
            tables[key] = value
            continue
        if key not in _CONFIG_KEYS:
            raise ValidationError(f"unknown config key {key!r} in {path}")
        updates[key] = _coerce_key(key, value)
    if command is not None and command in tables:
        for key, value in tables[command].items():
            if key not in _CONFIG_KEYS:
                raise ValidationError(f"unknown config key {key!r} in table [{command}] of {path}")
            updates[key] = _coerce_key(key, value)
    for name, table in tables.items():
        for key in table:
            if key not in _CONFIG_KEYS:
                raise ValidationError(f"unknown config key {key!r} in table [{name}] of {path}")

    config = RunConfig(**updates)
    config.validate()
    return config


# ---------------------------------------------------------------------------
# Shared output helpers
# ---------------------------------------------------------------------------


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _write_json(path: Path, payload: dict) -> None:
    _write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header: str, rows: list[str]) -> None:
    _write_text(path, "\n".join([header, *rows]) + ("\n" if rows else "\n"))


def _sidecar(command: str, config: RunConfig, extra: dict) -> dict:
    return {"command": command, "config": config.embed_dict(), "seed": config.seed, **extra}


def _marginal_for(config: RunConfig, rde: rde_mod.RdeSpec) -> "MarginalDist | None":
    """Default boundary/target law for a registered recursion."""
    if isinstance(rde, rde_mod.FrozenPercolationRde):
        if rde.r == 3 and config.a < 1.0:
            return NuA(config.a)
        return NuR(rde.r)
    if isinstance(rde, rde_mod.Mod2Rde):
        return Bernoulli(0.5)
    return None


def _make_rde(config: RunConfig) -> rde_mod.RdeSpec:
    return rde_mod.make_rde(config.rde, r=config.r, q=config.q)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_rtp(config: RunConfig) -> str:
    rde = _make_rde(config)
    boundary = _marginal_for(config, rde)
    if boundary is None:
        boundary = PointMass(0.0)
    roots = rde_mod.sample_root_batch(
        rde,
        boundary,
        config.depth,
        config.samples,
        Seed(config.seed),
        workers=config.resolved_workers(),
    )
    out = Path(config.out)
    _write_csv(out / "roots.csv", "x", [format_value(float(v)) for v in roots])
    target = _marginal_for(config, rde)
    ks = ks_distance(Empirical(roots), target) if target is not None else None
    _write_json(
        out / "roots.json",
        _sidecar(
            "rtp",
            config,
            {
                "rde": rde.describe(),
                "boundary": boundary.describe(),
                "n_samples": config.samples,
                "depth": config.depth,
                "ks_vs_target": ks,
                "target": target.describe() if target is not None else None,
            },
        ),
    )
    ks_note = f" ks_vs_target={ks:.6f}" if ks is not None else ""
    return (
        f"rtp: rde={rde.describe()} depth={config.depth} n={config.samples}{ks_note} "
        f"out={out}"
    )


def _cmd_coupled(config: RunConfig) -> str:
    rde = _make_rde(config)
    marginal = _marginal_for(config, rde)
    if marginal is None:
        marginal = PointMass(0.0)
    depth_max = config.depth_max if config.depth_max is not None else config.depth
    depths = list(range(config.depth, depth_max + 1))
    seed = Seed(config.seed)
    workers = config.resolved_workers()
    out = Path(config.out)

    rows = []
    last_pairs = None
    last_report = None
    for depth in depths:
        pairs = rde_mod.sample_coupled_batch(
            rde,
            marginal,
            depth,
            config.samples,
            seed.derive(_DEPTH_SWEEP_KEY, depth),
            workers=workers,
        )
        report = tail_mod.independence_stat(pairs, workers=workers)
        rows.append(f"{depth},{format_value(report.stat)},{format_value(report.baseline_q99)}")
        last_pairs, last_report = pairs, report

    _write_csv(out / "decay.csv", "depth,stat,baseline_q99", rows)
    _write_json(
        out / "decay.json",
        _sidecar("coupled", config, {"depths": depths, "n_samples": config.samples}),
    )
    _write_text(out / "pairs.csv", last_pairs.to_csv_text())
    _write_json(out / "pairs.json", _sidecar("coupled", config, last_pairs.sidecar_dict()))
    _write_json(out / "report.json", _sidecar("coupled", config, last_report.to_json_dict()))
    return (
        f"coupled: rde={rde.describe()} depths={depths[0]}..{depths[-1]} n={config.samples} "
        f"stat={last_report.stat:.6f} baseline_q99={last_report.baseline_q99:.6f} "
        f"verdict={last_report.verdict} out={out}"
    )


def _cmd_grid_biv(config: RunConfig) -> str:
    result = grid_mod.iterate_diagonal(
        config.r, config.k, max_iters=config.iters, tol=config.tol, start=config.start
    )
    out = Path(config.out)
    _write_text(out / "trace.csv", result.trace_csv_text())
    out.mkdir(parents=True, exist_ok=True)
    grid_mod.write_grid(result.grid, out / "grid_final")
    _write_json(
        out / "grid_biv.json",
        _sidecar(
            "grid-biv",
            config,
            {
                "verdict": result.verdict,
                "iterations": result.iterations,
                "sup_h_final": result.trace[-1],
                "trace_length": len(result.trace),
            },
        ),
    )
    return (
        f"grid-biv: r={config.r} k={config.k} start={config.start} "
        f"iters={result.iterations} sup_h={result.trace[-1]:.3e} verdict={result.verdict} "
        f"out={out}"
    )


def _cmd_grid_uni(config: RunConfig) -> str:
    if config.a < 1.0 and config.r != 3:
        raise ValidationError("field 'a': truncated families exist only at r = 3")
    dist = NuA(config.a) if (config.r == 3 and config.a < 1.0) else NuR(config.r)
    knots = grid_mod.uniform_knots(config.r, config.k)
    surv = dist.survival_array(knots)
    pushed = grid_mod.t_push(surv, knots, config.r)
    target = dist.cdf_array(knots)
    err = np.abs(pushed - target)
    out = Path(config.out)
    rows = [
        f"{format_value(x)},{format_value(t)},{format_value(p)},{format_value(e)}"
        for x, t, p, e in zip(knots, target, pushed, err)
    ]
    _write_csv(out / "grid_uni.csv", "x,target_cdf,pushed_cdf,abs_err", rows)
    _write_json(
        out / "grid_uni.json",
        _sidecar(
            "grid-uni",
            config,
            {
                "family": dist.describe(),
                "sup_residual": float(err.max()),
                "atom_inf_pushed": float(1.0 - pushed[-1]),
            },
        ),
    )
    return (
        f"grid-uni: family={dist.describe()} k={config.k} sup_residual={float(err.max()):.3e} "
        f"out={out}"
    )


def _cmd_partition(config: RunConfig) -> str:
    eps = config.tol
    k_min = grid_mod.find_min_partition(eps)
    bound_at = grid_mod.partition_check(k_min)
    bound_prev = grid_mod.partition_check(k_min - 1) if k_min > 1 else None
    out = Path(config.out)
    listed = sorted(set(range(1, min(k_min, 1024) + 1)) | {max(k_min - 1, 1), k_min})
    rows = [f"{k},{format_value(grid_mod.partition_check(k))}" for k in listed]
    _write_csv(out / "partition.csv", "k,max_bound", rows)
    _write_json(
        out / "partition.json",
        _sidecar(
            "partition",
            config,
            {
                "eps": eps,
                "k_min": k_min,
                "bound_at_k_min": bound_at,
                "bound_below_k_min": bound_prev,
            },
        ),
    )
    return (
        f"partition: eps={eps} k_min={k_min} bound={bound_at:.6f}"
        + (f" bound(k_min-1)={bound_prev:.6f}" if bound_prev is not None else "")
        + f" out={out}"
    )


def _cmd_mod2_theta(config: RunConfig) -> str:
    theta, iterations = tail_mod.theta_fixed(config.q, config.tol)
    out = Path(config.out)
    _write_json(
        out / "mod2_theta.json",
        _sidecar(
            "mod2-theta",
            config,
            {"theta": theta, "iterations": iterations},
        ),
    )
    return f"mod2-theta: theta={theta:.12f} iterations={iterations} out={out}"


def _cmd_probe(config: RunConfig) -> str:
    rde = _make_rde(config)
    target = _marginal_for(config, rde)
    if target is None:
        raise ValidationError(
            f"field 'rde': {config.rde!r} has no registered target law to probe against"
        )
    sweep = tail_mod.probe_sweep(
        rde,
        target,
        config.depth,
        config.samples,
        Seed(config.seed),
        n_random_rules=config.probe_random,
        workers=config.resolved_workers(),
    )
    out = Path(config.out)
    rows = [f"{res.label},{format_value(res.distance)}" for res in sweep.results]
    _write_csv(out / "probe.csv", "assignment,distance", rows)
    _write_json(
        out / "probe.json",
        _sidecar(
            "probe",
            config,
            {
                "rde": rde.describe(),
                "target": target.describe(),
                "depth": config.depth,
                "n_samples": config.samples,
                "max_distance": sweep.max_distance,
                "sup_lower_bound": sweep.is_lower_bound,
            },
        ),
    )
    return (
        f"probe: rde={rde.describe()} depth={config.depth} n={config.samples} "
        f"max_distance={sweep.max_distance:.6f} (lower bound on the boundary sup) out={out}"
    )


_COMMANDS: dict[str, Callable[[RunConfig], str]] = {
    "rtp": _cmd_rtp,
    "coupled": _cmd_coupled,
    "grid-biv": _cmd_grid_biv,
    "grid-uni": _cmd_grid_uni,
    "partition": _cmd_partition,
    "mod2-theta": _cmd_mod2_theta,
    "probe": _cmd_probe,
}


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def _build_parser() -> _Parser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", type=str, default=None, help="TOML config file")
    shared.add_argument("--rde", type=str, default=None, choices=rde_mod.rde_names())
    shared.add_argument("--r", type=int, default=None, help="tree degree")
    shared.add_argument("--q", type=float, default=None, help="parity flip probability")
    shared.add_argument("--a", type=float, default=None, help="truncation point of the r=3 family")
    shared.add_argument("--depth", type=int, default=None)
    shared.add_argument("--depth-max", type=int, default=None, dest="depth_max")
    shared.add_argument("--samples", type=int, default=None)
    shared.add_argument("--k", type=int, default=None, help="grid size")
    shared.add_argument("--tol", type=float, default=None)
    shared.add_argument("--iters", type=int, default=None)
    shared.add_argument("--seed", type=int, default=None)
    shared.add_argument("--workers", type=int, default=None)
    shared.add_argument("--out", type=str, default=None)
    shared.add_argument("--start", type=str, default=None, choices=("diagonal", "product"))
    shared.add_argument(
        "--probe-random", type=int, default=None, dest="probe_random",
        help="number of random per-leaf rules in the probe sweep",
    )

    parser = _Parser(prog="rdelab", description=__doc__)
    subparsers = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in SUBCOMMANDS:
        subparsers.add_parser(name, parents=[shared])
    return parser


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    if args.config is not None:
        config = load_config(args.config, command=args.command)
    else:
        config = RunConfig()
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            setattr(config, key, value)
    config.validate()
    return config


def dispatch(argv: "list[str] | None" = None) -> int:
    """Run one subcommand; returns the process exit code."""
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return 1
    if args.command is None:
        print(parser.format_usage(), file=sys.stderr, end="")
        return 1
    try:
        config = _resolve_config(args)
        summary = _COMMANDS[args.command](config)
    except (ResourceBudgetError, NumericalInstabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, DomainError, ArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RdelabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
