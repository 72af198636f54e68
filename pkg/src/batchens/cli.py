"""Command-line entry point.

``batchens run`` simulates one experiment and writes a regret CSV plus a
``<out>.meta.json`` sidecar. ``batchens verify`` runs the estimator checks
and writes a report CSV. ``batchens presets`` lists the built-in bandits.

Config files are UTF-8 JSON objects with the same keys as the flags::

    {"preset": "testcase1", "policies": ["ensemble", "ucb:alpha=1.5"],
     "T": 2000, "sims": 100, "seed": 0, "delta": 0.05,
     "out": "tc1.csv", "parallel": 1, "mode": "efficient",
     "warmup_sigma": null, "arms": null}

``mode`` is ``"full"``, ``"efficient"`` or ``null`` (keep each policy's own
setting). ``arms`` lists arm specs such as ``"bernoulli:0.2"`` and is
required when ``preset`` is ``"custom"``. A sidecar written by ``run`` is
also accepted: its ``config`` entry is used. Flags override file values.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from . import __version__, verify
from ._accel import backend_name
from .environments import Bandit, arm_from_dict, parse_arm
from .policies import PolicyConfig, parse_policy, warmup_size
from .simulator import PRESET_POLICY_DEFAULTS, PRESETS, ExperimentResult, run_experiment

DEFAULT_POLICIES = ("ensemble", "ucb", "ucbv", "klucb", "mars")
CSV_HEADER = "policy,t,mean_regret,std_regret\n"

EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_OUTPUT = 3


class ConfigError(ValueError):
    kind = "invalid config"

    def __str__(self):
        return f"{self.kind}: {super().__str__()}"


class MalformedConfigError(ConfigError):
    kind = "malformed config file"


class UnknownPresetError(ConfigError):
    kind = "unknown preset"


class ParameterRangeError(ConfigError):
    kind = "parameter out of range"


@dataclass
class ExperimentConfig:
    preset: str = "testcase1"
    policies: list = field(default_factory=lambda: list(DEFAULT_POLICIES))
    T: int = 2000
    sims: int = 100
    seed: int = 0
    delta: float = 0.05
    out: str = "regret.csv"
    parallel: int = 1
    mode: str | None = None
    warmup_sigma: float | None = None
    arms: list | None = None

    def validate(self) -> "ExperimentConfig":
        if self.preset != "custom" and self.preset not in PRESETS:
            raise UnknownPresetError(f"{self.preset!r}; expected one of {sorted(PRESETS)} or 'custom'")
        if self.preset == "custom" and not self.arms:
            raise ConfigError("preset 'custom' needs a non-empty 'arms' list")
        if self.preset != "custom" and self.arms:
            raise ConfigError("'arms' is only used with preset 'custom'")
        for name, low in (("T", 1), ("sims", 1), ("parallel", 1), ("seed", 0)):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ParameterRangeError(f"{name} must be an integer, got {value!r}")
            if value < low:
                raise ParameterRangeError(f"{name} must be >= {low}, got {value}")
        if not 0.0 < self.delta < 1.0:
            raise ParameterRangeError(f"delta must lie in (0, 1), got {self.delta!r}")
        if self.mode not in (None, "full", "efficient"):
            raise ParameterRangeError(f"mode must be 'full' or 'efficient', got {self.mode!r}")
        if self.warmup_sigma is not None and not self.warmup_sigma > 0.0:
            raise ParameterRangeError(f"warmup_sigma must be > 0, got {self.warmup_sigma!r}")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        self.resolve_policies()
        self.bandit_source()
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def bandit_source(self):
        if self.preset != "custom":
            return PRESETS[self.preset]
        try:
            arms = [arm_from_dict(a) if isinstance(a, dict) else parse_arm(a) for a in self.arms]
            return Bandit(tuple(arms))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad arm description: {exc}") from None

    def resolve_policies(self) -> list[PolicyConfig]:
        """Policy specs with preset defaults and the global flags applied.

        Options written explicitly in a spec are never overridden.
        """
        out = []
        for spec in self.policies:
            try:
                if isinstance(spec, dict):
                    base, explicit = PolicyConfig.from_dict(spec), set(spec)
                else:
                    base = parse_policy(spec)
                    explicit = {o.partition("=")[0] for o in str(spec).split(":")[1:]}
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad policy {spec!r}: {exc}") from None
            updates = dict(PRESET_POLICY_DEFAULTS.get(self.preset, {}).get(base.kind, {}))
            if base.kind == "ensemble":
                updates["delta"] = self.delta
                if self.mode is not None:
                    updates["efficient"] = self.mode == "efficient"
                if self.warmup_sigma is not None:
                    updates["warmup"] = warmup_size(self.warmup_sigma)
            updates = {k: v for k, v in updates.items() if k not in explicit}
            if "label" not in explicit:
                updates["label"] = ""
            out.append(replace(base, **updates))
        labels = [p.label for p in out]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"policy labels must be unique, got {labels}; set label=... to disambiguate")
        return out


_CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)}


def read_config_file(path: str | os.PathLike) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedConfigError(f"{path}: {exc}") from None
    if isinstance(data, dict) and isinstance(data.get("config"), dict):
        data = data["config"]
    if not isinstance(data, dict):
        raise MalformedConfigError(f"{path}: top level must be an object")
    unknown = sorted(set(data) - _CONFIG_KEYS)
    if unknown:
        raise MalformedConfigError(f"{path}: unknown keys {unknown}")
    return data


def load_config(path: str | os.PathLike | None = None, **overrides) -> ExperimentConfig:
    """Merge defaults, an optional config file and non-``None`` overrides."""
    values = read_config_file(path) if path is not None else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    if isinstance(values.get("policies"), str):
        values["policies"] = _split_list(values["policies"])
    if isinstance(values.get("arms"), str):
        values["arms"] = _split_list(values["arms"])
    return ExperimentConfig(**values).validate()


def _split_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


# ---------------------------------------------------------------------------
# output


def format_csv(result: ExperimentResult) -> str:
    lines = [CSV_HEADER]
    lines += [f"{label},{t},{mean:.17g},{std:.17g}\n" for label, t, mean, std in result.rows()]
    return "".join(lines)


def sidecar_path(out: str | os.PathLike) -> Path:
    return Path(str(out) + ".meta.json")


def metadata(config: ExperimentConfig, result: ExperimentResult) -> dict:
    return {
        "config": config.to_dict(),
        "policies": [p.to_dict() for p in config.resolve_policies()],
        "seeds": result.seeds,
        "version": __version__,
        "backend": backend_name(),
        "std": result.metadata.get("std", "population (ddof=0)"),
    }


def _check_writable(path: Path) -> None:
    parent = path.parent if str(path.parent) else Path(".")
    if not parent.is_dir():
        raise OSError(f"output directory {parent} does not exist")
    if path.is_dir() or not os.access(parent, os.W_OK) or (path.exists() and not os.access(path, os.W_OK)):
        raise OSError(f"cannot write {path}")


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def write_plot(result: ExperimentResult, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    t = range(1, result.T + 1)
    for p, label in enumerate(result.labels):
        ax.plot(t, result.mean[p], label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("mean pseudo-regret")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def run(config: ExperimentConfig, plot: bool = False) -> ExperimentResult:
    out = Path(config.out)
    _check_writable(out)
    result = run_experiment(config.resolve_policies(), config.bandit_source(),
                            config.T, config.sims, config.seed, config.parallel)
    _write_text(out, format_csv(result))
    _write_text(sidecar_path(out), json.dumps(metadata(config, result), indent=2) + "\n")
    if plot:
        write_plot(result, out.with_suffix(".png"))
    return result


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="batchens", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate an experiment and write a regret CSV")
    r.add_argument("--config", help="JSON config file or a previous run's .meta.json")
    r.add_argument("--preset", help=f"one of {', '.join(sorted(PRESETS))}, custom (default testcase1)")
    r.add_argument("--arms", help="comma-separated arm specs for --preset custom, e.g. bernoulli:0.1,bernoulli:0.5")
    r.add_argument("--policies", help=f"comma-separated policy specs (default {','.join(DEFAULT_POLICIES)})")
    r.add_argument("--T", type=int, dest="T", help="horizon (default 2000)")
    r.add_argument("--sims", type=int, help="number of simulations (default 100)")
    r.add_argument("--seed", type=int, help="base seed; simulation i uses seed+i (default 0)")
    r.add_argument("--delta", type=float, help="confidence level for the fixed batch count (default 0.05)")
    r.add_argument("--out", help="output CSV path (default regret.csv)")
    r.add_argument("--parallel", type=int, help="worker processes (default 1)")
    mode = r.add_mutually_exclusive_group()
    mode.add_argument("--efficient", dest="mode", action="store_const", const="efficient",
                      help="ensemble policies keep only per-batch counts and sums")
    mode.add_argument("--full", dest="mode", action="store_const", const="full",
                      help="ensemble policies store the history and re-deal it on rebatch")
    r.add_argument("--warmup-sigma", type=float, dest="warmup_sigma",
                   help="enable warmup of ceil(4/sigma^2) samples per batch")
    r.add_argument("--plot", action="store_true", help="also write a PNG chart next to the CSV")

    v = sub.add_parser("verify", help="run the estimator verification suite")
    v.add_argument("--quick", action="store_true", help="n <= 30 and 10^4 trials")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", help="report CSV path (default stdout)")
    v.add_argument("--strict-conjecture", action="store_true",
                   help="treat conjecture scan violations as failures")
    v.add_argument("--bound-shift", type=float, default=0.0, help=argparse.SUPPRESS)

    sub.add_parser("presets", help="list the built-in bandit presets")
    return parser


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config, preset=args.preset, arms=args.arms, policies=args.policies,
                             T=args.T, sims=args.sims, seed=args.seed, delta=args.delta, out=args.out,
                             parallel=args.parallel, mode=args.mode, warmup_sigma=args.warmup_sigma)
    except ConfigError as exc:
        print(f"batchens: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run(config, plot=args.plot)
    except OSError as exc:
        print(f"batchens: output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    except (ValueError, ArithmeticError) as exc:
        print(f"batchens: simulation failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ImportError as exc:
        print(f"batchens: --plot needs matplotlib ({exc})", file=sys.stderr)
        return EXIT_FAILURE
    return 0


def _cmd_verify(args) -> int:
    reports = verify.run_suite(quick=args.quick, seed=args.seed, bound_shift=args.bound_shift)
    if args.strict_conjecture:
        for r in reports:
            r.blocking = True
    try:
        if args.out:
            verify.write_reports(reports, args.out)
        else:
            verify.write_reports(reports, sys.stdout)
    except OSError as exc:
        print(f"batchens: output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    failed = [r for r in reports if not r.passed]
    blocking = [r for r in failed if r.blocking]
    print(f"{len(reports)} checks, {len(blocking)} failed, "
          f"{len(failed) - len(blocking)} informative violations", file=sys.stderr)
    return EXIT_FAILURE if blocking else 0


def _cmd_presets(args) -> int:
    for name, preset in PRESETS.items():
        print(f"{name}\t{preset.description}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "verify": _cmd_verify, "presets": _cmd_presets}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
