"""Command line entry point: ``stratus-sim run|sweep|analytic|list``."""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

from .analytics import sweep_csv
from .core import ConfigError
from .harness import (
    SWEEP_AXES,
    buckets_csv,
    load_config,
    reports_csv,
    run_scenario,
    scenarios_from_dict,
    sweep,
)
from .simnet import SimulationBudgetExceeded

log = logging.getLogger("stratus")

EXIT_CONFIG = 1
EXIT_SAFETY = 2
EXIT_BUDGET = 3


def bundled_scenarios() -> list[str]:
    root = resources.files("stratus") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_config(name: str) -> Path:
    """A path to an existing file, or the name of a bundled scenario."""
    p = Path(name)
    if p.is_file():
        return p
    stem = name[:-5] if name.endswith(".toml") else name
    if stem in bundled_scenarios():
        with resources.as_file(resources.files("stratus") / "scenarios" / f"{stem}.toml") as fp:
            return Path(fp)
    raise ConfigError("config", f"no such file or bundled scenario: {name!r}")


def _emit(text: str, out: str | None, suffix: str = "") -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if suffix:
        path = path.with_name(path.stem + suffix + path.suffix)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _dump_trace(exc: SimulationBudgetExceeded, out: str | None) -> None:
    if out is None:
        sys.stderr.write(exc.trace)
    else:
        _emit(exc.trace, out, ".trace")


def cmd_run(args) -> int:
    doc = load_config(resolve_config(args.config))
    scenarios = scenarios_from_dict(doc, args.seed)
    reports = []
    for sc in scenarios:
        try:
            rep = run_scenario(sc)
        except SimulationBudgetExceeded as exc:
            log.error("%s/%s: %s", sc.name, sc.mode.value, exc)
            _dump_trace(exc, args.out)
            return EXIT_BUDGET
        reports.append(rep)
        log.info("%s/%s seed=%d: %.0f tx/s, p95 %.0f ms, %d view changes", rep.scenario, rep.mode,
                 rep.seed, rep.throughput_tx_per_s, rep.latency_p95_ms, rep.view_change_count)
    _emit(reports_csv(reports), args.out)
    if args.buckets:
        _emit(buckets_csv(reports), args.out, ".buckets")
    bad = [r for r in reports if not r.safety_ok]
    if bad:
        for r in bad:
            log.error("%s/%s: %s", r.scenario, r.mode, r.error)
        return EXIT_SAFETY
    return 0


def cmd_sweep(args) -> int:
    doc = load_config(resolve_config(args.config))
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("values", "empty value list")
    reports, labels = sweep(doc, args.axis, values, args.seed)
    _emit(reports_csv(reports, [(args.axis, labels)]), args.out)
    if any(not r.safety_ok for r in reports):
        return EXIT_SAFETY
    return 0


_ANALYTIC_KEYS = {"capacity", "tx_size", "proposal_size", "vote_size", "id_size", "mb_size", "n"}


def cmd_analytic(args) -> int:
    doc = load_config(resolve_config(args.params))
    a = dict(doc.get("analytic", {}))
    for key in a:
        if key not in _ANALYTIC_KEYS:
            raise ConfigError(f"analytic.{key}", "unknown key")
    for key in ("capacity", "tx_size", "proposal_size", "vote_size", "id_size", "n"):
        if key not in a:
            raise ConfigError(f"analytic.{key}", "required")
    ns = a["n"]
    if isinstance(ns, int):
        ns = [ns]
    try:
        ns = [int(x) for x in ns]
        vals = {k: float(a[k]) for k in ("capacity", "tx_size", "proposal_size", "vote_size", "id_size")}
        eta = float(a["mb_size"]) if "mb_size" in a else None
    except (TypeError, ValueError) as exc:
        raise ConfigError("analytic", f"bad value: {exc}") from None
    if any(n < 4 for n in ns):
        raise ConfigError("analytic.n", "every n must be >= 4")
    for k, v in vals.items():
        if v <= 0:
            raise ConfigError(f"analytic.{k}", "must be positive")
    text = sweep_csv(ns, vals["capacity"], vals["tx_size"], vals["proposal_size"], vals["vote_size"],
                     vals["id_size"], eta)
    _emit(text, args.out)
    return 0


def cmd_list(args) -> int:
    for name in bundled_scenarios():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stratus-sim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run one scenario config (every listed mode)")
    run.add_argument("config", help="TOML file or bundled scenario name")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="CSV output path (default stdout)")
    run.add_argument("--buckets", action="store_true", help="also write per-second commit buckets")
    run.set_defaults(fn=cmd_run)

    sw = sub.add_parser("sweep", help="run a config once per value of one axis")
    sw.add_argument("config")
    sw.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sw.add_argument("--values", required=True, help="comma separated, e.g. 4,8,16")
    sw.add_argument("--seed", type=int, default=None)
    sw.add_argument("--out", default=None)
    sw.set_defaults(fn=cmd_sweep)

    an = sub.add_parser("analytic", help="closed-form throughput models as CSV")
    an.add_argument("params", help="TOML file with an [analytic] table")
    an.add_argument("--seed", type=int, default=None, help="accepted for symmetry; unused")
    an.add_argument("--out", default=None)
    an.set_defaults(fn=cmd_analytic)

    ls = sub.add_parser("list", help="list bundled scenarios")
    ls.set_defaults(fn=cmd_list)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
