"""Command-line surface: simulate, doe, train, detect, report."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import statistics
import sys
import warnings
from pathlib import Path

from . import __version__
from .classify import DetectionModel
from .config import (
    AisParams,
    ConfigError,
    FACTOR_NAMES,
    ScenarioConfig,
    config_hash,
    derive_seed,
    load_config,
    parse_config_text,
)
from .ddsim.engine import Simulation
from .ddsim.topology import build_topology
from .doe import (
    FactorSpec,
    build_design,
    default_factors,
    run_batch,
    select_dmp_features,
    significance,
    write_response_csv,
    write_significance_csv,
)
from .events import write_event_log, EventBlock
from .manifest import RunManifest
from .metrics import ALL, MetricRow, metrics_from_counters, read_metrics_csv, write_metrics_csv
from .pipeline import DetectionResult, fit_model, run_detection, sweep_detections

ROUNDS_CSV_HEADER = (
    "round",
    "activated_d",
    "activated_t",
    "total_d",
    "total_t",
    "flagged_total",
    "newly_flagged",
)


def _scenario_hash(cfg: ScenarioConfig, params: AisParams) -> str:
    """Manifest grouping hash: every config field except the seed, which the
    manifest records separately so reports can aggregate across seeds."""
    return config_hash(dataclasses.replace(cfg, seed=0), params)


def _load_scenario(args) -> tuple[ScenarioConfig, AisParams]:
    if args.config:
        cfg, params = load_config(args.config)
    else:
        cfg, params = ScenarioConfig(), AisParams()
    overrides = dict(kv.split("=", 1) for kv in (args.set or []))
    if overrides:
        text = "\n".join(f"{k} = {v}" for k, v in overrides.items())
        patch_cfg, patch_params = parse_config_text(text)
        for key in overrides:
            if hasattr(cfg, key):
                cfg = dataclasses.replace(cfg, **{key: getattr(patch_cfg, key)})
            else:
                params = dataclasses.replace(params, **{key: getattr(patch_params, key)})
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    cfg.validate()
    params.validate()
    return cfg, params


def _write_rounds_csv(path: Path, result: DetectionResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROUNDS_CSV_HEADER)
        for r in result.rounds:
            writer.writerow(
                [
                    r.round_index,
                    r.activated_d,
                    r.activated_t,
                    r.total_d,
                    r.total_t,
                    r.flagged_total,
                    ";".join(str(n) for n in r.newly_flagged),
                ]
            )


def _read_rounds_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader)


# ----------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg, params = _load_scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    network = build_topology(cfg)
    sim = Simulation(network, record_events=True)
    malicious = set(network.malicious)
    rows: list[MetricRow] = []
    blocks = []
    for res in sim.run_blocks():
        blocks.append(EventBlock(index=res.index, start=res.start, end=res.end, events=res.events))
        for node in range(len(network)):
            counters = [res.counters[node]] if node in res.counters else []
            rows.append(
                MetricRow(res.index, str(node), int(node in malicious), metrics_from_counters(counters))
            )
        rows.append(MetricRow(res.index, ALL, 0, metrics_from_counters(res.counters.values())))
    n_events = write_event_log(out / "events.log", blocks)
    write_metrics_csv(out / "metrics.csv", rows)
    manifest = RunManifest(
        command="simulate",
        config_hash=_scenario_hash(cfg, params),
        seed=cfg.seed,
        artifacts={"event_log": "events.log", "metrics_csv": "metrics.csv"},
        extra={
            "events": n_events,
            "malicious_nodes": sorted(malicious),
            "stats": sim.stats,
            "evictions": sim.eviction_counts(),
        },
    )
    manifest.save(out / "manifest.json")
    print(f"simulate: {n_events} events over {len(blocks)} blocks -> {out}")
    return 0


# ----------------------------------------------------------------------
# doe
# ----------------------------------------------------------------------

def _parse_factors_file(path: str) -> list[FactorSpec]:
    factors: dict[str, FactorSpec] = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) != 3:
            raise ConfigError(f"line {line_no}: expected 'NAME LOW HIGH', got {line.strip()!r}")
        name, lo, hi = parts
        factors[name] = FactorSpec(name, float(lo), float(hi))
    missing = [name for name in FACTOR_NAMES if name not in factors]
    if missing:
        raise ConfigError(f"factors file is missing {', '.join(missing)}")
    return [factors[name] for name in FACTOR_NAMES]


def cmd_doe(args) -> int:
    factors = _parse_factors_file(args.factors) if args.factors else default_factors()
    cfg, params = _load_scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.reps == 1:
        warnings.warn("one repetition leaves no replication error term in the decomposition")
    design = build_design(k=len(FACTOR_NAMES), p=args.reducer)
    table = run_batch(design, factors, repetitions=args.reps, base_config=cfg)
    write_response_csv(out / "responses.csv", table)
    tables = {
        scope: significance(table.values[scope], design, args.reps)
        for scope in ("malicious", "honest")
    }
    write_significance_csv(out / "significance.csv", tables)
    selected = select_dmp_features(
        tables["malicious"], tables["honest"], theta_hi=args.theta_hi, theta_lo=args.theta_lo
    )
    (out / "selected_features.txt").write_text("\n".join(selected) + "\n")
    manifest = RunManifest(
        command="doe",
        config_hash=_scenario_hash(cfg, params),
        seed=cfg.seed,
        artifacts={
            "responses_csv": "responses.csv",
            "significance_csv": "significance.csv",
            "selected_features": "selected_features.txt",
        },
        extra={
            "runs": design.n_runs * args.reps,
            "selected": selected,
            "theta_hi": args.theta_hi,
            "theta_lo": args.theta_lo,
        },
    )
    manifest.save(out / "manifest.json")
    print(f"doe: {design.n_runs} rows x {args.reps} reps = {design.n_runs * args.reps} runs -> {out}")
    print(f"doe: selected danger-pattern metrics: {', '.join(selected) if selected else '(none)'}")
    return 0


# ----------------------------------------------------------------------
# train
# ----------------------------------------------------------------------

def cmd_train(args) -> int:
    healthy_rows = [row for path in args.healthy for row in read_metrics_csv(path)]
    attack_rows = [row for path in args.attack for row in read_metrics_csv(path)]
    _, params = _load_scenario(args)
    model = fit_model(
        healthy_rows,
        attack_rows,
        params,
        seed=args.seed if args.seed is not None else 0,
        regularization=args.regularization,
        warmup_blocks=args.warmup_blocks,
    )
    out_model = Path(args.out_model)
    out_model.parent.mkdir(parents=True, exist_ok=True)
    model.save(out_model)
    manifest = RunManifest(
        command="train",
        config_hash=config_hash(ScenarioConfig(), params),
        seed=args.seed if args.seed is not None else 0,
        artifacts={"model": out_model.name},
        extra={
            "healthy_inputs": [str(p) for p in args.healthy],
            "attack_inputs": [str(p) for p in args.attack],
            "train_accuracy": model.train_accuracy,
        },
    )
    manifest.save(out_model.with_suffix(out_model.suffix + ".manifest.json"))
    print(f"train: accuracy {model.train_accuracy:.4f} -> {out_model}")
    return 0


# ----------------------------------------------------------------------
# detect
# ----------------------------------------------------------------------

def _check_model_compatibility(model: DetectionModel, params: AisParams) -> None:
    if model.pattern_bits != params.pattern_bits:
        raise ConfigError(
            f"model pattern length {model.pattern_bits} does not match "
            f"configured pattern_bits {params.pattern_bits}"
        )
    if model.encoder_bins != params.amp_bins:
        raise ConfigError(
            f"model encoder bins {model.encoder_bins} do not match configured amp_bins {params.amp_bins}"
        )


def cmd_detect(args) -> int:
    cfg, params = _load_scenario(args)
    model = DetectionModel.load(args.model)
    _check_model_compatibility(model, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.sweep_nm:
        lo, _, hi = args.sweep_nm.partition(":")
        configs, reps = [], []
        for n_m in range(int(lo), int(hi) + 1):
            for rep in range(args.sweep_seeds):
                seed = derive_seed(cfg.seed, "sweep", n_m, rep)
                run_cfg = dataclasses.replace(cfg, n_m=n_m, seed=seed)
                if run_cfg.n_m > run_cfg.n_s:
                    raise ConfigError(f"sweep n_m {n_m} exceeds n_s {run_cfg.n_s}")
                configs.append(run_cfg)
                reps.append(rep)
        points = sweep_detections(configs, params, model, rounds=args.rounds,
                                  warmup_rounds=args.warmup, workers=args.workers)
        with open(out / "sweep.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n_m", "rep", "activated_d", "activated_t", "fp_rate", "fn_rate"])
            for rep, p in zip(reps, points):
                writer.writerow(
                    [p.n_m, rep]
                    + [repr(float(x)) for x in (p.activated_d, p.activated_t, p.fp_rate, p.fn_rate)]
                )
        manifest = RunManifest(
            command="detect-sweep",
            config_hash=_scenario_hash(cfg, params),
            seed=cfg.seed,
            artifacts={"sweep_csv": "sweep.csv"},
            extra={"rounds": args.rounds, "sweep": args.sweep_nm, "seeds": args.sweep_seeds},
        )
        manifest.save(out / "manifest.json")
        print(f"detect: sweep over n_m {args.sweep_nm} x {args.sweep_seeds} seeds -> {out}")
        return 0

    result = run_detection(cfg, params, model, rounds=args.rounds, warmup_rounds=args.warmup)
    _write_rounds_csv(out / "rounds.csv", result)
    (out / "detection_report.txt").write_text("\n".join(result.report_lines()) + "\n")
    if result.partitioned_honest:
        print(
            f"detect: note: {len(result.partitioned_honest)} honest node(s) have no "
            "attacker-free path to any publisher; expect starvation there",
            file=sys.stderr,
        )
    manifest = RunManifest(
        command="detect",
        config_hash=_scenario_hash(cfg, params),
        seed=cfg.seed,
        artifacts={"rounds_csv": "rounds.csv", "report": "detection_report.txt"},
        extra={
            "rounds": args.rounds,
            "warmup": args.warmup,
            "fp_rate": result.fp_rate,
            "fn_rate": result.fn_rate,
            "flagged": list(result.flagged),
            "partitioned_honest": list(result.partitioned_honest),
            "n_m": cfg.n_m,
        },
    )
    manifest.save(out / "manifest.json")
    print(
        f"detect: FP {result.fp_rate:.3f} FN {result.fn_rate:.3f} "
        f"flagged {len(result.flagged)} node(s) -> {out}"
    )
    return 0


# ----------------------------------------------------------------------
# report
# ----------------------------------------------------------------------

def cmd_report(args) -> int:
    if not args.manifests:
        raise ConfigError("no manifests given")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    loaded = []
    for path in args.manifests:
        m = RunManifest.load(path)
        loaded.append((Path(path).parent, m))

    detect_groups: dict[str, list] = {}
    sweep_rows_all: list[tuple[int, float, float]] = []
    for base, m in loaded:
        if m.command == "detect":
            detect_groups.setdefault(m.config_hash, []).append((base, m))
        elif m.command == "detect-sweep":
            rows = _read_rounds_like(m.resolve_artifact("sweep_csv", base))
            by_nm: dict[int, list] = {}
            for r in rows:
                by_nm.setdefault(int(r["n_m"]), []).append(r)
            for n_m in sorted(by_nm):
                group = by_nm[n_m]
                sweep_rows_all.append(
                    (
                        n_m,
                        statistics.mean(float(r["activated_d"]) for r in group),
                        statistics.mean(float(r["activated_t"]) for r in group),
                    )
                )

    summary_rows = []
    curve_series: dict[str, list[tuple[int, float, float]]] = {}
    for chash, group in sorted(detect_groups.items()):
        fp_list, fn_list = [], []
        for base, m in group:
            rounds = _read_rounds_csv(m.resolve_artifact("rounds_csv", base))
            if not rounds:
                raise ConfigError(f"manifest {m.config_hash}: rounds.csv is empty")
            label = f"{chash[:8]}/seed{m.seed}"
            curve_series[label] = [
                (int(r["round"]), float(r["activated_d"]), float(r["activated_t"]))
                for r in rounds
            ]
            fp_list.append(float(m.extra.get("fp_rate", 0.0)))
            fn_list.append(float(m.extra.get("fn_rate", 0.0)))
            summary_rows.append(
                [chash, m.seed, fp_list[-1], fn_list[-1], rounds[-1]["activated_d"], rounds[-1]["activated_t"]]
            )
        summary_rows.append(
            [
                chash,
                "mean",
                statistics.mean(fp_list),
                statistics.mean(fn_list),
                "",
                "",
            ]
        )
        if len(fp_list) > 1:
            summary_rows.append(
                [chash, "std", statistics.stdev(fp_list), statistics.stdev(fn_list), "", ""]
            )

    if summary_rows:
        with open(out / "summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["config_hash", "seed", "fp_rate", "fn_rate", "final_activated_d", "final_activated_t"])
            writer.writerows(summary_rows)
    if curve_series:
        with open(out / "activation_curves.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["label", "round", "activated_d", "activated_t"])
            for label, rows in curve_series.items():
                for r in rows:
                    writer.writerow([label, r[0], r[1], r[2]])
    if sweep_rows_all:
        with open(out / "activation_vs_attackers.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n_m", "activated_d", "activated_t"])
            writer.writerows(sweep_rows_all)

    figures = []
    if args.figures:
        from . import figures as figs

        if curve_series:
            figures.append(str(figs.save_activation_curves(curve_series, out / "activation_curves.png")))
        if sweep_rows_all:
            figures.append(
                str(figs.save_activation_vs_attackers(sweep_rows_all, out / "activation_vs_attackers.png"))
            )
        if detect_groups:
            labels, fps, fns = [], [], []
            for chash, group in sorted(detect_groups.items()):
                labels.append(chash[:8])
                fps.append(statistics.mean(float(m.extra.get("fp_rate", 0.0)) for _, m in group))
                fns.append(statistics.mean(float(m.extra.get("fn_rate", 0.0)) for _, m in group))
            figures.append(str(figs.save_rate_bars(labels, fps, fns, out / "detection_rates.png")))

    manifest = RunManifest(
        command="report",
        config_hash="aggregate",
        seed=0,
        artifacts={p.name: p.name for p in out.iterdir() if p.suffix in (".csv", ".png")},
        extra={"inputs": [str(p) for p in args.manifests], "figures": figures},
    )
    manifest.save(out / "manifest.json")
    print(f"report: {len(loaded)} manifest(s) aggregated -> {out}")
    return 0


def _read_rounds_like(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ----------------------------------------------------------------------
# argument wiring
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="immunids",
        description="Danger-theory immune intrusion detection over a simulated sensor network",
    )
    parser.add_argument("--version", action="version", version=f"immunids {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, out_required=True):
        p.add_argument("--config", help="scenario/protocol config file (key = value lines)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        if out_required:
            p.add_argument("--out", required=True, help="output directory")

    p_sim = sub.add_parser("simulate", help="run one scenario; write event log and metrics CSV")
    add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_doe = sub.add_parser("doe", help="fractional factorial batch, significance, feature selection")
    add_common(p_doe)
    p_doe.add_argument("--factors", help="factors file: NAME LOW HIGH per line (default levels otherwise)")
    p_doe.add_argument("--reps", type=int, default=5, help="repetitions per design row")
    p_doe.add_argument("--reducer", type=int, default=4, help="fraction exponent p in 2^(k-p)")
    p_doe.add_argument("--theta-hi", type=float, default=0.35)
    p_doe.add_argument("--theta-lo", type=float, default=0.35)
    p_doe.set_defaults(func=cmd_doe)

    p_train = sub.add_parser("train", help="fit the detection model from metrics CSVs")
    p_train.add_argument("--healthy", nargs="+", required=True, help="attack-free metrics CSVs")
    p_train.add_argument("--attack", nargs="+", required=True, help="attack-run metrics CSVs")
    p_train.add_argument("--out-model", required=True, help="model file path")
    p_train.add_argument("--config", help="config file supplying protocol knobs")
    p_train.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--regularization", type=float, default=1e-3)
    p_train.add_argument("--warmup-blocks", type=int, default=8)
    p_train.set_defaults(func=cmd_train)

    p_detect = sub.add_parser("detect", help="coupled simulation + detection protocol")
    add_common(p_detect)
    p_detect.add_argument("--model", required=True, help="trained model file")
    p_detect.add_argument("--rounds", type=int, default=40)
    p_detect.add_argument("--warmup", type=int, default=12, help="rounds before scanning starts")
    p_detect.add_argument("--sweep-nm", metavar="LO:HI", help="sweep the malicious count instead of one run")
    p_detect.add_argument("--sweep-seeds", type=int, default=3)
    p_detect.add_argument("--workers", type=int, default=1, help="parallel processes for sweeps")
    p_detect.set_defaults(func=cmd_detect)

    p_report = sub.add_parser("report", help="aggregate manifests into tables and figures")
    p_report.add_argument("manifests", nargs="*", help="manifest.json paths")
    p_report.add_argument("--out", required=True)
    p_report.add_argument("--no-figures", dest="figures", action="store_false")
    p_report.set_defaults(func=cmd_report, figures=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
