"""Command-line front end.

Subcommands: gen-data, train-teacher, serve, attack, ablate, sweep, eval.

Every flag can also be supplied through a JSON config document passed with
--config; explicit command-line flags win over config values, which win over
built-in defaults. Keys use underscores (e.g. {"budget_per_class": 8}).

Report-producing commands write figures next to the CSV/JSON artifacts;
--no-figures turns that off. EXTRACTION_LAB_LOG sets the log level.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .attack import ATTACK_MODES, AttackConfig, run_attack
from .bench import BENCHMARKS, Benchmark, default_student_train, get_benchmark
from .data import (
    DatasetSpec,
    GENERATORS,
    generate_proxy_pool,
    generate_true_dataset,
    load_dataset,
    load_pool,
    save_dataset,
    save_pool,
)
from .metrics import (
    SweepSpec,
    agreement_accuracy,
    read_metrics_csv,
    run_sweep,
    train_teacher,
    true_label_accuracy,
)
from .network import NetworkSpec, TrainConfig, load_checkpoint, save_checkpoint
from .oracle import LABEL_MODES, LocalOracle, reference_top_classes
from .service import OracleServer, RemoteOracle

log = logging.getLogger(__name__)

_MODE_ALIASES = {
    "vanilla": "vanilla",
    "active": "active_only",
    "self-paced": "self_paced_only",
    "full": "full",
}
_DEFAULT_SWEEP_BUDGETS = [2**i for i in range(9)]  # 1..256 per class


def _setup_logging() -> None:
    level_name = os.environ.get("EXTRACTION_LAB_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        print(f"warning: unknown log level {level_name!r}, using WARNING", file=sys.stderr)
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise SystemExit(f"config {path} must hold a JSON object")
    return config


def _pick(args: argparse.Namespace, config: dict, key: str, default):
    """cli > config > default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _parse_hidden(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    try:
        sizes = tuple(int(part) for part in str(text).split(",") if part.strip())
    except ValueError:
        raise SystemExit(f"bad hidden layer list: {text!r}") from None
    if not sizes:
        raise SystemExit("hidden layer list is empty")
    return sizes


def _parse_budgets(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(part) for part in str(text).split(",") if part.strip()]
    except ValueError:
        raise SystemExit(f"bad budget list: {text!r}") from None


def _train_config(args: argparse.Namespace, config: dict, base: TrainConfig) -> TrainConfig:
    return TrainConfig(
        learning_rate=float(_pick(args, config, "lr", base.learning_rate)),
        batch_size=int(_pick(args, config, "batch", base.batch_size)),
        max_epochs=int(_pick(args, config, "epochs", base.max_epochs)),
        patience=int(_pick(args, config, "patience", base.patience)),
        lr_step_size=int(_pick(args, config, "lr_step", base.lr_step_size)),
        lr_gamma=float(_pick(args, config, "lr_gamma", base.lr_gamma)),
        seed=int(_pick(args, config, "seed", base.seed)),
    )


def _dataset_spec(args: argparse.Namespace, config: dict, base: DatasetSpec) -> DatasetSpec:
    return DatasetSpec(
        generator=_pick(args, config, "generator", base.generator),
        num_classes=int(_pick(args, config, "classes", base.num_classes)),
        input_dim=int(_pick(args, config, "dim", base.input_dim)),
        per_class_count=int(_pick(args, config, "per_class", base.per_class_count)),
        class_separation=float(_pick(args, config, "separation", base.class_separation)),
        noise_scale=float(_pick(args, config, "noise", base.noise_scale)),
        distribution_shift=float(_pick(args, config, "shift", base.distribution_shift)),
        seed=int(_pick(args, config, "seed", base.seed)),
    )


def _attack_config(args: argparse.Namespace, config: dict) -> AttackConfig:
    mode = _pick(args, config, "mode", "full")
    mode = _MODE_ALIASES.get(mode, mode)
    if mode not in ATTACK_MODES:
        raise SystemExit(f"unknown mode {mode!r}")
    return AttackConfig(
        per_class_budget=int(_pick(args, config, "budget_per_class", 4)),
        calls_per_round=(
            int(v) if (v := _pick(args, config, "calls_per_round", None)) is not None else None
        ),
        neighbors=int(_pick(args, config, "k", 5)),
        sigma=float(_pick(args, config, "sigma", 17.0)),
        metric=_pick(args, config, "metric", None),
        label_mode=_pick(args, config, "label_mode", "soft"),
        mode=mode,
        train=default_student_train(),
        seed=int(_pick(args, config, "seed", 0)),
    )


def _resolve_benchmark(args: argparse.Namespace, config: dict) -> Benchmark:
    return get_benchmark(_pick(args, config, "benchmark", "blobs"))


def _teacher_for(args: argparse.Namespace, config: dict, bench: Benchmark):
    """Either loads a checkpoint or trains the benchmark teacher in place."""
    path = _pick(args, config, "teacher", None)
    if path is not None:
        return load_checkpoint(path), None
    log.info("no --teacher given; training the %s benchmark teacher", bench.name)
    train_set, test_set = generate_true_dataset(bench.data)
    teacher, acc, _ = train_teacher(
        train_set, test_set, bench.teacher_spec(), bench.teacher_train
    )
    print(f"trained benchmark teacher: test accuracy {acc:.4f}")
    return teacher, test_set


def cmd_gen_data(args: argparse.Namespace, config: dict) -> int:
    bench = _resolve_benchmark(args, config)
    data_spec = _dataset_spec(args, config, bench.data)
    pool_spec = _dataset_spec(args, config, bench.pool)
    out_dir = _pick(args, config, "out", "data-out")
    os.makedirs(out_dir, exist_ok=True)
    train_set, test_set = generate_true_dataset(data_spec)
    pool = generate_proxy_pool(pool_spec)
    save_dataset(train_set, os.path.join(out_dir, "train.csv"))
    save_dataset(test_set, os.path.join(out_dir, "test.csv"))
    save_pool(pool, os.path.join(out_dir, "pool.csv"))
    print(
        f"wrote {len(train_set)} train / {len(test_set)} test / {len(pool)} pool "
        f"samples to {out_dir}"
    )
    return 0


def cmd_train_teacher(args: argparse.Namespace, config: dict) -> int:
    bench = _resolve_benchmark(args, config)
    data_path = _pick(args, config, "data", None)
    test_path = _pick(args, config, "test", None)
    if data_path is not None:
        train_set = load_dataset(data_path)
        test_set = (
            load_dataset(test_path)
            if test_path is not None
            else load_dataset(data_path)
        )
        num_classes = int(max(train_set.labels.max(), test_set.labels.max())) + 1
        input_dim = train_set.features.shape[1]
    else:
        train_set, test_set = generate_true_dataset(_dataset_spec(args, config, bench.data))
        num_classes = bench.data.num_classes
        input_dim = bench.data.input_dim
    hidden = _parse_hidden(_pick(args, config, "hidden", bench.teacher_hidden))
    spec = NetworkSpec(input_dim=input_dim, hidden_sizes=hidden, num_classes=num_classes)
    cfg = _train_config(args, config, bench.teacher_train)
    t0 = time.perf_counter()
    teacher, accuracy, history = train_teacher(train_set, test_set, spec, cfg)
    out = _pick(args, config, "out", "teacher.json")
    save_checkpoint(teacher, out)
    print(
        f"teacher trained: {len(history)} epochs, test accuracy {accuracy:.4f}, "
        f"{time.perf_counter() - t0:.1f}s -> {out}"
    )
    return 0


def cmd_serve(args: argparse.Namespace, config: dict) -> int:
    teacher_path = _pick(args, config, "teacher", None)
    if teacher_path is None:
        raise SystemExit("serve needs --teacher CHECKPOINT")
    teacher = load_checkpoint(teacher_path)
    label_mode = _pick(args, config, "label_mode", "soft")
    per_class = int(_pick(args, config, "budget_per_class", 4))
    limit = per_class * teacher.spec.num_classes
    oracle = LocalOracle(teacher, label_mode=label_mode, budget_limit=limit)
    server = OracleServer(
        oracle,
        host=_pick(args, config, "host", "127.0.0.1"),
        port=int(_pick(args, config, "port", 8180)),
    ).start()
    print(f"serving {label_mode}-label oracle at {server.url} (budget {limit})")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        print("shutting down")
    finally:
        server.stop()
    return 0


def cmd_attack(args: argparse.Namespace, config: dict) -> int:
    bench = _resolve_benchmark(args, config)
    cfg = _attack_config(args, config)
    oracle_arg = _pick(args, config, "oracle", "local")

    test_set = None
    teacher = None
    if oracle_arg == "local":
        teacher, test_set = _teacher_for(args, config, bench)
        n = cfg.total_budget(teacher.spec.num_classes)
        oracle = LocalOracle(teacher, label_mode=cfg.label_mode, budget_limit=n)
    else:
        oracle = RemoteOracle(oracle_arg)
        if oracle.label_mode != cfg.label_mode:
            log.warning(
                "server speaks %s labels; overriding --label-mode %s",
                oracle.label_mode,
                cfg.label_mode,
            )
            cfg = replace(cfg, label_mode=oracle.label_mode)

    pool_path = _pick(args, config, "pool", None)
    if pool_path is not None:
        pool = load_pool(pool_path, num_classes=oracle.num_classes)
    else:
        pool = generate_proxy_pool(bench.pool_for_seed(cfg.seed))

    hidden = _parse_hidden(_pick(args, config, "student_hidden", bench.student_hidden))
    student_spec = NetworkSpec(
        input_dim=oracle.input_dim, hidden_sizes=hidden, num_classes=oracle.num_classes
    )
    student, report = run_attack(
        oracle,
        pool,
        student_spec,
        cfg,
        np.random.default_rng(cfg.seed),
        diagnostic_teacher=teacher,
    )

    out_dir = _pick(args, config, "out", "attack-out")
    os.makedirs(out_dir, exist_ok=True)
    student_path = os.path.join(out_dir, "student.json")
    save_checkpoint(student, student_path)
    report.student_checkpoint = student_path
    report.save(os.path.join(out_dir, "report.json"))
    print(
        f"attack finished: mode={cfg.mode} label_mode={cfg.label_mode} "
        f"calls={report.calls_used}/{report.total_budget} rounds={len(report.rounds)}"
    )
    if teacher is not None and test_set is not None and len(test_set):
        top = reference_top_classes(teacher, test_set.features)
        agreement = agreement_accuracy(student, test_set.features, top)
        report.agreement_accuracy = agreement
        report.save(os.path.join(out_dir, "report.json"))
        print(f"agreement accuracy vs teacher: {agreement:.4f}")
    if _pick(args, config, "figures", True):
        from .plots import plot_attack_rounds

        fig_path = os.path.join(out_dir, "attack_rounds.png")
        plot_attack_rounds(report.to_dict(), fig_path)
        print(f"figure -> {fig_path}")
    print(f"artifacts -> {out_dir}")
    return 0


def _seed_list(args: argparse.Namespace, config: dict) -> list[int]:
    base = int(_pick(args, config, "seed", 0))
    count = int(_pick(args, config, "seeds", 5))
    if count < 1:
        raise SystemExit("--seeds must be >= 1")
    return list(range(base, base + count))


def _run_sweep_command(
    args: argparse.Namespace,
    config: dict,
    budgets: list[int],
    modes: tuple[str, ...],
    default_out: str,
) -> int:
    bench = _resolve_benchmark(args, config)
    cfg = _attack_config(args, config)
    seeds = _seed_list(args, config)
    # the pool must cover the largest budget with room for pseudo-labeling
    needed = 2 * max(budgets)
    if bench.pool.per_class_count < needed:
        bench = replace(bench, pool=replace(bench.pool, per_class_count=needed))
        log.info("enlarged pool to %d per class for budget %d", needed, max(budgets))
    spec = SweepSpec(
        per_class_budgets=budgets, seeds=seeds, attack=cfg, bench=bench, modes=modes
    )
    out = str(_pick(args, config, "out", default_out))
    if out.endswith(os.sep) or os.path.isdir(out):
        os.makedirs(out, exist_ok=True)
        out = os.path.join(out, default_out)
    elif os.path.dirname(out):
        os.makedirs(os.path.dirname(out), exist_ok=True)
    jobs = int(_pick(args, config, "jobs", 1))
    include_timing = bool(_pick(args, config, "timing", False))
    t0 = time.perf_counter()
    result = run_sweep(spec, out, jobs=jobs, include_timing=include_timing)
    ok = sum(1 for r in result.detail_rows() if r.status == "ok")
    failed = sum(1 for r in result.detail_rows() if r.status == "failed")
    print(
        f"{ok} runs ok, {failed} failed, {len(result.aggregate_rows())} aggregates, "
        f"{time.perf_counter() - t0:.1f}s -> {out}"
    )
    for row in result.aggregate_rows():
        std = f" ± {row.agreement_std:.3f}" if row.agreement_std is not None else ""
        acc = "n/a" if row.agreement_accuracy is None else f"{row.agreement_accuracy:.3f}"
        print(f"  {row.run_id}: agreement {acc}{std}")
    if _pick(args, config, "figures", True):
        from .plots import plot_ablation, plot_pseudo_accuracy, plot_sweep

        stem = os.path.splitext(out)[0]
        if len(budgets) > 1:
            plot_sweep(result.rows, stem + ".png")
            print(f"figure -> {stem}.png")
            if any(r.pseudo_label_accuracy is not None for r in result.aggregate_rows()):
                plot_pseudo_accuracy(result.rows, stem + "_pseudo.png")
                print(f"figure -> {stem}_pseudo.png")
        else:
            accs: dict[str, list[float]] = {}
            for row in result.detail_rows():
                if row.status == "ok":
                    accs.setdefault(row.mode, []).append(row.agreement_accuracy)
            if accs:
                plot_ablation(accs, stem + ".png")
                print(f"figure -> {stem}.png")
    return 0


def cmd_ablate(args: argparse.Namespace, config: dict) -> int:
    budget = int(_pick(args, config, "budget_per_class", 4))
    return _run_sweep_command(args, config, [budget], ATTACK_MODES, "ablation.csv")


def cmd_sweep(args: argparse.Namespace, config: dict) -> int:
    budgets = _parse_budgets(_pick(args, config, "budgets", _DEFAULT_SWEEP_BUDGETS))
    raw_modes = _pick(args, config, "modes", "full")
    if isinstance(raw_modes, str):
        raw_modes = [m.strip() for m in raw_modes.split(",") if m.strip()]
    modes = tuple(_MODE_ALIASES.get(m, m) for m in raw_modes)
    for mode in modes:
        if mode not in ATTACK_MODES:
            raise SystemExit(f"unknown mode {mode!r}")
    return _run_sweep_command(args, config, budgets, modes, "sweep.csv")


def cmd_eval(args: argparse.Namespace, config: dict) -> int:
    student_path = _pick(args, config, "student", None)
    if student_path is None:
        raise SystemExit("eval needs --student CHECKPOINT")
    student = load_checkpoint(student_path)
    teacher_path = _pick(args, config, "teacher", None)
    test_path = _pick(args, config, "test", None)
    if test_path is not None:
        test_set = load_dataset(test_path)
    else:
        bench = _resolve_benchmark(args, config)
        _, test_set = generate_true_dataset(_dataset_spec(args, config, bench.data))
    if len(test_set) == 0:
        raise SystemExit("evaluation set is empty")
    student_true = true_label_accuracy(student, test_set.features, test_set.labels)
    print(f"student true-label accuracy: {student_true:.4f}")
    if teacher_path is not None:
        teacher = load_checkpoint(teacher_path)
        top = reference_top_classes(teacher, test_set.features)
        agreement = agreement_accuracy(student, test_set.features, top)
        teacher_true = true_label_accuracy(teacher, test_set.features, test_set.labels)
        print(f"teacher true-label accuracy: {teacher_true:.4f}")
        print(f"agreement accuracy: {agreement:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extraction-lab",
        description="Model-extraction laboratory: budgeted oracles, active "
        "sample selection, and kNN pseudo-labeling on synthetic benchmarks.",
    )
    parser.add_argument("--config", help="JSON config file; flags override its values")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--benchmark", choices=sorted(BENCHMARKS))
        p.add_argument("--seed", type=int)

    def add_dataset_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--generator", choices=GENERATORS)
        p.add_argument("--classes", type=int)
        p.add_argument("--dim", type=int)
        p.add_argument("--per-class", type=int, dest="per_class")
        p.add_argument("--separation", type=float)
        p.add_argument("--noise", type=float)
        p.add_argument("--shift", type=float)

    def add_attack_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--budget-per-class", type=int, dest="budget_per_class")
        p.add_argument("--calls-per-round", type=int, dest="calls_per_round")
        p.add_argument("--k", type=int)
        p.add_argument("--sigma", type=float)
        p.add_argument("--metric", choices=("euclidean", "cosine"))
        p.add_argument("--label-mode", choices=LABEL_MODES, dest="label_mode")
        p.add_argument("--mode", choices=sorted(set(_MODE_ALIASES) | set(ATTACK_MODES)))

    p = sub.add_parser("gen-data", help="write train/test/pool CSVs for a generator")
    add_common(p)
    add_dataset_flags(p)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("train-teacher", help="train the victim model on true data")
    add_common(p)
    add_dataset_flags(p)
    p.add_argument("--data", help="training CSV (default: benchmark generator)")
    p.add_argument("--test", help="test CSV for the accuracy report")
    p.add_argument("--hidden", help="comma-separated layer sizes, e.g. 64,32")
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--lr-step", type=int, dest="lr_step")
    p.add_argument("--lr-gamma", type=float, dest="lr_gamma")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_train_teacher)

    p = sub.add_parser("serve", help="expose a teacher checkpoint as a budgeted HTTP oracle")
    p.add_argument("--teacher", help="teacher checkpoint path")
    p.add_argument("--label-mode", choices=LABEL_MODES, dest="label_mode")
    p.add_argument("--budget-per-class", type=int, dest="budget_per_class")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("attack", help="run one extraction attack")
    add_common(p)
    add_attack_flags(p)
    p.add_argument("--oracle", help="'local' (default) or the service base URL")
    p.add_argument("--teacher", help="teacher checkpoint for the local oracle")
    p.add_argument("--pool", help="proxy pool CSV (default: benchmark pool)")
    p.add_argument("--student-hidden", dest="student_hidden")
    p.add_argument("--out")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction)
    p.set_defaults(handler=cmd_attack)

    p = sub.add_parser("ablate", help="compare all attack modes at one budget")
    add_common(p)
    add_attack_flags(p)
    p.add_argument("--seeds", type=int, help="number of seeds (from --seed upward)")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    p.add_argument("--timing", action=argparse.BooleanOptionalAction)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction)
    p.set_defaults(handler=cmd_ablate)

    p = sub.add_parser("sweep", help="budget sweep over a benchmark")
    add_common(p)
    add_attack_flags(p)
    p.add_argument("--budgets", help="comma-separated per-class budgets, ascending")
    p.add_argument("--modes", help="comma-separated attack modes")
    p.add_argument("--seeds", type=int, help="number of seeds (from --seed upward)")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    p.add_argument("--timing", action=argparse.BooleanOptionalAction)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("eval", help="score a student checkpoint")
    add_common(p)
    add_dataset_flags(p)
    p.add_argument("--student", help="student checkpoint path")
    p.add_argument("--teacher", help="teacher checkpoint for agreement")
    p.add_argument("--test", help="test CSV (default: benchmark test split)")
    p.set_defaults(handler=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    config = _load_config(args.config)
    try:
        return args.handler(args, config)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
