"""Command line front end for running and inspecting retrieval experiments.

Every subcommand works from a state directory: ``init`` creates it from a
config file, the rest reload the config copy stored there. Oracle-mode runs
advance unattended; human-mode runs advance only as far as submitted labels
allow and say what is still missing.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .calibration import bootstrap_params, calibrated_threshold, write_calibration_report
from .evaluation import metrics_report_json
from .experiment import (
    ExperimentConfig,
    ExperimentRunner,
    ExperimentState,
    load_state,
    save_state,
)
from .scoring import score_pool
from .skipgrams import compute_lift, select_top_lift


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (JSON)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--state-dir", help="directory holding experiment state")

    parser = argparse.ArgumentParser(
        prog="rareloop",
        description="Active-learning retrieval of rare documents from a corpus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("init", parents=[common], help="create a state dir from a config")
    p = sub.add_parser("iterate", parents=[common], help="advance the loop")
    p.add_argument("--n", type=int, default=1, help="iterations to run (oracle mode)")
    sub.add_parser("status", parents=[common], help="print loop state")
    sub.add_parser("evaluate", parents=[common], help="print the metrics report")
    p = sub.add_parser(
        "calibrate", parents=[common], help="bootstrap the decision threshold"
    )
    p.add_argument("--category", help="one category (default: all)")
    p = sub.add_parser(
        "mine-grams", parents=[common], help="mine high-lift skip-grams"
    )
    p.add_argument("--category", help="one category (default: all)")
    p.add_argument("--top", type=int, help="grams to select per length")
    p = sub.add_parser("serve", parents=[common], help="serve the labeling API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p = sub.add_parser("export", parents=[common], help="write labels and reports")
    p.add_argument("--out", help="output directory (default: <state-dir>/export)")
    return parser


def _fail(message: str) -> "NoReturn":  # noqa: F821
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(2)


def _load_config(args) -> ExperimentConfig:
    path = args.config
    if path is None and args.state_dir:
        stored = os.path.join(args.state_dir, "config.json")
        if os.path.exists(stored):
            path = stored
    if path is None:
        _fail("a config file is required (--config, or a state dir with one)")
    cfg = ExperimentConfig.from_file(path)
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    return cfg


def _load_session(args) -> tuple[ExperimentRunner, ExperimentState]:
    if not args.state_dir:
        _fail("--state-dir is required")
    cfg = _load_config(args)
    runner = ExperimentRunner(cfg, state_dir=args.state_dir)
    state = load_state(args.state_dir)
    runner.restore(state)
    return runner, state


def _cmd_init(args) -> None:
    if not args.state_dir:
        _fail("--state-dir is required")
    if os.path.exists(os.path.join(args.state_dir, "state.json")):
        _fail(f"state dir {args.state_dir!r} already holds an experiment")
    cfg = _load_config(args)
    runner = ExperimentRunner(cfg, state_dir=args.state_dir)
    state = runner.initialize()
    os.makedirs(args.state_dir, exist_ok=True)
    with open(
        os.path.join(args.state_dir, "config.json"), "w", encoding="utf-8"
    ) as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    save_state(state, args.state_dir)
    print(f"initialized {args.state_dir}")
    print(f"queued {len(state.queue)} seed-matched docs for labeling")
    for cls, specs in state.retained_seeds.items():
        print(f"  {cls}: {len(specs)} retained seeds")


def _advance_once(runner: ExperimentRunner, state: ExperimentState) -> bool:
    """One phase transition; False when human labels are still missing."""
    undecided = runner.undecided_ids(state)
    oracle = runner.config.labeler == "oracle"
    if state.phase in ("init_labeling", "labeling"):
        if oracle:
            runner.label_pending_with_oracle(state)
        elif undecided:
            print(
                f"waiting on labels for {len(undecided)} queued docs "
                "(serve the API and submit annotations)"
            )
            return False
        if state.phase == "init_labeling":
            runner.complete_init(state)
        else:
            runner.complete_iteration(state)
    elif state.phase == "ready":
        runner.begin_iteration(state)
    return True


def _cmd_iterate(args) -> None:
    runner, state = _load_session(args)
    done = 0
    while done < args.n:
        before = state.iteration
        if not _advance_once(runner, state):
            break
        if state.iteration > before:
            done += 1
            last = [r for r in state.metrics if r.iteration == before]
            for r in last:
                print(
                    f"iteration {before} {r.category}: ap={r.ap:.4f} "
                    f"e_mid={r.e_mid:.1f} diversity={r.diversity:.3f}"
                )
        if state.phase == "labeling" and runner.config.labeler == "human":
            print(f"iteration {state.iteration}: {len(state.queue)} docs queued")
            break
    save_state(state, args.state_dir)
    print(f"phase {state.phase}, iteration {state.iteration}")


def _cmd_status(args) -> None:
    runner, state = _load_session(args)
    print(f"phase: {state.phase}")
    print(f"iteration: {state.iteration}")
    print(f"strategy: {runner.config.strategy}  labeler: {runner.config.labeler}")
    print(f"queued: {len(state.queue)}  undecided: {len(runner.undecided_ids(state))}")
    for cls in runner.config.classes:
        labeled = state.labeled[cls]
        positives = sum(labeled.values())
        eval_n = len(state.eval_labels[cls])
        print(f"  {cls}: {len(labeled)} train labels ({positives} positive), "
              f"{eval_n} eval labels")
    if state.failed_annotators:
        print(f"failed attention checks: {', '.join(state.failed_annotators)}")
    if state.errors:
        print(f"errors: {len(state.errors)} (see state.json)")
    for r in state.metrics[-len(runner.config.classes):]:
        print(
            f"latest {r.category} (iteration {r.iteration}): ap={r.ap:.4f} "
            f"e=({r.e_lower:.0f},{r.e_mid:.0f},{r.e_upper:.0f}) "
            f"diversity={r.diversity:.3f} converged={r.converged}"
        )


def _cmd_evaluate(args) -> None:
    runner, state = _load_session(args)
    report = metrics_report_json(state.metrics)
    with open(
        os.path.join(args.state_dir, "metrics.json"), "w", encoding="utf-8"
    ) as fh:
        fh.write(report)
    sys.stdout.write(report)


def _classes_for(args, runner: ExperimentRunner) -> list[str]:
    if args.category:
        if args.category not in runner.config.classes:
            _fail(f"unknown category {args.category!r}")
        return [args.category]
    return list(runner.config.classes)


def _cmd_calibrate(args) -> None:
    runner, state = _load_session(args)
    cfg = runner.config
    for cls in _classes_for(args, runner):
        labels = state.eval_labels[cls]
        if not labels:
            print(f"{cls}: no labeled evaluation docs yet")
            continue
        ci = cfg.classes.index(cls)
        model = runner.fit_scorer(state, cls)
        table = score_pool(model, runner.pools.eval_pool, cls, state.iteration)
        score_of = dict(zip(table.ids, table.values))
        pairs = [(float(score_of[d]), pos) for d, pos in sorted(labels.items())]
        params = bootstrap_params(
            pairs, B=cfg.calibration_B, seed=[cfg.seed, 6, ci, state.iteration]
        )
        result = calibrated_threshold(params)
        note = "" if result.bracketed else " (unbracketed)"
        print(f"{cls}: x*={result.x_star:.6f}{note} from {len(pairs)} labels, "
              f"B={cfg.calibration_B}")
        write_calibration_report(
            os.path.join(args.state_dir, f"calibration_{cls}.json"), result, params
        )


def _cmd_mine_grams(args) -> None:
    runner, state = _load_session(args)
    cfg = runner.config
    k = args.top if args.top else cfg.k_per_n
    for cls in _classes_for(args, runner):
        model = runner.fit_scorer(state, cls)
        table = score_pool(model, runner.pools.sample_pool, cls, state.iteration)
        top_ids = table.ranked_ids()[: cfg.top_size]
        history = state.used_grams[cls]
        if cfg.used_gram_window == "all":
            used = [tuple(g) for grams in history for g in grams]
        else:
            used = [tuple(g) for g in history[-1]] if history else []
        print(f"{cls}: top set of {len(top_ids)} docs")
        for n_len, index in sorted(runner._gram_indexes().items()):
            entries = compute_lift(top_ids, runner.pools.sample_pool, index)
            result = select_top_lift(entries, used, k=k)
            for gram in result.grams:
                entry = next(e for e in entries if e.gram == gram)
                print(
                    f"  {'+'.join(gram)}  lift={entry.lift:.2f} "
                    f"top_freq={entry.top_freq:.5f} pool_freq={entry.pool_freq:.6f}"
                )


def _cmd_serve(args) -> None:
    from .server import serve

    runner, state = _load_session(args)
    print(f"serving on http://{args.host}:{args.port}")
    serve(runner, state, host=args.host, port=args.port)


def _cmd_export(args) -> None:
    runner, state = _load_session(args)
    out = args.out or os.path.join(args.state_dir, "export")
    os.makedirs(out, exist_ok=True)
    labels_path = os.path.join(out, "labels.jsonl")
    with open(labels_path, "w", encoding="utf-8") as fh:
        for cls in runner.config.classes:
            for split, store in (
                ("train", state.labeled[cls]),
                ("eval", state.eval_labels[cls]),
            ):
                for doc_id, positive in sorted(store.items()):
                    fh.write(json.dumps({
                        "doc_id": doc_id,
                        "category": cls,
                        "positive": positive,
                        "split": split,
                    }, sort_keys=True) + "\n")
    with open(os.path.join(out, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(metrics_report_json(state.metrics))
    with open(os.path.join(out, "batches.jsonl"), "w", encoding="utf-8") as fh:
        for entry in state.batch_log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    with open(os.path.join(out, "grams.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {c: state.used_grams[c] for c in runner.config.classes},
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    for name in ("labels.jsonl", "metrics.json", "batches.jsonl", "grams.json"):
        print(os.path.join(out, name))


_COMMANDS = {
    "init": _cmd_init,
    "iterate": _cmd_iterate,
    "status": _cmd_status,
    "evaluate": _cmd_evaluate,
    "calibrate": _cmd_calibrate,
    "mine-grams": _cmd_mine_grams,
    "serve": _cmd_serve,
    "export": _cmd_export,
}


def main(argv=None) -> None:
    args = _build_parser().parse_args(argv)
    _COMMANDS[args.command](args)


if __name__ == "__main__":
    main()
