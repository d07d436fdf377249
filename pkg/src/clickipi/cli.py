"""``clickipi`` command line.

Exit codes: 0 success, 1 a module rejected its input, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import actions, encode, ingest, metrics, pipeline, simgen, survival
from ._jit import backend_name
from .actions import MatchCosts, Taxonomy
from .learn.features import MODES, TASKS
from .learn.tasks import run_task, write_task_reports
from .metrics import IpiConfig
from .tables import read_csv, write_csv, write_json, write_text_atomic

log = logging.getLogger("clickipi")

U64_MAX = 2**64 - 1


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64 - 1]")
    return value


def _class_costs(text: str):
    if text in ("none", "balanced"):
        return text
    try:
        pairs = [item.split("=", 1) for item in text.split(",")]
        return {k.strip(): float(v) for k, v in pairs}
    except ValueError:
        raise argparse.ArgumentTypeError("costs must be none, balanced or class=cost[,class=cost...]") from None


def _add_ingest(p, events=True, meta_required=False):
    if events:
        p.add_argument("--events", required=True, help="line-delimited JSON click events")
    p.add_argument("--meta", required=meta_required, help="videos table: video_id,video_length,week_index,order_in_course")
    p.add_argument("--gap", type=float, default=ingest.DEFAULT_GAP, help="session split on inactivity (s)")
    p.add_argument("--end-tolerance", type=float, default=ingest.DEFAULT_END_TOLERANCE)
    p.add_argument("--scroll-window", type=float, default=encode.DEFAULT_SCROLL_WINDOW)


def _add_actions(p):
    p.add_argument("--n", type=int, default=actions.DEFAULT_N, help="n-gram length")
    p.add_argument("--k", type=int, default=actions.DEFAULT_K, help="top-k mined n-grams")
    p.add_argument("--w-del", type=float, default=0.1)
    p.add_argument("--w-ins", type=float, default=1.0)
    p.add_argument("--w-sub", type=float, default=1.0)
    p.add_argument("--taxonomy", help="JSON file: category -> pattern strings")
    p.add_argument("--ipi-config", help="JSON file with 'weights' and 'edges'")


def _add_learn(p):
    p.add_argument("--lam", type=float, help="L2 strength (default 1.0)")
    p.add_argument("--folds", type=int, help="override the task's fold count")
    p.add_argument("--rare", type=int, help="override the rare-feature threshold")
    p.add_argument("--costs", type=_class_costs, help="none | balanced | class=cost,...")
    p.add_argument("--nextclick-cap", type=int, default=200)
    p.add_argument("--nextclick-sessions", type=int, default=pipeline.DEFAULT_NEXTCLICK_SESSIONS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clickipi", description="Clickstream -> behavioral actions -> IPI")
    parser.add_argument("--show-config", action="store_true", help="print every effective default and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("encode", help="events -> symbol sequences")
    _add_ingest(p)
    p.add_argument("--out", required=True)
    p.add_argument("--dwell-out")
    p.add_argument("--sessions-out")

    p = sub.add_parser("actions", help="sequences -> behavioral action weights and levels")
    p.add_argument("--sequences", required=True)
    p.add_argument("--sessions", help="sessions table; medians are then fitted on complete sessions")
    _add_actions(p)
    p.add_argument("--out", required=True)
    p.add_argument("--ngrams-out")
    p.add_argument("--thresholds-out")

    p = sub.add_parser("ipi", help="action levels -> IPI per session")
    p.add_argument("--actions", required=True)
    p.add_argument("--ipi-config")
    p.add_argument("--out", required=True)

    p = sub.add_parser("engage", help="events -> engagement, play proportion and IPI per session")
    _add_ingest(p, meta_required=True)
    _add_actions(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("traj", help="events -> per-student trajectories")
    _add_ingest(p, meta_required=True)
    _add_actions(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="cross-validated prediction task")
    _add_ingest(p, meta_required=True)
    _add_actions(p)
    _add_learn(p)
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--mode", choices=MODES, default="raw")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("survive", help="Cox fit on person-weeks")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--person-weeks")
    src.add_argument("--events")
    p.add_argument("--meta")
    p.add_argument("--covariates", default=",".join(survival.DEFAULT_COVARIATES))
    p.add_argument("--gap", type=float, default=ingest.DEFAULT_GAP)
    p.add_argument("--end-tolerance", type=float, default=ingest.DEFAULT_END_TOLERANCE)
    p.add_argument("--scroll-window", type=float, default=encode.DEFAULT_SCROLL_WINDOW)
    _add_actions(p)
    p.add_argument("--person-weeks-out")
    p.add_argument("--out", required=True)

    p = sub.add_parser("ztest", help="two-sample z-test of a numeric column between two groups")
    p.add_argument("--table", required=True)
    p.add_argument("--value", required=True)
    p.add_argument("--group", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="synthetic cohort")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--config", help="JSON cohort config (default: the two shipped archetypes)")
    p.add_argument("--n-students", type=int)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("report", help="IPI histograms and z-tests per partition")
    p.add_argument("--run-dir", required=True, help="output directory of a pipeline run")
    p.add_argument("--activity", help="student_id,exercises table for Viewers vs Active")
    p.add_argument("--bin-width", type=float, default=pipeline.HIST_WIDTH)
    p.add_argument("--range", type=float, nargs=2, default=list(pipeline.HIST_RANGE), metavar=("LO", "HI"))
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="ingest -> encode -> actions -> metrics -> learn/survive")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--events")
    src.add_argument("--simulate", metavar="CONFIG", help="'default' or a JSON cohort config")
    _add_ingest(p, events=False)
    _add_actions(p)
    _add_learn(p)
    p.add_argument("--n-students", type=int)
    p.add_argument("--tasks", default=",".join(TASKS), help="comma list, or 'none'")
    p.add_argument("--modes", default=",".join(MODES))
    p.add_argument("--activity")
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", required=True)
    return parser


def _settings(args) -> pipeline.Settings:
    kw = {}
    for name in ("gap", "end_tolerance", "scroll_window", "n", "k"):
        if hasattr(args, name):
            kw[name] = getattr(args, name)
    if hasattr(args, "w_del"):
        kw["costs"] = MatchCosts(args.w_del, args.w_ins, args.w_sub)
    if getattr(args, "taxonomy", None):
        kw["taxonomy"] = Taxonomy.from_file(args.taxonomy)
    if getattr(args, "ipi_config", None):
        kw["ipi"] = IpiConfig.from_file(args.ipi_config)
    if hasattr(args, "lam"):
        kw.update(lam=args.lam, folds=args.folds, rare_threshold=args.rare, class_costs=args.costs,
                  nextclick_cap=args.nextclick_cap, nextclick_sessions=args.nextclick_sessions)
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    return pipeline.Settings(**kw)


def _load(args):
    events = ingest.read_events(args.events)
    meta = ingest.read_video_meta(args.meta) if args.meta else []
    return events, meta


def _cohort_config(spec: str, seed: int, n_students: int | None) -> simgen.CohortConfig:
    from dataclasses import replace

    config = simgen.default_cohort(seed=seed) if spec == "default" else simgen.CohortConfig.from_file(spec)
    config = replace(config, seed=seed)
    if n_students is not None:
        config = replace(config, n_students=n_students)
    return config


def _simulate_to(out: Path, config: simgen.CohortConfig):
    cohort = simgen.simulate_cohort(config)
    write_text_atomic(out / "events.jsonl", ingest.format_events(cohort.events))
    ingest.write_video_meta(out / "videos.csv", cohort.videos)
    simgen.write_truth(out / "truth.csv", cohort.truth)
    write_json(out / "cohort.json", config.to_dict())
    return cohort


# --------------------------------------------------------------------------
# commands


def cmd_encode(args) -> None:
    events, meta = _load(args)
    sessions = ingest.build_sessions(events, meta, args.gap, args.end_tolerance)
    seqs = encode.encode_sessions(sessions, args.scroll_window)
    encode.write_sequences(args.out, seqs)
    if args.dwell_out:
        encode.write_dwell(args.dwell_out, seqs)
    if args.sessions_out:
        ingest.write_sessions(args.sessions_out, sessions)


def cmd_actions(args) -> None:
    s = _settings(args)
    seqs = encode.read_sequences(args.sequences)
    reference = None
    if args.sessions:
        reference = {r["session_id"] for r in read_csv(args.sessions) if r["has_end_pause"] == "true"}
    vectors, thresholds = actions.score_corpus(seqs, s.taxonomy, s.n, s.costs, reference)
    actions.write_actions(args.out, vectors)
    if args.ngrams_out:
        mined = actions.mine_ngrams(seqs, s.n, s.k)
        write_csv(args.ngrams_out, ("rank", "ngram", "count"), [(i, g, c) for i, (g, c) in enumerate(mined, 1)])
    if args.thresholds_out:
        write_json(args.thresholds_out, thresholds)


def cmd_ipi(args) -> None:
    config = IpiConfig.from_file(args.ipi_config) if args.ipi_config else metrics.DEFAULT_IPI
    rows = []
    for v in actions.read_actions(args.actions):
        if len(v.levels) != len(actions.CATEGORIES):
            raise metrics.MetricsError(f"session {v.session_id}: actions table lacks High/Low levels")
        ipi = metrics.compute_ipi(v.levels, config)
        rows.append((v.session_id, ipi, metrics.bin_ipi(ipi, config)))
    write_csv(args.out, ("session_id", "ipi", "ipi_bin"), rows)


def cmd_engage(args) -> None:
    corpus = pipeline.prepare(*_load(args), _settings(args))
    metrics.write_metrics(args.out, corpus.session_records)


def cmd_traj(args) -> None:
    corpus = pipeline.prepare(*_load(args), _settings(args))
    metrics.write_trajectories(args.out, corpus.trajectories)


def cmd_train(args) -> None:
    s = _settings(args)
    corpus = pipeline.prepare(*_load(args), s)
    instances = pipeline.task_instances(corpus, args.task, args.mode, s)
    result = run_task(args.task, instances, args.mode, s.task_config(args.task))
    write_task_reports(args.out, [result])
    print(f"{args.task}/{args.mode}: accuracy={result.mean['accuracy']:.4f} kappa={result.mean['kappa']:.4f}")


def cmd_survive(args) -> None:
    covariates = tuple(c.strip() for c in args.covariates.split(",") if c.strip())
    if args.person_weeks:
        rows = survival.read_person_weeks(args.person_weeks)
    else:
        if not args.meta:
            raise pipeline.PipelineError("--events needs --meta for week indices")
        corpus = pipeline.prepare(*_load(args), _settings(args))
        rows = pipeline.person_weeks(corpus)
    if args.person_weeks_out:
        survival.write_person_weeks(args.person_weeks_out, rows)
    model = survival.fit_cox(rows, covariates)
    survival.write_hazards(args.out, model)
    for name, b, se, hr, p in model.rows():
        print(f"{name}: beta={b:.4f} se={se:.4f} HR={hr:.4f} p={p:.3g}")


def cmd_ztest(args) -> None:
    a, b = [], []
    for row in read_csv(args.table):
        if args.value not in row or args.group not in row:
            raise survival.SurvivalError(f"{args.table} lacks column {args.value!r} or {args.group!r}")
        if row[args.group] == args.a:
            a.append(float(row[args.value]))
        elif row[args.group] == args.b:
            b.append(float(row[args.value]))
    test = survival.two_sample_z(a, b)
    survival.write_ztests(args.out, [(args.a, args.b, test)])
    print(f"z={test.z:.4f} p={test.p:.3g}")


def cmd_simulate(args) -> None:
    config = _cohort_config(args.config or "default", args.seed, args.n_students)
    cohort = _simulate_to(Path(args.out), config)
    print(f"{len(cohort.truth)} students, {len(cohort.events)} events -> {args.out}")


def cmd_report(args) -> None:
    activity = pipeline.read_activity(args.activity) if args.activity else None
    groups = pipeline.read_partitions(args.run_dir, activity)
    pipeline.write_report(args.out, groups, args.range[0], args.range[1], args.bin_width)


def cmd_pipeline(args) -> None:
    out = Path(args.out)
    s = _settings(args)
    tasks = () if args.tasks == "none" else tuple(t.strip() for t in args.tasks.split(","))
    modes = tuple(m.strip() for m in args.modes.split(","))
    bad = [t for t in tasks if t not in TASKS] + [m for m in modes if m not in MODES]
    if bad:
        raise pipeline.PipelineError(f"unknown task or mode: {', '.join(bad)}")
    from dataclasses import replace

    s = replace(s, tasks=tasks, modes=modes)
    if args.simulate:
        cohort = _simulate_to(out, _cohort_config(args.simulate, args.seed, args.n_students))
        events, meta = cohort.events, cohort.videos
    else:
        events, meta = _load(args)
    activity = pipeline.read_activity(args.activity) if args.activity else None
    corpus, results, cox = pipeline.run_pipeline(events, meta, out, s, activity)
    print(f"{len(corpus.sessions)} sessions ({len(corpus.complete_ids)} complete), backend={backend_name()}")
    for name, b, se, hr, p in cox.rows():
        print(f"  hazard {name}: HR={hr:.4f} p={p:.3g}")
    for r in results:
        print(f"  {r.task}/{r.mode}: accuracy={r.mean['accuracy']:.4f} kappa={r.mean['kappa']:.4f} majority={r.majority_accuracy:.4f}")


COMMANDS = {
    "encode": cmd_encode,
    "actions": cmd_actions,
    "ipi": cmd_ipi,
    "engage": cmd_engage,
    "traj": cmd_traj,
    "train": cmd_train,
    "survive": cmd_survive,
    "ztest": cmd_ztest,
    "simulate": cmd_simulate,
    "report": cmd_report,
    "pipeline": cmd_pipeline,
}


def show_config(args) -> dict:
    payload = _settings(args).to_dict()
    payload["simgen_default"] = simgen.default_cohort().to_dict()
    payload["backend"] = backend_name()
    return payload


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.show_config:
            print(json.dumps(show_config(args), indent=2, sort_keys=True))
            return 0
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 2
        COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"clickipi {args.command or ''}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
