"""Driver: analyze | transform | run | bench.

Exit codes: 0 ok, 1 usage or I/O, 2 analysis error, 3 safety violation.
RBMM_PAGE_SIZE overrides the default region page size.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import threading
from pathlib import Path

from .frontend import load_file
from .liveness import AnalysisError
from .parser import SourceError
from .runtime import (COMMIT_FIXED_SLOTS, DISJ_FIXED_SLOTS, ITE_FIXED_SLOTS,
                      SafetyViolation)
from .transform import annotate_program, emit_annotated
from .typegraph import build_type_graph, format_type_graph
from .pointsto import format_rptg
from .vm import RunResult, VMError, run_program

STACK_BYTES = 512 * 1024 * 1024
RECURSION_LIMIT = 4_000_000


def run_deep(fn, *args, **kwargs):
    """Runs fn on a thread with a large stack; the interpreter recurses one
    native frame per procedure call."""
    result: dict = {}

    def work():
        old = sys.getrecursionlimit()
        sys.setrecursionlimit(RECURSION_LIMIT)
        try:
            result["value"] = fn(*args, **kwargs)
        except BaseException as e:  # re-raised on the caller's thread
            result["error"] = e
        finally:
            sys.setrecursionlimit(old)

    old_size = threading.stack_size(STACK_BYTES)
    try:
        t = threading.Thread(target=work)
        t.start()
        t.join()
    finally:
        threading.stack_size(old_size)
    if "error" in result:
        raise result["error"]
    return result["value"]


def stats_dict(program: str, stats) -> dict:
    return {
        "program": program,
        "regions_total": stats.regions_total,
        "regions_max": stats.regions_max,
        "words_total": stats.words_total,
        "words_max": stats.words_max,
        "slr": stats.slr,
        "saving": round(stats.saving, 6),
        "instant_reclaim": {
            "new_alloc_words": stats.ir_new_alloc,
            "new_region_words": stats.ir_new_region,
            "then_words": stats.ir_then,
            "commit_words": stats.ir_commit,
        },
        "frames": {
            kind: {
                "total": fs.total,
                "max": fs.max_live,
                "words": fs.words,
                "max_words": fs.max_words,
                "size_records": fs.size_records,
                "protected": fs.protected,
                "fixed_slots": {"disj": DISJ_FIXED_SLOTS,
                                "ite": ITE_FIXED_SLOTS,
                                "commit": COMMIT_FIXED_SLOTS}[kind],
            }
            for kind, fs in stats.frames.items()
        },
        "solutions": stats.solutions,
        "steps": stats.steps,
        "live_words_at_exit": stats.words_live,
    }


def render_text_report(d: dict) -> str:
    ir = d["instant_reclaim"]
    lines = [
        f"program:        {d['program']}",
        f"regions:        total={d['regions_total']} max={d['regions_max']}",
        f"words:          total={d['words_total']} max={d['words_max']} "
        f"slr={d['slr']} saving={d['saving']}",
        f"instant reclaim: new_alloc={ir['new_alloc_words']} "
        f"new_region={ir['new_region_words']} then={ir['then_words']} "
        f"commit={ir['commit_words']}",
    ]
    for kind in ("disj", "ite", "commit"):
        f = d["frames"][kind]
        lines.append(
            f"{kind} frames:    total={f['total']} max={f['max']} "
            f"words={f['words']} max_words={f['max_words']} "
            f"size_records={f['size_records']} protected={f['protected']} "
            f"fixed_slots={f['fixed_slots']}")
    lines.append(f"solutions:      {d['solutions']}")
    lines.append(f"live at exit:   {d['live_words_at_exit']} words")
    return "\n".join(lines)


def cmd_analyze(args) -> int:
    prog = load_file(args.file)
    ann = annotate_program(prog)
    res = ann.pointsto
    shown = False
    if args.dump_tg:
        g = build_type_graph(prog.types, args.dump_tg)
        print(format_type_graph(g))
        shown = True
    if args.dump_rptg:
        key = _resolve_proc(prog, args.dump_rptg)
        print(format_rptg(res, key))
        shown = True
    if args.dump_liveness:
        key = _resolve_proc(prog, args.dump_liveness)
        t = ann.liveness[key]
        print(f"liveness of {key}:")
        print("paths:", " ".join("<" + ",".join(map(str, p)) + ">"
                                 for p in t.paths))
        for i in sorted(t.lvb):
            lv_b = ",".join(sorted(t.lvb[i]))
            lv_a = ",".join(sorted(t.lva[i]))
            lr_b = ",".join(sorted(res.region_name(key, n)
                                   for n in t.lrb[i]))
            lr_a = ",".join(sorted(res.region_name(key, n)
                                   for n in t.lra[i]))
            print(f"  ({i}_b) LV={{{lv_b}}} LR={{{lr_b}}}")
            print(f"  ({i}_a) LV={{{lv_a}}} LR={{{lr_a}}}")
        shown = True
    if args.dump_classes:
        for key, c in ann.classification.items():
            def names(nodes):
                return "{" + ",".join(sorted(
                    res.region_name(key, n) for n in nodes)) + "}"
            print(f"{key}: localR={names(c.local)} bornR={names(c.born)} "
                  f"deadR={names(c.dead)} outlivedR={names(c.outlived)} "
                  f"allocR={names(c.alloc_r)}")
        shown = True
    if not shown:
        print(f"analyzed {len(prog.procs)} procedures, "
              f"{len(prog.types)} types")
    return 0


def _resolve_proc(prog, name: str) -> str:
    if name in prog.procs:
        return name
    cands = [k for k in prog.procs if k.split("/")[0] == name]
    if len(cands) != 1:
        raise SourceError(f"unknown procedure {name}", 0, 0, prog.filename)
    return cands[0]


def cmd_transform(args) -> int:
    prog = load_file(args.file)
    ann = annotate_program(prog)
    text = emit_annotated(ann)
    if args.dump:
        out = Path(str(args.file) + ".annot")
        out.write_text(text, encoding="utf-8")
        print(f"wrote {out}")
    else:
        print(text, end="")
    return 0


def cmd_run(args) -> int:
    prog = load_file(args.file)
    ann = annotate_program(prog)
    argv = [a.strip() for a in args.args.split(";") if a.strip()] \
        if args.args else []
    page_size = args.page_size
    env_ps = os.environ.get("RBMM_PAGE_SIZE")
    if page_size is None and env_ps:
        page_size = int(env_ps)
    result: RunResult = run_deep(
        run_program, ann, args.entry, argv, all_solutions=args.all,
        check=args.check_safety, step_limit=args.step_limit,
        page_size=page_size, page_block=args.page_block, plain=args.plain)
    sys.stdout.write(result.output)
    for o in result.outputs:
        print(o)
    if args.all:
        print(f"solutions: {result.solutions}")
    d = stats_dict(Path(args.file).name, result.stats)
    if args.report == "json":
        print(json.dumps(d, indent=2))
    elif args.report == "text":
        print(render_text_report(d))
    return 0


CORPUS = [
    ("qsort.rl", "main", [], False),
    ("nrev.rl", "main", [], False),
    ("primes.rl", "main", [], False),
    ("isort.rl", "main", [], False),
    ("queens.rl", "queens", ["6"], True),
    ("crypt.rl", "main", [], False),
    ("recreate.rl", "main", [], False),
]


def corpus_dir() -> Path:
    here = Path(__file__).resolve()
    for base in (here.parent.parent.parent, here.parent.parent):
        cand = base / "corpus"
        if cand.is_dir():
            return cand
    raise FileNotFoundError("corpus directory not found")


def cmd_bench(args) -> int:
    import time
    rows = []
    for fname, entry, argv, all_sol in CORPUS:
        path = corpus_dir() / fname
        prog = load_file(path)
        ann = annotate_program(prog)
        t0 = time.time()
        result = run_deep(run_program, ann, entry, argv,
                          all_solutions=all_sol, check=args.check_safety)
        dt = time.time() - t0
        st = result.stats
        rows.append((fname, st.regions_total, st.regions_max, st.words_total,
                     st.words_max, st.slr, f"{100 * st.saving:.1f}",
                     st.solutions, f"{dt:.2f}"))
    hdr = ("program", "regions", "r.max", "words", "w.max", "slr",
           "saving%", "sols", "secs")
    widths = [max(len(str(r[i])) for r in rows + [hdr])
              for i in range(len(hdr))]
    print("  ".join(h.ljust(w) for h, w in zip(hdr, widths)))
    for r in rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rbmm")
    sub = ap.add_subparsers(dest="cmd", required=True)

    pa = sub.add_parser("analyze", help="run the static analyses and dump")
    pa.add_argument("file")
    pa.add_argument("--dump-tg", metavar="TYPE")
    pa.add_argument("--dump-rptg", metavar="PROC")
    pa.add_argument("--dump-liveness", metavar="PROC")
    pa.add_argument("--dump-classes", action="store_true")
    pa.set_defaults(fn=cmd_analyze)

    pt = sub.add_parser("transform", help="emit the region-annotated program")
    pt.add_argument("file")
    pt.add_argument("--dump", action="store_true",
                    help="write FILE.annot instead of stdout")
    pt.set_defaults(fn=cmd_transform)

    pr = sub.add_parser("run", help="execute under the region runtime")
    pr.add_argument("file")
    pr.add_argument("--entry", required=True)
    pr.add_argument("--all", action="store_true",
                    help="count all solutions")
    pr.add_argument("--args", default="",
                    help="semicolon-separated input arguments")
    pr.add_argument("--check-safety", action="store_true")
    pr.add_argument("--step-limit", type=int, default=None)
    pr.add_argument("--report", choices=["text", "json"], default=None)
    pr.add_argument("--page-size", type=int, default=None)
    pr.add_argument("--page-block", type=int, default=None)
    pr.add_argument("--plain", action="store_true",
                    help="reference interpreter: ignore region annotations")
    pr.set_defaults(fn=cmd_run)

    pb = sub.add_parser("bench", help="run the corpus and summarize")
    pb.add_argument("--check-safety", action="store_true")
    pb.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code else 0
    try:
        return args.fn(args)
    except FileNotFoundError as e:
        print(f"error: file not found: {e}", file=sys.stderr)
        return 1
    except SafetyViolation as e:
        print(f"safety violation: {e}", file=sys.stderr)
        return 3
    except (SourceError, AnalysisError, VMError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
