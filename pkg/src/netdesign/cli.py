"""Command-line front end: instance generation, single solves, benchmarks.

Exit codes: 0 solved (optimal or feasible), 2 infeasible, 3 a limit was
hit first, 64 usage or input errors.  ``NETDESIGN_SEED`` overrides the
default generator seed.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

from . import bnb, master
from .instance import (GenParams, Instance, InstanceError, generate_instance,
                       load_instance, save_instance)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_LIMIT = 3
EXIT_USAGE = 64

MODES = ("monolithic", "benders-bc", "benders-iterative")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


@dataclass
class RunReport:
    instance: str
    mode: str
    disagg: str
    reform: bool
    cover: bool
    ws_cuts: str
    cb_cuts: str
    status: str
    objective: float | None
    bound: float
    gap: float
    time_s: float
    nodes: int
    cuts_opt: int
    cuts_feas: int
    subproblems: int
    sp_time_s: float

    HEADER = ["instance", "mode", "disagg", "reform", "cover", "ws_cuts", "cb_cuts",
              "status", "objective", "bound", "gap", "time_s", "nodes", "cuts_opt",
              "cuts_feas", "subproblems", "sp_time_s", "geomean_time", "wins"]

    def csv_row(self, repro: bool = False) -> list[str]:
        t = 0.0 if repro else self.time_s
        spt = 0.0 if repro else self.sp_time_s
        return [
            self.instance, self.mode, self.disagg, str(int(self.reform)),
            str(int(self.cover)), self.ws_cuts, self.cb_cuts, self.status,
            "" if self.objective is None else repr(self.objective),
            repr(self.bound) if math.isfinite(self.bound) else "inf",
            f"{self.gap:.6f}" if math.isfinite(self.gap) else "inf",
            f"{t:.2f}", str(self.nodes), str(self.cuts_opt), str(self.cuts_feas),
            str(self.subproblems), f"{spt:.2f}", "", "",
        ]


def default_seed() -> int:
    return int(os.environ.get("NETDESIGN_SEED", "1"))


def _default_time_limit(inst: Instance) -> float:
    return 50.0 * inst.n_nodes * inst.n_periods


def run_one(inst: Instance, name: str, mode: str, cfg: master.MasterConfig,
            limits: bnb.Limits, node_log=None) -> tuple[RunReport, bnb.MipResult]:
    t0 = time.monotonic()
    if mode == "monolithic":
        mip = master.build_monolithic(inst)
        res = bnb.mip_solve(mip, None, limits, node_log)
    elif mode == "benders-bc":
        res, _ = bnb.benders_branch_cut(inst, cfg, limits, node_log)
    elif mode == "benders-iterative":
        res, _ = bnb.iterative_benders(inst, cfg, limits)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    wall = time.monotonic() - t0
    report = RunReport(
        instance=name, mode=mode, disagg=cfg.disaggregation, reform=cfg.reformulation,
        cover=cfg.cover_cuts, ws_cuts=cfg.warmstart_cut_kind, cb_cuts=cfg.callback_cut_kind,
        status=res.status, objective=res.objective, bound=res.bound, gap=res.gap,
        time_s=wall, nodes=res.nodes, cuts_opt=res.cuts_opt, cuts_feas=res.cuts_feas,
        subproblems=res.subproblems_solved, sp_time_s=res.subproblem_time)
    return report, res


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--disagg", default="nodetime", choices=master.DISAGG_LEVELS)
    p.add_argument("--reform", dest="reform", action="store_true", default=True)
    p.add_argument("--no-reform", dest="reform", action="store_false")
    p.add_argument("--cover", dest="cover", action="store_true", default=True)
    p.add_argument("--no-cover", dest="cover", action="store_false")
    p.add_argument("--warmstart", dest="warmstart", action="store_true", default=True)
    p.add_argument("--no-warmstart", dest="warmstart", action="store_false")
    p.add_argument("--ws-cuts", default="nona", choices=master.WS_CUT_KINDS)
    p.add_argument("--cb-cuts", default="canone", choices=master.CB_CUT_KINDS)
    p.add_argument("--time-limit", type=float, default=None,
                   help="seconds; default 50*|N|*|T|")
    p.add_argument("--gap", type=float, default=1e-6)
    p.add_argument("--node-limit", type=int, default=None)


def _config_from(args) -> master.MasterConfig:
    return master.MasterConfig(
        disaggregation=args.disagg, reformulation=args.reform, cover_cuts=args.cover,
        warmstart=args.warmstart, warmstart_cut_kind=args.ws_cuts,
        callback_cut_kind=args.cb_cuts)


def cmd_generate(args) -> int:
    params = GenParams(
        n_nodes=args.n, n_periods=args.periods, link_density=args.density,
        existing_network=not args.new,
        facility_budget_frac=args.fac_budget_frac,
        link_budget_frac=args.link_budget_frac)
    inst = generate_instance(params, args.seed)
    save_instance(inst, args.out)
    print(f"wrote {args.out}: N={inst.n_nodes} L={inst.n_links} T={inst.n_periods} "
          f"{'existing' if not args.new else 'new'} network")
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    cfg = _config_from(args)
    tl = args.time_limit if args.time_limit is not None else _default_time_limit(inst)
    limits = bnb.Limits(time=tl, gap=args.gap,
                        nodes=args.node_limit)
    log = open(args.node_log, "w") if args.node_log else None
    try:
        report, res = run_one(inst, args.instance, args.mode, cfg, limits, log)
    finally:
        if log:
            log.close()
    print(f"status      {report.status}")
    if report.objective is not None:
        print(f"objective   {report.objective:.6f}")
    print(f"bound       {report.bound:.6f}")
    print(f"gap         {report.gap:.6%}" if math.isfinite(report.gap) else "gap         inf")
    print(f"time        {report.time_s:.2f} s")
    print(f"nodes       {report.nodes}")
    print(f"cuts        M={report.cuts_opt} P={report.cuts_feas}")
    print(f"subproblems {report.subproblems} ({report.sp_time_s:.2f} s)")
    if report.status in ("optimal", "feasible"):
        return EXIT_OK
    if report.status == "infeasible":
        return EXIT_INFEASIBLE
    return EXIT_LIMIT


def _bench_instances(args) -> list[tuple[str, Instance]]:
    out = []
    if args.instances:
        for path in args.instances:
            out.append((path, load_instance(path)))
    else:
        seeds = [int(s) for s in args.gen_seeds.split(",")]
        for seed in seeds:
            params = GenParams(n_nodes=args.gen_n, n_periods=args.gen_periods,
                               link_density=args.gen_density,
                               existing_network=not args.gen_new)
            out.append((f"gen-n{args.gen_n}-t{args.gen_periods}-s{seed}",
                        generate_instance(params, seed)))
    return out


def _bench_configs(args) -> list[tuple[str, master.MasterConfig]]:
    def split(v):
        return [s.strip() for s in v.split(",") if s.strip()]

    def flags(v):
        return [s == "on" for s in split(v)]

    configs = []
    for mode in split(args.modes):
        if mode not in MODES:
            raise InstanceError(f"unknown mode {mode!r}")
        for disagg in split(args.disagg):
            for reform in flags(args.reform):
                for cover in flags(args.cover):
                    for ws in split(args.ws_cuts):
                        for cb in split(args.cb_cuts):
                            cfg = master.MasterConfig(
                                disaggregation=disagg, reformulation=reform,
                                cover_cuts=cover, warmstart_cut_kind=ws,
                                callback_cut_kind=cb)
                            configs.append((mode, cfg))
    return configs


def _bench_one_instance(task):
    name, inst, configs, time_limit, gap = task
    rows = []
    for mode, cfg in configs:
        tl = time_limit if time_limit is not None else _default_time_limit(inst)
        try:
            report, _ = run_one(inst, name, mode, cfg, bnb.Limits(time=tl, gap=gap))
            rows.append(report)
        except Exception as e:  # partial failures recorded per-row
            rows.append(RunReport(name, mode, cfg.disaggregation, cfg.reformulation,
                                  cfg.cover_cuts, cfg.warmstart_cut_kind,
                                  cfg.callback_cut_kind, f"error:{type(e).__name__}",
                                  None, math.inf, math.inf, 0.0, 0, 0, 0, 0, 0.0))
    return rows


def _config_key(r: RunReport) -> tuple:
    return (r.mode, r.disagg, r.reform, r.cover, r.ws_cuts, r.cb_cuts)


def write_bench_csv(path: str, reports: list[RunReport], repro: bool = False):
    by_config: dict[tuple, list[RunReport]] = {}
    for r in reports:
        by_config.setdefault(_config_key(r), []).append(r)
    wins: dict[tuple, int] = {key: 0 for key in by_config}
    by_instance: dict[str, list[RunReport]] = {}
    for r in reports:
        by_instance.setdefault(r.instance, []).append(r)
    for runs in by_instance.values():
        best = min(r.time_s for r in runs)
        for r in runs:
            if r.time_s <= best:
                wins[_config_key(r)] += 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RunReport.HEADER)
        for r in reports:
            w.writerow(r.csv_row(repro))
        for key in sorted(by_config):
            runs = by_config[key]
            times = [0.0 if repro else r.time_s for r in runs]
            mean = sum(times) / len(times)
            gm = math.exp(sum(math.log(max(t, 1e-9)) for t in times) / len(times)) \
                if not repro else 0.0
            mode, disagg, reform, cover, ws, cb = key
            w.writerow(["SUMMARY", mode, disagg, str(int(reform)), str(int(cover)),
                        ws, cb, "", "", "", "", f"{mean:.2f}", "", "", "", "", "",
                        f"{gm:.2f}", str(wins[key])])


def geometric_mean(values: list[float]) -> float:
    return math.exp(sum(math.log(v) for v in values) / len(values))


def cmd_bench(args) -> int:
    instances = _bench_instances(args)
    configs = _bench_configs(args)
    tasks = [(name, inst, configs, args.time_limit, args.gap)
             for name, inst in instances]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            chunks = list(pool.map(_bench_one_instance, tasks))
    else:
        chunks = [_bench_one_instance(t) for t in tasks]
    reports = [r for chunk in chunks for r in chunk]
    write_bench_csv(args.out, reports, args.repro)
    print(f"wrote {args.out}: {len(reports)} runs over {len(instances)} instances "
          f"x {len(configs)} configs")
    errored = [r for r in reports if r.status.startswith("error:")]
    return 1 if errored else EXIT_OK


def main(argv=None) -> int:
    parser = _Parser(prog="netdesign")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random instance file")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--periods", type=int, required=True)
    g.add_argument("--density", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=default_seed())
    g.add_argument("--new", action="store_true", help="no pre-existing network")
    g.add_argument("--fac-budget-frac", type=float, default=0.35)
    g.add_argument("--link-budget-frac", type=float, default=0.35)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("instance")
    s.add_argument("--mode", default="benders-bc", choices=MODES)
    _add_config_flags(s)
    s.add_argument("--node-log", default=None)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run a configuration matrix, emit CSV")
    b.add_argument("--instances", nargs="*", default=None)
    b.add_argument("--gen-n", type=int, default=6)
    b.add_argument("--gen-periods", type=int, default=2)
    b.add_argument("--gen-density", type=float, default=0.5)
    b.add_argument("--gen-new", action="store_true")
    b.add_argument("--gen-seeds", default=None,
                   help="comma-separated seeds; default from NETDESIGN_SEED")
    b.add_argument("--modes", default="benders-bc")
    b.add_argument("--disagg", default="nodetime")
    b.add_argument("--reform", default="on")
    b.add_argument("--cover", default="on")
    b.add_argument("--ws-cuts", default="nona")
    b.add_argument("--cb-cuts", default="canone")
    b.add_argument("--time-limit", type=float, default=None)
    b.add_argument("--gap", type=float, default=1e-6)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--repro", action="store_true",
                   help="zero the wall-time columns for byte-stable output")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    if args.command == "bench" and args.gen_seeds is None:
        args.gen_seeds = str(default_seed())
    try:
        return args.func(args)
    except InstanceError as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE
    except FileNotFoundError as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
