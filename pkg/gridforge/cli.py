"""
命令行入口
子命令: validate | gen | schedule | plan | verify | compare | report | sweep
"""

import argparse
import json
import logging
import sys
import time
import traceback
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from .backend_manager import SolveLimits, backend_manager
from .case_loader import (
    CASES_DIR,
    bundled_case,
    load_case,
    load_fleet_csv,
    load_tariff,
    save_case,
    save_fleet_csv,
)
from .casegen import gen_fleet, ieee33_case, synth47_case
from .config import Settings, load_settings
from .consts import (
    EXIT_INFEASIBLE,
    EXIT_INPUT_ERROR,
    EXIT_OK,
    EXIT_SOLVER_LIMIT,
    EXIT_VIOLATIONS,
    PENETRATION_SWEEP,
)
from .economics import penetration_rate
from .errors import (
    BackendUnavailableError,
    CaseValidationError,
    FleetValidationError,
    GridforgeError,
    InfeasibleError,
    InputError,
    SolverLimitError,
)
from .holistic import compare_methods, solve_holistic
from .metrics import dispatch_summary
from .models import NetworkCase, PlanOptions
from .planner import load_plan, save_plan, solve_sp2
from .render_service import write_report
from .run_store import RunStore
from .scheduler import agg_profiles, load_agg_csv, save_schedules, solve_sp1_scenarios
from .verifier import verify_plan, verify_worst_case

logger = logging.getLogger("gridforge.cli")

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


# ==================== 公共参数 ====================
def _load_case_arg(value: str) -> NetworkCase:
    """案例参数：文件路径或自带算例名"""
    path = Path(value)
    if path.exists():
        return load_case(path)
    if (CASES_DIR / f"{value}.json").exists():
        return bundled_case(value)
    raise InputError(f"case file not found: {value}")


def _prepare_case(args: argparse.Namespace) -> NetworkCase:
    case = _load_case_arg(args.case)
    if getattr(args, "fleet", None):
        case = case.with_fleet(load_fleet_csv(args.fleet))
    if getattr(args, "tariff", None):
        case = replace(case, tariff=load_tariff(args.tariff, case.periods))
        logger.info(f"使用自定义电价 {args.tariff}")
    return case


def _limits(settings: Settings) -> SolveLimits:
    return SolveLimits(
        gap=float(settings.get("mip_gap", 1e-4)),
        time_limit=settings.get("time_limit"),
        threads=int(settings.get("threads", 1)),
    )


def _oa_kwargs(settings: Settings) -> Dict[str, Any]:
    return {
        "cone_tol": float(settings.get("cone_tol", 1e-6)),
        "max_rounds": int(settings.get("oa_max_rounds", 50)),
        "seed_tangents": int(settings.get("oa_seed_tangents", 8)),
    }


def _options(args: argparse.Namespace) -> PlanOptions:
    return PlanOptions(
        reactive_support=not getattr(args, "no_reactive", False),
        dgrs_enabled=not getattr(args, "no_dgrs", False),
    )


def _store(settings: Settings) -> RunStore:
    return RunStore(settings.get("results_dir", "results"))


def _out_dir(args: argparse.Namespace, store: RunStore, kind: str, **params) -> Path:
    if getattr(args, "out", None):
        path = Path(args.out)
        path.mkdir(parents=True, exist_ok=True)
        return path
    # 同参数重跑时清掉旧目录与索引条目
    key = store.generate_run_key(kind, **params)
    if store.remove(key):
        logger.info(f"♻️ 覆盖同参数的旧运行 {key}")
    return store.run_dir(kind, **params)


def _load_agg(args: argparse.Namespace, case: NetworkCase):
    if getattr(args, "agg", None):
        return load_agg_csv(args.agg, case.periods, len(case.scenarios))
    return None


# ==================== 子命令 ====================
def cmd_validate(args: argparse.Namespace, settings: Settings) -> int:
    """校验案例文件，或检查求解后端可用性"""
    if args.backends:
        manager = backend_manager()
        for name, info in manager.status_report().items():
            mark = "✅" if info["available"] else "❌"
            print(f"{mark} {name:6s} package={info['package']} ({info['install']})")
        return EXIT_OK if manager.available_backends() else EXIT_INPUT_ERROR
    if not args.case:
        raise InputError("validate needs --case or --backends")
    for value in args.case:
        case = _load_case_arg(value)
        print(
            f"✅ {value}: {len(case.nodes)} nodes, {len(case.lines)} candidate lines, "
            f"{len(case.v2g_nodes())} V2GCS candidates, {len(case.scenarios)} scenarios"
        )
    return EXIT_OK


def cmd_gen(args: argparse.Namespace, settings: Settings) -> int:
    """生成算例或车队"""
    if args.kind == "fleet":
        if not args.case:
            raise InputError("gen fleet needs --case")
        case = _load_case_arg(args.case)
        region_mix = json.loads(args.region_mix) if args.region_mix else None
        fleet = gen_fleet(case, args.penetration, region_mix, args.seed)
        out = Path(args.out or "fleet.csv")
        save_fleet_csv(fleet, out)
        print(f"🚗 {len(fleet)} vehicles, penetration {penetration_rate(fleet, case):.4f} -> {out}")
        return EXIT_OK

    if args.kind == "ieee33":
        case = ieee33_case({} if args.no_dgrs else None)
    else:
        case = synth47_case(args.seed)
    out = Path(args.out or f"{case.name}.json")
    save_case(case, out)
    print(f"📄 {case.name}: {len(case.nodes)} nodes, {len(case.lines)} candidate lines -> {out}")
    return EXIT_OK


def cmd_schedule(args: argparse.Namespace, settings: Settings) -> int:
    """子问题一：车辆调度"""
    case = _prepare_case(args)
    store = _store(settings)
    out = _out_dir(args, store, "schedule", case=case.name, fleet=args.fleet, tariff=args.tariff)
    start = time.perf_counter()
    schedules = solve_sp1_scenarios(
        case,
        limits=_limits(settings),
        backend_name=settings.get("solver"),
        workers=int(settings.get("sp1_workers", 1)),
    )
    paths = save_schedules(schedules, out)
    store.register(
        "schedule",
        out,
        {"case": args.case, "fleet": args.fleet, "tariff": args.tariff},
        {
            "case_name": case.name,
            "objective": [s.objective for s in schedules],
            "wall_time": time.perf_counter() - start,
        },
    )
    for s in schedules:
        print(f"🚗 scenario {s.scenario}: {len(s.p_ch)} vehicles, cost {s.objective:.4f}")
    print(f"💾 {paths['sched']}, {paths['agg']}")
    return EXIT_OK


def _plan_summary(plan, case: NetworkCase, label: str, method: str, wall_time: float) -> Dict[str, Any]:
    report = plan.report
    summary = {
        "case_name": case.name,
        "label": label,
        "method": method,
        "status": getattr(report, "status", None),
        "mip_gap": getattr(report, "mip_gap", None),
        "wall_time": wall_time,
        "costs": plan.costs.to_dict() if plan.costs else None,
        "metrics": dispatch_summary(plan, case),
    }
    if any(len(s.fleet) for s in case.scenarios):
        summary["penetration"] = max(penetration_rate(s.fleet, case) for s in case.scenarios)
    return summary


def _print_costs(plan) -> None:
    for item, value in plan.costs.to_dict().items():
        print(f"  {item:14s} {value:12.4f}")


def cmd_plan(args: argparse.Namespace, settings: Settings) -> int:
    """规划：默认分解方法，--holistic 为整体方法"""
    case = _prepare_case(args)
    options = _options(args)
    limits = _limits(settings)
    oa = _oa_kwargs(settings)
    backend_name = settings.get("solver")
    store = _store(settings)
    label = options.label(args.holistic)
    out = _out_dir(
        args, store, "plan", case=case.name, label=label, fleet=args.fleet, agg=args.agg, tariff=args.tariff
    )
    dump = Path(args.dump_model) if args.dump_model else None

    start = time.perf_counter()
    if args.holistic:
        warm = None
        if settings.get("warm_start_holistic", False):
            logger.info("先以分解方法求解作为整体模型初始解")
            schedules = solve_sp1_scenarios(case, limits=limits, backend_name=backend_name)
            warm = solve_sp2(case, agg_profiles(schedules), options, limits, backend_name=backend_name, **oa)
        result = solve_holistic(
            case, None, None, options, limits, backend_name=backend_name, warm_start=warm, dump_model=dump, **oa
        )
        plan, method = result.plan, "holistic"
        save_schedules(result.schedules, out)
        extra = {"aev_cost": result.aev_cost}
    else:
        agg = _load_agg(args, case)
        if agg is None:
            schedules = solve_sp1_scenarios(
                case, limits=limits, backend_name=backend_name, workers=int(settings.get("sp1_workers", 1))
            )
            save_schedules(schedules, out)
            agg = agg_profiles(schedules)
        plan = solve_sp2(case, agg, options, limits, backend_name=backend_name, dump_model=dump, **oa)
        method, extra = "decomposition", None
    wall_time = time.perf_counter() - start

    save_plan(plan, case, out, label=label, extra=extra)
    store.register(
        "plan",
        out,
        {"case": args.case, "label": label, "fleet": args.fleet, "agg": args.agg, "tariff": args.tariff},
        _plan_summary(plan, case, label, method, wall_time),
    )
    print(f"✅ Case {label} ({method}) -> {out}")
    print(f"  lines built  {plan.built_line_keys(case)}")
    print(f"  stations     {list(plan.stations)}")
    print(f"  devices      { {k: list(v) for k, v in plan.devices.items() if v} }")
    _print_costs(plan)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, settings: Settings) -> int:
    """独立校验规划结果；--worst-case 追加最恶劣充电曲线检验"""
    case = _prepare_case(args)
    plan = load_plan(args.plan)
    agg = _load_agg(args, case)
    if agg is None:
        plan_dir = Path(args.plan) if Path(args.plan).is_dir() else Path(args.plan).parent
        if (plan_dir / "agg.csv").exists():
            agg = load_agg_csv(plan_dir / "agg.csv", case.periods, len(case.scenarios))
    report = verify_plan(
        plan,
        case,
        agg,
        tol=float(settings.get("verify_tol", 1e-6)),
        enforce_min_apparent=bool(settings.get("enforce_v2g_min_apparent", False)),
    )
    payload: Dict[str, Any] = {"verification": report.to_dict()}
    passed = report.passed

    if args.worst_case:
        worst = verify_worst_case(
            plan,
            case,
            limits=_limits(settings),
            backend_name=settings.get("solver"),
            **_oa_kwargs(settings),
        )
        payload["worst_case"] = worst.to_dict()
        passed = passed and worst.feasible
        mark = "✅" if worst.feasible else "❌"
        print(f"{mark} worst case: {worst.status}")
        for hint in worst.limiting[:10]:
            print(f"  {hint['family']} @ {hint['element']} (scenario {hint.get('scenario')}, t={hint.get('period')}): {hint.get('amount', 0):.4g}")

    for v in report.violations:
        print(f"❌ {v.family} @ {v.element} (scenario {v.scenario}, t={v.period}): {v.magnitude:.6g}")
    for v in report.warnings:
        print(f"⚠️ {v.family} @ {v.element} (scenario {v.scenario}, t={v.period}): {v.magnitude:.6g}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, ensure_ascii=False, default=str)
    print("✅ pass" if passed else "❌ fail")
    return EXIT_OK if passed else EXIT_VIOLATIONS


def cmd_compare(args: argparse.Namespace, settings: Settings) -> int:
    """分解方法与整体方法对比"""
    case = _prepare_case(args)
    store = _store(settings)
    out = _out_dir(args, store, "compare", case=case.name, fleet=args.fleet, budget=args.time_budget)
    report = compare_methods(
        case,
        options=_options(args),
        time_budget=args.time_budget,
        limits=_limits(settings),
        backend_name=settings.get("solver"),
        workers=int(settings.get("sp1_workers", 1)),
        concurrent=not args.sequential,
        **_oa_kwargs(settings),
    )
    summary = report.to_dict()
    with open(out / "compare.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, ensure_ascii=False)
    pd.DataFrame(report.gap_rows(), columns=["method", "time_s", "gap"]).to_csv(out / "gap.csv", index=False)
    for outcome in (report.decomposition, report.holistic):
        if outcome.plan is not None:
            save_plan(outcome.plan, case, out / outcome.method, label=outcome.method)
    store.register("compare", out, {"case": args.case, "fleet": args.fleet, "budget": args.time_budget}, summary)

    for outcome in (report.decomposition, report.holistic):
        total = f"{outcome.costs.total:.4f}" if outcome.costs else "-"
        print(f"📊 {outcome.method:13s} {outcome.status:10s} total {total:>12s}  {outcome.wall_time:.2f}s")
    print(f"  same builds: {report.same_builds}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace, settings: Settings) -> int:
    """汇总结果目录"""
    paths = write_report(args.results_dir or settings.get("results_dir", "results"), args.out)
    for name, path in paths.items():
        print(f"📝 {name}: {path}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, settings: Settings) -> int:
    """渗透率扫描：每个扫描点 生成车队 -> 调度 -> 规划"""
    base_case = _load_case_arg(args.case)
    options = _options(args)
    limits = _limits(settings)
    oa = _oa_kwargs(settings)
    backend_name = settings.get("solver")
    store = _store(settings)
    rates = args.penetrations or list(PENETRATION_SWEEP)
    out = _out_dir(args, store, "sweep", case=base_case.name, rates=rates, seed=args.seed)

    points: List[Dict[str, Any]] = []
    for rate in rates:
        fleet = gen_fleet(base_case, rate, seed=args.seed)
        case = base_case.with_fleet(fleet)
        point_dir = out / f"p{rate * 100:05.1f}"
        start = time.perf_counter()
        point = {"penetration": rate, "vehicles": len(fleet)}
        try:
            schedules = solve_sp1_scenarios(case, limits=limits, backend_name=backend_name)
            plan = solve_sp2(case, agg_profiles(schedules), options, limits, backend_name=backend_name, **oa)
        except (InfeasibleError, SolverLimitError) as e:
            status = "infeasible" if isinstance(e, InfeasibleError) else "limit"
            point.update(status=status, total_cost=None, wall_time=time.perf_counter() - start)
            logger.warning(f"渗透率 {rate:.1%}: {e}")
        else:
            point.update(
                status=plan.report.status,
                total_cost=plan.costs.total,
                wall_time=time.perf_counter() - start,
            )
            save_schedules(schedules, point_dir)
            save_plan(plan, case, point_dir, label=f"sweep-{rate:.3f}")
        points.append(point)
        total = f"{point['total_cost']:.4f}" if point["total_cost"] is not None else "-"
        print(f"📈 {rate:6.1%} {len(fleet):5d} vehicles  {point['status']:10s} total {total:>12s}  {point['wall_time']:.2f}s")

    pd.DataFrame(points).to_csv(out / "sweep.csv", index=False)
    store.register("sweep", out, {"case": args.case, "rates": rates, "seed": args.seed}, {"points": points})
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "gen": cmd_gen,
    "schedule": cmd_schedule,
    "plan": cmd_plan,
    "verify": cmd_verify,
    "compare": cmd_compare,
    "report": cmd_report,
    "sweep": cmd_sweep,
}


# ==================== 参数解析 ====================
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridforge", description="V2G 充电站 / 线路 / 分布式调节资源联合规划"
    )
    parser.add_argument("--config", help="TOML 或 JSON 运行配置")
    parser.add_argument("--log-level", help="日志级别 (DEBUG/INFO/WARNING/ERROR)")
    parser.add_argument("--solver", help="MILP 后端 (highs / cbc)")
    parser.add_argument("--results-dir", help="结果根目录")
    sub = parser.add_subparsers(dest="command", required=True)

    def solve_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--time-limit", type=float, help="求解时间上限（秒）")
        p.add_argument("--gap", type=float, help="MILP 相对 gap")
        p.add_argument("--oa-seed-tangents", type=int, help="每个锥的初始切平面数")
        p.add_argument("--no-dgrs", action="store_true", help="不配置分布式调节资源 (Case A)")
        p.add_argument("--no-reactive", action="store_true", help="充电站不提供无功支撑 (Case B)")

    p = sub.add_parser("validate", help="校验案例文件或检查后端")
    p.add_argument("--case", nargs="*", help="案例文件或自带算例名")
    p.add_argument("--backends", action="store_true", help="检查 MILP 后端可用性")

    p = sub.add_parser("gen", help="生成算例或车队")
    p.add_argument("kind", choices=["ieee33", "synth47", "fleet"])
    p.add_argument("--out", help="输出路径")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--case", help="gen fleet 使用的案例")
    p.add_argument("--penetration", type=float, default=0.068, help="目标渗透率 (小数)")
    p.add_argument("--region-mix", help='区域占比 JSON，如 {"office": 0.6, "residential": 0.4}')
    p.add_argument("--no-dgrs", action="store_true", help="ieee33 不配置 DGR 候选")

    p = sub.add_parser("schedule", help="子问题一：车辆调度")
    p.add_argument("--case", required=True)
    p.add_argument("--fleet", help="车队 CSV，替换案例车队")
    p.add_argument("--tariff", help="自定义电价 JSON")
    p.add_argument("--out", help="输出目录")
    p.add_argument("--time-limit", type=float)
    p.add_argument("--gap", type=float)

    p = sub.add_parser("plan", help="规划")
    p.add_argument("--case", required=True)
    p.add_argument("--fleet", help="车队 CSV，替换案例车队")
    p.add_argument("--agg", help="区域汇总曲线 CSV（跳过子问题一）")
    p.add_argument("--tariff", help="自定义电价 JSON")
    p.add_argument("--holistic", action="store_true", help="整体方法 (Case D)")
    p.add_argument("--dump-model", metavar="PATH", help="写出 LP 模型文件到 PATH")
    p.add_argument("--out", help="输出目录")
    solve_flags(p)

    p = sub.add_parser("verify", help="独立校验规划结果")
    p.add_argument("--case", required=True)
    p.add_argument("--plan", required=True, help="plan.json 或其所在目录")
    p.add_argument("--agg", help="区域汇总曲线 CSV")
    p.add_argument("--fleet", help="车队 CSV")
    p.add_argument("--tariff", help="自定义电价 JSON")
    p.add_argument("--worst-case", action="store_true", help="追加最恶劣充电曲线检验")
    p.add_argument("--out", help="校验报告 JSON")
    p.add_argument("--time-limit", type=float)
    p.add_argument("--gap", type=float)
    p.add_argument("--oa-seed-tangents", type=int)

    p = sub.add_parser("compare", help="分解方法与整体方法对比")
    p.add_argument("--case", required=True)
    p.add_argument("--fleet", help="车队 CSV")
    p.add_argument("--tariff", help="自定义电价 JSON")
    p.add_argument("--time-budget", type=float, help="每种方法的时间预算（秒）")
    p.add_argument("--sequential", action="store_true", help="依次求解而非并发")
    p.add_argument("--out", help="输出目录")
    solve_flags(p)

    p = sub.add_parser("report", help="汇总结果目录")
    p.add_argument("results_dir", nargs="?", help="结果目录，默认取配置 results_dir")
    p.add_argument("--out", help="报告输出目录")

    p = sub.add_parser("sweep", help="渗透率扫描")
    p.add_argument("--case", required=True)
    p.add_argument("--penetrations", type=float, nargs="*", help="渗透率列表 (小数)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="输出目录")
    solve_flags(p)
    return parser


def _settings(args: argparse.Namespace) -> Settings:
    return load_settings(
        args.config,
        {
            "solver": args.solver,
            "log_level": args.log_level,
            "results_dir": args.results_dir,
            "time_limit": getattr(args, "time_limit", None),
            "mip_gap": getattr(args, "gap", None),
            "oa_seed_tangents": getattr(args, "oa_seed_tangents", None),
        },
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _settings(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR

    logging.basicConfig(
        level=str(settings.get("log_level", "INFO")).upper(), format=LOG_FORMAT, force=True
    )
    try:
        return COMMANDS[args.command](args, settings)
    except (InputError, CaseValidationError, FleetValidationError, BackendUnavailableError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except InfeasibleError as e:
        print(f"infeasible: {e}", file=sys.stderr)
        for hint in e.hints:
            print(
                f"  {hint.get('family')} @ {hint.get('element')} "
                f"(scenario {hint.get('scenario')}, t={hint.get('period')}): {hint.get('amount', 0):.4g}",
                file=sys.stderr,
            )
        return EXIT_INFEASIBLE
    except SolverLimitError as e:
        print(f"solver limit: {e}", file=sys.stderr)
        return EXIT_SOLVER_LIMIT
    except GridforgeError as e:
        logger.error(f"运行失败: {e}")
        return EXIT_VIOLATIONS
    except Exception as e:
        logger.error(f"未预期的错误: {e}\n{traceback.format_exc()}")
        return EXIT_VIOLATIONS
