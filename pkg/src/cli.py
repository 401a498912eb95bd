"""
Command-line entry point: ``python -m src.cli <group> <command>``.

Exit codes: 0 success, 1 other failure, 2 usage or configuration error,
3 connectivity failure, 4 timeout.
"""
import argparse
import signal
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from .agent import Agent
from .bench import (
    analyze_runs,
    catalog_skills,
    generate_tasks,
    load_catalog,
    load_templates,
    read_bench_csv,
    run_benchmark,
    write_analysis_csv,
    write_bench_csv,
)
from .chat import ChatCompletionClient
from .classifier import ChatCompletionClassifier, ChatCompletionComposer
from .config import AdapterSettings, ConfigFile, NodeSettings
from .detection import ChatCompletionDetector
from .errors import (
    ConfigError,
    DescriptionConflictError,
    InvalidArgumentError,
    SkillFlowError,
    TransportError,
    TransportTimeoutError,
)
from .models import AgentId, Mode
from .protocol import ProtocolError, TaskText
from .register import SkillRegister
from .simulation import SimConfig, run_heatmap_sweep, run_ratio_sweep, run_simulation, run_trajectory_comparison
from .transport import TcpTransport
from .utils import get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CONNECT = 3
EXIT_TIMEOUT = 4


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, TransportTimeoutError):
        return EXIT_TIMEOUT
    if isinstance(error, TransportError):
        return EXIT_CONNECT
    if isinstance(error, (ConfigError, InvalidArgumentError)):
        return EXIT_USAGE
    return EXIT_FAILURE


def _overrides(args: argparse.Namespace, mapping: Dict[str, str]) -> Dict[str, Any]:
    """Flag values that were actually given, renamed to settings fields."""
    return {field: getattr(args, dest) for dest, field in mapping.items() if getattr(args, dest, None) is not None}


def _adapter_options(adapter: AdapterSettings) -> Dict[str, Any]:
    if not adapter.enabled:
        return {}
    client = ChatCompletionClient(url=adapter.url, api_key=adapter.key, model=adapter.model, timeout=adapter.timeout)
    logger.info("Using chat-completion adapter at %s (%s)", adapter.url, adapter.model)
    return {
        "classifier": ChatCompletionClassifier(client),
        "composer": ChatCompletionComposer(client),
        "detector": ChatCompletionDetector(client),
    }


# ----------------------------------------------------------------------
# sim
# ----------------------------------------------------------------------
_SIM_FLAGS = {
    "mu": "mu",
    "sigma": "sigma",
    "delta": "delta",
    "skills": "num_skills",
    "tasks": "num_tasks",
    "seeds": "seeds",
    "seed": "seed",
    "scenario": "scenario",
    "sum": "simplex_sum",
    "checkpoints": "checkpoints",
    "mu_b": "mu_b",
    "ratios": "ratios",
    "total": "ratio_total",
    "workers": "workers",
}


def cmd_sim_run(args: argparse.Namespace, config: ConfigFile) -> int:
    sim = config.section("sim", _overrides(args, _SIM_FLAGS))
    params = sim.cost_params()
    seeds = sim.seed_list
    logger.info("Simulating mu=%s sigma=%s over seeds %d..%d", sim.mu, sim.sigma, seeds[0], seeds[-1])
    result = run_trajectory_comparison(params, seeds, sim.num_skills, sim.num_tasks, with_ci=len(seeds) >= 2)
    result.write_csv(args.out)

    final = result.rows[result.rows["iteration"] == sim.num_tasks]
    for row in final.itertuples(index=False):
        logger.info("Final %s %s mean cost per task: %.4f", row.scenario, row.perspective, row.mean)
    if args.ledger:
        ledger = run_simulation(SimConfig(params, sim.scenario, sim.num_skills, sim.num_tasks, seeds[0]))
        ledger.write_csv(args.ledger)
        logger.info("Wrote %s ledger for seed %d to %s", sim.scenario.value, seeds[0], args.ledger)
    return EXIT_OK


def cmd_sim_sweep(args: argparse.Namespace, config: ConfigFile) -> int:
    sim = config.section("sim", _overrides(args, _SIM_FLAGS))
    logger.info("Heatmap sweep with seeds %d..%d", sim.seed_list[0], sim.seed_list[-1])
    result = run_heatmap_sweep(
        simplex_sum=sim.simplex_sum,
        checkpoints=sim.checkpoints,
        seeds=sim.seed_list,
        num_skills=sim.num_skills,
        sigmas=sim.sigma,
        deltas=sim.delta,
        workers=sim.workers,
    )
    result.write_csv(args.out)
    return EXIT_OK


def cmd_sim_ratio(args: argparse.Namespace, config: ConfigFile) -> int:
    sim = config.section("sim", _overrides(args, _SIM_FLAGS))
    logger.info("Ratio sweep with seeds %d..%d", sim.seed_list[0], sim.seed_list[-1])
    result = run_ratio_sweep(
        mu_b=sim.mu_b,
        ratios=sim.ratios,
        checkpoints=sim.checkpoints,
        seeds=sim.seed_list,
        total=sim.ratio_total,
        num_skills=sim.num_skills,
        sigmas=sim.sigma,
        deltas=sim.delta,
    )
    result.write_csv(args.out)
    return EXIT_OK


# ----------------------------------------------------------------------
# node
# ----------------------------------------------------------------------
_NODE_FLAGS = {
    "id": "id",
    "listen": "listen",
    "register": "register_path",
    "catalog": "catalog",
    "peers": "peers",
    "status_port": "status_port",
    "grace": "serve_grace",
    "timeout": "acquisition_timeout",
}


def build_node_agent(node: NodeSettings, adapter: Optional[AdapterSettings] = None) -> Agent:
    """Agent for ``node.id``: its catalog skills, the saved register merged with the catalog."""
    catalog = load_catalog(node.catalog)
    owned = [d for spec in catalog if spec.id == node.id for d in spec.skills]
    register = SkillRegister.load(node.register_path) if node.register_path else SkillRegister()
    try:
        for spec in catalog:
            for d in spec.skills:
                register.record(d.name, d.description, spec.id)
    except DescriptionConflictError as e:
        raise ConfigError(f"saved register disagrees with the catalog: {e}") from None
    return Agent(
        node.agent_id(),
        owned=owned,
        register=register,
        peers=node.peer_ids(),
        transport=TcpTransport(),
        acquisition_timeout=node.acquisition_timeout,
        register_path=node.register_path,
        **_adapter_options(adapter or AdapterSettings()),
    )


class _Shutdown(Exception):
    pass


def _raise_shutdown(signum, frame) -> None:
    raise _Shutdown()


def cmd_node_serve(args: argparse.Namespace, config: ConfigFile) -> int:
    node = config.section("node", _overrides(args, _NODE_FLAGS))
    agent = build_node_agent(node, config.section("adapter"))
    agent_id = node.agent_id()
    handle = agent.serve(agent_id.host, agent_id.port, node.status_port, node.serve_grace)
    signal.signal(signal.SIGTERM, _raise_shutdown)
    print(f"{agent.id.id} serving on {agent.id.address}", flush=True)
    try:
        while True:
            handle.join(1.0)
    except (KeyboardInterrupt, _Shutdown):
        logger.info("Shutting down %s", agent.id.id)
    finally:
        handle.stop()
    return EXIT_OK


def cmd_node_task(args: argparse.Namespace, config: ConfigFile) -> int:
    target = AgentId.parse("node", args.node)
    with TcpTransport().connect(target, args.timeout) as conn:
        reply = conn.request(TaskText(text=args.prompt), args.timeout)
    if isinstance(reply, ProtocolError):
        print(f"{reply.code}: {reply.detail}", file=sys.stderr)
        return EXIT_FAILURE
    if not isinstance(reply, TaskText):
        print(f"unexpected reply: {reply!r}", file=sys.stderr)
        return EXIT_FAILURE
    print(reply.text)
    return EXIT_OK


# ----------------------------------------------------------------------
# bench
# ----------------------------------------------------------------------
_BENCH_FLAGS = {
    "runs": "runs",
    "tasks": "tasks",
    "seed": "seed",
    "remote_ms": "remote_ms",
    "local_ms": "local_ms",
    "negotiation_ms": "negotiation_ms",
    "workers": "workers",
    "templates": "templates",
    "catalog": "catalog",
    "wall_clock": "wall_clock",
}


def cmd_bench_run(args: argparse.Namespace, config: ConfigFile) -> int:
    bench = config.section("bench", _overrides(args, _BENCH_FLAGS))
    logger.info("Benchmark seed %d, %d runs of %d tasks", bench.seed, bench.runs, bench.tasks)
    catalog = load_catalog(bench.catalog)
    templates = load_templates(bench.templates, catalog)
    tasks = generate_tasks(templates, bench.tasks, bench.seed, required=list(catalog_skills(catalog)))
    options = _adapter_options(config.section("adapter")) if bench.wall_clock else {}
    modes = [Mode(args.mode)] if args.mode else list(Mode)
    records = []
    for mode in modes:
        records.extend(
            run_benchmark(
                mode,
                tasks,
                bench.latency(),
                runs=bench.runs,
                seed=bench.seed,
                catalog=catalog,
                workers=bench.workers,
                wall_clock=bench.wall_clock,
                **options,
            )
        )
    write_bench_csv(records, Path(args.out_dir) / "bench.csv")
    return EXIT_OK


def cmd_bench_analyze(args: argparse.Namespace, config: ConfigFile) -> int:
    records = [r for path in args.paths for r in read_bench_csv(path)]
    baseline = [r for r in records if r.mode is Mode.BASELINE]
    skillflow = [r for r in records if r.mode is Mode.SKILLFLOW]
    analysis = analyze_runs(baseline, skillflow)
    write_analysis_csv(analysis, args.out)
    last = analysis.iloc[-1]
    logger.info(
        "Final mean time per task: baseline %.1f ms, skillflow %.1f ms (q=%.3g)",
        last["mean_baseline"], last["mean_skillflow"], last["q"],
    )
    return EXIT_OK


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skillflow", description="SkillFlow simulations, peer nodes and benchmarks")
    parser.add_argument("--config", type=str, default=None, help="Optional INI file with [sim], [node], [bench], [adapter]")
    parser.add_argument("--seed", type=int, default=None, help="Base seed for randomized commands (default 0)")
    groups = parser.add_subparsers(dest="group", required=True)

    sim = groups.add_parser("sim", help="Cost simulations").add_subparsers(dest="command", required=True)
    run = sim.add_parser("run", help="Scenario trajectories for one parameter set")
    run.add_argument("--mu", type=str, help="Mean buy,exec,comm costs, e.g. 14,2,4")
    run.add_argument("--ledger", type=str, default="", help="Also write one scenario's ledger CSV")
    run.add_argument("--scenario", type=str, choices=["baseline", "skillflow", "skillflow_paid"])
    run.add_argument("--out", type=str, default="trajectory.csv")
    run.set_defaults(handler=cmd_sim_run)

    sweep = sim.add_parser("sweep", help="Heatmap over the mu simplex")
    sweep.add_argument("--sum", type=float, help="Simplex sum of the three means (default 20)")
    sweep.add_argument("--workers", type=int)
    sweep.add_argument("--out", type=str, default="heatmap.csv")
    sweep.set_defaults(handler=cmd_sim_sweep)

    ratio = sim.add_parser("ratio", help="Communication-to-execution ratio sweep")
    ratio.add_argument("--mu-b", dest="mu_b", type=float, help="Fixed mean buy cost (default 4)")
    ratio.add_argument("--ratios", type=str, help="Comma-separated comm/exec ratios")
    ratio.add_argument("--total", type=float, help="mu_e + mu_c (default 8)")
    ratio.add_argument("--out", type=str, default="ratio.csv")
    ratio.set_defaults(handler=cmd_sim_ratio)

    for sub in (run, sweep, ratio):
        sub.add_argument("--sigma", type=str, help="Standard deviations buy,exec,comm")
        sub.add_argument("--delta", type=str, help="Cost floors buy,exec,comm")
        sub.add_argument("--skills", type=int, help="Number of skills")
        sub.add_argument("--seeds", type=int, help="Number of seeds")
        if sub is not run:
            sub.add_argument("--checkpoints", type=str, help="Comma-separated iterations")
    run.add_argument("--tasks", type=int, help="Number of tasks")

    node = groups.add_parser("node", help="Peer nodes").add_subparsers(dest="command", required=True)
    serve = node.add_parser("serve", help="Run a node until interrupted")
    serve.add_argument("--id", type=str)
    serve.add_argument("--listen", type=str, help="host:port")
    serve.add_argument("--register", type=str, help="Register file, loaded on start and saved on stop")
    serve.add_argument("--catalog", type=str, help="Skill catalog JSON")
    serve.add_argument("--peers", type=str, help="Comma-separated id=host:port")
    serve.add_argument("--status-port", dest="status_port", type=int)
    serve.add_argument("--grace", type=float, help="Seconds to drain connections on stop")
    serve.add_argument("--timeout", type=float, help="Skill acquisition timeout in seconds")
    serve.set_defaults(handler=cmd_node_serve)

    task = node.add_parser("task", help="Send a task to a running node and print the reply")
    task.add_argument("prompt", type=str)
    task.add_argument("--node", type=str, default="127.0.0.1:7001", help="host:port of the node")
    task.add_argument("--timeout", type=float, default=30.0)
    task.set_defaults(handler=cmd_node_task)

    bench = groups.add_parser("bench", help="Calendar-agent benchmark").add_subparsers(dest="command", required=True)
    brun = bench.add_parser("run", help="Run baseline and skillflow benchmark runs into <out-dir>/bench.csv")
    brun.add_argument("--runs", type=int)
    brun.add_argument("--tasks", type=int)
    brun.add_argument("--remote-ms", dest="remote_ms", type=float)
    brun.add_argument("--local-ms", dest="local_ms", type=float)
    brun.add_argument("--negotiation-ms", dest="negotiation_ms", type=float)
    brun.add_argument("--workers", type=int)
    brun.add_argument("--templates", type=str)
    brun.add_argument("--catalog", type=str)
    brun.add_argument("--mode", type=str, choices=[m.value for m in Mode], help="Run only one mode")
    brun.add_argument("--wall-clock", dest="wall_clock", action="store_const", const=True, default=None)
    brun.add_argument("--out-dir", dest="out_dir", type=str, default=".")
    brun.set_defaults(handler=cmd_bench_run)

    analyze = bench.add_parser("analyze", help="Compare baseline and skillflow runs")
    analyze.add_argument("paths", nargs="+", type=str, help="bench.csv files holding baseline and skillflow runs")
    analyze.add_argument("--out", type=str, default="analysis.csv")
    analyze.set_defaults(handler=cmd_bench_analyze)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = ConfigFile.load(args.config)
        return args.handler(args, config)
    except SkillFlowError as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)
    except Exception as e:
        logger.error("Command failed: %s", e, exc_info=True)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
