"""
wellgraph command line.

Subcommands: synth, graph, crm-fit, train, evaluate, bench, gradcheck, plots.
Each accepts --config <json>; explicit flags override values from the file.
The exit code is 0 only when all requested work succeeded.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional, Type, TypeVar

from pydantic import BaseModel

from .config import LOG_FORMAT, get_settings
from .importers.connectivity_importer import read_adjacency_csv, write_matrix_csv
from .importers.grid_importer import read_grid_dir
from .importers.panel_importer import read_panel_csv, write_panel_csv
from .importers.well_importer import read_wells_csv, write_wells_csv
from .schemas import (
    BenchmarkConfig,
    CaseConfig,
    CrmFitConfig,
    GradcheckConfig,
    GraphBuildConfig,
    SynthConfig,
    TrainRunConfig,
    Well,
    WellNetwork,
)
from .utils.error_handling import handle_errors

logger = logging.getLogger("wellgraph")

ConfigT = TypeVar("ConfigT", bound=BaseModel)


def _load_config(path: Optional[str], model: Type[ConfigT]) -> ConfigT:
    if not path:
        return model()
    return model.model_validate_json(Path(path).read_text())


def _json_defaults(args: argparse.Namespace, names: List[str]) -> None:
    """Fill unset flags from a plain JSON --config file."""
    if not args.config:
        return
    values = json.loads(Path(args.config).read_text())
    for name in names:
        if getattr(args, name, None) is None and name in values:
            setattr(args, name, values[name])


def _write_json(path: Path, payload) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2))
    return path


# --- synth ---

@handle_errors(default_return=1, reraise=False)
def cmd_synth(args: argparse.Namespace) -> int:
    from .services.benchmark_service import prepare_output_dir
    from .services.crm_service import make_params, params_to_dict
    from .services.synth_service import crm_world_adjacency, generate_crm_world, make_cases, write_cases

    config = _load_config(args.config, SynthConfig)
    out = prepare_output_dir(args.out, args.force)

    cases = make_cases(config.grid, config.case_count, config.seed, config.schedule,
                       config.n_injectors, config.n_producers, config.min_spacing)
    written = write_cases(cases, out, config.simulation)
    bench_cases = [
        CaseConfig(
            name=case.name,
            grid_dir=str(d / "grid"),
            wells_path=str(d / "wells.csv"),
            panel_path=str(d / "panel.csv"),
        )
        for case, d in zip(cases, written)
    ]

    if config.crm_world is not None:
        world = config.crm_world
        params = make_params(world.tau, world.J, world.F)
        panel = generate_crm_world(params, world.schedule, world.q0, noise=world.noise, seed=world.seed,
                                   initial_pressure=world.initial_pressure)
        d = out / "crm_world"
        # CRM worlds have no geometry; wells sit on a nominal line
        wells = WellNetwork(
            injectors=[Well(id=i, x=float(k), y=0.0) for k, i in enumerate(params.F.injector_ids)],
            producers=[Well(id=j, x=float(k), y=1.0) for k, j in enumerate(params.F.producer_ids)],
        )
        write_wells_csv(wells, d / "wells.csv")
        write_panel_csv(panel, d / "panel.csv")
        write_matrix_csv(crm_world_adjacency(params), d / "adjacency.csv")
        _write_json(d / "truth_params.json", params_to_dict(params))
        bench_cases.append(CaseConfig(
            name="crm_world", wells_path=str(d / "wells.csv"), panel_path=str(d / "panel.csv"),
            adjacency_path=str(d / "adjacency.csv"), c_t=config.grid.ct_per_psi,
        ))

    _write_json(out / "bench.json", BenchmarkConfig(cases=bench_cases).model_dump(mode="json"))
    logger.info("Synthesized %d cases under %s", len(bench_cases), out)
    return 0


# --- graph ---

@handle_errors(default_return=1, reraise=False)
def cmd_graph(args: argparse.Namespace) -> int:
    from .services.eikonal_service import build_graph_with_arrivals

    config = _load_config(args.config, GraphBuildConfig)
    overrides = {k: v for k, v in (("k", args.k), ("sectors", args.sectors), ("max_arrival", args.max_arrival))
                 if v is not None}
    config = GraphBuildConfig(**{**config.model_dump(), **overrides})

    grid = read_grid_dir(args.grid)
    wells = read_wells_csv(args.wells)
    graph = build_graph_with_arrivals(grid, wells, config)
    write_matrix_csv(graph.adjacency, args.out)
    print(json.dumps({"adjacency": graph.adjacency.values.tolist(), "arrivals": graph.arrivals.tolist()}))
    return 0


# --- crm-fit ---

@handle_errors(default_return=1, reraise=False)
def cmd_crm_fit(args: argparse.Namespace) -> int:
    from .services.crm_service import crm_fit_with_diagnostics, params_to_dict
    from .services.preprocessing_service import split_panel

    config = _load_config(args.config, CrmFitConfig)
    overrides = {k: v for k, v in (("c_t", args.ct), ("multistarts", args.multistarts), ("seed", args.seed))
                 if v is not None}
    config = CrmFitConfig(**{**config.model_dump(), **overrides})

    panel = read_panel_csv(args.panel)
    split = split_panel(panel, config.fractions)
    result = crm_fit_with_diagnostics(panel, split, config.c_t, multistarts=config.multistarts, seed=config.seed)
    _write_json(Path(args.out), {**params_to_dict(result.params), "diagnostics": result.diagnostics})
    logger.info("CRM parameters written to %s", args.out)
    return 0


# --- train ---

@handle_errors(default_return=1, reraise=False)
def cmd_train(args: argparse.Namespace) -> int:
    from .services.benchmark_service import mean_connectivity, prepare_output_dir
    from .services.pignn_service import save_checkpoint
    from .services.preprocessing_service import split_panel
    from .services.training_service import train_ensemble

    config = _load_config(args.config, TrainRunConfig)
    updates = {}
    if args.self_learned:
        updates["graph_mode"] = "self_learned"
    elif args.adj:
        updates["graph_mode"] = "expert"
    if args.physics is not None:
        updates["physics"] = args.physics == "on"
    if args.seeds is not None:
        updates["seeds"] = list(range(args.seeds))
    config = config.model_copy(update=updates)

    panel = read_panel_csv(args.panel)
    split = split_panel(panel, config.fractions)
    adjacency = read_adjacency_csv(args.adj) if config.graph_mode == "expert" and args.adj else None
    model_config = config.model.model_copy(update={"graph_mode": config.graph_mode})
    loss_config = config.loss if config.physics else config.loss.model_copy(update={"lambda_f": 0.0})

    out = prepare_output_dir(args.out, args.force)
    results = train_ensemble(panel, split, model_config, loss_config, config.train, adjacency, config.seeds)
    for seed, result in zip(config.seeds, results):
        save_checkpoint(result.model, out / f"seed_{seed}.json")

    write_matrix_csv(mean_connectivity([r.model for r in results]), out / "connectivity.csv")
    _write_json(out / "run.json", {
        "panel_path": str(Path(args.panel).resolve()),
        "config": config.model_dump(mode="json"),
        "checkpoints": [f"seed_{s}.json" for s in config.seeds],
        "history": {str(s): r.losses() for s, r in zip(config.seeds, results)},
        "best_epoch": {str(s): r.best_epoch for s, r in zip(config.seeds, results)},
    })
    logger.info("Trained %d models into %s", len(results), out)
    return 0


# --- evaluate ---

@handle_errors(default_return=1, reraise=False)
def cmd_evaluate(args: argparse.Namespace) -> int:
    from .services.metrics_service import rmse_by_producer, total_rmse
    from .services.pignn_service import ensemble_predict, load_checkpoint
    from .services.preprocessing_service import split_panel

    _json_defaults(args, ["run", "panel"])
    run_dir = Path(args.run)
    run = json.loads((run_dir / "run.json").read_text())
    panel = read_panel_csv(args.panel or run["panel_path"])
    split = split_panel(panel, run["config"]["fractions"])
    models = [load_checkpoint(run_dir / name) for name in run["checkpoints"]]

    q_hat = ensemble_predict(models, panel)
    test = split.test
    per_producer = rmse_by_producer(panel.q[test.start:test.stop], q_hat[test.start:test.stop], panel.producer_ids)
    evaluation = {"per_producer": per_producer, "total": total_rmse(list(per_producer.values())),
                  "test_rows": [test.start, test.stop]}
    _write_json(run_dir / "evaluation.json", evaluation)
    print(json.dumps(evaluation, indent=2))
    return 0


# --- bench ---

@handle_errors(default_return=1, reraise=False)
def cmd_bench(args: argparse.Namespace) -> int:
    from .services.benchmark_service import prepare_output_dir, run_benchmark, write_report

    config = _load_config(args.config, BenchmarkConfig)
    out = prepare_output_dir(args.out or Path(get_settings().output_dir) / "bench", args.force)

    started = time.perf_counter()
    run = run_benchmark(config)
    write_report(run, out)
    duration = time.perf_counter() - started

    if get_settings().record_runs:
        from . import crud
        from .database import SessionLocal, init_db

        init_db()
        db = SessionLocal()
        try:
            crud.create_run(db, run.report, duration, str(out))
        finally:
            db.close()

    failed = [(c.case, m.method) for c in run.report.cases for m in c.methods if m.status != "ok"]
    for case, method in failed:
        logger.error("%s / %s failed", case, method)
    return 1 if failed else 0


# --- gradcheck ---

@handle_errors(default_return=1, reraise=False)
def cmd_gradcheck(args: argparse.Namespace) -> int:
    from .autodiff import gradcheck, mixed_gradcheck
    from .services.pignn_service import forward_params, init_model, make_batch, total_loss
    from .services.preprocessing_service import split_panel
    from .services.synth_service import random_crm_world

    config = _load_config(args.config, GradcheckConfig)
    _, panel = random_crm_world(config.n_injectors, config.n_producers, config.n_rows, seed=config.seed)
    split = split_panel(panel)
    model = init_model(panel, split.train, config.model, seed=config.seed)
    batch = make_batch(model, panel, range(0, panel.n_rows))

    full = gradcheck(lambda p: total_loss(model, p, batch, config.loss), model.params, config.h)
    mixed = mixed_gradcheck(lambda p, t: forward_params(model, p, batch.inputs, t=t).q, model.params, batch.inputs.t)
    summary = {
        "parameters": int(model.params.size),
        "loss_max_relative_error": full.max_relative_error,
        "loss_passed": full.passed(config.tolerance),
        "mixed_max_relative_error": mixed.max_relative_error,
        "mixed_passed": mixed.passed(config.mixed_tolerance),
    }
    print(json.dumps(summary, indent=2))
    return 0 if summary["loss_passed"] and summary["mixed_passed"] else 1


# --- plots ---

@handle_errors(default_return=1, reraise=False)
def cmd_plots(args: argparse.Namespace) -> int:
    from .services.benchmark_service import load_report, render_case_plots

    _json_defaults(args, ["run"])
    run_dir = Path(args.run)
    report = load_report(run_dir)
    count = 0
    for case in report.cases:
        case_dir = run_dir / case.case
        if (case_dir / f"predictions_{case.case}.csv").exists():
            count += len(render_case_plots(case_dir, case))
    logger.info("Rendered %d figures", count)
    return 0


# --- parser ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wellgraph", description="Well-network production forecasting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Generate channelized cases and simulate their panels")
    p.add_argument("--config", help="SynthConfig JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="Overwrite a non-empty output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("graph", help="Build the expert adjacency matrix")
    p.add_argument("--config", help="GraphBuildConfig JSON")
    p.add_argument("--grid", required=True, help="Grid directory (grid.json, perm.csv, phi.csv)")
    p.add_argument("--wells", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--sectors", type=int, choices=(4, 8))
    p.add_argument("--max-arrival", dest="max_arrival", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("crm-fit", help="Fit CRM parameters to a panel")
    p.add_argument("--config", help="CrmFitConfig JSON")
    p.add_argument("--panel", required=True)
    p.add_argument("--ct", type=float, help="Total compressibility (1/psi)")
    p.add_argument("--multistarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_crm_fit)

    p = sub.add_parser("train", help="Train a PI-GNN seed ensemble")
    p.add_argument("--config", help="TrainRunConfig JSON")
    p.add_argument("--panel", required=True)
    graph = p.add_mutually_exclusive_group()
    graph.add_argument("--adj", help="Expert adjacency CSV")
    graph.add_argument("--self-learned", dest="self_learned", action="store_true")
    p.add_argument("--physics", choices=("on", "off"))
    p.add_argument("--seeds", type=int, help="Number of seeds (0..N-1)")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="Test-window RMSE of a trained run")
    p.add_argument("--config", help="JSON with run / panel")
    p.add_argument("--run")
    p.add_argument("--panel")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="Run every method on every case")
    p.add_argument("--config", required=True, help="BenchmarkConfig JSON")
    p.add_argument("--out", help="Output directory (default: $WELLGRAPH_OUTPUT_DIR/bench)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="Check reverse-mode and mixed derivatives against finite differences")
    p.add_argument("--config", help="GradcheckConfig JSON")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("plots", help="Re-render figures of a benchmark output directory")
    p.add_argument("--config", help="JSON with run")
    p.add_argument("--run")
    p.set_defaults(func=cmd_plots)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=get_settings().log_level, format=LOG_FORMAT)
    if args.command in ("evaluate", "plots") and not (args.run or args.config):
        parser.error(f"{args.command} needs --run or --config")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
