"""
Command line entry point.

    python -m nearfar_codebook run --preset fig4a_sweep --desk --out results.csv
    python -m nearfar_codebook train-codebook --preset fig4b_hybrid --desk --out codebook.bin
    python -m nearfar_codebook info --preset fig2_nmse

Exit codes: 0 success, 2 configuration or I/O error, 3 numerical failure.
"""

import argparse
import sys
from typing import List, Optional

from pydantic import ValidationError

from .core.array.geometry import rayleigh_distance
from .core.codebook.storage import save_learned_codebook
from .core.config import ScenarioConfig
from .core.errors import ConfigError, IoFailure, NumericalError, TrialFailure
from .experiments import (
    PRESETS,
    build_dictionary,
    emit_csv,
    run_scenario,
    scenario_geometry,
    train_learned_codebook,
)
from .loader.config_loader import resolve_config
from .loader.template_loader import template_loader
from .utils.logger import LogCategory, LogLevel, logger
from .utils.report import format_codebooks, format_results

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def csv_comment(cfg: ScenarioConfig) -> str:
    return template_loader.render_template(
        "csv_comment",
        scenario_id=cfg.scenario_id,
        seed=cfg.seed,
        trials=cfg.trials,
        rows=cfg.rows,
        cols=cfg.cols,
        near=cfg.near_field_ues,
        far=cfg.far_field_ues,
        estimation=cfg.estimation,
    )


def render_info(cfg: ScenarioConfig) -> str:
    geom = scenario_geometry(cfg)
    codebooks = [build_dictionary(kind, cfg, geom) for kind in ("dft", "polar", "wavenumber")]
    return template_loader.render_template(
        "info",
        cfg=cfg,
        rayleigh=rayleigh_distance(geom),
        ksvd=cfg.ksvd_config(),
        codebooks=format_codebooks(codebooks),
    )


def _resolve(args: argparse.Namespace) -> ScenarioConfig:
    overrides = {
        "seed": getattr(args, "seed", None),
        "trials": getattr(args, "trials", None),
        "workers": getattr(args, "workers", None),
    }
    cfg = resolve_config(args.preset, args.config, args.desk, **overrides)
    logger.config_loaded(f"Resolved scenario '{cfg.scenario_id}'", details=cfg.model_dump_json())
    return cfg


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    table = run_scenario(cfg)
    print(format_results(table))
    if table.retrain_recommended:
        print("Learned codebook: retraining recommended")
    if args.out:
        emit_csv(table, args.out, comment=csv_comment(cfg))
    return EXIT_OK


def cmd_train_codebook(args: argparse.Namespace) -> int:
    cfg = _resolve(args)
    learned = train_learned_codebook(cfg)
    save_learned_codebook(
        learned,
        cfg.ksvd_config(),
        args.out,
        projected=cfg.project_learned,
        extra={
            "scenario": cfg.scenario_id,
            "training_samples": cfg.training_samples,
            "train_on_estimates": str(cfg.train_on_estimates).lower(),
        },
    )
    print(f"Learned codebook: {learned.dictionary.num_elements} x {learned.dictionary.size}, "
          f"{len(learned.history)} iterations, final NMSE {learned.final_nmse:.3e}")
    return EXIT_OK


def cmd_info(args: argparse.Namespace) -> int:
    print(render_info(_resolve(args)), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nearfar_codebook", description="Near/far-field codebook simulator")
    parser.add_argument("--log-level", choices=[level.name for level in LogLevel], default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p: argparse.ArgumentParser):
        p.add_argument("--preset", required=True, choices=sorted(PRESETS))
        p.add_argument("--desk", action="store_true", help="8x8 array, 4 UEs, at most 50 trials")
        p.add_argument("--config", default=None, help="flat KEY=value scenario file applied on top of the preset")
        p.add_argument("--seed", type=int, default=None)

    run = sub.add_parser("run", help="run a Monte Carlo scenario")
    scenario_args(run)
    run.add_argument("--trials", type=int, default=None)
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--out", default=None, help="CSV output path")
    run.set_defaults(handler=cmd_run)

    train = sub.add_parser("train-codebook", help="train and save the learned codebook")
    scenario_args(train)
    train.add_argument("--workers", type=int, default=None)
    train.add_argument("--out", required=True, help="binary codebook path")
    train.set_defaults(handler=cmd_train_codebook)

    info = sub.add_parser("info", help="print the resolved scenario")
    scenario_args(info)
    info.set_defaults(handler=cmd_info)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_level:
        logger.set_level(LogLevel[args.log_level])

    try:
        return args.handler(args)
    except TrialFailure as e:
        logger.system_error(str(e))
        return EXIT_CONFIG if isinstance(e.cause, ConfigError) else EXIT_NUMERICAL
    except (ConfigError, ValidationError, IoFailure) as e:
        logger.config_error(str(e))
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error(str(e), LogCategory.SYSTEM)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
