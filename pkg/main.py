import argparse
import sys
from typing import List, Optional

# Import custom exceptions and AppManager from the app package
from app.exceptions import (
    AcceptanceError, AdmmNetError, ArtifactError, DomainError, InvalidConfigurationError,
    MissingRequiredDataError, TrainingDivergenceError, UnhandledExperimentKindError
)
from app.app_manager import BENCH_KINDS, AppManager


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="main.py",
        description="Sparse radar imaging with interference removal: ADMM and ADMM-Net.")
    verbs = parser.add_subparsers(dest="verb", required=True)

    gen = verbs.add_parser("gen", help="generate a dataset")
    gen.add_argument("--config", required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)

    solve = verbs.add_parser("solve", help="solve a dataset with ADMM")
    solve.add_argument("--dataset", required=True)
    solve.add_argument("--params", required=True)
    solve.add_argument("--stop", default="oracle", help="oracle, oracle_linear, residual or fixed:K")
    solve.add_argument("--out", required=True)
    solve.add_argument("--config", default=None, help="radar and grid sections (default radar when omitted)")

    train = verbs.add_parser("train", help="train an ADMM-Net")
    train.add_argument("--net-init", required=True)
    train.add_argument("--dataset", required=True)
    train.add_argument("--train-cfg", required=True)
    train.add_argument("--ckpt-out", required=True)
    train.add_argument("--history-out", required=True)

    infer = verbs.add_parser("infer", help="run a trained ADMM-Net on a dataset")
    infer.add_argument("--net", required=True)
    infer.add_argument("--dataset", required=True)
    infer.add_argument("--out", required=True)

    bench = verbs.add_parser("bench", help="run a benchmark experiment")
    bench.add_argument("experiment", choices=sorted(BENCH_KINDS))
    bench.add_argument("--config", required=True)
    bench.add_argument("--out", required=True)

    export = verbs.add_parser("export", help="export the dictionary")
    export.add_argument("--config", required=True)
    export.add_argument("--out", required=True)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Runs one command-line verb and maps failures to exit codes:
    0 success, 2 configuration or usage error, 3 acceptance bound violated,
    4 artifact error, 5 training divergence, 1 any other application error.
    """
    args = build_parser().parse_args(argv)
    am = AppManager()
    try:
        if args.verb == "gen":
            am.generate(args.config, args.n, args.seed, args.out)
        elif args.verb == "solve":
            am.solve(args.dataset, args.params, args.stop, args.out, args.config)
        elif args.verb == "train":
            am.train(args.net_init, args.dataset, args.train_cfg, args.ckpt_out, args.history_out)
        elif args.verb == "infer":
            am.infer(args.net, args.dataset, args.out)
        elif args.verb == "bench":
            am.bench(args.experiment, args.config, args.out)
        elif args.verb == "export":
            am.export(args.config, args.out)
        return 0

    except (InvalidConfigurationError, MissingRequiredDataError, UnhandledExperimentKindError, DomainError) as e:
        am.log_error(f"Configuration error: {e}")
        return 2

    except AcceptanceError as e:
        am.log_error(f"Acceptance check failed: {e}")
        return 3

    except ArtifactError as e:
        am.log_error(f"Artifact error: {e}")
        return 4

    except TrainingDivergenceError as e:
        history = (e.details or {}).get("history")
        am.log_error(f"Training diverged after {len(history.epoch) if history else 0} epoch(s): {e}")
        return 5

    except AdmmNetError as e:
        am.log_error(f"Application error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
