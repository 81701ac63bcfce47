"""certsmooth entry point."""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .certifiers import create_certifier
from .config import RunConfig, config_hash, config_seeds, load_config, validate_config
from .data import load_examples, make_splits, save_examples, stack
from .errors import ArtifactMissingError, CertSmoothError, OutputWriteError, OverwriteRefusedError
from .evaluation import (
    bench,
    binomial_variance_agreement,
    certified_accuracy_table,
    certify_examples,
    EstimationReport,
    estimation_report,
    load_log,
    median_relative_error,
    save_accuracy_table,
    save_log,
    variance_study,
)
from .ledger import RunLedger, reproducibility_stanza
from .model import TrainStep, init_params, load_weights, save_weights, train
from .smoothing import SmoothingParams
from .surrogate import build_counts_dataset, checkpoint_path, load_counts_dataset, mean_js, train_surrogate


@dataclass
class Workspace:
    """Artifact layout under the configured workdir."""
    config: RunConfig
    force: bool = False
    outputs: list[str] = field(default_factory=list)

    @property
    def root(self) -> Path:
        return Path(self.config.paths.workdir)

    @property
    def train_path(self) -> Path:
        return self.root / "data" / "train.csv"

    @property
    def test_path(self) -> Path:
        return self.root / "data" / "test.csv"

    @property
    def sigma_dir(self) -> Path:
        return self.root / f"sigma_{self.config.smoothing.sigma:g}"

    @property
    def base_path(self) -> Path:
        return self.sigma_dir / "base.npw"

    @property
    def counts_path(self) -> Path:
        return self.sigma_dir / "counts.csds"

    @property
    def ledger_path(self) -> Path:
        return self.root / "ledger.jsonl"

    def surrogate_path(self, tag: str | None) -> Path:
        return self.sigma_dir / (f"surrogate_{tag}.npw" if tag else "surrogate.npw")

    def log_path(self, method: str, n: int) -> Path:
        return self.sigma_dir / f"certify_{method}_N{n}.tsv"

    def claim(self, *paths: Path) -> None:
        """Register outputs, refusing to overwrite without --force."""
        for path in paths:
            if path.exists() and not self.force:
                raise OverwriteRefusedError(f"{path} exists; pass --force to overwrite")
        self.outputs.extend(str(p) for p in paths)

    def require(self, path: Path, what: str) -> Path:
        if not path.exists():
            raise ArtifactMissingError(f"{what} not found: {path}")
        return path

    def smoothing_params(self) -> SmoothingParams:
        s = self.config.smoothing
        return SmoothingParams(sigma=s.sigma, n=s.n, n0=s.n0, alpha=s.alpha, seed=s.seed)


def _progress(tag: str) -> Callable[[int, int], None]:
    def report(done: int, total: int) -> None:
        step = max(1, total // 10)
        if done % step == 0 or done == total:
            print(f"[{tag}] {done}/{total}")
    return report


def _train_logger(tag: str, every: int = 10) -> Callable[[TrainStep], None]:
    def report(step: TrainStep) -> None:
        if step.batch == 0 and step.epoch % every == 0:
            print(f"[{tag}] epoch {step.epoch:4d}  loss {step.loss:.5f}  lr {step.lr:.2e}")
    return report


def _parse_widths(text: str) -> list[int]:
    try:
        widths = [int(w) for w in text.split(",") if w.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")
    if not widths or any(w < 1 for w in widths):
        raise argparse.ArgumentTypeError(f"widths must be positive, got '{text}'")
    return widths


# === Commands ===

def cmd_gen_data(ws: Workspace, args: argparse.Namespace) -> None:
    d = ws.config.data
    ws.claim(ws.train_path, ws.test_path)
    train_split, test_split = make_splits(
        d.generator, d.d, d.k, d.n_train, d.n_test, d.separation, d.blob_std, d.seed,
    )
    header = f"generator={d.generator} d={d.d} k={d.k} seed={d.seed}"
    save_examples(ws.train_path, train_split, header)
    save_examples(ws.test_path, test_split, header)
    print(f"[Data] {len(train_split)} train / {len(test_split)} test examples, k={d.k}, d={d.d}")


def cmd_train_base(ws: Workspace, args: argparse.Namespace) -> None:
    examples = load_examples(ws.require(ws.train_path, "Train split"))
    ws.claim(ws.base_path)
    inputs, labels = stack(examples)
    net = ws.config.base
    layer_dims = [inputs.shape[1], *net.hidden, ws.config.data.k]
    f = init_params(layer_dims, head="classifier", seed=net.train.seed)
    f = train(
        f, inputs, labels, "cross_entropy", net.train,
        noise_sigma=ws.config.smoothing.sigma,
        callback=_train_logger("Train"),
    )
    save_weights(f, ws.base_path)
    print(f"[Train] Base classifier {layer_dims} saved to {ws.base_path}")


def cmd_sample(ws: Workspace, args: argparse.Namespace) -> None:
    f = load_weights(ws.require(ws.base_path, "Base classifier"))
    examples = load_examples(ws.require(ws.train_path, "Train split"))
    if not (args.resume and checkpoint_path(ws.counts_path).exists()):
        ws.claim(ws.counts_path)
    else:
        ws.outputs.append(str(ws.counts_path))
    n = ws.config.surrogate.n_samples
    s = ws.config.smoothing
    dataset = build_counts_dataset(
        f, examples, s.sigma, n, s.seed,
        path=ws.counts_path,
        resume=args.resume,
        workers=ws.config.runtime.threads,
        progress=_progress("Sampling"),
    )
    print(f"[Sampling] {len(dataset.records)} count vectors at N={n} saved to {ws.counts_path}")


def cmd_train_surrogate(ws: Workspace, args: argparse.Namespace) -> None:
    dataset = load_counts_dataset(ws.require(ws.counts_path, "Counts dataset"))
    examples = load_examples(ws.require(ws.train_path, "Train split"))
    out = ws.surrogate_path(args.tag)
    ws.claim(out)
    net = ws.config.surrogate.network
    h = train_surrogate(dataset, examples, net.hidden, net.train, callback=_train_logger("Surrogate"))
    save_weights(h, out)
    print(f"[Surrogate] {h.layer_dims} mean JS {mean_js(h, dataset, examples):.6f}, saved to {out}")


def cmd_certify(ws: Workspace, args: argparse.Namespace) -> None:
    f = load_weights(ws.require(ws.base_path, "Base classifier"))
    examples = load_examples(ws.require(ws.test_path, "Test split"))
    if args.limit:
        examples = examples[:args.limit]

    h = None
    tag = args.method
    if args.method == "surrogate":
        h = load_weights(ws.require(ws.surrogate_path(args.tag), "Surrogate"))
        if args.tag:
            tag = f"surrogate_{args.tag}"

    certifier = create_certifier(args.method, f, ws.smoothing_params(), surrogate=h, tag=tag)
    out = ws.log_path(tag, certifier.params.n)
    ws.claim(out)
    log = certify_examples(
        certifier, examples,
        workers=ws.config.runtime.threads,
        record_time=ws.config.evaluation.record_time and not args.no_timing,
        progress=_progress("Certify"),
    )
    save_log(log, out)
    row = certified_accuracy_table(log, ws.config.evaluation.radii)
    print(f"[Certify] {tag} N={certifier.params.n}: ACR {row['acr']:.4f} over {len(log)} examples")


def cmd_evaluate(ws: Workspace, args: argparse.Namespace) -> None:
    n = ws.config.smoothing.n
    reference = args.reference or ws.log_path("mc", n)
    compare = args.compare or sorted(ws.sigma_dir.glob(f"certify_surrogate*_N{n}.tsv"))
    ws.require(reference, "Sampling log")
    for path in compare:
        ws.require(path, "Surrogate log")

    accuracy_out = ws.sigma_dir / "accuracy.tsv"
    estimation_out = ws.sigma_dir / "estimation.tsv"
    ws.claim(accuracy_out, estimation_out)

    mc_log = load_log(reference)
    tables = {_log_name(mc_log, reference): certified_accuracy_table(mc_log, ws.config.evaluation.radii)}
    baseline = ws.log_path("baseline", 100)
    if baseline.exists() and baseline not in compare:
        log = load_log(baseline)
        tables[_log_name(log, baseline)] = certified_accuracy_table(log, ws.config.evaluation.radii)

    report = EstimationReport()
    r_min = ws.config.evaluation.r_min
    for path in compare:
        log = load_log(path)
        name = _log_name(log, path)
        tables[name] = certified_accuracy_table(log, ws.config.evaluation.radii)
        report.rows.extend(estimation_report(mc_log, log, r_min, model=name).rows)
        print(f"[Evaluate] {name}: median relative error {median_relative_error(mc_log, log, r_min):.4f}")

    save_accuracy_table(tables, accuracy_out)
    report.save(estimation_out)
    for name, row in tables.items():
        print(f"[Evaluate] {name:<20} ACR {row['acr']:.4f}")


def _log_name(log, path: Path) -> str:
    return log.rows[0].method if log.rows else path.stem


def cmd_bench(ws: Workspace, args: argparse.Namespace) -> None:
    f = load_weights(ws.require(ws.base_path, "Base classifier"))
    h = load_weights(ws.require(ws.surrogate_path(args.tag), "Surrogate"))
    examples = load_examples(ws.require(ws.test_path, "Test split"))
    out = ws.sigma_dir / "bench.tsv"
    ws.claim(out)
    b = ws.config.bench
    table = bench(f, h, examples[:b.examples], ws.smoothing_params(), b.n_sweep, b.repeats, b.warmup)
    table.save(out)


def cmd_variance(ws: Workspace, args: argparse.Namespace) -> None:
    f = load_weights(ws.require(ws.base_path, "Base classifier"))
    examples = load_examples(ws.require(ws.test_path, "Test split"))
    out = ws.sigma_dir / "variance.tsv"
    ws.claim(out)
    v = ws.config.variance
    study = variance_study(
        f, examples[:v.examples], ws.config.smoothing.sigma, v.n, v.resamples,
        ws.config.smoothing.seed, workers=ws.config.runtime.threads,
    )
    study.save(out)
    print(f"[Variance] mean per-class variance {study.normalized_pct:.4f}% of N={v.n}")
    print(f"[Variance] binomial agreement {binomial_variance_agreement(study):.3f}")


COMMANDS: dict[str, Callable[[Workspace, argparse.Namespace], None]] = {
    "gen-data": cmd_gen_data,
    "train-base": cmd_train_base,
    "sample": cmd_sample,
    "train-surrogate": cmd_train_surrogate,
    "certify": cmd_certify,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
    "variance": cmd_variance,
}


def check_config(config_path: Path | None = None) -> int:
    """Check configuration and print status."""
    print("certsmooth - Configuration Check")
    print("=" * 40)

    try:
        config = load_config(config_path)
        print("[OK] Config file loaded successfully")
    except FileNotFoundError as e:
        print(f"[ERROR] {e}")
        return 1
    except CertSmoothError as e:
        print(f"[ERROR] Failed to parse config: {e}")
        return e.exit_code

    issues = validate_config(config)

    if issues:
        print("\n[WARNINGS]")
        for issue in issues:
            print(f"  - {issue}")
    else:
        print("[OK] Configuration valid")

    print("\n" + "-" * 40)
    print("Configuration Summary:")
    print("-" * 40)
    print(f"  Task:        {config.data.generator} d={config.data.d} k={config.data.k}")
    print(f"  Splits:      {config.data.n_train} train / {config.data.n_test} test")
    print(f"  Base net:    hidden {config.base.hidden}")
    print(f"  Surrogate:   hidden {config.surrogate.network.hidden}, N={config.surrogate.n_samples}")
    print(f"  Smoothing:   sigma={config.smoothing.sigma} N={config.smoothing.n} "
          f"N0={config.smoothing.n0} alpha={config.smoothing.alpha}")
    print(f"  Workdir:     {config.paths.workdir}")
    print(f"  Config hash: {config_hash(config)}")
    print("-" * 40)

    if issues:
        print("\n[WARNING] Configuration has issues. Please fix before running.")
        return 1

    print("\n[READY] Configuration valid.")
    return 0


def _apply_flags(config: RunConfig, args: argparse.Namespace) -> None:
    """Command-line flags take precedence over environment and file."""
    s = config.smoothing
    if args.sigma is not None:
        s.sigma = args.sigma
    if args.n is not None:
        s.n = args.n
    if args.n0 is not None:
        s.n0 = args.n0
    if args.alpha is not None:
        s.alpha = args.alpha
    if args.seed is not None:
        config.data.seed = args.seed
        config.base.train.seed = args.seed
        config.surrogate.network.train.seed = args.seed
        s.seed = args.seed
    if args.threads is not None:
        config.runtime.threads = args.threads
    if args.workdir is not None:
        config.paths.workdir = str(args.workdir)
    if getattr(args, "hidden", None):
        config.surrogate.network.hidden = args.hidden
    if getattr(args, "samples", None):
        config.surrogate.n_samples = args.samples


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="Path to config.yaml file")
    common.add_argument("--workdir", type=Path, default=argparse.SUPPRESS, help="Artifact directory")
    common.add_argument("--force", action="store_true", default=argparse.SUPPRESS, help="Overwrite existing outputs")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="Worker threads (1 = bitwise reproducible)")
    common.add_argument("--sigma", type=float, default=argparse.SUPPRESS, help="Noise level")
    common.add_argument("--n", type=int, default=argparse.SUPPRESS, help="Estimation samples N")
    common.add_argument("--n0", type=int, default=argparse.SUPPRESS, help="Selection samples N0")
    common.add_argument("--alpha", type=float, default=argparse.SUPPRESS, help="Failure probability")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="Override every seed")

    parser = argparse.ArgumentParser(
        prog="certsmooth",
        description="Randomized-smoothing certification by sampling and by surrogate",
        parents=[common],
    )
    parser.add_argument("--version", action="store_true", help="Show version and exit")

    sub = parser.add_subparsers(dest="command")
    sub.add_parser("check-config", parents=[common], help="Check configuration and exit")
    sub.add_parser("gen-data", parents=[common], help="Write train/test splits")
    sub.add_parser("train-base", parents=[common], help="Train the base classifier with noise augmentation")

    p = sub.add_parser("sample", parents=[common], help="Build the counts dataset")
    p.add_argument("--resume", action="store_true", help="Continue from the checkpoint file")
    p.add_argument("--samples", type=int, default=None, help="Samples per example (default surrogate.n_samples)")

    p = sub.add_parser("train-surrogate", parents=[common], help="Fit the surrogate to the counts dataset")
    p.add_argument("--hidden", type=_parse_widths, default=None, help="Hidden widths, e.g. 32,32")
    p.add_argument("--tag", default=None, help="Model tag for capacity variants")

    p = sub.add_parser("certify", parents=[common], help="Certify the test split")
    p.add_argument("--method", choices=["mc", "surrogate", "baseline"], default="mc")
    p.add_argument("--tag", default=None, help="Surrogate model tag")
    p.add_argument("--limit", type=int, default=None, help="Only the first LIMIT test examples")
    p.add_argument("--no-timing", action="store_true", help="Write time_ms as 0")

    p = sub.add_parser("evaluate", parents=[common], help="Accuracy table and estimation report")
    p.add_argument("--reference", type=Path, default=None, help="Sampling certification log")
    p.add_argument("--compare", type=Path, nargs="+", default=None, help="Surrogate certification logs")

    p = sub.add_parser("bench", parents=[common], help="Time both certifiers over an N sweep")
    p.add_argument("--tag", default=None, help="Surrogate model tag")

    sub.add_parser("variance", parents=[common], help="Resample counts to measure sampling variance")
    return parser


_GLOBAL_DEFAULTS = {
    "config": None, "workdir": None, "force": False, "threads": None,
    "sigma": None, "n": None, "n0": None, "alpha": None, "seed": None,
}


def main(argv: list[str] | None = None) -> int:
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in _GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, default)

    if args.version:
        from . import __version__
        print(f"certsmooth v{__version__}")
        return 0

    if args.command is None:
        parser.print_help()
        return 1

    if args.command == "check-config":
        return check_config(args.config)

    try:
        config = load_config(args.config)
    except FileNotFoundError as e:
        print(f"[ERROR] {e}")
        return 1
    except CertSmoothError as e:
        print(f"[ERROR] {e}")
        return e.exit_code

    _apply_flags(config, args)
    issues = validate_config(config)
    if issues:
        print("[ERROR] Configuration issues:")
        for issue in issues:
            print(f"  - {issue}")
        return 1

    ws = Workspace(config, force=args.force)
    digest = config_hash(config)
    seeds = config_seeds(config)
    ledger = RunLedger(ws.ledger_path, max_entries=config.runtime.ledger_max_entries)
    print(reproducibility_stanza(args.command, digest, seeds))

    try:
        try:
            COMMANDS[args.command](ws, args)
        except OSError as e:
            raise OutputWriteError(e) from e
    except CertSmoothError as e:
        print(f"[ERROR] {e}")
        ledger.log(args.command, digest, seeds, ws.outputs, status="error", exit_code=e.exit_code)
        return e.exit_code
    except KeyboardInterrupt:
        print("\n[Interrupted]")
        ledger.log(args.command, digest, seeds, ws.outputs, status="interrupted", exit_code=130)
        return 130

    ledger.log(args.command, digest, seeds, ws.outputs)
    print(f"[OK] {args.command}: {', '.join(ws.outputs) or 'no outputs'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
