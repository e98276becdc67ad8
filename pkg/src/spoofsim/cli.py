"""Command-line front end: ``spoofsim run --figure fig3 --out fig3.csv``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from spoofsim.errors import ConfigurationError, ModelError
from spoofsim.harness import ESTIMATORS, SYY_SAMPLERS, TrialPlan, run_sweep
from spoofsim.scenario import PRESETS, build_reference_scenario, load_config

log = logging.getLogger("spoofsim")

# presets whose figures compare against a silent Eve
_PASSIVE_PRESETS = ("fig3", "fig4", "fig8", "fig9")
_DEFAULT_Q = 1024


def _estimator_list(text: str) -> tuple[str, ...]:
    tags = tuple(t.strip() for t in text.split(",") if t.strip())
    bad = [t for t in tags if t not in ESTIMATORS]
    if bad or not tags:
        raise argparse.ArgumentTypeError(f"unknown estimator(s) {bad}; choose from {','.join(ESTIMATORS)}")
    return tags


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spoofsim",
                                     description="Monte Carlo channel estimation under pilot spoofing.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a figure sweep and write a CSV")
    run.add_argument("--figure", required=True, choices=sorted(PRESETS))
    run.add_argument("--trials", type=int, default=1000, help="Monte Carlo trials per grid point")
    run.add_argument("--seed", type=int, default=0, help="master seed")
    run.add_argument("--config", type=Path, help="YAML scenario overriding the preset geometry/sweep")
    run.add_argument("--estimators", type=_estimator_list, help="comma-separated estimator tags")
    run.add_argument("--snr-dl", type=float, dest="snr_dl", help="downlink SNR in dB (default: SNR_B)")
    run.add_argument("--q", type=int, help=f"S_yy training intervals when Q is not swept (default {_DEFAULT_Q})")
    run.add_argument("--syy-sampler", choices=SYY_SAMPLERS, default="snapshots")
    run.add_argument("--passive-baseline", action=argparse.BooleanOptionalAction, default=None,
                     help="add lse/mle/mmse rows with a silent Eve (default on for fig3/4/8/9)")
    run.add_argument("--workers", type=int, default=1, help="worker processes (results are identical)")
    run.add_argument("--out", type=Path, required=True, help="output CSV path")
    run.add_argument("--emit-plot-script", action="store_true",
                     help="also write a gnuplot script next to the CSV")
    run.add_argument("-v", "--verbose", action="store_true")
    return parser


def plot_script(csv_path: Path, sweep_var: str, estimators) -> str:
    """gnuplot commands plotting NBMSE and secrecy rate per estimator from ``csv_path``."""
    logx = "set logscale x 2\n" if sweep_var == "q" else ""
    names = " ".join(estimators)
    stem = csv_path.stem
    return f"""# gnuplot script generated by spoofsim; run: gnuplot {stem}.gp
set datafile separator ","
set datafile missing "nan"
set terminal pngcairo size 1000,420
set output "{stem}.png"
set multiplot layout 1,2
{logx}set xlabel "{sweep_var}"
set key outside bottom center horizontal
ests = "{names}"
set logscale y
set ylabel "NBMSE"
plot for [e in ests] "{csv_path.name}" every ::1 using 2:(strcol(3) eq e ? $4 : 1/0) with linespoints title e
unset logscale y
set ylabel "secrecy rate (bit/s/Hz, unnormalized)"
plot for [e in ests] "{csv_path.name}" every ::1 using 2:(strcol(3) eq e ? $7 : 1/0) with linespoints title e
unset multiplot
"""


def cmd_run(args) -> int:
    cfg, sweep, estimators = build_reference_scenario(args.figure)
    if args.config is not None:
        cfg, sweep_file = load_config(args.config)
        sweep = sweep_file or sweep
    estimators = args.estimators or estimators
    passive = args.passive_baseline if args.passive_baseline is not None else args.figure in _PASSIVE_PRESETS
    q = args.q
    if q is None and sweep.var != "q" and {"mmse-smi", "mmse-sub"} & set(estimators):
        q = _DEFAULT_Q
    plan = TrialPlan(master_seed=args.seed, trials=args.trials, estimators=estimators, sweep=sweep,
                     q_snapshots=q, snr_dl_db=args.snr_dl, passive_baseline=passive,
                     workers=args.workers, syy_sampler=args.syy_sampler)
    t0 = time.perf_counter()
    result = run_sweep(cfg, plan)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    result.to_csv(args.out)
    log.info("%s: %d rows in %.1f s -> %s", args.figure, len(result.rows), time.perf_counter() - t0, args.out)
    if args.emit_plot_script:
        tags = list(dict.fromkeys(r["estimator"] for r in result.rows))
        gp = args.out.with_suffix(".gp")
        gp.write_text(plot_script(args.out, sweep.var, tags), encoding="utf-8")
        log.info("plot script -> %s", gp)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return cmd_run(args)
    except (ConfigurationError, ModelError, OSError) as exc:
        print(f"spoofsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
