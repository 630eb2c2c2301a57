"""Command-line front end.

Every failure prints one line ``error[CODE]: message`` to stderr and exits
with a nonzero status, so scripts can grep for the code.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from . import config as cfgio
from .crlb import SingularFim
from .estimators import ALGORITHMS, estimate
from .harness import coupling_study, crlb_sweep, run_experiment, snr_to_noise_var
from .model import generate_channel, synthesize
from .numerics import RankDeficient

EXIT_CODES = {
    "E_USAGE": 2,
    "E_CONFIG": 3,
    "E_IO": 4,
    "E_RXFILE": 5,
    "E_DIM": 6,
    "E_SINGULAR_FIM": 7,
    "E_RANK": 8,
    "E_MODEL": 9,
}


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("E_USAGE", message)


# -- override parsing ----------------------------------------------------------

def _snr_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR list {text!r}") from None
    if not values or not all(np.isfinite(values)):
        raise argparse.ArgumentTypeError(f"bad SNR list {text!r}")
    return values


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def _algo_list(text: str) -> tuple[str, ...]:
    algos = tuple(a.strip().upper() for a in text.split(",") if a.strip())
    bad = [a for a in algos if a not in ALGORITHMS]
    if not algos or bad:
        raise argparse.ArgumentTypeError(
            f"bad algorithm list {text!r}; choose from ml, mml, sml")
    return algos


def _plan(args):
    plan = cfgio.load_plan(args.config)
    changes = {}
    if getattr(args, "snr", None) is not None:
        changes["snr_db"] = args.snr
    if getattr(args, "n_trials", None) is not None:
        changes["n_trials"] = args.n_trials
    if getattr(args, "algo", None) is not None:
        changes["algorithms"] = args.algo
    if args.seed is not None:
        changes["seed"] = args.seed
    return plan.with_overrides(**changes) if changes else plan


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


# -- commands ---------------------------------------------------------------------

def cmd_simulate(args) -> int:
    plan = _plan(args)
    progress = None
    if not args.quiet:
        def progress(done, total):
            if done == total or done % max(1, total // 20) == 0:
                print(f"  {done}/{total} trials", file=sys.stderr)
    report = run_experiment(plan, progress=progress)
    _emit(report.to_csv(), args.out)
    if args.json:
        _emit(report.to_json(), args.json)
    if not args.quiet:
        print(f"{plan.name or 'plan'}: {len(report.rows)} rows in {report.elapsed:.1f} s",
              file=sys.stderr)
    return 0


def cmd_crlb(args) -> int:
    plan = _plan(args)
    thetas = plan.crlb_thetas or (plan.imp.theta,)
    table = crlb_sweep(plan.cfg, plan.training(), plan.imp, plan.snr_db, thetas,
                       max(1, plan.crlb_realizations), plan.crlb_seed(), plan.profile)
    _emit(table.to_csv(), args.out)
    return 0


def cmd_coupling(args) -> int:
    plan = _plan(args)
    thetas = plan.crlb_thetas or (0, -plan.cfg.theta_max)
    res = coupling_study(plan.cfg, plan.training(), plan.snr_db, plan.crlb_seed(), plan.imp,
                         thetas, max(1, plan.crlb_realizations), plan.profile)
    _emit(res.table.to_csv(), args.out)
    summary = json.dumps({"thetas": list(thetas), "offsets_db": res.offsets}, indent=1)
    if args.json:
        _emit(summary + "\n", args.json)
    if not args.quiet:
        print(summary, file=sys.stderr if args.out is None else sys.stdout)
    return 0


def cmd_estimate(args) -> int:
    plan = _plan(args)
    cfg = plan.cfg
    r, n, n_rx = cfgio.read_rx(args.input)
    if (n, n_rx) != (cfg.n_subcarriers, cfg.n_rx):
        raise CliError("E_DIM", f"{args.input} holds N={n}, N_R={n_rx} but the config "
                                f"expects N={cfg.n_subcarriers}, N_R={cfg.n_rx}")
    algo = args.algo[0] if args.algo else "ML"
    if args.algo and len(args.algo) > 1:
        raise CliError("E_USAGE", "estimate takes a single --algo")
    res = estimate(algo, cfg, plan.training(), r, plan.grid)
    _emit(json.dumps(res.to_dict(), indent=1) + "\n", args.out)
    return 0


def cmd_synthesize(args) -> int:
    plan = _plan(args)
    snr = plan.snr_db[0] if args.snr is None else args.snr[0]
    noise_var = 0.0 if args.noiseless else snr_to_noise_var(snr)
    cfg = dataclasses.replace(plan.cfg, noise_var=noise_var)
    ch_seed, noise_seed = np.random.SeedSequence(plan.seed).spawn(2)
    ch = generate_channel(cfg, plan.profile, ch_seed)
    r = synthesize(cfg, plan.training(), plan.imp, ch, noise_seed)
    if args.out is None:
        raise CliError("E_USAGE", "synthesize needs --out for the received-vector file")
    cfgio.write_rx(args.out, r, cfg.n_subcarriers, cfg.n_rx)
    truth = {"eps": plan.imp.eps, "eta": plan.imp.eta, "theta": plan.imp.theta,
             "noise_var": noise_var,
             "h_real": ch.stacked().real.tolist(), "h_imag": ch.stacked().imag.tolist()}
    if args.json:
        _emit(json.dumps(truth, indent=1) + "\n", args.json)
    return 0


COMMANDS = {
    "simulate": (cmd_simulate, "Monte-Carlo MSE / P_tf sweep, CSV per (SNR, algorithm)"),
    "crlb": (cmd_crlb, "channel-averaged CRLB table across the SNR sweep"),
    "coupling": (cmd_coupling, "CRLB coupling study and its SNR offsets"),
    "estimate": (cmd_estimate, "run one estimator on a received-vector file"),
    "synthesize": (cmd_synthesize, "write a received-vector file drawn from the plan"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mimo-sync", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", required=True,
                       help="plan file, or a shipped plan name: " + ", ".join(cfgio.SHIPPED))
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--snr", type=_snr_list, help="comma-separated SNR list in dB")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        if name in ("simulate", "estimate"):
            p.add_argument("--algo", type=_algo_list, help="comma list of ml, mml, sml")
        if name == "simulate":
            p.add_argument("--n-trials", type=_positive_int, help="trials per SNR point")
        if name in ("simulate", "coupling", "synthesize"):
            p.add_argument("--json", help="also write a JSON report to this path")
        if name == "estimate":
            p.add_argument("--input", required=True, help="received-vector file")
        if name == "synthesize":
            p.add_argument("--noiseless", action="store_true", help="omit the noise")
    return parser


def _classify(exc: BaseException) -> tuple[str, str]:
    if isinstance(exc, CliError):
        return exc.code, str(exc)
    if isinstance(exc, cfgio.ConfigError):
        return "E_CONFIG", str(exc)
    if isinstance(exc, cfgio.RxFileError):
        return "E_RXFILE", str(exc)
    if isinstance(exc, OSError):
        return "E_IO", str(exc)
    if isinstance(exc, SingularFim):
        return "E_SINGULAR_FIM", f"{exc} (training design or channel draw is degenerate)"
    if isinstance(exc, RankDeficient):
        return "E_RANK", str(exc)
    if isinstance(exc, (ValueError, ArithmeticError, np.linalg.LinAlgError)):
        return "E_MODEL", str(exc)
    raise exc


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command][0](args)
    except Exception as exc:      # noqa: BLE001 - every failure becomes an exit code
        code, message = _classify(exc)
        print(f"error[{code}]: {' '.join(message.split())}", file=sys.stderr)
        return EXIT_CODES[code]


if __name__ == "__main__":
    sys.exit(main())
