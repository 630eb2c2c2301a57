"""Monte-Carlo MSE of the three estimators against the channel-aware CRLB.

Runs a shipped plan (``smoke`` by default, which finishes in seconds) and
prints MSE / CRLB ratios per SNR; ``--plan operating_point --trials 20`` gives a
quick look at the full-size operating point.

    python demos/mse_sweep.py --plan operating_point --trials 20
"""

import argparse

from mimosync import config, harness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--plan", default="smoke", choices=config.SHIPPED)
    ap.add_argument("--trials", type=int, default=None)
    args = ap.parse_args()

    plan = config.load_plan(args.plan)
    if args.trials:
        plan = plan.with_overrides(n_trials=args.trials)
    rep = harness.run_experiment(plan)
    print(f"{'SNR':>4} {'algo':>4} {'mse eps':>10} {'/crlb':>7} {'mse eta':>10} {'/crlb':>7} {'P_tf':>6}")
    for row in rep.rows:
        print(f"{row.snr_db:4.0f} {row.algo:>4} {row.mse_eps:10.3e} "
              f"{row.mse_eps / row.crlb_eps_wc:7.2f} {row.mse_eta:10.3e} "
              f"{row.mse_eta / row.crlb_eta_wc:7.2f} {row.p_tf:6.3f}")
    print(f"{plan.n_trials} trials per point, {rep.elapsed:.1f} s")


if __name__ == "__main__":
    main()
