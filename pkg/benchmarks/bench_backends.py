"""Time the lane-change scenario under both backends.

    python benchmarks/bench_backends.py [--mu 1.6725] [--trials 3] [--particles 100] [--mc-runs 2000]

Two workloads: splitting trials, and a crude MC batch where most runs
survive the full horizon.

Both backends consume identical random streams, so the estimates printed
should agree to rounding. The first numba trial is discarded as warm-up.
"""

import argparse
import time

from gshs_risk import _backend
from gshs_risk.config import ExperimentConfig
from gshs_risk.lane_change import LaneChangeScenario
from gshs_risk.splitting import estimate_reach_probability, monte_carlo_estimate


def run(backend, scenario, trials, particles, dt):
    out = []
    with _backend.using(backend):
        for n in range(trials):
            t0 = time.perf_counter()
            res = estimate_reach_probability(scenario.model(), scenario.schedule(), particles,
                                             seed=1234, dt=dt, trial=n)
            out.append((time.perf_counter() - t0, res.gamma))
    return out


def run_mc(backend, scenario, n_runs, dt, horizon):
    with _backend.using(backend):
        t0 = time.perf_counter()
        p = monte_carlo_estimate(scenario.model(), scenario.collision(), horizon, n_runs, 1234, dt=dt)
        return time.perf_counter() - t0, p


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mu", type=float, default=1.6725)
    ap.add_argument("--trials", type=int, default=3)
    ap.add_argument("--particles", type=int, default=100)
    ap.add_argument("--mc-runs", type=int, default=2000)
    args = ap.parse_args()

    exp = ExperimentConfig()
    scenario = LaneChangeScenario(exp.scenario_config(args.mu))
    dt = exp.estimator.dt
    if not _backend.compiled():
        raise SystemExit("numba is unavailable or disabled; nothing to compare")

    horizon = exp.estimator.horizon
    run("numba", scenario, 1, args.particles, dt)
    run_mc("numba", scenario, 10, dt, horizon)
    results = {b: run(b, scenario, args.trials, args.particles, dt) for b in ("numba", "numpy")}

    print(f"mu_r={args.mu}  particles={args.particles}  trials={args.trials}")
    for b, rows in results.items():
        total = sum(t for t, _ in rows)
        gammas = " ".join(f"{g:.3e}" for _, g in rows)
        print(f"{b:<6} {total:8.2f} s  ({total / len(rows):.2f} s/trial)  gamma: {gammas}")
    speedup = sum(t for t, _ in results["numpy"]) / sum(t for t, _ in results["numba"])
    print(f"splitting speedup numba/numpy: {speedup:.1f}x")

    mc = {b: run_mc(b, scenario, args.mc_runs, dt, horizon) for b in ("numba", "numpy")}
    for b, (t, p) in mc.items():
        print(f"{b:<6} {t:8.2f} s  MC over {args.mc_runs} runs  p={p:.3e}")
    print(f"MC speedup numba/numpy: {mc['numpy'][0] / mc['numba'][0]:.1f}x")


if __name__ == "__main__":
    main()
