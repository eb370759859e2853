"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --m 4 --n 15 --repeat 20

Reports the best of ``--repeat`` runs per kernel (after one warm-up call, so
JIT compilation is excluded), then one short PD-AAM solve per backend.
"""

import argparse
import time

import numpy as np

from mmot import _kernels
from mmot.io import generate_instance
from mmot.pdaam import StoppingRule, smoothed_marginals, solve_regularized


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(problem, rng):
    m, n = problem.m, problem.n
    scaled = problem.cost / problem.gamma
    U = rng.standard_normal((m, n))
    D = rng.standard_normal(problem.cost.shape)
    log_b = _kernels.kernels("numpy")["log_kernel"](scaled, U)
    shift, _ = _kernels.kernels("numpy")["exp_marginals"](log_b)
    X = _kernels.kernels("numpy")["exp_shifted"](log_b, shift)
    X /= X.sum()
    return {
        "log_kernel": lambda k: k["log_kernel"](scaled, U),
        "exp_marginals": lambda k: k["exp_marginals"](log_b),
        "lse_line": lambda k: k["lse_line"](log_b, D, 0.3),
        "exp_shifted": lambda k: k["exp_shifted"](log_b, shift),
        "primal_stats": lambda k: k["primal_stats"](problem.cost, X),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=4)
    ap.add_argument("--n", type=int, default=15)
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--iters", type=int, default=20, help="PD-AAM iterations per backend")
    args = ap.parse_args()

    raw = generate_instance(args.m, args.n, args.seed).to_problem()
    m, n = raw.m, raw.n
    gamma = args.eps / (2 * m * np.log(n))
    problem = raw.with_gamma(gamma).with_marginals(
        smoothed_marginals(raw.marginals, args.eps / (8 * raw.cost_inf)))
    rng = np.random.default_rng(args.seed)

    print(f"m={m} n={n} entries={n**m} gamma={gamma:.3e} (C/gamma up to {raw.cost_inf / gamma:.0f})")
    print(f"{'kernel':<15}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    tables = {name: _kernels.kernels(name) for name in ("numpy", "numba")}
    for label, fn in kernel_cases(problem, rng).items():
        t_np = best_of(lambda: fn(tables["numpy"]), args.repeat)
        t_nb = best_of(lambda: fn(tables["numba"]), args.repeat)
        print(f"{label:<15}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")

    before = _kernels.BACKEND
    stop = StoppingRule(-1.0, args.iters)
    wall = {}
    for name in ("numpy", "numba"):
        _kernels.set_backend(name)
        solve_regularized(problem, StoppingRule(-1.0, 1))
        _, _, rep = solve_regularized(problem, stop)
        wall[name] = rep.wall_time
    _kernels.set_backend(before)
    per = {k: v / args.iters * 1e3 for k, v in wall.items()}
    print(f"pdaam, {args.iters} iterations: numpy {per['numpy']:.1f} ms/it, "
          f"numba {per['numba']:.1f} ms/it ({wall['numpy'] / wall['numba']:.1f}x)")


if __name__ == "__main__":
    main()
