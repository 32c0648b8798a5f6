"""CMA-ES on the classic sphere and Rosenbrock benchmarks.

Shows the ask/tell loop, step-size adaptation, and the stop reasons.  The
optimizer maximizes, so benchmark values are negated on the way in.
"""

import numpy as np

from seesaw_neat.cmaes import CmaEs, CmaesConfig


def sphere(x):
    return float(np.sum(x ** 2))


def rosenbrock(x):
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1 - x[:-1]) ** 2))


def optimize(name, fn, dimension, start, sigma, max_evaluations, seed):
    es = CmaEs(CmaesConfig(dimension=dimension,
                           init_sigma=sigma,
                           initial_mean=np.full(dimension, start),
                           max_evaluations=max_evaluations,
                           target_fitness=-1e-12))
    rng = np.random.default_rng(seed)
    print(f"\n{name} ({dimension}-D), population {es.lam}, sigma0 {sigma}")
    gen = 0
    while not es.should_stop():
        xs = es.ask(rng)
        es.tell(xs, [-fn(x) for x in xs])
        gen += 1
        if gen % 50 == 0:
            print(f"  gen {gen:4d}  best {-es.best_fitness:.3e}  "
                  f"sigma {es.sigma:.3e}  axis ratio {es.axis_ratio():.1f}")
    print(f"  stopped after {es.evaluations} evaluations: {es.should_stop()}")
    print(f"  best value {-es.best_fitness:.3e} at "
          f"x = [{', '.join(f'{v:.4f}' for v in es.best_x[:4])}, ...]")


def main():
    optimize("sphere", sphere, 10, start=1.0, sigma=0.3,
             max_evaluations=20_000, seed=1)
    optimize("rosenbrock", rosenbrock, 5, start=0.0, sigma=0.3,
             max_evaluations=100_000, seed=1)


if __name__ == "__main__":
    main()
