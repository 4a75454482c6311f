"""Random population models for property tests."""

import numpy as np

from fairselect import SelectionConfig, build_model, check_conditions, check_mlr

GRID = tuple(round(0.1 * k, 1) for k in range(11))


def _pmf(rng, k, alpha=1.0):
    p = rng.dirichlet(np.full(k, alpha))
    return np.round(p / p.sum(), 12)


def random_support(rng, k):
    idx = np.sort(rng.choice(len(GRID), size=k, replace=False))
    return [GRID[i] for i in idx]


def random_model(rng, k=3, alpha=1.0):
    """Arbitrary model on ``k`` random levels of the 0.1 grid."""
    pmfs = {(a, y): _pmf(rng, k, alpha) for a in (0, 1) for y in (0, 1)}
    return build_model(
        random_support(rng, k),
        float(rng.uniform(0.1, 0.9)),
        [float(q) for q in rng.uniform(0.1, 0.9, size=2)],
        pmfs,
    )


def _sorted_pmf(rng, k, increasing):
    p = np.sort(_pmf(rng, k, 2.0))
    return p if increasing else p[::-1]


def mlr_model(rng, k=4):
    """Qualified scores increasing and unqualified decreasing in both groups,
    so the pooled likelihood ratio is nondecreasing."""
    pmfs = {}
    for a in (0, 1):
        pmfs[(a, 1)] = _sorted_pmf(rng, k, True)
        pmfs[(a, 0)] = _sorted_pmf(rng, k, False)
    model = build_model(
        random_support(rng, k),
        float(rng.uniform(0.1, 0.9)),
        [float(q) for q in rng.uniform(0.2, 0.8, size=2)],
        pmfs,
    )
    assert check_mlr(model).holds
    return model


def _bimodal(rng, k):
    """Mass at the top level plus a low cluster."""
    p = np.zeros(k)
    p[-1] = rng.uniform(0.15, 0.4)
    low = rng.dirichlet(np.ones(k - 2) * 2.0) if k > 2 else np.array([])
    p[: k - 2] = low * (1 - p[-1] - 0.02)
    p[k - 2] += 0.02
    return p / p.sum()


def _peaked(rng, k):
    """Most mass on the second level from the top."""
    p = rng.dirichlet(np.ones(k) * 0.5) * 0.2
    p[k - 2] += 0.8
    return p / p.sum()


def t1_model(rng, n, m=1, k=4, need_mlr=False, tries=2000):
    """A model whose perfect-fairness conditions hold at (n, m).

    One group has the heavier top level but the lower mean, the other the
    higher mean but little top mass, found by rejection sampling.
    """
    config = SelectionConfig(n, m)
    for _ in range(tries):
        support = random_support(rng, k)
        f_a = _bimodal(rng, k)
        f_b = _peaked(rng, k)
        g = _sorted_pmf(rng, k, False)
        if rng.random() < 0.5:
            f_a, f_b = f_b, f_a
        model = build_model(
            support,
            float(rng.uniform(0.1, 0.9)),
            [float(q) for q in rng.uniform(0.2, 0.8, size=2)],
            {(0, 1): f_a, (1, 1): f_b, (0, 0): g, (1, 0): g},
        )
        if need_mlr and not check_mlr(model).holds:
            continue
        if all(r.satisfied for r in check_conditions(model, config, ["T1" if m == 1 else "T5"])):
            return model
    raise RuntimeError("no model found")


def t2_model(rng, k=5, step=0.1):
    """f^0 - f^1 strictly increasing and nonnegative above the lowest level,
    f_R strictly decreasing."""
    support = [round(step * j, 6) for j in range(k)]
    for _ in range(1000):
        t = rng.uniform(0.005, 0.02)
        d = t * np.arange(k, dtype=float)
        d[0] = -d[1:].sum()
        base = _sorted_pmf(rng, k, False)
        if base[0] + d[0] <= 0:
            continue
        f1 = base
        f0 = base + d
        g = np.geomspace(1.0, rng.uniform(0.05, 0.3), k)
        g = g / g.sum()
        q = [float(x) for x in rng.uniform(0.05, 0.3, size=2)]
        model = build_model(
            support, float(rng.uniform(0.2, 0.8)), q, {(0, 1): f0, (1, 1): f1, (0, 0): g, (1, 0): g}
        )
        (report,) = check_conditions(model, SelectionConfig(3, 1), ["T2"])
        if report.satisfied:
            return model
    raise RuntimeError("no model found")
