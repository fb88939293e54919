"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Each row times the same call on both backends and checks that the results
agree.
"""

import argparse
import time

import numpy as np

from designcover import cover as cv
from designcover import kernels
from designcover.synthetic import head_proxy
from designcover.stats import gaussian_sample


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def as_points(coords):
    return [cv.ParamPoint(i, tuple(row)) for i, row in enumerate(np.asarray(coords).tolist())]


def head_points(n, seed=0):
    proxy = head_proxy()
    W = np.array([p.coords for p in gaussian_sample(proxy.weight_model, n, seed)])
    # the first three modes move the three measurements one-for-one
    return as_points(W[:, :3] + 0.2), np.array(proxy.spec.tolerances)


def cases():
    rng = np.random.default_rng(0)
    heads, tol = head_points(1500)
    pts2 = as_points(rng.uniform(0, 1, (400, 2)))
    small = [as_points(np.random.default_rng(s).uniform(0, 1, (12, 2))) for s in range(40)]
    centered = cv.candidate_boxes_centered(heads, tol)

    yield "incidence 1500 heads x 1500 boxes", lambda: kernels.box_incidence(
        centered.coords, centered.centers, tol / 2).sum()
    yield "greedy cover-all, 1500 heads", lambda: cv.greedy_cover_all(centered).box_indices
    yield "greedy cover-k 3, 1500 heads", lambda: cv.greedy_cover_k(centered, 3).box_indices
    yield "exact min cover, 40 x 12 points", lambda: [
        cv.exact_min_cover(cv.candidate_boxes_combinatorial(p, [0.3, 0.3])).box_indices for p in small]
    yield "exact max coverage k=3, 40 x 12 points", lambda: [
        cv.exact_max_coverage(cv.candidate_boxes_combinatorial(p, [0.3, 0.3]), 3).box_indices for p in small]
    yield "shifting l=2, 400 points", lambda: cv.shifting_cover_2d(pts2, [0.12, 0.12], 2).k


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = sorted(kernels.backends())
    print(f"{'case':42s}" + "".join(f"{n:>12s}" for n in names) + f"{'speedup':>10s}  agree")
    for label, fn in cases():
        times, outs = {}, {}
        for name in names:
            with kernels.use_backend(name):
                times[name], outs[name] = best_of(fn, args.repeat)
        agree = all(np.array_equal(np.asarray(outs[names[0]], dtype=object), np.asarray(o, dtype=object))
                    for o in outs.values())
        speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
        row = "".join(f"{times[n] * 1e3:10.1f}ms" for n in names)
        print(f"{label:42s}{row}{speed:9.1f}x  {'yes' if agree else 'NO'}")


if __name__ == "__main__":
    main()
