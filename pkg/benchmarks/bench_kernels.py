"""Time every hot kernel on each available backend.

    python benchmarks/bench_kernels.py [--size D] [--repeat R] [--csv PATH]

Prints one row per (kernel, backend) with the best-of-R time per call and
the speedup of the compiled backend over the numpy fallback. Inputs are
shared between backends and outputs are compared before timing.
"""

from __future__ import annotations

import argparse
import csv
import sys
import timeit

import numpy as np

from sparsepush._backend import available_backends


def make_cases(d: int, seed: int) -> dict[str, tuple]:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(d).astype(np.float32)
    block = 2048
    nblocks = -(-d // block)
    scales = np.array([np.abs(v[i * block : (i + 1) * block]).max() for i in range(nblocks)], dtype=np.float32)
    uniforms = rng.random(d)
    codes = rng.integers(0, 16, d).astype(np.uint8)
    n, dm = 16, max(d // 16, 1)
    base = rng.standard_normal((n, dm)).astype(np.float32)
    msgs = rng.standard_normal((n, dm)).astype(np.float32)
    indptr = np.arange(0, 2 * n + 1, 2, dtype=np.int64)
    indices = np.array([(i + o) % n for i in range(n) for o in (0, n - 1)], dtype=np.int64)
    coeffs = np.full(2 * n, 0.5)
    d_in, d_out, m = 64, 10, 256
    params = rng.standard_normal(d_in * d_out + d_out).astype(np.float32)
    feats = rng.standard_normal((m, d_in)).astype(np.float32)
    labels = rng.integers(0, d_out, m).astype(np.int64)
    return {
        "topk_indices": (v, max(d // 100, 1)),
        "block_scales": (v, block),
        "quantize_codes": (v, scales, block, 4, uniforms),
        "pack_codes": (codes, 4),
        "mix_rows": (base, msgs, indptr, indices, coeffs),
        "sgd_momentum": (v, v * 0.5, np.zeros_like(v), 0.1, 0.9, 1e-4),
        "softmax_xent_grad": (params, feats, labels, d_in, d_out),
    }


def _fresh(name: str, args: tuple) -> tuple:
    # sgd_momentum updates its momentum buffer in place; every call gets a copy.
    if name == "sgd_momentum":
        return args[:2] + (args[2].copy(),) + args[3:]
    return args


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, bytes):
        return a == b
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype.kind == "f":
        return bool(np.allclose(a, b, rtol=1e-5, atol=1e-6))
    return bool(np.array_equal(a, b))


def run(d: int, repeat: int, seed: int) -> list[dict]:
    backends = available_backends()
    cases = make_cases(d, seed)
    rows = []
    for name, args in cases.items():
        outputs, times = {}, {}
        for bname, mod in backends.items():
            fn = getattr(mod, name)
            outputs[bname] = fn(*_fresh(name, args))
            timer = timeit.Timer(lambda: fn(*_fresh(name, args)))
            number, _ = timer.autorange()
            times[bname] = min(timer.repeat(repeat, number)) / number
        agree = all(_same(outputs["python"], out) for out in outputs.values())
        for bname, t in times.items():
            rows.append(
                {
                    "kernel": name,
                    "backend": bname,
                    "seconds_per_call": t,
                    "speedup_vs_python": times["python"] / t,
                    "outputs_agree": agree,
                }
            )
    return rows


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=268_346, help="vector length (default: %(default)s)")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", help="also write the table to this path")
    args = parser.parse_args(argv)

    rows = run(args.size, args.repeat, args.seed)
    if "cython" not in {r["backend"] for r in rows}:
        print("compiled backend not built; timing the numpy fallback only", file=sys.stderr)
    print(f"{'kernel':<18} {'backend':<8} {'us/call':>12} {'speedup':>8}  agree")
    for r in rows:
        print(
            f"{r['kernel']:<18} {r['backend']:<8} {r['seconds_per_call'] * 1e6:>12.1f} "
            f"{r['speedup_vs_python']:>7.1f}x  {r['outputs_agree']}"
        )
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    return 0 if all(r["outputs_agree"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
