#!/usr/bin/env python3
"""Benchmark the compiled cache core against the pure-Python fallback.

Two measurements:
- raw kernel ops: a packet-shaped mix of DMA block bursts and CPU header
  accesses driven straight at both CacheCore implementations;
- end-to-end: a short fixed simulation run under each backend (subprocess,
  because the backend is chosen at import time via KBSIM_CACHE_BACKEND).

Usage: python benchmarks/bench_cache.py [--ops 200000] [--skip-e2e]
"""

import argparse
import os
import random
import subprocess
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))


def load_backends():
    backends = {}
    from kbsim import _cachecore_py
    backends["python"] = _cachecore_py
    try:
        from kbsim import _cachecore
        backends["cython"] = _cachecore
    except ImportError:
        pass
    return backends


def make_core(mod):
    # production geometry: 64 KB L1D, 2 MB L2, 8 MB LLC with a 2-way quota
    return mod.CacheCore(1, 512, 2, 2048, 16, 8192, 16, 2)


def packet_workload(core, ops, seed=0):
    """Per 'packet': one 24-block DMA write plus header read and write."""
    rng = random.Random(seed)
    buf_blocks = [(0x1000_0000 // 64) + i * 32 for i in range(4096)]
    t0 = time.perf_counter()
    for i in range(ops):
        base = buf_blocks[rng.randrange(4096)]
        core.dma_write_range(base, 24, True)
        core.cpu_access(0, base, False)
        core.cpu_access(0, base, True)
    return time.perf_counter() - t0


def bench_raw(ops):
    backends = load_backends()
    results = {}
    for name, mod in backends.items():
        core = make_core(mod)
        dt = packet_workload(core, ops)
        results[name] = dt
        print(f"raw  {name:7s}: {ops / dt:10.0f} packets/s "
              f"({ops} packet-equivalents in {dt:.2f}s)")
    if "cython" in results and "python" in results:
        print(f"raw  speedup: {results['python'] / results['cython']:.1f}x")
    return results


E2E_SNIPPET = """
import time
from kbsim.config import defaults
from kbsim.experiment import run_static
from kbsim.mem import CACHE_BACKEND
cfg = defaults()
cfg["duration_ms"] = 2.0
cfg["loadgen.rate_gbps"] = 40.0
t0 = time.perf_counter()
report, _ = run_static(cfg)
dt = time.perf_counter() - t0
print(f"{CACHE_BACKEND} {dt:.3f} {report['results']['conservation']['rx']}")
"""


def bench_e2e():
    print("\nend-to-end 2 ms run at 40 Gbps:")
    rows = {}
    for backend in ("python", "cython"):
        env = dict(os.environ, KBSIM_CACHE_BACKEND=backend,
                   PYTHONPATH=os.path.join(os.path.dirname(__file__), "..", "src"))
        proc = subprocess.run([sys.executable, "-c", E2E_SNIPPET],
                              capture_output=True, text=True, env=env)
        if proc.returncode != 0:
            print(f"e2e  {backend:7s}: failed: {proc.stderr.strip()}")
            continue
        name, dt, rx = proc.stdout.split()
        assert name == backend, f"backend selection failed: got {name}"
        rows[backend] = float(dt)
        print(f"e2e  {backend:7s}: {float(dt):.3f}s wall ({rx} packets echoed)")
    if len(rows) == 2:
        print(f"e2e  speedup: {rows['python'] / rows['cython']:.2f}x")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--ops", type=int, default=200_000)
    parser.add_argument("--skip-e2e", action="store_true")
    args = parser.parse_args()
    bench_raw(args.ops)
    if not args.skip_e2e:
        bench_e2e()


if __name__ == "__main__":
    main()
