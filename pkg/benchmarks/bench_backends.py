"""Compare the compiled and interpreted automaton kernels.

Each backend runs in its own interpreter (the backend is fixed at import
time by DUNES_BACKEND).  Both advance the same seeded lattice; the script
checks that they end bit-identical and reports nanoseconds per event.

    python benchmarks/bench_backends.py [--width 32] [--length 64] [--iterations 5]
"""

import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import hashlib, json, sys, time
from dunes import _backend
from dunes.ca import SimParams, new_lattice, step
w, l, n_iter, spin, reps = map(int, sys.argv[1:6])
p = SimParams(width=w, length=l, perturb=True)
lat = new_lattice(p, 11)
step(lat, spin)
times = []
for _ in range(reps):
    t0 = time.perf_counter()
    step(lat, n_iter)
    times.append(time.perf_counter() - t0)
times.sort()
print(json.dumps({"backend": _backend.BACKEND,
                  "ns_per_event": times[len(times) // 2] / (n_iter * w * l) * 1e9,
                  "digest": hashlib.sha1(lat.heights.tobytes()).hexdigest(),
                  "slabs": lat.total_slabs}))
"""


def run_backend(name, args):
    env = dict(os.environ, DUNES_BACKEND=name)
    out = subprocess.run([sys.executable, "-c", CHILD, str(args.width), str(args.length),
                          str(args.iterations), str(args.spin), str(args.repeats)],
                         env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--width", type=int, default=32)
    ap.add_argument("--length", type=int, default=64)
    ap.add_argument("--iterations", type=int, default=5, help="iterations per timed repeat")
    ap.add_argument("--spin", type=int, default=1, help="untimed iterations first (warm-up)")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    res = {b: run_backend(b, args) for b in ("numba", "numpy")}
    for b, r in res.items():
        print(f"{b:6s} {r['ns_per_event']:12.1f} ns/event  slabs={r['slabs']}")
    same = res["numba"]["digest"] == res["numpy"]["digest"]
    print(f"speedup numba/numpy: {res['numpy']['ns_per_event'] / res['numba']['ns_per_event']:.1f}x")
    print(f"trajectories identical: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
