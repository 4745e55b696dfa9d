"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --repeats 200

Also times one full actor-critic update under each backend, since the
kernels are only part of that cost.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from himo import _kernels
from himo.envs import PortalBatch
from himo.envs.portal import _SPRITES


def bench_gru(mod, B, H, repeats):
    rng = np.random.default_rng(0)
    gx = rng.normal(size=(B, 3 * H))
    gh = rng.normal(size=(B, 3 * H))
    h = rng.normal(size=(B, H))
    dh = rng.normal(size=(B, H))
    _, r, z, n = mod.gru_gates_forward(gx, gh, h)
    r, z, n = (np.ascontiguousarray(x) for x in (r, z, n))
    fwd = min(timeit.repeat(lambda: mod.gru_gates_forward(gx, gh, h), number=repeats, repeat=3))
    bwd = min(timeit.repeat(lambda: mod.gru_gates_backward(dh, r, z, n, gh, h),
                            number=repeats, repeat=3))
    return fwd / repeats, bwd / repeats


def bench_render(mod, B, repeats):
    env = PortalBatch(B, seed=0)
    env.reset()
    env.step(np.random.default_rng(0).integers(0, 4, size=B))
    out = np.zeros_like(env._obs)

    def go():
        mod.render_portal(out, env._base, env.phase, env.agent, env.portals, env.context,
                          env._ctx_cells, env.room, env._room_pixel, _SPRITES)

    return min(timeit.repeat(go, number=repeats, repeat=3)) / repeats


_UPDATE_SNIPPET = """
import time, json
from himo import _kernels
from himo.harness.config import default_config
from himo.harness.runs import PortalActorCritic
cfg = default_config("portal_ac", batch_size=32, unroll_length=20)
run = PortalActorCritic(cfg, "himo", 0)
run.train_step()
t = time.perf_counter()
for _ in range({n}):
    run.train_step()
print(json.dumps({{"backend": _kernels.BACKEND, "seconds": (time.perf_counter() - t) / {n}}}))
"""


def bench_update(pure: bool, n: int) -> dict:
    env = dict(os.environ, HIMO_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", _UPDATE_SNIPPET.format(n=n)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--updates", type=int, default=10, help="actor-critic updates to time")
    args = ap.parse_args(argv)

    backends = _kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; only the fallback is timed")
    print(f"{'kernel':<28}" + "".join(f"{b:>14}" for b in backends) + "     speedup")
    cases = [("gru fwd B=32 H=64", lambda m: bench_gru(m, 32, 64, args.repeats)[0]),
             ("gru bwd B=32 H=64", lambda m: bench_gru(m, 32, 64, args.repeats)[1]),
             ("gru fwd B=640 H=64", lambda m: bench_gru(m, 640, 64, args.repeats // 4)[0]),
             ("render B=32", lambda m: bench_render(m, 32, args.repeats)),
             ("render B=256", lambda m: bench_render(m, 256, args.repeats // 4))]
    for name, fn in cases:
        times = {b: fn(_kernels.get_backend(b)) for b in backends}
        line = f"{name:<28}" + "".join(f"{times[b] * 1e6:>12.1f}us" for b in backends)
        if len(times) == 2:
            line += f"   {times['python'] / times['cython']:8.2f}x"
        print(line)

    if args.updates > 0:
        rows = [bench_update(True, args.updates)]
        if "cython" in backends:
            rows.append(bench_update(False, args.updates))
        for r in rows:
            print(f"actor-critic update ({r['backend']}): {r['seconds'] * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
