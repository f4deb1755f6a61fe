"""Smoke test for the `safeset` Python extension.

Build and run:

    cargo build --release -p safeset-py
    python3 python/smoke_test.py

or install with `maturin develop -m crates/py/Cargo.toml` first.
"""

import importlib
import importlib.util
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    try:
        return importlib.import_module("safeset")
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libsafeset_py.so"
        if lib.exists():
            tmp = pathlib.Path(tempfile.mkdtemp())
            shutil.copy(lib, tmp / "safeset.so")
            spec = importlib.util.spec_from_file_location("safeset", tmp / "safeset.so")
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            return module
    sys.exit("safeset extension not found; run `cargo build --release -p safeset-py`")


def main():
    ss = load_module()

    chain = ss.FiniteMdp.builtin("chain")
    assert (chain.num_states, chain.num_actions) == (5, 2), chain
    v = ss.optimal_unsafety(chain)
    assert v[0] == 0.0 and v[4] == 1.0, v
    assert all(0.0 <= x <= 1.0 for x in v)
    member = ss.safe_set(chain, 0.2)
    assert member[0] and not member[4]

    uniform = [[0.5, 0.5]] * chain.num_states
    v_pi = ss.policy_unsafety(chain, uniform)
    assert all(a <= b + 1e-9 for a, b in zip(v, v_pi))

    probs, value = ss.solve_lp([0.0, 1.0], [1.0, 0.0], 0.3)
    assert abs(sum(probs) - 1.0) < 1e-12 and abs(value - 0.7) < 1e-12, (probs, value)

    rc, rfp = ss.spec_metrics([False, True, True, True], [True, True, True, False])
    assert abs(rc - 2 / 3) < 1e-12 and abs(rfp - 0.25) < 1e-12

    rows = ss.train_tabular("chain", "lss", iterations=5, steps_per_iter=2000, seed=1)
    assert len(rows) == 6 and rows[0]["iteration"] == 0
    assert all(0.0 <= r["r_c"] <= 1.0 for r in rows)
    assert math.isnan(rows[0]["aes"])

    grid = ss.FiniteMdp.builtin("integrator", grid=[21, 21])
    assert grid.num_states == 21 * 21 + 1
    assert grid.is_target(21 * 21)

    try:
        ss.FiniteMdp.builtin("moon")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown env accepted")

    print(f"safeset {ss.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
