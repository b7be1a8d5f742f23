"""Smoke test for the sklab_py extension.

Build first with `cargo build --release -p sklab-py`, then run
`python3 python/smoke_test.py`. The script copies the built library into a
temporary directory as `sklab_py.so` and imports it from there.
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load():
    candidates = [ROOT / "target" / profile / "libsklab_py.so" for profile in ("release", "debug")]
    lib = next((p for p in candidates if p.exists()), None)
    if lib is None:
        sys.exit("libsklab_py.so not found; run `cargo build --release -p sklab-py` first")
    tmp = Path(tempfile.mkdtemp())
    shutil.copy(lib, tmp / "sklab_py.so")
    sys.path.insert(0, str(tmp))
    import sklab_py

    return sklab_py


def main():
    sk = load()

    assert sk.derive_seed(42, 1) == sk.derive_seed(42, 1)
    assert abs(sk.semicircle_stieltjes(math.sqrt(2.0)) - math.sqrt(2.0)) < 1e-15
    assert len(sk.classical_locations(10)) == 10

    lo = sk.leading_order("monomial:1:1", 1.0)
    assert abs(lo["value"] - math.sqrt(3.0)) < 1e-12
    fp = sk.fluctuation_params("monomial:1:1", 1.0)
    assert abs(fp["kappa"] ** 2 * fp["var_u"] - 1.0 / 3.0) < 1e-12
    ball = sk.leading_order("monomial:1:1", 1.0, "tap:1.0")
    assert abs(ball["r_hat"] ** 2 - 0.5) < 1e-10

    s = sk.Sample.draw(300, 7)
    assert s.n == 300 and len(s.eigenvalues) == 300
    sol = sk.solve_sphere(s, 1.0, "monomial:1:1")
    assert abs(sol["value"] / 300 - math.sqrt(3.0)) < 0.1
    b = sk.solve_ball(s, 1.0, "monomial:1:1", "tap:1.0")
    assert 0.0 < b["r_star"] <= 1.0
    st = sk.compute_statistics(s, lo["l_hat"] + 0.5)
    assert set(["u_n", "lambda_n", "w_n"]) <= set(st)

    tiny = sk.Sample([0.0, 1.0], [0.6, 0.8])
    assert abs(sk.solve_sphere(tiny, 1.0, "monomial:1:0")["value"] / 2 - 1.0) < 1e-9

    try:
        sk.leading_order("bogus", 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("bad spike accepted")

    cfg = {
        "schema_version": 1,
        "model": "sphere",
        "n": 60,
        "trials": 3,
        "master_seed": 1,
        "beta": 1.0,
        "spike": "monomial:1:1",
    }
    out = json.loads(sk.run_experiment(json.dumps(cfg)))
    assert len(out["records"]) == 3
    assert all(r["derived_seed"] == sk.derive_seed(1, r["trial_index"]) for r in out["records"])

    ok, line = sk.run_criterion(9)
    assert ok, line
    print("smoke test passed")


if __name__ == "__main__":
    main()
