"""Smoke test for the ardnet Python extension.

Build and install first, e.g. `pip install maturin && maturin develop -m crates/py/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import json
import math

import ardnet


def main():
    # Small network: exact and mean-field constants agree without
    # reciprocity or indirect terms.
    ex2 = ardnet.Study("example2")
    assert ex2.n == 4
    assert abs(ex2.log_c_mf() - ex2.log_c_exact()) < 1e-8

    g = ardnet.Network(4, [(0, 1), (1, 0), (2, 3)])
    assert g.link_count() == 3 and g.has_link(1, 0) and not g.has_link(3, 2)
    assert math.isfinite(ex2.potential(g))

    study = ardnet.Study("design1", n=15, seed=7)
    truth = study.simulate()
    assert truth == study.simulate(), "same seed, same network"
    psi0 = study.ard(truth)
    assert len(psi0) == study.n * len(study.query_names)

    fit = study.estimate(psi0, rounds=10, draws=40, seed=3)
    assert len(fit["theta"]) == 400
    lo, hi = fit["interval"]["lo"][1], fit["interval"]["hi"][1]
    assert lo <= hi
    print(f"direct[1] 90% interval at desk scale: ({lo:.3f}, {hi:.3f})")

    report = ardnet.oracle_validate("sufficiency")
    assert report["passed"], report

    summary = ardnet.run_experiment(
        json.dumps({"preset": "design1", "sampler": {"rounds": 5, "draws_per_round": 20}, "seed": 1})
    )
    assert len(summary["replications"]) == 1

    queries = json.loads(ardnet.export_queries("design2-augmented"))
    assert len(queries) == 16

    try:
        ardnet.Study("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown preset accepted")

    print("ok")


if __name__ == "__main__":
    main()
