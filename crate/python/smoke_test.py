"""Smoke test for the mapf_rrr_py extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import mapf_rrr_py as m


def main():
    grid = m.GridMap.parse("3 3\n...\n.@.\n...\n")
    assert (grid.width, grid.height, grid.num_vertices) == (3, 3, 8)
    assert grid.is_blocked(1, 1)
    assert grid.serialize() == "3 3\n...\n.@.\n...\n"

    # two agents swapping corners around the blocked centre
    inst = m.Instance.load(grid, "0,0,0,2,2\n1,2,2,0,0\n")
    best = m.oracle_optimal(inst)
    for solver in ("cbs", "mstar"):
        out = m.solve(inst, solver, budget_s=5)
        assert out.solved and out.cost == best, (solver, out, best)
        report = m.validate(inst, out.paths)
        assert report["valid"] and report["cost"] == best, report

    broken = [list(p) for p in out.paths]
    broken[0][-1] = broken[1][-1]
    assert not m.validate(inst, broken)["valid"]

    corridor = m.Instance.load(m.GridMap.parse("3 1\n...\n"), "0,0,0,0,2\n1,0,2,0,0\n")
    assert m.oracle_optimal(corridor) is None
    assert m.solve(corridor, "cbs", budget_s=5).status == "infeasible"

    kiva = m.Instance.kiva(12, seed=3, highway="positive")
    assert kiva.has_highway and kiva.num_agents == 12
    rrr = m.run_rrr(kiva, "iecbs", budget_s=10, restarts=2, w=1.5, seed=1)
    assert rrr.solved, rrr
    assert m.validate(kiva, rrr.paths)["valid"]
    assert 1 <= len(rrr.trials) <= 2

    try:
        m.solve(m.Instance.kiva(4, seed=1), "iecbs", w=1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("iecbs without a highway must be rejected")

    stats = m.tail_stats([1.0, 2.0, 3.0, 4.0, 100.0], [False] * 5)
    assert stats["median"] == 3.0 and stats["max_over_median"] > 30

    print("smoke test passed:", out, rrr)


if __name__ == "__main__":
    main()
