"""Acceptance suite: one test per criterion, each printing a pass/fail
line with its worst residual.  Tolerances are pinned here and match the
module contracts; instance generators are seeded so every run checks the
same family.

Cross-instance criteria (support monotonicity, optimal-potential
property) run over the instances collected by the earlier criteria via a
module-level registry.
"""

import time

import numpy as np

from stochproj.characterize import (
    check_convex_contraction,
    check_convex_expansion,
    check_volume_expansion,
    extract_map,
    map_potential_on_grid,
)
from stochproj.duality import (
    duality_gap,
    solve_dual_backward,
    solve_dual_forward,
    verify_potential_property,
)
from stochproj.lp import SimplexSolver
from stochproj.measures import (
    Grid,
    convex_hull_contains,
    make_measure,
    mean,
    w2_squared,
)
from stochproj.orders import OrderSpec, check_convex_order
from stochproj.projection import (
    project_backward_convex,
    project_backward_convex_lp,
    project_backward_subharmonic,
    project_forward_convex,
    project_forward_subharmonic,
)
from stochproj.suite import (
    call_function_dominates,
    random_measure,
    snap_to_grid,
    spread_once,
)
from stochproj.transforms import (
    GridFunction,
    SampledConvexFunction,
    q2,
    q2bar,
    q2e,
    subharmonic_envelope,
)
from stochproj.demo import run_geodesic_demo
from stochproj import json_io

SOLVER = SimplexSolver()

# registry feeding criteria 7 and 8 from the instances of criteria 1-3
COLLECTED_BACKWARD = []  # (mu, nu, ProjectionResult)
COLLECTED_GAP_CERTIFIED = []  # (mu, nu, primal, dual)


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'} {detail}")


def test_criterion_1_strong_duality_suite():
    """20 seeded convex-order instances at matched discretization:
    duality gap <= 1e-6, total runtime < 60 s."""
    rng = np.random.default_rng(4242)
    t0 = time.time()
    worst = 0.0
    count = 0
    for k in range(7):  # 1D backward
        g = Grid(lo=[-3.0], hi=[3.0], n=(21,))
        mu = snap_to_grid(rng, g, int(rng.integers(10, 21)), interior_only=False)
        nu = snap_to_grid(rng, g, int(rng.integers(10, 21)), interior_only=False)
        primal = project_backward_convex_lp(mu, nu, g.nodes(), solver=SOLVER)
        dual = solve_dual_backward(mu, nu, OrderSpec("convex"), g, solver=SOLVER)
        gap = duality_gap(primal, dual)
        worst = max(worst, abs(gap))
        count += 1
        COLLECTED_BACKWARD.append((mu, nu, primal))
        COLLECTED_GAP_CERTIFIED.append((mu, nu, primal, dual))
    for k in range(7):  # 1D forward
        g = Grid(lo=[-3.0], hi=[3.0], n=(21,))
        mu = snap_to_grid(rng, g, int(rng.integers(5, 12)), interior_only=False)
        nu = snap_to_grid(rng, g, int(rng.integers(10, 21)), interior_only=False)
        primal = project_forward_convex(nu, mu, candidate_support=g.nodes(),
                                        solver=SOLVER)
        dual = solve_dual_forward(mu, nu, OrderSpec("convex"), g, solver=SOLVER)
        gap = duality_gap(primal, dual)
        worst = max(worst, abs(gap))
        count += 1
    for k in range(6):  # 2D backward
        g = Grid(lo=[-2.0, -2.0], hi=[2.0, 2.0], n=(5, 5))
        mu = snap_to_grid(rng, g, int(rng.integers(4, 11)), interior_only=False)
        nu = snap_to_grid(rng, g, int(rng.integers(4, 11)), interior_only=False)
        primal = project_backward_convex_lp(mu, nu, g.nodes(), solver=SOLVER)
        dual = solve_dual_backward(mu, nu, OrderSpec("convex"), g, solver=SOLVER)
        gap = duality_gap(primal, dual)
        worst = max(worst, abs(gap))
        count += 1
        COLLECTED_BACKWARD.append((mu, nu, primal))
        COLLECTED_GAP_CERTIFIED.append((mu, nu, primal, dual))
    elapsed = time.time() - t0
    ok = count == 20 and worst <= 1e-6 and elapsed < 60.0
    report("1", ok, f"20 instances, worst |gap| = {worst:.2e}, {elapsed:.1f} s")
    assert count == 20
    assert worst <= 1e-6
    assert elapsed < 60.0


def test_criterion_2_dirac_closed_forms():
    """Backward projection of a Dirac lands on the vertex mean with the
    squared-distance cost (1e-8); the forward projection is the vertex
    translated, with the backward cost within 2 h^2 generally and exactly
    on grid-aligned shifts."""
    rng = np.random.default_rng(515)
    worst_b = worst_eq = worst_fw = 0.0
    for k in range(6):
        nu = random_measure(rng, int(rng.integers(2, 7)), 1)
        x0 = float(rng.uniform(-2.0, 2.0))
        back = project_backward_convex(make_measure([[x0]], [1.0]), nu,
                                       solver=SOLVER)
        expect = (x0 - mean(nu)[0]) ** 2
        worst_b = max(worst_b, abs(back.cost - expect))
        assert back.projection.n == 1
        worst_b = max(worst_b, abs(back.projection.points[0, 0] - mean(nu)[0]))
        COLLECTED_BACKWARD.append((make_measure([[x0]], [1.0]), nu, back))

        # generic shift: forward within 2 h^2 of the backward cost
        g = Grid(lo=[-6.0], hi=[6.0], n=(49,))
        h = g.spacing[0]
        fwd = project_forward_convex(nu, make_measure([[x0]], [1.0]),
                                     candidate_support=g, solver=SOLVER)
        assert fwd.cost >= expect - 1e-9
        worst_fw = max(worst_fw, fwd.cost - expect)

    # grid-aligned family: shift is a lattice vector, so both costs agree
    # exactly and the projection is the translated vertex
    g = Grid(lo=[-4.0], hi=[4.0], n=(33,))
    h = g.spacing[0]
    for k in range(4):
        nodes = g.nodes().ravel()
        pick = rng.choice(np.arange(8, 25), size=3, replace=False)
        nu = make_measure([[nodes[i]] for i in pick], rng.uniform(0.2, 1.0, 3))
        shift = float(rng.integers(2, 7)) * h
        x0 = mean(nu)[0] + shift
        mu = make_measure([[x0]], [1.0])
        back = project_backward_convex(mu, nu, solver=SOLVER)
        fwd = project_forward_convex(nu, mu, candidate_support=g, solver=SOLVER)
        worst_eq = max(worst_eq, abs(back.cost - fwd.cost))
        translated = make_measure(nu.points + shift, nu.weights)
        dist, _ = w2_squared(fwd.projection, translated)
        worst_eq = max(worst_eq, dist)
    ok = worst_b <= 1e-8 and worst_fw <= 2 * (12.0 / 48) ** 2 and worst_eq <= 1e-8
    report("2", ok, f"backward {worst_b:.2e}, forward excess {worst_fw:.2e} "
                    f"(2h^2 = {2 * (12.0 / 48) ** 2:.2e}), aligned family {worst_eq:.2e}")
    assert worst_b <= 1e-8
    assert worst_fw <= 2 * (12.0 / 48) ** 2
    assert worst_eq <= 1e-8


def test_criterion_3_backward_forward_refinement():
    """On 10 generic 1D instances the forward cost approaches the backward
    cost from above as the grid is refined, with empirical order >= 0.8."""
    rng = np.random.default_rng(777)
    orders = []
    min_margin = np.inf
    for k in range(10):
        mu = random_measure(rng, int(rng.integers(3, 8)), 1)
        nu = random_measure(rng, int(rng.integers(3, 8)), 1, scale=1.2, offset=0.3)
        back = project_backward_convex(mu, nu, solver=SOLVER)
        COLLECTED_BACKWARD.append((mu, nu, back))
        lo = float(min(mu.points.min(), nu.points.min()) - 1.0)
        hi = float(max(mu.points.max(), nu.points.max()) + 1.0)
        errs = []
        for n_nodes in (17, 33):
            g = Grid(lo=[lo], hi=[hi], n=(n_nodes,))
            fwd = project_forward_convex(nu, mu, candidate_support=g, solver=SOLVER)
            err = fwd.cost - back.cost
            min_margin = min(min_margin, err)
            errs.append(max(err, 0.0))
        if errs[1] <= 1e-12:
            orders.append(np.inf)
        else:
            orders.append(np.log2(errs[0] / errs[1]))
    worst_order = float(np.min(orders))
    ok = min_margin >= -1e-8 and worst_order >= 0.8
    report("3", ok, f"min forward-backward margin {min_margin:.2e}, "
                    f"worst refinement order {worst_order:.2f}")
    assert min_margin >= -1e-8
    assert worst_order >= 0.8


def test_criterion_4_transform_identity_suite():
    """Involutions (1e-12), conjugate-form vs direct enumeration (1e-12),
    and envelope-composite fixed points (1e-9) over 50 seeded functions."""
    rng = np.random.default_rng(99)
    worst_inv = worst_enum = worst_fix = 0.0
    for k in range(50):
        two_d = k % 3 == 2
        if two_d:
            n = int(rng.integers(7, 22))
            g = Grid(lo=[-1.5, -1.5], hi=[1.5, 1.5], n=(n, n))
        else:
            n = int(rng.integers(11, 102))
            g = Grid(lo=[-2.0], hi=[2.0], n=(n,))
        f = GridFunction(g, rng.normal(scale=1.5, size=g.num_nodes))

        a = q2(f)
        worst_inv = max(worst_inv, float(np.max(np.abs(q2(q2bar(a)).values - a.values))))
        b = q2bar(f)
        worst_inv = max(worst_inv, float(np.max(np.abs(q2bar(q2(b)).values - b.values))))

        nodes = g.nodes()
        direct_q2 = np.array([np.min(f.values + np.sum((x - nodes) ** 2, axis=1))
                              for x in nodes])
        worst_enum = max(worst_enum, float(np.max(np.abs(a.values - direct_q2))))
        direct_q2bar = np.array([np.max(f.values - np.sum((nodes - y) ** 2, axis=1))
                                 for y in nodes])
        worst_enum = max(worst_enum, float(np.max(np.abs(b.values - direct_q2bar))))

        psi = subharmonic_envelope(f)  # a generic grid-subharmonic function
        lhs1 = q2bar(psi)
        rhs1 = q2bar(q2e(q2bar(psi)))
        worst_fix = max(worst_fix, float(np.max(np.abs(lhs1.values - rhs1.values))))
        lhs2 = q2e(psi)
        rhs2 = q2e(q2bar(q2e(psi)))
        worst_fix = max(worst_fix, float(np.max(np.abs(lhs2.values - rhs2.values))))
    ok = worst_inv <= 1e-12 and worst_enum <= 1e-12 and worst_fix <= 1e-9
    report("4", ok, f"involutions {worst_inv:.2e}, enumeration {worst_enum:.2e}, "
                    f"fixed points {worst_fix:.2e}")
    assert worst_inv <= 1e-12
    assert worst_enum <= 1e-12
    assert worst_fix <= 1e-9


def test_criterion_5_1d_cone_coincidence():
    """25 seeded 1D grid instances: the subharmonic and convex projections
    agree (cost within 1e-8, projections within W2 1e-6) once degenerate
    optima are resolved by the common second-moment representative."""
    rng = np.random.default_rng(777)
    worst_cost = worst_w2 = 0.0
    for k in range(25):
        g = Grid(lo=[-4.0], hi=[4.0], n=(17,))
        nodes = g.nodes()[g.interior_indices()]
        mu = snap_to_grid(rng, g, int(rng.integers(2, 6)))
        nu = snap_to_grid(rng, g, int(rng.integers(2, 6)))
        sub = project_backward_subharmonic(mu, nu, OrderSpec("subharmonic", g),
                                           solver=SOLVER, tie_break="second_moment")
        cx = project_backward_convex_lp(mu, nu, nodes, solver=SOLVER,
                                        tie_break="second_moment")
        worst_cost = max(worst_cost, abs(sub.cost - cx.cost))
        d2, _ = w2_squared(sub.projection, cx.projection)
        worst_w2 = max(worst_w2, float(np.sqrt(max(d2, 0.0))))
    ok = worst_cost <= 1e-8 and worst_w2 <= 1e-6
    report("5", ok, f"25 instances, worst cost diff {worst_cost:.2e}, "
                    f"worst W2 {worst_w2:.2e}")
    assert worst_cost <= 1e-8
    assert worst_w2 <= 1e-6


def test_criterion_6_order_oracle_agreement():
    """100 seeded pairs: LP verdict matches the 1D call-function oracle;
    true witnesses re-verify; separators achieve gap > 1e-9."""
    rng = np.random.default_rng(31337)
    agreements = 0
    witnesses_ok = 0
    separators_ok = 0
    trues = falses = 0
    for k in range(100):
        base = random_measure(rng, int(rng.integers(2, 7)), 1)
        if k % 2 == 0:
            mu = base
            nu = base
            for _ in range(int(rng.integers(1, 4))):
                nu = spread_once(rng, nu)
        else:
            mu = base
            nu = random_measure(rng, int(rng.integers(2, 7)), 1,
                                scale=1.3, offset=0.5)
        cert = check_convex_order(mu, nu, solver=SOLVER)
        if cert.holds == call_function_dominates(mu, nu):
            agreements += 1
        if cert.holds:
            trues += 1
            if cert.verify():
                witnesses_ok += 1
        else:
            falses += 1
            if cert.separation_gap > 1e-9 and cert.verify():
                separators_ok += 1
    ok = agreements == 100 and witnesses_ok == trues and separators_ok == falses
    report("6", ok, f"agreement {agreements}/100, witnesses {witnesses_ok}/{trues}, "
                    f"separators {separators_ok}/{falses}")
    assert agreements == 100
    assert witnesses_ok == trues
    assert separators_ok == falses


def test_criterion_7_support_monotonicity():
    """Every backward convex projection collected from criteria 1-3 keeps
    its atoms inside the convex hull of the vertex support (1e-9)."""
    assert COLLECTED_BACKWARD, "criteria 1-3 must run first"
    checked = 0
    failures = 0
    for mu, nu, res in COLLECTED_BACKWARD:
        for p in res.projection.points:
            checked += 1
            if not convex_hull_contains(nu.points, p, tol=1e-9):
                failures += 1
    report("7", failures == 0, f"{checked} atoms over "
           f"{len(COLLECTED_BACKWARD)} projections, {failures} escapes")
    assert failures == 0


def test_criterion_8_optimal_potential_property():
    """On every gap-certified instance of criterion 1 the optimal potential
    integrates equally against the projection and the vertex (1e-6)."""
    assert COLLECTED_GAP_CERTIFIED, "criterion 1 must run first"
    worst = 0.0
    for mu, nu, primal, dual in COLLECTED_GAP_CERTIFIED:
        rep = verify_potential_property(dual, primal.projection, nu)
        worst = max(worst, rep.residual)
    ok = worst <= 1e-6
    report("8", ok, f"{len(COLLECTED_GAP_CERTIFIED)} instances, "
                    f"worst residual {worst:.2e}")
    assert worst <= 1e-6


def test_criterion_9_characterization_round_trips():
    """Contraction gradients land backward projections on the vertex and
    expansion gradients land forward projections on the vertex (10 built
    instances each, with potential screens); the forward subharmonic dual
    potential is an envelope-composite fixed point (1e-6)."""
    rng = np.random.default_rng(2024)

    def lattice_measure(dim, count, spacing, origin):
        if dim == 1:
            pts = origin + spacing * np.arange(count)[:, None]
        else:
            side = int(np.sqrt(count))
            ax = spacing * np.arange(side)
            pts = np.array([[origin[0] + a, origin[1] + b] for a in ax for b in ax])
        return make_measure(pts, rng.uniform(0.2, 1.0, len(pts))), pts

    def lattice_grid(pts, dim):
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        counts = tuple(int(round((hi[a] - lo[a]) / _lattice_step(pts[:, a]))) + 1
                       for a in range(dim))
        return Grid(lo=lo, hi=hi, n=counts)

    def _lattice_step(col):
        u = np.unique(np.round(col, 9))
        return float(np.min(np.diff(u)))

    worst_contract = 0.0
    for k in range(10):
        dim = 1 if k % 2 == 0 else 2
        count = 5 if dim == 1 else 9
        mu, mu_pts = lattice_measure(dim, count, 1.0, np.zeros(dim))
        factor = float(rng.choice([0.25, 0.5, 0.75]))
        c = rng.normal(size=dim) * 0.3
        nu = make_measure((mu.points - mu.points.mean(axis=0)) * factor
                          + mu.points.mean(axis=0) + c, mu.weights)
        res = project_backward_convex(mu, nu, solver=SOLVER)
        d2, _ = w2_squared(res.projection, nu)
        worst_contract = max(worst_contract, d2)
        # potential reconstructed from the optimal map on the data lattice
        sample = extract_map(res.coupling, use_barycenter=True)
        pot = map_potential_on_grid(sample, lattice_grid(mu_pts, dim))
        assert check_convex_contraction(SampledConvexFunction(pot), tol=1e-6)

    worst_expand = 0.0
    for k in range(10):
        dim = 1 if k % 2 == 0 else 2
        count = 5 if dim == 1 else 9
        nu, nu_pts = lattice_measure(dim, count, 1.0, np.zeros(dim))
        factor = float(rng.choice([1.5, 2.0, 3.0]))
        c = rng.normal(size=dim) * 0.3
        mu = make_measure((nu.points - nu.points.mean(axis=0)) * factor
                          + nu.points.mean(axis=0) + c, nu.weights)
        res = project_forward_convex(nu, mu, candidate_support=mu.points,
                                     solver=SOLVER)
        d2, _ = w2_squared(res.projection, mu)
        worst_expand = max(worst_expand, d2)
        sample = extract_map(res.coupling, from_target=True, use_barycenter=True)
        pot = map_potential_on_grid(sample, lattice_grid(nu_pts, dim))
        assert check_convex_expansion(SampledConvexFunction(pot), tol=1e-6)

    worst_fix = 0.0
    for k in range(4):
        g = Grid(lo=[-6.0] * 2, hi=[6.0] * 2, n=(9, 9)) if k % 2 else \
            Grid(lo=[-6.0], hi=[6.0], n=(25,))
        mu_atoms = 1 if k % 2 else 2
        center_pool = [i for i in range(g.num_nodes)
                       if g.is_interior(i)
                       and np.all(np.abs(g.nodes()[i]) <= 3.0)]
        pick = rng.choice(center_pool, size=3, replace=False)
        nodes = g.nodes()
        nu = make_measure(nodes[pick], rng.uniform(0.2, 1.0, 3))
        mu = make_measure(nodes[pick[:mu_atoms]], np.ones(mu_atoms))
        dual = solve_dual_forward(mu, nu, OrderSpec("subharmonic", g),
                                  solver=SOLVER)
        assert dual.multipliers["canonical"]
        fp = q2e(q2bar(dual.potential))
        worst_fix = max(worst_fix, float(np.max(np.abs(fp.values
                                                       - dual.potential.values))))
    ok = worst_contract <= 1e-8 and worst_expand <= 1e-8 and worst_fix <= 1e-6
    report("9", ok, f"contraction {worst_contract:.2e}, expansion "
                    f"{worst_expand:.2e}, fixed point {worst_fix:.2e}")
    assert worst_contract <= 1e-8
    assert worst_expand <= 1e-8
    assert worst_fix <= 1e-6


def test_criterion_10_geodesic_demo():
    """The fixed 2D construction leaves the forward cone at the coupling
    midpoint, deterministically."""
    d1 = run_geodesic_demo()
    d2 = run_geodesic_demo()
    ok = (d1.order_mu_nu.holds and d1.cone_left
          and not any(d1.hull_containment.values()))
    same = json_io.dumps(d1.to_json_dict()) == json_io.dumps(d2.to_json_dict())
    report("10", ok and same,
           f"order holds {d1.order_mu_nu.holds}, midpoint escapes "
           f"{not d1.order_mu_midpoint.holds}, deterministic {same}")
    assert d1.order_mu_nu.holds
    assert d1.cone_left
    assert same


def test_criterion_11_volume_expansion():
    """On 5 solved 2D forward subharmonic instances the reconstructed map
    potential has determinant >= 0.9 on at least 95% of evaluable nodes and
    the pushed densities are dominated with 10% slack."""
    cases = [
        (9, 1, (1.0, 1.0)),
        (9, 1, (2.0, 2.0)),
        (11, 1, (3.0, 3.0)),
        (11, 2, (2.0, 2.0)),
        (13, 1, (2.0, 3.0)),
    ]
    worst_frac = 1.0
    worst_density = 1.0
    for n_nodes, extent, factors in cases:
        size = float(n_nodes - 1)
        g = Grid(lo=[0.0, 0.0], hi=[size, size], n=(n_nodes, n_nodes))
        center = np.array([size / 2, size / 2])
        h = g.spacing
        pts, wts = [], []
        for i in range(-extent, extent + 1):
            for j in range(-extent, extent + 1):
                pts.append(center + [i * h[0], j * h[1]])
                wts.append(np.exp(-0.25 * (i * i + j * j)))
        nu = make_measure(pts, wts)
        mu = make_measure(center + (nu.points - center) * np.asarray(factors),
                          nu.weights)
        res = project_forward_subharmonic(nu, mu, OrderSpec("subharmonic", g),
                                          solver=SOLVER)
        rep = check_volume_expansion(res)
        assert rep.conclusive, f"instance {(n_nodes, extent, factors)} split"
        assert rep.evaluable_nodes > 0
        worst_frac = min(worst_frac, rep.det_fraction)
        worst_density = min(worst_density, rep.density_fraction)
    ok = worst_frac >= 0.95 and worst_density == 1.0
    report("11", ok, f"5 instances, worst det fraction {worst_frac:.2f}, "
                     f"worst density fraction {worst_density:.2f}")
    assert worst_frac >= 0.95
    assert worst_density == 1.0
