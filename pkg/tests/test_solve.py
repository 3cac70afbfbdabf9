"""Equilibrium solvers checked against dense linear algebra, closed forms,
and direct minimization."""

import math

import numpy as np
import pytest
import scipy.optimize

from qclab import (
    ChainModel,
    ClusterRule,
    ConvexityLoss,
    Displacement,
    IllPosed,
    MeshSpec,
    NodalField,
    PairPotential,
    ShapeMismatch,
    WeightSet,
    assemble_cluster_forces,
    assemble_weight_system,
    build_mesh,
    cluster_load,
    effective_stiffness,
    energy_cluster_functional,
    energy_norm,
    exact_load,
    lumped_weights,
    prolong,
    quartic_potential,
    sample_force,
    site_forces,
    solve_atomistic,
    solve_constrained,
    solve_energy_cluster,
    solve_force_cluster,
    solve_weights,
    stored_energy,
    total_energy,
)
from conftest import (
    dense_atomistic,
    dense_chain,
    brute_hat_scatter,
    make_model,
    random_custom_mesh,
)
from test_cluster import graded_like_mesh


def cluster_setup(mesh, r, force="sinpi", potential=None):
    model = make_model(mesh.N, force=force, potential=potential)
    rule = ClusterRule(mesh=mesh, r=r)
    weights = solve_weights(assemble_weight_system(mesh, rule))
    return model, rule, weights


def test_atomistic_matches_dense_solve():
    for force in ("sinpi", "gauss:3,40", "lin:0.3,0.7"):
        model = make_model(24, force=force)
        report = solve_atomistic(model)
        np.testing.assert_allclose(
            report.solution.values, dense_atomistic(model), atol=1e-10
        )
        assert report.residual <= 1e-9
        assert report.iterations == 1
        assert report.method == "atomistic"


def test_atomistic_sine_closed_form():
    # single-harmonic load has an explicit lattice equilibrium
    N = 32
    model = make_model(N)
    report = solve_atomistic(model)
    eps = model.epsilon
    sites = np.arange(-N + 1, N + 1)
    amplitude = eps ** 2 / (2.0 - 2.0 * math.cos(math.pi * eps))
    exact = amplitude * np.sin(math.pi * eps * sites)
    np.testing.assert_allclose(report.solution.values, exact, atol=1e-13)


def test_reaction_balances_stress_kink():
    # the pinned site carries the jump of the stress across it
    model = make_model(40, force="gauss:3,40")
    report = solve_atomistic(model)
    t = report.solution.strains()  # harmonic stress equals strain
    kink = t[model.N - 1] - t[model.N]
    np.testing.assert_allclose(
        kink, report.reaction + model.epsilon * float(model.force.at(0)), atol=1e-12
    )


def test_reaction_equals_negative_total_load():
    mesh = graded_like_mesh(0)
    model, rule, weights = cluster_setup(mesh, 1, force="gauss:1,30")
    load = exact_load(mesh, model)
    scale = 1.0 + float(np.max(np.abs(load)))
    atom = solve_atomistic(model)
    np.testing.assert_allclose(
        atom.reaction, -model.epsilon * np.sum(model.force.samples),
        atol=1e-10 * scale,
    )
    for report in (
        solve_constrained(model, mesh),
        solve_energy_cluster(model, mesh, rule, weights),
    ):
        np.testing.assert_allclose(report.reaction, -np.sum(load), atol=1e-10 * scale)


def test_constrained_matches_dense_solve():
    rng = np.random.default_rng(21)
    for _ in range(3):
        mesh, _ = random_custom_mesh(rng)
        model = make_model(mesh.N, force="gauss:2,25")
        report = solve_constrained(model, mesh)
        n = 2 * mesh.K
        dense = dense_chain(
            np.ones(n), np.ones(n), mesh.h, exact_load(mesh, model), mesh.K - 1
        )
        np.testing.assert_allclose(report.solution.values, dense, atol=1e-10)
        assert report.iterations == 1


def test_constrained_on_full_lattice_is_atomistic():
    N = 24
    mesh = build_mesh(MeshSpec(family="uniform", N=N, K=N))
    model = make_model(N, force="gauss:2,25")
    fine = solve_atomistic(model)
    coarse = solve_constrained(model, mesh)
    np.testing.assert_allclose(
        prolong(mesh, coarse.solution).values, fine.solution.values, atol=1e-12
    )


def test_energy_cluster_matches_dense_solve():
    mesh = graded_like_mesh(0)
    model, rule, weights = cluster_setup(mesh, 1)
    report = solve_energy_cluster(model, mesh, rule, weights)
    a = effective_stiffness(rule, weights)
    dense = dense_chain(
        a, np.ones(2 * mesh.K), mesh.h, exact_load(mesh, model), mesh.K - 1
    )
    np.testing.assert_allclose(report.solution.values, dense, atol=1e-10)
    assert report.residual <= 1e-9


def test_force_cluster_matches_dense_solve():
    mesh = graded_like_mesh(0)
    model, rule, weights = cluster_setup(mesh, 1)
    report = solve_force_cluster(model, mesh, rule, weights)
    nu = weights.force
    ftilde = cluster_load(model, mesh, rule, nu)
    dense = dense_chain(np.ones(2 * mesh.K), nu, mesh.h, ftilde, mesh.K - 1)
    np.testing.assert_allclose(report.solution.values, dense, atol=1e-10)
    assert report.residual <= 1e-9


def test_cluster_load_exact_for_constant_force():
    mesh = graded_like_mesh(0)
    model, rule, weights = cluster_setup(mesh, 1, force="const:1")
    exact = exact_load(mesh, model)
    approx = cluster_load(model, mesh, rule, weights.force)
    np.testing.assert_allclose(approx, exact, atol=1e-14)
    # lumped force weights lose that exactness on a nonuniform mesh
    lumped = cluster_load(model, mesh, rule, weights.force_lumped)
    assert float(np.max(np.abs(lumped - exact))) > 1e-6


def test_cluster_load_matches_brute_scatter():
    rng = np.random.default_rng(22)
    mesh, _ = random_custom_mesh(rng)
    model, rule, weights = cluster_setup(mesh, 0, force="gauss:2,25")
    nu = weights.force
    brute = brute_hat_scatter(
        mesh, rule, nu, model.epsilon * model.force.samples
    )
    np.testing.assert_allclose(cluster_load(model, mesh, rule, nu), brute, atol=1e-13)


def test_assembled_forces_match_brute_scatter():
    rng = np.random.default_rng(23)
    mesh = graded_like_mesh(0)
    model, rule, weights = cluster_setup(mesh, 1, force="gauss:2,25")
    values = rng.normal(size=2 * mesh.K)
    values[mesh.K - 1] = 0.0
    V = NodalField(mesh=mesh, values=values)
    nu = weights.force
    assembled = assemble_cluster_forces(model, mesh, rule, nu, V)
    brute = brute_hat_scatter(
        mesh, rule, nu, site_forces(model, prolong(mesh, V))
    )
    np.testing.assert_allclose(assembled, brute, atol=1e-13)


def test_assembled_forces_at_rest_equal_negative_load():
    mesh = graded_like_mesh(0)
    model, rule, weights = cluster_setup(mesh, 1, force="gauss:2,25")
    V = NodalField(mesh=mesh, values=np.zeros(2 * mesh.K))
    nu = weights.force
    forces = assemble_cluster_forces(model, mesh, rule, nu, V)
    np.testing.assert_allclose(
        forces, -cluster_load(model, mesh, rule, nu), rtol=1e-14, atol=0.0
    )


def test_unloaded_chain_stays_at_rest():
    mesh = build_mesh(MeshSpec(family="uniform", N=240, K=4))
    for r in (0, 1, 3):
        model, rule, weights = cluster_setup(mesh, r, force="const:0")
        for solver in (solve_energy_cluster, solve_force_cluster):
            report = solver(model, mesh, rule, weights)
            assert float(np.max(np.abs(report.solution.values))) <= 1e-12
    model, rule, weights = cluster_setup(
        mesh, 1, force="const:0", potential=quartic_potential(0.25)
    )
    report = solve_energy_cluster(model, mesh, rule, weights)
    assert float(np.max(np.abs(report.solution.values))) <= 1e-12


def test_cluster_energy_identity_at_radius_zero():
    # with single-site clusters the summed energy is the exact energy of the
    # interpolant plus the smoothness-weighted potential per element
    from qclab import smoothness_profile

    rng = np.random.default_rng(24)
    mesh, _ = random_custom_mesh(rng)
    model, rule, weights = cluster_setup(mesh, 0)
    values = rng.normal(size=2 * mesh.K)
    values[mesh.K - 1] = 0.0
    V = NodalField(mesh=mesh, values=values)
    summed = energy_cluster_functional(model, mesh, rule, weights, V)
    exact = stored_energy(model, prolong(mesh, V))
    correction = float(
        np.dot(
            mesh.h * smoothness_profile(mesh).coefficients,
            model.potential.value(V.gradients()),
        )
    )
    np.testing.assert_allclose(summed, exact + correction, rtol=1e-12)


def test_cluster_energy_exact_on_uniform_mesh():
    mesh = build_mesh(MeshSpec(family="uniform", N=64, K=4))
    rng = np.random.default_rng(25)
    model, rule, weights = cluster_setup(mesh, 3)
    values = rng.normal(size=2 * mesh.K)
    values[mesh.K - 1] = 0.0
    V = NodalField(mesh=mesh, values=values)
    summed = energy_cluster_functional(model, mesh, rule, weights, V)
    exact = stored_energy(model, prolong(mesh, V))
    np.testing.assert_allclose(summed, exact, rtol=1e-14)


def test_energy_cluster_solution_minimizes_its_functional():
    mesh = graded_like_mesh(0)
    model, rule, weights = cluster_setup(mesh, 1)
    load = exact_load(mesh, model)

    def functional(V):
        return energy_cluster_functional(model, mesh, rule, weights, V) - float(
            np.dot(load, V.values)
        )

    U = solve_energy_cluster(model, mesh, rule, weights).solution
    Ubar = solve_constrained(model, mesh).solution
    assert functional(U) <= functional(Ubar) + 1e-12


def test_force_cluster_gradient_deflation():
    # uniform lumped-or-exact force sampling scales the solution by
    # eps*(2r+1)/h, the cluster's covered fraction of each element
    N, K, r = 1024, 16, 1
    mesh = build_mesh(MeshSpec(family="uniform", N=N, K=K))
    model, rule, weights = cluster_setup(mesh, r)
    U = solve_force_cluster(model, mesh, rule, weights).solution
    Ubar = solve_constrained(model, mesh).solution
    ratio = energy_norm(U) / energy_norm(Ubar)
    predicted = model.epsilon * rule.size / float(mesh.h[0])
    assert abs(ratio / predicted - 1.0) <= 0.02


def test_atomistic_quartic_matches_direct_minimization():
    N = 6
    model = make_model(N, potential=quartic_potential(0.25))
    report = solve_atomistic(model)
    assert report.iterations > 1
    pinned = N - 1
    free = [s for s in range(2 * N) if s != pinned]

    def pack(x):
        vals = np.zeros(2 * N)
        vals[free] = x
        return Displacement(N=N, values=vals)

    res = scipy.optimize.minimize(
        lambda x: total_energy(model, pack(x)),
        np.zeros(2 * N - 1),
        jac=lambda x: site_forces(model, pack(x))[free],
        method="BFGS",
        options={"gtol": 1e-10},
    )
    assert float(np.max(np.abs(site_forces(model, pack(res.x))[free]))) <= 1e-8
    np.testing.assert_allclose(report.solution.values[free], res.x, atol=1e-8)


def test_energy_cluster_quartic_is_a_critical_point():
    mesh = build_mesh(MeshSpec(family="uniform", N=64, K=4))
    model, rule, weights = cluster_setup(mesh, 1, potential=quartic_potential(0.25))
    report = solve_energy_cluster(model, mesh, rule, weights)
    assert report.iterations > 1
    load = exact_load(mesh, model)

    def functional(vals):
        V = NodalField(mesh=mesh, values=vals)
        return energy_cluster_functional(model, mesh, rule, weights, V) - float(
            np.dot(load, vals)
        )

    # central differences of the discrete functional must vanish at the
    # reported solution, pinned node excepted
    step = 1e-5
    base = np.array(report.solution.values)
    for j in range(2 * mesh.K):
        if j == mesh.K - 1:
            continue
        up, down = base.copy(), base.copy()
        up[j] += step
        down[j] -= step
        derivative = (functional(up) - functional(down)) / (2.0 * step)
        assert abs(derivative) <= 5e-9


def test_convexity_loss_is_reported():
    destabilized = PairPotential(
        value=lambda r: 0.5 * r ** 2 - r ** 4,
        deriv=lambda r: r - 4.0 * r ** 3,
        second=lambda r: 1.0 - 12.0 * r ** 2,
        is_quadratic=False,
        name="destabilized",
    )
    model = ChainModel(N=8, potential=destabilized, force=sample_force("const:5", 8))
    with pytest.raises(ConvexityLoss):
        solve_atomistic(model)


def test_nonpositive_stiffness_is_rejected():
    mesh = build_mesh(MeshSpec(family="uniform", N=64, K=4))
    model, rule, weights = cluster_setup(mesh, 1)
    bad_energy = np.array(weights.energy_exact)
    bad_energy[2] = -bad_energy[2]
    bad = WeightSet(
        mesh=mesh,
        r=rule.r,
        mode="exact",
        energy_exact=bad_energy,
        energy_lumped=weights.energy_lumped,
        residual=weights.residual,
    )
    with pytest.raises(IllPosed):
        solve_energy_cluster(model, mesh, rule, bad)
    with pytest.raises(IllPosed):
        solve_force_cluster(model, mesh, rule, bad)


def test_cluster_argument_validation():
    mesh = build_mesh(MeshSpec(family="uniform", N=64, K=4))
    other = build_mesh(MeshSpec(family="graded", N=64, K=7))
    model, rule, weights = cluster_setup(mesh, 1)
    with pytest.raises(ShapeMismatch):
        solve_energy_cluster(make_model(32), mesh, rule, weights)
    foreign_rule = ClusterRule(mesh=other, r=0)
    with pytest.raises(ShapeMismatch):
        solve_energy_cluster(model, mesh, foreign_rule, weights)
    mismatched = lumped_weights(mesh, ClusterRule(mesh=mesh, r=2))
    with pytest.raises(ShapeMismatch):
        solve_energy_cluster(model, mesh, rule, mismatched)


def test_constrained_best_approximation_rate():
    # quadratic energy: the constrained solution is the energy-norm
    # projection, so its error decays linearly in the element size
    N = 1024
    model = make_model(N)
    fine = solve_atomistic(model).solution
    errors = []
    for K in (8, 16, 32, 64):
        mesh = build_mesh(MeshSpec(family="uniform", N=N, K=K))
        coarse = prolong(mesh, solve_constrained(model, mesh).solution)
        gap = Displacement(N=N, values=coarse.values - fine.values)
        errors.append(energy_norm(gap))
    errors = np.array(errors)
    rates = np.log2(errors[:-1] / errors[1:])
    assert np.all(rates >= 0.95)
