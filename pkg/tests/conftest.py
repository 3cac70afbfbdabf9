"""Shared oracles for the test suite.

Everything here recomputes library quantities from first principles (dense
linear algebra, per-site loops over the hat basis, finite differences) so the
tests compare two independent code paths.
"""

from __future__ import annotations

import numpy as np

from qclab import (
    ChainModel,
    CoarseMesh,
    MeshSpec,
    build_mesh,
    basis_value,
    harmonic_potential,
    sample_force,
    slot_of_site,
    total_energy,
    Displacement,
)


def make_model(N, force="sinpi", potential=None):
    return ChainModel(N=N, potential=potential or harmonic_potential(),
                      force=sample_force(force, N))


def dense_atomistic(model):
    """Equilibrium values by dense linear solve (harmonic potential only)."""
    n = 2 * model.N
    scale = float(model.N)
    A = np.zeros((n, n))
    for i in range(n):
        # site force row: strain into the site minus strain out of it
        A[i, i] += 2.0 * scale
        A[i, i - 1] -= scale
        A[i, (i + 1) % n] -= scale
    b = model.epsilon * model.force.samples.copy()
    p = model.N - 1
    A[p] = 0.0
    A[p, p] = 1.0
    b[p] = 0.0
    return np.linalg.solve(A, b)


def dense_chain(flux_coeff, row_scale, h, load, pinned):
    """Dense solve of row_scale_j*(flux_j - flux_{j+1}) = load_j with
    flux_j = flux_coeff_j*(V_j - V_{j-1})/h_j and V_pinned = 0."""
    n = len(h)
    A = np.zeros((n, n))
    for j in range(n):
        cin = flux_coeff[j] / h[j]
        cout = flux_coeff[(j + 1) % n] / h[(j + 1) % n]
        A[j, j] += row_scale[j] * (cin + cout)
        A[j, j - 1] -= row_scale[j] * cin
        A[j, (j + 1) % n] -= row_scale[j] * cout
    b = np.asarray(load, dtype=float).copy()
    A[pinned] = 0.0
    A[pinned, pinned] = 1.0
    b[pinned] = 0.0
    return np.linalg.solve(A, b)


def brute_hat_scatter(mesh, rule, nu, site_values):
    """out[j] = sum_t nu_t sum_{ell in cluster t} site_values[ell]*hat_j(ell),
    straight from the definitions (independent of the library's scatter)."""
    out = np.zeros(2 * mesh.K)
    for tj in range(2 * mesh.K):
        j = tj - (mesh.K - 1)
        acc = 0.0
        for tt in range(2 * mesh.K):
            k = tt - (mesh.K - 1)
            for ell in rule.members(k):
                val = site_values[int(slot_of_site(ell, mesh.N))]
                acc += nu[tt] * val * basis_value(mesh, j, int(ell))
        out[tj] = acc
    return out


def dense_weight_matrix(mesh, rule):
    """A[j, t] = hat_j summed over cluster t, via basis_value."""
    n = 2 * mesh.K
    A = np.zeros((n, n))
    for tj in range(n):
        j = tj - (mesh.K - 1)
        for tt in range(n):
            k = tt - (mesh.K - 1)
            for ell in rule.members(k):
                A[tj, tt] += basis_value(mesh, j, int(ell))
    return A


def random_custom_mesh(rng):
    """Periodic mesh with random integer steps, node 0 at lattice site 0."""
    K = int(rng.integers(3, 7))
    steps = rng.integers(5, 16, size=2 * K)
    if steps.sum() % 2:
        steps[-1] += 1
    N = int(steps.sum() // 2)
    cums = np.cumsum(steps)
    reps = tuple(int(v) for v in (cums - cums[K - 1]))
    return build_mesh(MeshSpec(family="custom", N=N, K=K, indices=reps)), N


def fd_site_force(model, v, ell, step=1e-6):
    """Central difference of the total energy in the direction of one site."""
    slot = int(slot_of_site(ell, model.N))
    plus = v.values.copy()
    plus[slot] += step
    minus = v.values.copy()
    minus[slot] -= step
    e_plus = total_energy(model, Displacement(N=model.N, values=plus))
    e_minus = total_energy(model, Displacement(N=model.N, values=minus))
    return (e_plus - e_minus) / (2.0 * step)


def random_displacement(rng, N, scale=1.0):
    vals = scale * rng.normal(size=2 * N)
    vals[N - 1] = 0.0
    return Displacement(N=N, values=vals)
