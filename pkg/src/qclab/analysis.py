"""A-posteriori estimators and convergence studies.

The central object is the mesh-consistency estimator: weight each element
gradient of the constrained solution by the element's smoothness coefficient,
subtract the mean forced by periodicity, and take the energy norm.  For
quadratic potentials with r = 0 clusters this quantity brackets the relative
energy-norm error of the cluster solution within factors set only by the
local mesh-size ratio kappa, which makes it a certificate computable without
ever touching the full chain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cluster import ClusterRule, assemble_weight_system, solve_weights
from .errors import ShapeMismatch
from .mesh import CoarseMesh, MeshSpec, NodalField, build_mesh, exact_load, prolong, smoothness_profile
from .model import ChainModel, Displacement, energy_norm, harmonic_potential, sample_force, stored_energy
from .solve import cluster_load, solve_constrained, solve_force_cluster


@dataclass(frozen=True, eq=False)
class ConsistencyEstimate:
    """Smoothness-weighted fluctuation of a nodal gradient field.

    ``value`` is sqrt(sum_k h_k (w_k - mean)^2) with w_k the element gradient
    times the element's smoothness coefficient and ``mean`` the periodicity-
    forced average (half of sum_k h_k w_k).  ``sandwich_lower``/``sandwich_upper``
    divide the value by the two-sided equivalence factors (1 + kappa^{+-1})/2:
    for a quadratic potential they bracket the energy-norm distance between
    the r = 0 cluster solution and the constrained solution (both absolute,
    same units as the energy norm).
    """

    value: float
    mean: float
    sandwich_lower: float
    sandwich_upper: float
    kappa: float


def consistency_estimate(mesh: CoarseMesh, field: NodalField) -> ConsistencyEstimate:
    if field.mesh is not mesh and not np.array_equal(field.mesh.repatoms, mesh.repatoms):
        raise ShapeMismatch("nodal field lives on a different mesh")
    weighted = smoothness_profile(mesh).coefficients * field.gradients()
    mean = 0.5 * np.dot(mesh.h, weighted)  # h sums to 2 over the period
    value = float(np.sqrt(np.dot(mesh.h, (weighted - mean) ** 2)))
    return ConsistencyEstimate(
        value=value,
        mean=float(mean),
        sandwich_lower=value / (0.5 * (1.0 + mesh.kappa)),
        sandwich_upper=value / (0.5 * (1.0 + 1.0 / mesh.kappa)),
        kappa=mesh.kappa,
    )


def predicted_relative_band(family: str, kappa: float) -> tuple[float, float] | None:
    """Closed-form estimator values exist for two mesh families: the dyadic
    graded mesh (1/8) and the exactly alternating mesh (1/sqrt(8)).  The band
    divides them by the realized equivalence factors."""
    closed_form = {"graded": 0.125, "oscillatory": 1.0 / np.sqrt(8.0)}.get(family)
    if closed_form is None:
        return None
    return (closed_form / (0.5 * (1.0 + kappa)), closed_form / (0.5 * (1.0 + 1.0 / kappa)))


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Errors of a cluster solution against the constrained solution, plus
    the consistency certificate that predicts them.

    ``energy_norm_rel``, ``energy_rel`` and ``predicted_band`` are relative
    quantities; ``mean``, ``consistency`` and the sandwich bounds are absolute
    (``reference_norm``, the energy norm of the constrained solution, converts
    between the two scales).
    """

    energy_norm_rel: float
    energy_rel: float | None
    mean: float
    consistency: float
    sandwich_lower: float
    sandwich_upper: float
    kappa: float
    predicted_band: tuple[float, float] | None
    reference_norm: float


def error_report(model: ChainModel, mesh: CoarseMesh, atomistic: Displacement,
                 constrained: NodalField, qc: NodalField, qc_energy: float,
                 family: str | None = None) -> ErrorReport:
    diff = NodalField(mesh=mesh, values=qc.values - constrained.values)
    reference = energy_norm(constrained)
    gap = energy_norm(diff)
    # an unloaded chain has a zero reference solution; report the gap itself
    energy_norm_rel = float(gap / reference) if reference > 0.0 else float(gap)
    exact_energy = stored_energy(model, atomistic)
    energy_rel = None
    if abs(exact_energy) >= 1e-14:
        # Oriented so that a cluster functional value above the exact stored
        # energy is positive.  At criticality of a quadratic model this equals
        # the relative gap of the total energies (stored minus load potential),
        # which is the quantity the reproduced experiments report.
        energy_rel = float((qc_energy - exact_energy) / abs(exact_energy))
    est = consistency_estimate(mesh, constrained)
    return ErrorReport(
        energy_norm_rel=energy_norm_rel,
        energy_rel=energy_rel,
        mean=est.mean,
        consistency=est.value,
        sandwich_lower=est.sandwich_lower,
        sandwich_upper=est.sandwich_upper,
        kappa=est.kappa,
        predicted_band=predicted_relative_band(family, est.kappa) if family else None,
        reference_norm=float(reference),
    )


def galerkin_defect(model: ChainModel, mesh: CoarseMesh, atomistic: Displacement,
                    constrained: NodalField) -> float:
    """Largest normalized residual of the best-approximation property.

    For each unpinned hat, <u' - u_h', hat'> collapses to a difference of the
    two adjacent per-element means of the gradient gap; the pinned node's hat
    is the constraint direction, not a test direction, so it is excluded.
    Normalized by the energy norm of the atomistic solution.
    """
    gap = model.epsilon * (atomistic.strains() - prolong(mesh, constrained).strains())
    sums = np.bincount(mesh.element_of_slot(), weights=gap, minlength=2 * mesh.K)
    means = sums / mesh.h
    defect = means - np.roll(means, -1)
    defect[mesh.K - 1] = 0.0
    return float(np.max(np.abs(defect)) / energy_norm(atomistic))


@dataclass(frozen=True, eq=False)
class ConvergenceTable:
    """Metric values against a resolution parameter, with observed rates."""

    parameter: str
    metric: str
    parameters: np.ndarray
    values: np.ndarray

    def rates(self) -> np.ndarray:
        """Pairwise orders: log-ratio of consecutive values over parameters."""
        p, v = self.parameters, self.values
        if len(v) < 2:
            return np.empty(0)
        return np.log(v[:-1] / v[1:]) / np.log(p[:-1] / p[1:])

    def fit_rate(self) -> float:
        """Least-squares slope of log(value) against log(parameter)."""
        slope, _ = np.polyfit(np.log(self.parameters), np.log(self.values), 1)
        return float(slope)


def smooth_mesh_consistency(N: int, K_values, amplitude: float = 0.2,
                            force_spec: str = "sinpi") -> ConvergenceTable:
    """Consistency estimator of the constrained solution on smoothly graded
    meshes of increasing resolution; decays quadratically in the mesh size
    until integer rounding of the node positions takes over."""
    model = ChainModel(N=N, potential=harmonic_potential(), force=sample_force(force_spec, N))
    params = []
    values = []
    for K in K_values:
        mesh = build_mesh(MeshSpec(family="smooth", N=N, K=int(K), amplitude=amplitude))
        report = solve_constrained(model, mesh)
        params.append(np.max(mesh.h))
        values.append(consistency_estimate(mesh, report.solution).value)
    return ConvergenceTable(
        parameter="h_max",
        metric="consistency",
        parameters=np.array(params),
        values=np.array(values),
    )


def load_defect(model: ChainModel, mesh: CoarseMesh, rule: ClusterRule,
                nu: np.ndarray) -> float:
    """Max-norm gap between cluster-sampled and exact hat loads."""
    return float(np.max(np.abs(cluster_load(model, mesh, rule, nu) - exact_load(mesh, model))))


def load_approximation_check(model: ChainModel, K_values, r: int,
                             family: str = "uniform") -> ConvergenceTable:
    """Load-defect decay under mesh refinement at fixed cluster radius."""
    params = []
    values = []
    for K in K_values:
        mesh = build_mesh(MeshSpec(family=family, N=model.N, K=int(K)))
        rule = ClusterRule(mesh=mesh, r=r)
        nu = solve_weights(assemble_weight_system(mesh, rule)).force
        params.append(np.max(mesh.h))
        values.append(load_defect(model, mesh, rule, nu))
    return ConvergenceTable(
        parameter="h_max",
        metric="load_defect",
        parameters=np.array(params),
        values=np.array(values),
    )


def gradient_alternation(constrained: NodalField, qc: NodalField,
                         rel_threshold: float = 0.1) -> tuple[bool, int]:
    """Check the element-wise error sign pattern of a cluster solution.

    On alternating meshes the gradient error of the cluster solution flips
    sign between neighbouring elements wherever the underlying gradient is
    not small.  Compares signs over consecutive element pairs whose
    constrained gradient exceeds ``rel_threshold`` times its maximum,
    skipping the two wrap elements (they absorb the integer remainder of the
    mesh construction).  Returns (strictly_alternating, pairs_checked).
    """
    gap = qc.gradients() - constrained.gradients()
    reference = constrained.gradients()
    eligible = np.abs(reference) >= rel_threshold * np.max(np.abs(reference))
    eligible[0] = False
    eligible[-1] = False
    alternating = True
    pairs = 0
    for t in range(len(gap) - 1):
        if eligible[t] and eligible[t + 1]:
            pairs += 1
            if gap[t] * gap[t + 1] >= 0.0:
                alternating = False
    return alternating, pairs


@dataclass(frozen=True, eq=False)
class ForceScalingStudy:
    """How force-cluster solutions on uniform meshes scale with the mesh.

    With uniform spacing h and radius r the cluster equations reproduce the
    constrained solution scaled by eps (2r+1) / h, so the solution collapses
    toward zero under refinement at fixed r.  ``deviation_scaled`` measures
    the energy-norm distance between the rescaled cluster solution and the
    constrained one; it decays at second order, while ``deviation_absolute``
    (no rescaling) loses one order to the 1/h growth of the mismatch.
    """

    K_values: np.ndarray
    h_values: np.ndarray
    ratio_measured: np.ndarray
    ratio_predicted: np.ndarray
    deviation_scaled: np.ndarray
    deviation_absolute: np.ndarray

    def scaled_table(self) -> ConvergenceTable:
        return ConvergenceTable(parameter="h", metric="scaled deviation",
                                parameters=self.h_values, values=self.deviation_scaled)

    def absolute_table(self) -> ConvergenceTable:
        return ConvergenceTable(parameter="h", metric="absolute deviation",
                                parameters=self.h_values, values=self.deviation_absolute)


def force_scaling_study(N: int, K_values, r: int,
                        force_spec: str = "sinpi") -> ForceScalingStudy:
    model = ChainModel(N=N, potential=harmonic_potential(), force=sample_force(force_spec, N))
    rows = {key: [] for key in ("h", "measured", "predicted", "scaled", "absolute")}
    for K in K_values:
        mesh = build_mesh(MeshSpec(family="uniform", N=N, K=int(K)))
        rule = ClusterRule(mesh=mesh, r=r)
        weights = solve_weights(assemble_weight_system(mesh, rule))
        constrained = solve_constrained(model, mesh).solution
        clustered = solve_force_cluster(model, mesh, rule, weights).solution
        h = float(mesh.h[0])
        scale = model.epsilon * rule.size / h
        rows["h"].append(h)
        rows["measured"].append(energy_norm(clustered) / energy_norm(constrained))
        rows["predicted"].append(scale)
        rows["scaled"].append(energy_norm(
            NodalField(mesh=mesh, values=clustered.values / scale - constrained.values)))
        rows["absolute"].append(energy_norm(
            NodalField(mesh=mesh, values=clustered.values - scale * constrained.values)))
    return ForceScalingStudy(
        K_values=np.asarray(K_values, dtype=int),
        h_values=np.array(rows["h"]),
        ratio_measured=np.array(rows["measured"]),
        ratio_predicted=np.array(rows["predicted"]),
        deviation_scaled=np.array(rows["scaled"]),
        deviation_absolute=np.array(rows["absolute"]),
    )
