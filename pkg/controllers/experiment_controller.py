import logging
import math

import numpy as np

from controllers.utils import ExperimentOutput
from core.worker_pool import map_replicas
from models.dynamics import stable_dt
from models.lattice import EdgeFieldSeries, ParabolicCylinder
from models.occupation import ProcessSpec
from models.parabolic import EffectiveGradient
from services import (
    dynamics_service,
    hydro_service,
    lattice_service,
    noise_service,
    occupation_service,
    parabolic_service,
    regularity_service,
    surface_tension_service,
)
from services.potential_service import lusin_measure, potential_from_config
from utils.fit_utils import fit_linear

logger = logging.getLogger(__name__)


def _opt(params: dict, key: str, default):
    value = params.get(key)
    return default if value is None else value


def _exact_gaussian(V) -> bool:
    return V.is_gaussian and "mollify" not in V.params


def _components(prefix: str, dim: int):
    return [f"{prefix}_{i + 1}" for i in range(dim)]


def corrector(params: dict, src) -> ExperimentOutput:
    """
    Флуктуации корректора: Var[φ(0)] и ‖φ‖² по радиусам L.
    """
    V = potential_from_config(params["potential"])
    dim = params["dim"]
    report = surface_tension_service.corrector_fluctuation_experiment(
        params["radii"], V, params["replicas"], src, dim=dim, p=params["p"],
        dt=params["dt"], record_dt=_opt(params, "record_dt", 1.0))
    fieldnames = ["L", "variance", "variance_se", "l2_mean", "l2_se", "gradient_q999", "exact_variance"]
    rows = [{"L": r.radius, "variance": r.variance, "variance_se": r.variance_se, "l2_mean": r.l2_mean,
             "l2_se": r.l2_se, "gradient_q999": r.gradient_q999, "exact_variance": r.exact_variance}
            for r in report.rows]
    out = ExperimentOutput("corrector_fluct.csv", fieldnames, rows, results={
        "log_slope": report.log_slope, "log_intercept": report.log_intercept, "log_r2": report.log_r2,
        "oracle_slope": report.oracle_slope, "growth": report.growth,
    })
    if dim == 2 and report.log_r2 is not None and len(report.rows) >= 3:
        out.check("log_linear_variance", report.log_r2 >= 0.9, r2=report.log_r2)
        if report.oracle_slope is not None:
            out.check("spectral_slope", abs(report.log_slope - report.oracle_slope) <= 0.5 * abs(report.oracle_slope),
                      slope=report.log_slope, oracle=report.oracle_slope)
    if dim >= 3 and report.growth is not None:
        out.check("bounded_variance", report.growth < 0.25, growth=report.growth)
    return out


def flux_decay(params: dict, src) -> ExperimentOutput:
    """
    Убывание дисперсии средних потока по окнам Q_ℓ.
    """
    V = potential_from_config(params["potential"])
    dim = params["dim"]
    report = surface_tension_service.flux_decay_experiment(
        params["ells"], params["L"], V, params["replicas"], src, dim=dim, p=params["p"],
        dt=params["dt"], record_dt=_opt(params, "record_dt", 0.25))
    fieldnames = ["ell", "flux_variance", "flux_variance_se", "gradient_variance", "gradient_variance_se"]
    rows = [{"ell": ell, "flux_variance": report.flux_variance[k], "flux_variance_se": report.flux_variance_se[k],
             "gradient_variance": report.gradient_variance[k], "gradient_variance_se": report.gradient_variance_se[k]}
            for k, ell in enumerate(report.ells)]
    fit = report.flux_fit
    out = ExperimentOutput("flux_decay.csv", fieldnames, rows, results={
        "flux_exponent": fit.exponent if fit else None, "flux_r2": fit.r2 if fit else None,
        "gradient_exponent": report.gradient_fit.exponent if report.gradient_fit else None,
    })
    out.check("flux_exponent", fit is not None and -dim - 0.7 <= fit.exponent <= -dim + 0.7,
              exponent=fit.exponent if fit else None)
    out.check("flux_fit_quality", fit is not None and fit.r2 >= 0.9, r2=fit.r2 if fit else None)
    return out


def surface_tension(params: dict, src) -> ExperimentOutput:
    """
    Оценки τ_L(p) и, при заданном compare_L, сравнение τ_L и τ_{L'}.
    """
    V = potential_from_config(params["potential"])
    dim = params["dim"]
    L = params["L"]
    record_dt = _opt(params, "record_dt", 0.25)
    fieldnames = ["L"] + _components("p", dim) + _components("tau", dim) + _components("se", dim) + ["failed"]
    rows = []
    out = ExperimentOutput("surface_tension.csv", fieldnames, rows)

    def row(est, radius):
        entry = {"L": radius, "failed": est.failed}
        for i in range(dim):
            entry[f"p_{i + 1}"] = float(np.asarray(est.slope)[i])
            entry[f"tau_{i + 1}"] = est.mean[i]
            entry[f"se_{i + 1}"] = est.stderr[i]
        rows.append(entry)

    for k, p in enumerate(params["slopes"]):
        p = np.asarray(p, dtype=float)
        est = surface_tension_service.estimate_tau(p, L, V, params["replicas"], src, dt=params["dt"],
                                                   record_dt=record_dt, burn_in=params["burn_in"])
        row(est, L)
        out.check(f"replicas_ok_{k}", not est.flagged, failed=est.failed)
        if _exact_gaussian(V):
            gap = np.abs(est.mean - p)
            out.check(f"gaussian_identity_{k}", bool(np.all(gap <= 3.0 * est.stderr + 1e-12)),
                      gap=gap, stderr=est.stderr)
        if params["compare_L"]:
            other = surface_tension_service.estimate_tau(p, params["compare_L"], V, params["replicas"], src,
                                                         dt=params["dt"], record_dt=record_dt,
                                                         burn_in=params["burn_in"])
            row(other, params["compare_L"])
            small = min(L, params["compare_L"])
            bound = params["tolerance"] / small * (1.0 + math.sqrt(math.log(small)))
            gap = np.abs(est.mean - other.mean)
            out.check(f"finite_volume_{k}", bool(np.all(gap <= bound)), gap=gap, bound=bound)
    return out


def hessian(params: dict, src) -> ExperimentOutput:
    """
    Матрица ∂_iτ_L(p) и, при заданном h, проверка центральной разностью.
    """
    V = potential_from_config(params["potential"])
    p = np.asarray(params["p"], dtype=float)
    kwargs = dict(dt=params["dt"], record_dt=params["record_dt"])
    fd = None
    if params["h"]:
        fd, est = surface_tension_service.hessian_consistency(p, params["h"], params["L"], V, params["replicas"],
                                                              src, **kwargs)
    else:
        est = surface_tension_service.estimate_hessian(p, params["L"], V, params["replicas"], src,
                                                       burn_in=params["burn_in"], **kwargs)
    dim = len(p)
    fieldnames = ["i", "j", "value", "se", "fd_value", "fd_se"]
    rows = [{"i": i + 1, "j": j + 1, "value": est.matrix[i, j], "se": est.stderr[i, j],
             "fd_value": fd.matrix[i, j] if fd else None, "fd_se": fd.stderr[i, j] if fd else None}
            for i in range(dim) for j in range(dim)]
    out = ExperimentOutput("hessian.csv", fieldnames, rows, results={"eigenvalues": est.eigenvalues})
    out.check("positive_definite", est.positive, eigenvalues=est.eigenvalues)
    if _exact_gaussian(V):
        gap = np.abs(est.matrix - np.eye(dim))
        out.check("gaussian_identity", bool(np.all(gap <= 3.0 * est.stderr + 1e-9)), gap=gap)
    if fd is not None:
        combined = np.sqrt(est.stderr ** 2 + fd.stderr ** 2)
        gap = np.abs(est.matrix - fd.matrix)
        out.check("finite_difference", bool(np.all(gap <= 4.0 * combined + 1e-9)), gap=gap)
    return out


def linearize(params: dict, src) -> ExperimentOutput:
    """
    Эмпирический модуль линеаризации и, по желанию, мера множества Лузина.
    """
    V = potential_from_config(params["potential"])
    dim = params["dim"]
    est = surface_tension_service.linearization_modulus(params["p"], params["qs"], params["L"], V,
                                                        params["replicas"], src, dt=params["dt"],
                                                        record_dt=params["record_dt"])
    fieldnames = _components("q", dim) + ["distance", "residual", "se"]
    rows = []
    for k, q in enumerate(est.targets):
        entry = {f"q_{i + 1}": q[i] for i in range(dim)}
        entry.update({"distance": est.distances[k], "residual": est.residuals[k], "se": est.stderr[k]})
        rows.append(entry)
    out = ExperimentOutput("linearization.csv", fieldnames, rows)
    if _exact_gaussian(V):
        out.check("gaussian_exact", bool(np.max(est.residuals) <= 1e-10), max_residual=np.max(est.residuals))
    else:
        order = [k for k in np.argsort(-est.distances) if est.distances[k] > 0]
        ratios = [est.residuals[k] / est.distances[k] for k in order]
        errors = [est.stderr[k] / est.distances[k] for k in order]
        trend = all(ratios[n + 1] <= ratios[n] + 2.0 * math.hypot(errors[n], errors[n + 1])
                    for n in range(len(ratios) - 1))
        out.check("modulus_trend", trend, ratios=ratios)

    if params["lusin"]:
        block = params["lusin"]
        kappas = sorted(block["kappas"], reverse=True)
        measures = [lusin_measure(V, block["S"], kappa, block["eps"]) for kappa in kappas]
        out.results["lusin"] = {"kappas": kappas, "measures": measures}
        out.check("lusin_bound", all(m <= 4.0 * kappa for m, kappa in zip(measures, kappas)), measures=measures)
        if any(measures):
            out.check("lusin_decreasing", all(b < a for a, b in zip(measures, measures[1:])), measures=measures)
    return out


def hydro(params: dict, src) -> ExperimentOutput:
    """
    Гидродинамический предел: ошибка ‖u^ε - ū^ε‖ по ε и степенная подгонка.
    """
    V = potential_from_config(params["potential"])
    table = params["effective_gradient"]
    dsigma = EffectiveGradient.tabulated(table["slopes"], table["values"]) if table else None
    report = hydro_service.hydro_limit_experiment(
        params["eps"], params["boundary"], V, params["replicas"], src, dsigma=dsigma, dim=params["dim"],
        horizon=params["horizon"], dt=params["dt"], record_dt=params["record_dt"],
        with_gradient=params["with_gradient"], zero_noise=params["zero_noise"])
    fieldnames = ["eps", "mean_error", "stderr", "deterministic_error", "gradient_error", "replicas"]
    rows = [{"eps": r.eps, "mean_error": r.mean_error, "stderr": r.stderr,
             "deterministic_error": r.deterministic_error, "gradient_error": r.gradient_error,
             "replicas": r.replicas} for r in report.rows]
    fit = report.fit
    out = ExperimentOutput("hydro.csv", fieldnames, rows, results={
        "exponent": fit.exponent if fit else None, "r2": fit.r2 if fit else None, "messages": report.messages,
    })
    errors = [r.mean_error for r in report.rows]
    out.check("error_decreasing", all(b < a for a, b in zip(errors, errors[1:])), errors=errors)
    out.check("no_clamping", not any(r.clamped for r in report.rows))
    if not params["zero_noise"]:
        out.check("rate", fit is not None and fit.exponent >= params["min_exponent"],
                  exponent=fit.exponent if fit else None)
    return out


def occupation(params: dict, src) -> ExperimentOutput:
    """
    Времена пребывания процесса около нуля и на заданных множествах.
    """
    V = potential_from_config(params["potential"])
    block = params["process"]
    slope = tuple(block["slope"]) if block["slope"] else (0.0,) * params["dim"]
    spec = ProcessSpec(kind=block["kind"], dt=block["dt"], horizon=block["horizon"], x0=block["x0"],
                       radius=block["radius"], slope=slope, potential=V, volatility=block["volatility"])
    report = occupation_service.occupation_experiment(spec, params["thresholds"], params["replicas"], src)
    oracle = None
    if spec.kind == "brownian":
        oracle = [occupation_service.brownian_occupation_oracle(e, spec.horizon, spec.x0, spec.volatility)
                  for e in report.thresholds]
    fieldnames = ["epsilon", "mean_occupation", "stderr", "replicas", "tail_q95", "oracle"]
    rows = [{"epsilon": e, "mean_occupation": report.means[k], "stderr": report.stderr[k],
             "replicas": report.replicas, "tail_q95": report.tail_quantiles[k],
             "oracle": oracle[k] if oracle else None} for k, e in enumerate(report.thresholds)]
    out = ExperimentOutput("occupation.csv", fieldnames, rows, results={
        "slope": report.slope, "intercept": report.intercept, "relative_intercept": report.relative_intercept,
    })
    out.check("through_origin", report.relative_intercept <= params["max_relative_intercept"],
              relative_intercept=report.relative_intercept)
    out.check("positive_slope", report.slope > 0, slope=report.slope)
    if oracle:
        oracle_slope = fit_linear(report.thresholds, oracle)[0]
        out.results["oracle_slope"] = oracle_slope
        out.check("oracle_slope", 0.5 * oracle_slope <= report.slope <= 2.0 * oracle_slope,
                  slope=report.slope, oracle_slope=oracle_slope)
    sets = []
    for intervals in params["sets"]:
        res = occupation_service.occupation_on_set(spec, intervals, params["replicas"], src)
        sets.append({"intervals": res.intervals, "measure": res.measure, "mean": res.mean,
                     "stderr": res.stderr, "ratio": res.ratio})
    out.results["sets"] = sets
    return out


def excess(params: dict, src) -> ExperimentOutput:
    """
    Профили избытка E₁(l) стационарных решений на Q_L по репликам.
    """
    V = potential_from_config(params["potential"])
    dim = params["dim"]
    L = params["L"]
    ells = sorted(params["ells"])
    p = np.zeros(dim) if params["p"] is None else np.asarray(params["p"], dtype=float)
    grid = lattice_service.make_torus(dim, L)
    Q = ParabolicCylinder.q(grid)

    def one(r):
        field = dynamics_service.run_stationary_periodic(Q, p, V, noise_service.for_replica(src, r),
                                                         burn_in=params["burn_in"], dt=params["dt"],
                                                         record_dt=_opt(params, "record_dt", 1.0))
        return regularity_service.excess_decay(field, ells, p)

    profiles = map_replicas(one, range(params["replicas"]))
    fieldnames = ["replica", "l", "excess", "oscillation", "gradient"]
    rows = [{"replica": r, "l": l, "excess": prof.excess[k], "oscillation": prof.oscillation[k],
             "gradient": prof.gradient[k]}
            for r, prof in enumerate(profiles) for k, l in enumerate(prof.scales)]
    out = ExperimentOutput("excess.csv", fieldnames, rows)
    if len(ells) >= 2:
        small, large = ells[-2], ells[-1]
        hits = [prof.excess[-2] <= prof.excess[-1] * math.sqrt(small / large) + 5.0 for prof in profiles]
        share = float(np.mean(hits))
        out.check("excess_decay", share >= 0.8, share=share, scales=(small, large))
        fitted = max(prof.oscillation[0] / (prof.oscillation[-1] + 1.0) for prof in profiles)
        out.results["oscillation_constant"] = fitted
        out.check("oscillation_bound", fitted <= 20.0, fitted_c=fitted)
    return out


def heatkernel(params: dict, src) -> ExperimentOutput:
    """
    Периодическое ядро P_a в постоянной или ланжевеновской среде и подгонка Нэша–Аронсона.
    """
    dim = params["dim"]
    L = params["L"]
    grid = lattice_service.make_torus(dim, L)
    duration = _opt(params, "duration", float(L) ** 2)
    y = tuple(params["y"]) if params["y"] else (0,) * dim
    if params["environment"] == "constant":
        a = float(params["coefficient"])
    else:
        V = potential_from_config(params["potential"])
        p = np.zeros(dim) if params["p"] is None else np.asarray(params["p"], dtype=float)
        field = dynamics_service.run_corrector(ParabolicCylinder(0.0, duration, grid), p, V, src, dt=params["dt"])
        G = lattice_service.grad_field(grid, field.values) + lattice_service.slope_on_edges(grid, p)
        a = EdgeFieldSeries(grid, field.t0, field.dt, np.clip(V.d2V(G), V.c_minus, V.c_plus))
    P = parabolic_service.heat_kernel(a, grid, 0.0, y, duration)
    C, error = parabolic_service.nash_aronson_fit(P)
    masses = P.values.reshape(P.values.shape[0], -1).sum(axis=1)
    stride = max(1, P.values.shape[0] // 200)
    fieldnames = ["t", "max_abs", "mass", "min_shifted"]
    rows = [{"t": P.times[n], "max_abs": float(np.max(np.abs(P.values[n]))), "mass": masses[n],
             "min_shifted": float(np.min(P.values[n])) + 1.0 / grid.n_sites}
            for n in range(0, P.values.shape[0], stride)]
    out = ExperimentOutput("heat_kernel.csv", fieldnames, rows, results={"nash_aronson_c": C, "error": error})
    out.check("mass_conservation", bool(np.max(np.abs(masses)) <= 1e-12 * P.values.shape[0] + 1e-12),
              max_mass=np.max(np.abs(masses)))
    out.check("nash_aronson", C is not None, constant=C)
    return out


def gff(params: dict, src) -> ExperimentOutput:
    """
    Стационарность динамики GFF: ковариация E[ψ(0)ψ(x)] в момент T против спектральной формулы схемы
    и скорости затухания мод по автокорреляции на сдвиге lag против -log(1 - Δtλ_k)/Δt.
    """
    dim = params["dim"]
    L = params["L"]
    grid = lattice_service.make_torus(dim, L)
    horizon = _opt(params, "horizon", float(L) ** 2 / 2.0)
    dt = _opt(params, "dt", stable_dt(dim, 1.0))
    n_steps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    dt = horizon / n_steps
    Q = ParabolicCylinder(0.0, horizon, grid)
    center = grid.index_of((0,) * dim)
    lam = lattice_service.laplacian_eigenvalues(grid)
    lag = _opt(params, "lag", 1.0 / float(np.min(lam[lam > 1e-12])))
    if lag >= horizon:
        raise ValueError(f"Autocorrelation lag {lag} must be shorter than the horizon {horizon}")

    def one(r):
        field = dynamics_service.run_gff_dynamic(Q, noise_service.for_replica(src, r), dt=dt, record_dt=lag / 4.0)
        last = field.values[-1]
        cross, power, actual_lag = dynamics_service.mode_correlations(field, lag)
        return (last[center] * last).ravel(), cross, power, actual_lag

    results = map_replicas(one, range(params["replicas"]))
    samples = np.array([res[0] for res in results])
    cross = np.mean([res[1] for res in results], axis=0)
    power = np.mean([res[2] for res in results], axis=0)
    decays = dynamics_service.mode_decay_rates(grid, cross, power, results[0][3], dt, levels=params["decay_levels"])
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(len(samples))
    exact = np.roll(dynamics_service.gff_covariance(grid, dt), shift=(L,) * dim, axis=tuple(range(dim))).ravel()
    offsets = np.indices(grid.shape).reshape(dim, -1).T - L
    fieldnames = ["kind"] + _components("x", dim) + ["eigenvalue", "multiplicity", "empirical", "se", "exact"]
    rows = []
    for k in range(len(mean)):
        entry = {"kind": "covariance"}
        entry.update({f"x_{i + 1}": int(offsets[k, i]) for i in range(dim)})
        entry.update({"empirical": mean[k], "se": se[k], "exact": exact[k]})
        rows.append(entry)
    for decay in decays:
        rows.append({"kind": "decay_rate", "eigenvalue": decay.eigenvalue, "multiplicity": decay.multiplicity,
                     "empirical": decay.fitted_rate, "exact": decay.scheme_rate})
    out = ExperimentOutput("gff.csv", fieldnames, rows, results={
        "lag": results[0][3], "decay_rates": [decay.fitted_rate for decay in decays],
    })
    gap = np.abs(mean - exact)
    out.check("covariance", bool(np.all(gap <= params["tolerance_se"] * se + 1e-12)),
              worst=float(np.max(gap / np.maximum(se, 1e-300))))
    errors = [decay.relative_error for decay in decays]
    out.check("decay_rate", bool(np.all(np.isfinite(errors))) and max(errors) <= params["decay_tolerance"],
              relative_errors=errors)
    return out


RUNNERS = {
    "corrector": corrector,
    "flux-decay": flux_decay,
    "surface-tension": surface_tension,
    "hessian": hessian,
    "linearize": linearize,
    "hydro": hydro,
    "occupation": occupation,
    "excess": excess,
    "heatkernel": heatkernel,
    "gff": gff,
}
