"""Scenario assembly and the eps-sweep pipeline behind the CLI.

run_sweep drives, per Mach number: the compressible run, acoustic
extraction, forcing channels, the local-decay functional, and the
diagnostics records, plus one incompressible reference run; everything is
written to a run directory closed by a manifest. All outputs are a pure
function of (config, seed).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import spectral as sp
from .compressible import CompressibleSolver, IllPreparedData, SolverOptions
from .config import ExperimentConfig, canonical_text
from .constitutive import PressureLaw, ViscosityPair
from .diagnostics import (
    convergence_metrics,
    default_window,
    solenoidal_test_function,
    uniform_estimate_report,
)
from .geometry import (
    ExtensionField,
    Grid,
    build_grid,
    linear_path,
    sinusoidal_path,
    static_path,
)
from .incompressible import IncompressibleSolver
from .storage import write_csv, write_manifest, write_snapshot

CHANNEL_NAMES = tuple(f"forcing_channel_{i + 1}" for i in range(5))


@dataclass
class Scenario:
    grid: Grid
    law: PressureLaw
    visc: ViscosityPair
    path: object
    options: SolverOptions
    cfg: ExperimentConfig

    @property
    def lifting(self):
        if self.grid.obstacle_radius <= 0.0 or self.path.kind == "static":
            return None
        return ExtensionField(self.grid, self.path, self.options.lifting_radius)


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    g = cfg["geometry"]
    p = cfg["physics"]
    m = cfg["motion"]
    n = cfg["numerics"]
    grid = build_grid(g["dimension"], g["extent"], g["obstacle_radius"], g["cell_size"])
    law = PressureLaw(p["pressure_coeff"], p["gamma"], p["reference_density"])
    visc = ViscosityPair(p["shear_viscosity"], p["bulk_viscosity"])
    if m["kind"] == "static":
        path = static_path(m["horizon"])
    elif m["kind"] == "linear":
        path = linear_path((m["velocity_x"], m["velocity_y"]), m["horizon"])
    else:
        path = sinusoidal_path(
            (m["amplitude_x"], m["amplitude_y"]), m["frequency"], m["horizon"]
        )
    options = SolverOptions(
        cfl=n["cfl"],
        sponge_width=n["sponge_width"],
        sponge_enabled=n["sponge_enabled"],
        lifting_radius=n["lifting_radius"],
        data_bound=cfg["initial"]["data_bound"],
    )
    return Scenario(grid, law, visc, path, options, cfg)


def _cell_bump(grid: Grid, center, width, amplitude):
    xc, yc = grid.cell_centers()
    r2 = (xc - center[0]) ** 2 + (yc - center[1]) ** 2
    w2 = width**2
    out = np.where(r2 < w2, amplitude * (1.0 - r2 / w2) ** 3, 0.0)
    out[~grid.active] = 0.0
    return out


def _node_bump(grid: Grid, center, width):
    xn, yn = grid.nodes()
    r2 = (xn - center[0]) ** 2 + (yn - center[1]) ** 2
    w2 = width**2
    return np.where(r2 < w2, (1.0 - r2 / w2) ** 3, 0.0)


def _nodal_curl(grid: Grid, psi):
    u = (psi[:, 1:] - psi[:, :-1]) / grid.h
    v = -(psi[1:, :] - psi[:-1, :]) / grid.h
    u[~grid.uface_interior] = 0.0
    v[~grid.vface_interior] = 0.0
    return u, v


def initial_velocity(cfg: ExperimentConfig, grid: Grid, rng: np.random.Generator):
    """Solenoidal vortex patch plus a gradient component (or zero / random).

    Both pieces are compactly supported away from the obstacle and the
    sponge rim; amplitudes are normalized to the configured maxima.
    """
    ini = cfg["initial"]
    kind = ini["velocity_kind"]
    u = np.zeros((grid.nx + 1, grid.ny))
    v = np.zeros((grid.nx, grid.ny + 1))
    if kind == "zero":
        return u, v
    L = cfg["geometry"]["extent"]
    if kind == "random":
        from scipy.ndimage import gaussian_filter

        psi = gaussian_filter(rng.standard_normal((grid.nx + 1, grid.ny + 1)), 4.0)
        taper = _node_bump(grid, (0.0, 0.0), 0.7 * L)
        cu, cv = _nodal_curl(grid, psi * taper)
        q = gaussian_filter(rng.standard_normal((grid.nx, grid.ny)), 4.0)
        q *= _cell_bump(grid, (0.0, 0.0), 0.7 * L, 1.0)
        gq = grid.ops.grad(q)
    else:
        psi = _node_bump(grid, (-0.3 * L, -0.175 * L), 0.15 * L)
        cu, cv = _nodal_curl(grid, psi)
        q = _cell_bump(
            grid,
            (ini["pulse_center_x"], ini["pulse_center_y"]),
            1.5 * ini["pulse_width"],
            1.0,
        )
        gq = grid.ops.grad(q)

    scale_v = max(np.abs(cu).max(), np.abs(cv).max())
    if scale_v > 0:
        u += ini["vortex_amplitude"] / scale_v * cu
        v += ini["vortex_amplitude"] / scale_v * cv
    scale_g = max(np.abs(gq[0]).max(), np.abs(gq[1]).max())
    if scale_g > 0:
        u += ini["gradient_amplitude"] / scale_g * gq[0]
        v += ini["gradient_amplitude"] / scale_g * gq[1]
    return u, v


def initial_data(cfg: ExperimentConfig, grid: Grid, eps: float,
                 rng: np.random.Generator) -> IllPreparedData:
    ini = cfg["initial"]
    rho1 = _cell_bump(
        grid,
        (ini["pulse_center_x"], ini["pulse_center_y"]),
        ini["pulse_width"],
        ini["pulse_amplitude"],
    )
    u0, v0 = initial_velocity(cfg, grid, rng)
    return IllPreparedData(rho1, u0, v0, eps, bound=ini["data_bound"])


def sample_schedule(cfg: ExperimentConfig) -> np.ndarray:
    sch = cfg["schedule"]
    if sch["snapshots"] == 1 or sch["horizon"] == 0.0:
        return np.array([0.0])
    return np.linspace(0.0, sch["horizon"], sch["snapshots"])


def rage_horizon(cfg: ExperimentConfig) -> float:
    """Observation horizon capped below the reflection-return time.

    Waves must leave the cutoff support and not re-enter it within the
    horizon; the cap uses the smallest Mach number of the sweep, whose
    sound speed is fastest.
    """
    s = cfg["spectral"]
    L = cfg["geometry"]["extent"]
    law_pp = cfg["physics"]["pressure_coeff"] * cfg["physics"]["gamma"] * (
        cfg["physics"]["reference_density"] ** (cfg["physics"]["gamma"] - 1.0)
    )
    eps_min = min(cfg["sweep"]["eps"])
    cap = s["reflection_safety"] * 2.0 * (L - s["cutoff_zero"]) * eps_min / math.sqrt(law_pp)
    return min(cfg["schedule"]["horizon"], cap)


def rage_probe(cfg: ExperimentConfig, grid: Grid, dec: sp.SpectralDecomposition):
    s = cfg["spectral"]
    x_field = _cell_bump(
        grid, (s["source_center_x"], s["source_center_y"]), s["source_width"], 1.0
    )
    chi = sp.make_spatial_cutoff(grid, s["cutoff_one"], s["cutoff_zero"])
    window = sp.make_spectral_window(dec)
    return x_field, chi, window


# -- per-eps job ------------------------------------------------------------


def _channel_series(scenario: Scenario, dec, traj, lifting):
    """Per-channel L2((0,T) x Omega) norms from the snapshot series."""
    vals = []
    for state in traj.states:
        if lifting is not None:
            ext = lifting.sample(state.t)
            ext_dt = lifting.sample_dt(state.t)
        else:
            zu = np.zeros_like(state.u)
            zv = np.zeros_like(state.v)
            ext = sp.ExtensionFieldSample(zu, zv, 0.0, state.t)
            ext_dt = sp.ExtensionFieldSample(zu.copy(), zv.copy(), 0.0, state.t)
        assembly = sp.assemble_forcing(
            state, scenario.grid, scenario.law, scenario.visc, scenario.path, ext, ext_dt
        )
        vals.append(sp.forcing_channel_norms(assembly, dec))
    vals = np.array(vals)
    if len(traj.times) == 1:
        return np.zeros(vals.shape[1])
    return np.sqrt(np.trapezoid(vals**2, traj.times, axis=0))


def run_one_eps(scenario: Scenario, dec, eps: float, times, rng_seed: int,
                out_dir: Path | None):
    """Compressible run plus all per-eps analysis; returns record rows."""
    cfg = scenario.cfg
    rng = np.random.default_rng(rng_seed)
    data = initial_data(cfg, scenario.grid, eps, rng)
    solver = CompressibleSolver(
        scenario.grid, scenario.law, scenario.visc, scenario.path, scenario.options
    )
    state0 = solver.init_state(data)
    traj = solver.run(state0, times)

    lifting = scenario.lifting
    acoustics = []
    for state in traj.states:
        if lifting is not None:
            ext = lifting.sample(state.t)
        else:
            ext = sp.ExtensionFieldSample(
                np.zeros_like(state.u), np.zeros_like(state.v), 0.0, state.t
            )
        acoustics.append(
            sp.extract_acoustic_potential(state, scenario.grid, scenario.path,
                                          scenario.law, ext)
        )

    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, (state, ac) in enumerate(zip(traj.states, acoustics)):
            write_snapshot(
                out_dir / f"snap_{i:03d}.dat",
                scenario.grid,
                state.t,
                {"rho": state.rho, "u": state.u, "v": state.v,
                 "r": ac.r, "psi": ac.psi},
            )

    channels = _channel_series(scenario, dec, traj, lifting)

    x_field, chi, window = rage_probe(cfg, scenario.grid, dec)
    horizon = rage_horizon(cfg)
    if horizon > 0.0:
        rage = sp.rage_decay(
            dec, scenario.law, eps, x_field, chi, window, horizon,
            quadrature_factor=cfg["spectral"]["quadrature_factor"],
        )
        rage_row = (eps, rage.value, rage.horizon, rage.modes,
                    rage.truncation_remainder)
    else:
        rage_row = (eps, 0.0, 0.0, dec.modes, dec.truncation_remainder(x_field))

    return traj, channels, rage_row


def _eps_dirname(eps: float) -> str:
    return f"eps_{eps:g}".replace(".", "p")


def run_sweep(cfg: ExperimentConfig, out_dir) -> dict:
    """Full pipeline for the configured scenario; returns the summary table."""
    if cfg["run"]["scenario"] == "spectral":
        return run_spectral_study(cfg, out_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(canonical_text(cfg))
    run_id = cfg.digest()

    scenario = build_scenario(cfg)
    grid = scenario.grid
    times = sample_schedule(cfg)
    eps_list = list(cfg["sweep"]["eps"])
    seed = cfg["run"]["seed"]

    lap = sp.assemble_neumann_laplacian(grid)
    dec = sp.spectral_decompose(lap, min(cfg["numerics"]["modes"], grid.n_active))

    # incompressible reference run (eps-independent)
    rng = np.random.default_rng(seed)
    u0, v0 = initial_velocity(cfg, grid, rng)
    nu = cfg["physics"]["shear_viscosity"] / cfg["physics"]["reference_density"]
    inc = IncompressibleSolver(grid, nu, scenario.path, cfl=cfg["numerics"]["cfl"])
    inc_traj = inc.run(inc.init_state(u0, v0), times)
    ref_dir = out_dir / "reference"
    ref_dir.mkdir(exist_ok=True)
    for i, st in enumerate(inc_traj.states):
        write_snapshot(
            ref_dir / f"snap_{i:03d}.dat", grid, st.t,
            {"u": st.u, "v": st.v, "pressure": st.pressure},
        )

    workers = int(os.environ.get("MACHLAB_WORKERS", "1"))
    jobs = {}
    if workers > 1:
        text = canonical_text(cfg)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                eps: pool.submit(_run_one_eps_job, text, eps, str(out_dir))
                for eps in eps_list
            }
            for eps, fut in futures.items():
                jobs[eps] = fut.result()
    else:
        for eps in eps_list:
            jobs[eps] = run_one_eps(
                scenario, dec, eps, times, seed, out_dir / _eps_dirname(eps)
            )

    energy_rows = []
    metric_records = []
    mass_rows = []
    rage_rows = []
    summary_rows = []
    window = default_window(grid)
    a = grid.obstacle_radius
    phi = solenoidal_test_function(grid, 1.2 * a, 3.0 * a)
    for eps in eps_list:
        traj, channels, rage_row = jobs[eps]
        for rec in traj.energy:
            energy_rows.append((rec.t, rec.eps, rec.lhs, rec.rhs, int(rec.flag)))
        for t, m, s in zip(traj.times, traj.total_mass, traj.sponge_mass):
            mass_rows.append((float(t), eps, m, s))
        metric_records.extend(
            uniform_estimate_report(traj, grid, scenario.law, eps, run_id=run_id)
        )
        conv = convergence_metrics(
            traj, inc_traj, grid, scenario.law, scenario.path, scenario.lifting,
            window=window, phi=phi, run_id=run_id,
        )
        metric_records.extend(conv)
        for name, value in zip(CHANNEL_NAMES, channels):
            metric_records.append(
                _metric(run_id, eps, name, value)
            )
        channel_sum = float(np.sum(channels))
        metric_records.append(_metric(run_id, eps, "forcing_channel_sum", channel_sum))
        rage_rows.append(rage_row)
        by_name = {r.metric_name: r.value for r in conv}
        res_l1 = next(
            r.value for r in metric_records
            if r.eps == eps and r.metric_name == "res_indicator_l1"
        )
        summary_rows.append(
            (
                eps,
                by_name["density_scale"],
                by_name["velocity_gap"],
                by_name["solenoidal_pairing_gap"],
                rage_row[1],
                channel_sum,
                res_l1,
                int(all(rec.flag for rec in traj.energy)),
            )
        )

    write_csv(out_dir / "energy.csv", ["t", "eps", "lhs", "rhs", "flag"], energy_rows)
    write_csv(out_dir / "mass.csv", ["t", "eps", "total_mass", "sponge_cumulative"],
              mass_rows)
    write_csv(
        out_dir / "metrics.csv",
        ["run_id", "eps", "metric_name", "q", "window", "t_or_sup", "value"],
        [
            (r.run_id, r.eps, r.metric_name, r.q, r.window, r.t_or_sup, r.value)
            for r in metric_records
        ],
    )
    write_csv(out_dir / "rage.csv", ["eps", "D", "T", "K", "truncation_remainder"],
              rage_rows)
    write_csv(
        out_dir / "eigenvalues.csv",
        ["k", "lambda", "residual"],
        [(k + 1, float(l), float(r)) for k, (l, r) in
         enumerate(zip(dec.eigenvalues, dec.residuals))],
    )
    header = ["eps", "density_scale", "velocity_gap", "solenoidal_pairing_gap",
              "rage_d", "forcing_channel_sum", "res_indicator_l1", "energy_ok"]
    write_csv(out_dir / "summary.csv", header, summary_rows)
    write_manifest(out_dir, run_id)
    return {"run_id": run_id, "summary": summary_rows, "header": header,
            "out_dir": str(out_dir)}


def _metric(run_id, eps, name, value):
    from .diagnostics import MetricsRecord

    return MetricsRecord(run_id, eps, name, 2.0, "full", "integral_t", value)


def _run_one_eps_job(cfg_text: str, eps: float, out_dir: str):
    """Worker-pool entry: rebuilds the scenario from the canonical text."""
    from .config import parse_config

    cfg = parse_config(cfg_text)
    scenario = build_scenario(cfg)
    lap = sp.assemble_neumann_laplacian(scenario.grid)
    dec = sp.spectral_decompose(
        lap, min(cfg["numerics"]["modes"], scenario.grid.n_active)
    )
    times = sample_schedule(cfg)
    return run_one_eps(
        scenario, dec, eps, times, cfg["run"]["seed"],
        Path(out_dir) / _eps_dirname(eps),
    )


def run_spectral_study(cfg: ExperimentConfig, out_dir) -> dict:
    """Pure spectral scenario: eigentable and the D(eps) decay series."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(canonical_text(cfg))
    run_id = cfg.digest()

    scenario = build_scenario(cfg)
    grid = scenario.grid
    lap = sp.assemble_neumann_laplacian(grid)
    dec = sp.spectral_decompose(lap, min(cfg["numerics"]["modes"], grid.n_active))
    x_field, chi, window = rage_probe(cfg, grid, dec)
    horizon = rage_horizon(cfg)

    rage_rows = []
    for eps in cfg["sweep"]["eps"]:
        res = sp.rage_decay(
            dec, scenario.law, eps, x_field, chi, window, horizon,
            quadrature_factor=cfg["spectral"]["quadrature_factor"],
        )
        rage_rows.append((eps, res.value, res.horizon, res.modes,
                          res.truncation_remainder))
    write_csv(out_dir / "rage.csv", ["eps", "D", "T", "K", "truncation_remainder"],
              rage_rows)
    write_csv(
        out_dir / "eigenvalues.csv",
        ["k", "lambda", "residual"],
        [(k + 1, float(l), float(r)) for k, (l, r) in
         enumerate(zip(dec.eigenvalues, dec.residuals))],
    )
    header = ["eps", "rage_d"]
    summary = [(eps, row[1]) for eps, row in zip(cfg["sweep"]["eps"], rage_rows)]
    write_csv(out_dir / "summary.csv", header, summary)
    write_manifest(out_dir, run_id)
    return {"run_id": run_id, "summary": summary, "header": header,
            "out_dir": str(out_dir)}
