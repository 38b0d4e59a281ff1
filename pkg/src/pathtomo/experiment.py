"""Glue for simulated runs: frame-set synthesis with deterministic seeding,
reference states, round trips and waveplate sweeps."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .geometry import MeasurementPlan, PathGeometry, plan_measurements
from .optics import NoiseModel, OpticalConfig, direct_image, oft_image, to_lab_frame
from .prep import PrepSettings, prepare_paper_state, theory_purity
from .quantum import DensityMatrix, fidelity, pure_state, purity
from .reconstruct import Calibration, FrameSet, calibrate, reconstruct_state

SWEEP_VARIABLES = ("phi", "zeta", "omega", "tau")


def thread_count() -> int:
    env = os.environ.get("PATHTOMO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def frame_seeds(seed: int | None, n: int) -> list[int | None]:
    if seed is None:
        return [None] * n
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def hidden_offsets(thetas, max_px: float, seed: int | None) -> dict[float, float]:
    """Per-angle k-origin offsets, uniform in [-max_px, max_px]."""
    rng = np.random.default_rng(None if seed is None else [seed, 7])
    return {float(t): float(rng.uniform(-max_px, max_px)) if max_px else 0.0 for t in thetas}


def simulate_frameset(rho, g: PathGeometry, cfg: OpticalConfig,
                      plan: MeasurementPlan | None = None, *,
                      noise: NoiseModel | None = None, seed: int | None = 0,
                      offsets: dict[float, float] | None = None, mirrored: bool = False,
                      lab_frame: bool = False, repeats: int = 1,
                      threads: int | None = None) -> FrameSet:
    """Direct image plus ``repeats`` frames per plan angle. Each frame draws
    from its own seed derived from ``seed``, so results do not depend on the
    thread count."""
    plan = plan or plan_measurements(g)
    thetas = plan.thetas
    jobs = [(None, 0)] + [(t, r) for t in thetas for r in range(repeats)]
    seeds = frame_seeds(seed, len(jobs))
    offsets = offsets or {}

    def make(job):
        (theta, _), s = job
        if theta is None:
            return direct_image(rho, g, cfg, noise=noise, seed=s)
        img = oft_image(rho, g, theta, cfg, noise=noise, seed=s,
                        origin_offset=offsets.get(float(theta), 0.0), mirrored=mirrored)
        return to_lab_frame(img) if lab_frame else img

    n = threads or thread_count()
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            images = list(pool.map(make, zip(jobs, seeds)))
    else:
        images = [make(j) for j in zip(jobs, seeds)]
    fs = FrameSet()
    for img in images:
        fs.add(img)
    return fs


def reference_states(d: int) -> tuple[DensityMatrix, DensityMatrix]:
    """Two pure calibration states with every coherence of magnitude 1/d.

    The first has all phases zero; the second has quadratic phases, so its
    coherences differ from the first and from their own conjugates.
    """
    j = np.arange(d)
    return pure_state(np.ones(d)), pure_state(np.exp(1j * 0.9 * j * j + 0.4j * j))


def calibrate_from_simulation(g: PathGeometry, cfg: OpticalConfig, plan=None, *,
                              noise=None, seed: int | None = 0, offsets=None,
                              mirrored: bool = False, width: int = 1,
                              refs=None) -> Calibration:
    plan = plan or plan_measurements(g)
    r1, r2 = refs or reference_states(g.d)
    s1, s2 = frame_seeds(None if seed is None else seed + 1, 2)
    f1 = simulate_frameset(r1, g, cfg, plan, noise=noise, seed=s1, offsets=offsets,
                           mirrored=mirrored)
    f2 = simulate_frameset(r2, g, cfg, plan, noise=noise, seed=s2, offsets=offsets,
                           mirrored=mirrored)
    return calibrate(f1, r1, f2, r2, plan, width=width)


def round_trip(rho, g: PathGeometry, cfg: OpticalConfig | None = None, *,
               plan: MeasurementPlan | None = None, noise: NoiseModel | None = None,
               seed: int | None = 0, width: int = 1, cal: Calibration | None = None,
               offsets=None, mirrored: bool = False, repeats: int = 1):
    """Simulate frames of ``rho`` and reconstruct it. Returns
    ``(result, fidelity of rho_physical against rho)``."""
    cfg = cfg or OpticalConfig()
    plan = plan or plan_measurements(g)
    fs = simulate_frameset(rho, g, cfg, plan, noise=noise, seed=seed, offsets=offsets,
                           mirrored=mirrored, repeats=repeats)
    res = reconstruct_state(fs, plan, cal, width=width)
    return res, fidelity(res.rho_physical, rho)


def sweep(variable: str, values, cfg: OpticalConfig | None = None, *,
          base: PrepSettings | None = None, noise: NoiseModel | None = None,
          seed: int | None = 0, width: int = 1) -> list[tuple[float, float, float, float]]:
    """Rows of (angle, fidelity, purity, theory_purity) over one waveplate angle.

    ``purity`` is that of the reconstructed physical state. For the mixer
    angle ``tau`` the theory column is the closed form; otherwise it is the
    purity of the prepared state.
    """
    if variable not in SWEEP_VARIABLES:
        raise ValueError(f"unknown sweep variable {variable!r}; choose from {SWEEP_VARIABLES}")
    cfg = cfg or OpticalConfig()
    base = base or PrepSettings()
    rows = []
    seeds = frame_seeds(seed, len(values))
    for angle, s in zip(values, seeds):
        rho_th, g = prepare_paper_state(replace(base, **{variable: float(angle)}))
        res, fid = round_trip(rho_th, g, cfg, noise=noise, seed=s, width=width)
        theory = theory_purity(angle) if variable == "tau" else purity(rho_th)
        rows.append((float(angle), fid, purity(res.rho_physical), theory))
    return rows
