"""Multi-rank execution: rank lifecycle, deterministic halo exchange, host
gather / solve / scatter, and the coupled explicit loop.

Ranks are in-process workers (one thread each) with fully private state;
every cross-rank interaction flows through ordered message links keyed by
(lane, source, destination), so the communication pattern is exactly what a
message-passing backend would see and no worker ever reads another's memory.
The host (rank 0) owns the global mesh, the factor-once linear system, and
all file output.

The step loop follows the coupled algorithm literally: solve the linear
system (host-central, factor once), refresh halos, apply boundary
conditions, evaluate convection / diffusion / source residuals, advance the
explicit update, and emit periodic output.  Boundary conditions are also
applied once before the loop; for time-constant data that pre-loop pass is
redundant but kept for structural fidelity.
"""

from __future__ import annotations

import csv
import json
import os
import queue
import threading
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import streamer as discharge
from .config import RunConfig
from .direct_solver import factorize, solve
from .errors import ConfigError, SimulationError, Timeout, ZeroDt
from .mesh import (INTERIOR, Mesh, build_diamonds, load_mesh, node_weights,
                   structured_triangulation)
from .partition import (Subdomain, build_dual_graph, build_subdomains,
                        partition, single_subdomain)
from .poisson import assemble_rhs, assemble_system
from .transport import (Field, FaceVelocity, apply_boundary_conditions,
                        classify_faces, convective_residual,
                        diffusive_residual, dirichlet_node_data,
                        dirichlet_values, explicit_step,
                        stable_dt)
from .vtk_io import write_vtk

PHASES = ("convection", "diffusion", "linear_solver", "total")

_POLL = 0.02  # seconds between abort checks while blocked on a link


class _Fabric:
    """Every message link of one run plus the shared failure switchboard."""

    def __init__(self, timeout: float):
        self.timeout = timeout
        self.links: dict[tuple, queue.SimpleQueue] = {}
        self.abort = threading.Event()
        self.failures: list[tuple] = []  # (rank, step, phase, exception)

    def add_link(self, lane: str, src: int, dst: int):
        self.links[(lane, src, dst)] = queue.SimpleQueue()

    def send(self, lane: str, src: int, dst: int, payload):
        self.links[(lane, src, dst)].put(payload)

    def recv(self, lane: str, src: int, dst: int):
        q = self.links[(lane, src, dst)]
        deadline = time.monotonic() + self.timeout
        while True:
            try:
                return q.get(timeout=_POLL)
            except queue.Empty:
                if self.abort.is_set():
                    raise Timeout(f"rank {dst}: peer failed while waiting on "
                                  f"rank {src}", rank=dst)
                if time.monotonic() > deadline:
                    self.abort.set()
                    raise Timeout(f"rank {dst}: no message from rank {src} "
                                  f"within {self.timeout}s", rank=dst)


@dataclass
class ExchangePlan:
    """Static per-neighbor send/recv index lists, ascending-global order."""

    neighbors: list
    send_idx: dict
    recv_idx: dict

    @classmethod
    def from_subdomain(cls, sub: Subdomain) -> "ExchangePlan":
        return cls(neighbors=sub.neighbors,
                   send_idx={r: s for r, (s, _) in sub.neighbor_links.items()},
                   recv_idx={r: h for r, (_, h) in sub.neighbor_links.items()})


@dataclass
class RankContext:
    rank: int
    k: int
    sub: Subdomain
    plan: ExchangePlan
    fabric: _Fabric
    # host-only global knowledge (None elsewhere)
    n_global: int | None = None
    all_own_l2g: list | None = None
    all_full_l2g: list | None = None

    @property
    def is_host(self) -> bool:
        return self.rank == 0


def halo_exchange(ctx: RankContext, f: Field) -> Field:
    """Refresh every halo slot from its owner; post all sends, then drain.

    Collective: every rank must call it the same number of times.  k = 1 (or
    an isolated rank) degenerates to clearing the staleness flag.
    """
    for r in ctx.plan.neighbors:
        ctx.fabric.send("halo", ctx.rank, r, f.values[ctx.plan.send_idx[r]])
    for r in ctx.plan.neighbors:
        f.values[ctx.plan.recv_idx[r]] = ctx.fabric.recv("halo", r, ctx.rank)
    f.halo_stale = False
    return f


def gather_rhs(ctx: RankContext, own_values: np.ndarray):
    """Collect per-own-cell values into one global-cell-order vector.

    Returns the assembled vector on the host and None on every other rank.
    """
    if not ctx.is_host:
        ctx.fabric.send("coll", ctx.rank, 0, own_values)
        return None
    out = np.empty(ctx.n_global)
    out[ctx.all_own_l2g[0]] = own_values
    for r in range(1, ctx.k):
        out[ctx.all_own_l2g[r]] = ctx.fabric.recv("coll", r, 0)
    return out


def broadcast_solution(ctx: RankContext, x, quantity: str = "potential",
                       t: float = 0.0) -> Field:
    """Scatter own + halo slices of a host vector to every rank.

    Only each rank's own and halo entries travel (not the full vector);
    halo slots arrive current, so no follow-up exchange is needed.
    """
    if ctx.is_host:
        for r in range(1, ctx.k):
            ctx.fabric.send("coll", 0, r, x[ctx.all_full_l2g[r]])
        local = x[ctx.sub.cells_l2g]
    else:
        local = ctx.fabric.recv("coll", 0, ctx.rank)
    return Field(values=local, quantity=quantity, time=t, halo_stale=False)


def allreduce_min(ctx: RankContext, value: float) -> float:
    """Exact min across ranks (host-rooted reduce + broadcast)."""
    if ctx.is_host:
        m = value
        for r in range(1, ctx.k):
            m = min(m, ctx.fabric.recv("coll", r, 0))
        for r in range(1, ctx.k):
            ctx.fabric.send("coll", 0, r, m)
        return m
    ctx.fabric.send("coll", ctx.rank, 0, value)
    return ctx.fabric.recv("coll", 0, ctx.rank)


@dataclass
class SimulationReport:
    steps: int
    k: int
    n_cells: int
    dt_min: float
    dt_max: float
    phase_seconds: dict
    num_assemblies: int
    num_factorizations: int
    num_solves: int
    clip_count: int
    final_fields: dict
    outputs: list


@dataclass
class _RankResult:
    timers: dict
    clips: int = 0
    dt_min: float = float("inf")
    dt_max: float = 0.0
    solves: int = 0
    final_fields: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)


@dataclass
class _Shared:
    """Driver-owned objects the workers may touch only as documented."""

    cfg: RunConfig
    mesh: Mesh                      # host-only reads
    fabric: _Fabric
    problem: object = None          # host-only
    factors: object = None          # host-only
    progress: list = None           # per-rank {"step": int, "phase": str}
    results: list = None


def _initial_transport_field(cfg: RunConfig, sub: Subdomain) -> Field:
    tc = cfg.transport
    if tc.init == "constant":
        vals = np.full(sub.n_local, float(tc.constant))
    elif tc.init == "gaussian":
        vals = discharge.gaussian_seed(sub, tc.center, tc.sigma, tc.amplitude)
    else:
        raise ConfigError(f"unknown transport init '{tc.init}'")
    return Field(values=vals, quantity="u", time=0.0, halo_stale=False)


def _emit_output(ctx: RankContext, shared: _Shared, fields: dict,
                 index: int, res: _RankResult) -> None:
    """Gather own-cell values per quantity; the host writes one VTK file."""
    cfg = shared.cfg
    gathered = {}
    for name in sorted(fields):
        g = gather_rhs(ctx, fields[name].values[:ctx.sub.n_own])
        if ctx.is_host:
            gathered[name] = g
    if ctx.is_host:
        path = os.path.join(cfg.out_dir, f"{cfg.name}_{index:04d}.vtk")
        write_vtk(path, shared.mesh, gathered,
                  title=f"{cfg.name} step output {index}")
        res.outputs.append(path)


def _resolve_dt(ctx: RankContext, cfg: RunConfig, dt_local: float) -> float:
    if cfg.dt is not None:
        return cfg.dt
    dt = allreduce_min(ctx, dt_local)
    if not np.isfinite(dt):
        raise ZeroDt("no finite stability bound (V = 0 and D = 0); "
                     "set dt in the config")
    return dt


def _transport_worker(ctx: RankContext, shared: _Shared, progress: dict,
                      res: _RankResult) -> None:
    cfg = shared.cfg
    sub = ctx.sub
    progress["phase"] = "setup"
    diamonds = build_diamonds(sub.local_mesh)
    weights = node_weights(sub.local_mesh, cell_order=sub.cells_l2g)
    kind = classify_faces(sub, cfg.transport.bc)
    dirich = dirichlet_values(sub, cfg.transport.bc, kind)
    ndata = dirichlet_node_data(sub, cfg.transport.bc, kind)
    vel = FaceVelocity.uniform(sub, *cfg.transport.velocity)
    dcoef = cfg.transport.diffusion
    u = _initial_transport_field(cfg, sub)

    halo_exchange(ctx, u)
    apply_boundary_conditions(sub, u, kind, dirich)  # pre-loop pass
    if cfg.out_dir:
        _emit_output(ctx, shared, {"u": u}, 0, res)

    timers = res.timers
    t_loop = time.perf_counter()
    for step in range(cfg.steps):
        progress["step"] = step
        progress["phase"] = "stability"
        dt = _resolve_dt(ctx, cfg, stable_dt(sub, vel, dcoef, cfg.cfl))
        res.dt_min, res.dt_max = min(res.dt_min, dt), max(res.dt_max, dt)

        progress["phase"] = "exchange"
        halo_exchange(ctx, u)
        bvals = apply_boundary_conditions(sub, u, kind, dirich, ndata)

        progress["phase"] = "convection"
        t0 = time.perf_counter()
        conv = convective_residual(sub, u, vel, bvals)
        timers["convection"] += time.perf_counter() - t0

        progress["phase"] = "diffusion"
        t0 = time.perf_counter()
        diss = diffusive_residual(sub, u, weights, diamonds, bvals, dcoef)
        timers["diffusion"] += time.perf_counter() - t0

        u = explicit_step(sub, u, conv, diss, dt)
        if cfg.out_dir and cfg.output_every and (step + 1) % cfg.output_every == 0:
            progress["phase"] = "output"
            _emit_output(ctx, shared, {"u": u}, (step + 1) // cfg.output_every,
                         res)
    timers["total"] = time.perf_counter() - t_loop

    progress["phase"] = "final gather"
    g = gather_rhs(ctx, u.values[:sub.n_own])
    if ctx.is_host:
        res.final_fields["u"] = g


def _streamer_worker(ctx: RankContext, shared: _Shared, progress: dict,
                     res: _RankResult) -> None:
    cfg = shared.cfg
    sc = cfg.streamer
    sub = ctx.sub
    progress["phase"] = "setup"
    coeffs = _build_coefficients(sc)
    sysctx = discharge.build_system(
        sub, sc.species_bc, sc.potential_bc, cfl=cfg.cfl,
        problem=shared.problem if ctx.is_host else None,
        factors=shared.factors if ctx.is_host else None)

    n_e = Field(discharge.gaussian_seed(sub, sc.seed_center, sc.seed_sigma,
                                        sc.seed_amplitude), "n_e")
    ion_amp = sc.seed_amplitude if sc.ion_amplitude is None else sc.ion_amplitude
    n_i = Field(discharge.gaussian_seed(sub, sc.seed_center, sc.seed_sigma,
                                        ion_amp), "n_i")
    v_pot = Field(np.zeros(sub.n_local), "potential")
    state = discharge.StreamerState(n_e=n_e, n_i=n_i, v_pot=v_pot)

    halo_exchange(ctx, state.n_e)
    halo_exchange(ctx, state.n_i)
    apply_boundary_conditions(sub, state.n_e, sysctx.kind_ne, sysctx.dirich_ne)
    if cfg.out_dir:
        _emit_output(ctx, shared, _streamer_fields(state), 0, res)

    timers = res.timers
    t_loop = time.perf_counter()
    for step in range(cfg.steps):
        progress["step"] = step

        progress["phase"] = "linear_solver"
        t0 = time.perf_counter()
        src = discharge.charge_source(state, coeffs, sub)
        g = gather_rhs(ctx, src)
        x = None
        if ctx.is_host:
            b = assemble_rhs(shared.mesh, g, sc.potential_bc,
                             problem=shared.problem)
            x = solve(shared.factors, b)
            res.solves += 1
        state.v_pot = broadcast_solution(ctx, x, "potential", state.time)
        timers["linear_solver"] += time.perf_counter() - t0

        progress["phase"] = "exchange"
        halo_exchange(ctx, state.n_e)  # ion halos are never read (no stencil)

        progress["phase"] = "diffusion"
        t0 = time.perf_counter()
        fc = discharge.prepare_fluxes(state, coeffs, sysctx)
        timers["diffusion"] += time.perf_counter() - t0

        progress["phase"] = "stability"
        dt = _resolve_dt(ctx, cfg, fc.dt_stable)
        res.dt_min, res.dt_max = min(res.dt_min, dt), max(res.dt_max, dt)

        progress["phase"] = "convection"
        t0 = time.perf_counter()
        conv = convective_residual(sub, state.n_e, fc.vel, fc.bvals_ne)
        timers["convection"] += time.perf_counter() - t0

        progress["phase"] = "diffusion"
        t0 = time.perf_counter()
        diss = diffusive_residual(sub, state.n_e, sysctx.weights,
                                  sysctx.diamonds, fc.bvals_ne,
                                  diffusion=fc.d_faces)
        timers["diffusion"] += time.perf_counter() - t0

        n_e2, n_i2, clip = discharge.apply_update(state, sysctx, fc, dt,
                                                  conv, diss)
        res.clips += clip
        state = discharge.StreamerState(n_e=n_e2, n_i=n_i2, v_pot=state.v_pot,
                                        e_faces=fc.e_faces,
                                        clips=state.clips + clip)
        if cfg.out_dir and cfg.output_every and (step + 1) % cfg.output_every == 0:
            progress["phase"] = "output"
            _emit_output(ctx, shared, _streamer_fields(state),
                         (step + 1) // cfg.output_every, res)
    timers["total"] = time.perf_counter() - t_loop

    progress["phase"] = "final gather"
    for name, f in sorted(_streamer_fields(state).items()):
        g = gather_rhs(ctx, f.values[:sub.n_own])
        if ctx.is_host:
            res.final_fields[name] = g


def _streamer_fields(state) -> dict:
    return {"n_e": state.n_e, "n_i": state.n_i, "potential": state.v_pot}


def _build_coefficients(sc) -> "discharge.StreamerCoefficients":
    table = None
    if sc.model == "table":
        if sc.table_path is None:
            raise ConfigError("model = table requires table_path")
        from .config import load_coefficient_table
        table = load_coefficient_table(sc.table_path)
    return discharge.StreamerCoefficients(
        eps=sc.eps, q_e=sc.q_e, model=sc.model, mu_e=sc.mu_e, d_e=sc.d_e,
        alpha=sc.alpha, table=table)


def _worker_shell(rank: int, ctx: RankContext, shared: _Shared) -> None:
    progress = shared.progress[rank]
    try:
        res = _RankResult(timers={p: 0.0 for p in PHASES})
        if shared.cfg.physics == "streamer":
            _streamer_worker(ctx, shared, progress, res)
        else:
            _transport_worker(ctx, shared, progress, res)
        shared.results[rank] = res
    except BaseException as exc:  # noqa: BLE001 - must reach the driver
        shared.fabric.failures.append((rank, progress["step"],
                                       progress["phase"], exc))
        shared.fabric.abort.set()


def _check_bc_labels(mesh: Mesh, cfg: RunConfig) -> None:
    labels = {lab for lab in mesh.face_labels if lab != INTERIOR}
    dicts = [("bc", cfg.transport.bc)] if cfg.physics == "transport" else \
        [("bc", cfg.streamer.species_bc),
         ("potential_bc", cfg.streamer.potential_bc)]
    for name, bc in dicts:
        missing = labels - set(bc)
        if missing:
            raise ConfigError(f"[{name}] missing labels: {sorted(missing)}")
        extra = set(bc) - labels
        if extra:
            raise ConfigError(f"[{name}] labels not on this mesh: "
                              f"{sorted(extra)}")


def _load_global_mesh(cfg: RunConfig) -> Mesh:
    if cfg.mesh_path is not None:
        return load_mesh(cfg.mesh_path)
    return structured_triangulation(cfg.mesh_n)


def run_simulation(cfg: RunConfig) -> SimulationReport:
    """Execute the full coupled loop over cfg.k in-process ranks.

    The host reads and splits the mesh and assembles + factorizes the
    potential matrix exactly once (it depends only on the mesh) before the
    ranks start; each step then reuses the factors.  Fixed config and seed
    give bit-identical fields and output files for a fixed k.
    """
    cfg.validate()
    mesh = _load_global_mesh(cfg)
    _check_bc_labels(mesh, cfg)
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)

    if cfg.k == 1:
        subs = [single_subdomain(mesh)]
    else:
        subs = build_subdomains(mesh, partition(build_dual_graph(mesh),
                                                cfg.k, cfg.seed))

    num_assemblies = num_factorizations = 0
    problem = factors = None
    if cfg.physics == "streamer":
        sc = cfg.streamer
        pin = sc.pin_cell
        if pin is None and all(v[0] == "neumann"
                               for v in sc.potential_bc.values()):
            pin = 0  # all-Neumann potential: fix the gauge once
        diamonds = build_diamonds(mesh)
        weights = node_weights(mesh)
        problem = assemble_system(mesh, diamonds, weights, sc.potential_bc,
                                  pin_cell=pin)
        num_assemblies += 1
        factors = factorize(problem.matrix)
        num_factorizations += 1

    fabric = _Fabric(timeout=cfg.timeout_s)
    for sub in subs:
        for r in sub.neighbors:
            fabric.add_link("halo", sub.rank, r)
    for r in range(1, cfg.k):
        fabric.add_link("coll", 0, r)
        fabric.add_link("coll", r, 0)

    all_own = [s.cells_l2g[:s.n_own] for s in subs]
    all_full = [s.cells_l2g for s in subs]
    shared = _Shared(cfg=cfg, mesh=mesh, fabric=fabric, problem=problem,
                     factors=factors,
                     progress=[{"step": -1, "phase": "spawn"}
                               for _ in range(cfg.k)],
                     results=[None] * cfg.k)
    ctxs = [RankContext(rank=s.rank, k=cfg.k, sub=s,
                        plan=ExchangePlan.from_subdomain(s), fabric=fabric,
                        n_global=mesh.n_cells if s.rank == 0 else None,
                        all_own_l2g=all_own if s.rank == 0 else None,
                        all_full_l2g=all_full if s.rank == 0 else None)
            for s in subs]

    threads = [threading.Thread(target=_worker_shell, args=(r, ctxs[r], shared),
                                name=f"rank-{r}") for r in range(cfg.k)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=cfg.timeout_s + 30.0)
    if any(t.is_alive() for t in threads):
        fabric.abort.set()
        raise SimulationError("a rank is hung; aborting", phase="join")

    if fabric.failures:
        root = next((f for f in fabric.failures
                     if not isinstance(f[3], Timeout)), fabric.failures[0])
        rank, step, phase, exc = root
        raise SimulationError(
            f"rank {rank} failed at step {step} in phase '{phase}': {exc}",
            step=step, rank=rank, phase=phase) from exc

    host = shared.results[0]
    return SimulationReport(
        steps=cfg.steps, k=cfg.k, n_cells=mesh.n_cells,
        dt_min=host.dt_min if cfg.steps else 0.0,
        dt_max=host.dt_max if cfg.steps else 0.0,
        phase_seconds=dict(host.timers) if cfg.steps
        else {p: 0.0 for p in PHASES},
        num_assemblies=num_assemblies,
        num_factorizations=num_factorizations,
        num_solves=host.solves,
        clip_count=sum(r.clips for r in shared.results),
        final_fields=host.final_fields,
        outputs=host.outputs)


def write_report(report: SimulationReport, out_dir) -> tuple[str, str]:
    """Emit timings.csv (phase,seconds) and run_summary.json."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "timings.csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phase", "seconds"])
        for phase in PHASES:
            w.writerow([phase, "%.17g" % report.phase_seconds[phase]])
    summary = {
        "steps": report.steps, "k": report.k, "cells": report.n_cells,
        "dt_min": report.dt_min, "dt_max": report.dt_max,
        "assemblies": report.num_assemblies,
        "factorizations": report.num_factorizations,
        "solves": report.num_solves, "clips": report.clip_count,
        "outputs": [os.path.basename(p) for p in report.outputs],
    }
    json_path = os.path.join(out_dir, "run_summary.json")
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, json_path
