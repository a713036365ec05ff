"""Optimisation runs: configuration, initial data, the time loop, scenarios."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .anisotropy import Anisotropy
from .elasticity import (
    ElasticityModel,
    LoadSpec,
    assemble_state,
    compliance,
    sensitivity_density,
    solve_state,
)
from .errors import SOLVER_ERRORS, NoInterface, UnknownScenario
from .mesh import BoundaryRule, FeMesh, Segment, Tag, TagKind, build_mesh
from .phasefield import (
    EnergyReport,
    KinkRelaxation,
    PhaseState,
    assemble_vi,
    gl_energy,
    optimal_profile,
    safeguard_step,
    solve_vi,
)
from .writers import atomic_write_text, read_vtk, write_trace, write_vtk

log = logging.getLogger(__name__)

__all__ = [
    "BoundarySpec",
    "MeshSpec",
    "RandomInit",
    "BallInit",
    "StripeInit",
    "FileInit",
    "SimConfig",
    "StepParams",
    "RunResult",
    "Snapshot",
    "initial_field",
    "project_mass",
    "run",
    "scenario",
    "SCENARIOS",
    "interface_roughness",
]

BOUNDARY_KINDS = ("dirichlet", "dirichlet_x", "dirichlet_y", "traction")


@dataclass(frozen=True)
class BoundarySpec:
    name: str
    kind: str  # one of BOUNDARY_KINDS
    side: str
    lo: float
    hi: float

    def rule(self) -> BoundaryRule:
        if self.kind == "dirichlet":
            tag = Tag(TagKind.DIRICHLET_FULL, self.name)
        elif self.kind == "dirichlet_x":
            tag = Tag(TagKind.DIRICHLET_COMPONENT, self.name, 1)
        elif self.kind == "dirichlet_y":
            tag = Tag(TagKind.DIRICHLET_COMPONENT, self.name, 2)
        elif self.kind == "traction":
            tag = Tag(TagKind.TRACTION, self.name)
        else:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        return BoundaryRule(Segment(self.side, self.lo, self.hi), tag)


@dataclass(frozen=True)
class MeshSpec:
    domain: tuple[float, float, float, float] = (-0.5, 0.5, -0.5, 0.5)
    nx: int = 128
    ny: int = 128
    boundaries: tuple[BoundarySpec, ...] = ()

    def build(self) -> FeMesh:
        return build_mesh(self.domain, self.nx, self.ny, [b.rule() for b in self.boundaries])


@dataclass(frozen=True)
class RandomInit:
    """Uniform noise of half-width ``spread`` around the target mean."""

    spread: float = 0.1


@dataclass(frozen=True)
class BallInit:
    """Disc of material (phi = -1) with the optimal profile across its rim."""

    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.2


@dataclass(frozen=True)
class StripeInit:
    """Interface y = height + amplitude sin(2 pi waves (x - x0) / width).

    Material fills the side selected by ``material_above``.
    """

    height: float = 0.0
    amplitude: float = 0.05
    waves: float = 5.0
    material_above: bool = True


@dataclass(frozen=True)
class FileInit:
    """Nodal phase field read back from a VTK snapshot."""

    path: str
    field: str = "phi"


@dataclass(frozen=True)
class SimConfig:
    name: str = "custom"
    mesh: MeshSpec = MeshSpec()
    aniso: Anisotropy = Anisotropy()
    elasticity: ElasticityModel = ElasticityModel()
    loads: LoadSpec = field(default_factory=LoadSpec)
    eps: float = 1.0 / (16.0 * math.pi)
    tau: float | None = None  # None: eps * h
    alpha_hat: float = 1.0
    beta: float = 1.0
    m: float | None = None  # None: mass of the initial field (not for Random)
    t_end: float = 0.03
    seed: int = 0
    init: RandomInit | BallInit | StripeInit | FileInit = RandomInit()
    steady_tol: float = 1e-6
    snapshots: tuple[float, ...] = ()
    vi_tol: float = 1e-10
    linear_solver: str = "direct"
    kink_relaxation: float = 0.1  # 1.0 reproduces the plain branch selection
    safeguard: bool = True

    def resolved_tau(self, h: float) -> float:
        return self.eps * h if self.tau is None else self.tau


class StepParams(NamedTuple):
    eps: float
    tau: float
    alpha_hat: float
    beta: float


class Snapshot(NamedTuple):
    step: int
    t: float
    phi: np.ndarray
    u: np.ndarray


@dataclass
class RunResult:
    config: SimConfig
    mesh: FeMesh
    final: PhaseState
    u: np.ndarray
    initial: EnergyReport
    trace: list[EnergyReport]
    snapshots: list[Snapshot]
    stop_reason: str  # "t_end" or "steady"
    tau: float
    m: float
    safeguard_factors: list[float] = field(default_factory=list)


def project_mass(phi: np.ndarray, weights: np.ndarray, m: float, iters: int = 200) -> np.ndarray:
    """Shift and clamp ``phi`` to [-1, 1] so that its lumped mean equals ``m``."""
    if not -1.0 < m < 1.0:
        raise ValueError("target mean must lie in (-1, 1)")
    vol = weights.sum()

    def mean(c):
        return float(weights @ np.clip(phi + c, -1.0, 1.0)) / vol

    lo, hi = -2.0 - phi.max(), 2.0 - phi.min()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mean(mid) < m:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    return np.clip(phi + 0.5 * (lo + hi), -1.0, 1.0)


def initial_field(cfg: SimConfig, mesh: FeMesh) -> np.ndarray:
    init = cfg.init
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    if isinstance(init, RandomInit):
        if cfg.m is None:
            raise ValueError("random initial data needs a target mean m")
        rng = np.random.default_rng(cfg.seed)
        phi = cfg.m + init.spread * rng.uniform(-1.0, 1.0, mesh.n_nodes)
        return project_mass(phi, mesh.lumped_mass, cfg.m)
    if isinstance(init, BallInit):
        r = np.hypot(x - init.center[0], y - init.center[1])
        phi = optimal_profile((r - init.radius) / cfg.eps)
    elif isinstance(init, StripeInit):
        x0, x1 = mesh.domain[0], mesh.domain[1]
        level = init.height + init.amplitude * np.sin(2.0 * math.pi * init.waves * (x - x0) / (x1 - x0))
        sign = 1.0 if init.material_above else -1.0
        phi = optimal_profile(sign * (level - y) / cfg.eps)
    elif isinstance(init, FileInit):
        pts, fields = read_vtk(init.path)
        if len(pts) != mesh.n_nodes or np.abs(pts - mesh.nodes).max() > 1e-6 * mesh.h:
            raise ValueError(f"{init.path}: points do not match the configured mesh")
        if init.field not in fields:
            raise ValueError(f"{init.path}: no field named {init.field!r}")
        phi = np.clip(fields[init.field], -1.0, 1.0)
    else:
        raise TypeError(f"unsupported initial data {init!r}")
    phi = np.asarray(phi, dtype=float)
    if cfg.m is not None:
        phi = project_mass(phi, mesh.lumped_mass, cfg.m)
    return phi


def _mean(mesh: FeMesh, phi: np.ndarray) -> float:
    return float(mesh.lumped_mass @ phi) / float(mesh.lumped_mass.sum())


def _report(step, t, mesh, cfg, phi, u, mu=0.0, iters=0) -> EnergyReport:
    e = gl_energy(mesh, cfg.aniso, cfg.eps, phi)
    c = 0.0 if u is None else compliance(mesh, cfg.elasticity, cfg.loads, phi, u)
    return EnergyReport(step, t, e, c, cfg.alpha_hat * e + cfg.beta * c, _mean(mesh, phi), mu, iters)


def _with_context(err: Exception, step: int, t: float) -> Exception:
    new = type(err)(f"step {step} (t={t:.6g}): {err}")
    new.__cause__ = err
    return new


def run(cfg: SimConfig, out_dir=None, progress=None) -> RunResult:
    """Run the coupled time loop.

    Each step solves the state equation on the previous design, assembles
    the variational inequality with the lagged sensitivity and solves it
    under the mass constraint.  ``progress`` is an optional callable that
    receives every EnergyReport.
    """
    mesh = cfg.mesh.build()
    tau = cfg.resolved_tau(mesh.h)
    if not (cfg.eps > 0 and tau > 0 and cfg.t_end >= tau):
        raise ValueError("need eps > 0, tau > 0 and t_end >= tau")
    params = StepParams(cfg.eps, tau, cfg.alpha_hat, cfg.beta)
    phi = initial_field(cfg, mesh)
    m = _mean(mesh, phi) if cfg.m is None else cfg.m
    coupled = not cfg.loads.is_zero()
    relax = KinkRelaxation(cfg.kink_relaxation)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        from .config import print_config

        meta = print_config(cfg) + f"\n# resolved: tau = {tau!r}, m = {m!r}, h = {mesh.h!r}\n"
        atomic_write_text(out / "run.meta", meta)

    def state(p, guess=None):
        if not coupled:
            return None
        sys_ = assemble_state(mesh, cfg.elasticity, cfg.loads, p)
        return solve_state(sys_, method=cfg.linear_solver, x0=guess)

    snapshots: list[Snapshot] = []
    pending = sorted(cfg.snapshots)

    def snap(step, t, p, u):
        uu = np.zeros((mesh.n_nodes, 2)) if u is None else u
        snapshots.append(Snapshot(step, t, p.copy(), uu.copy()))
        if out is not None:
            write_vtk(mesh, {"phi": p}, out / f"phi_{step:06d}.vtk")
            write_vtk(mesh, {"displacement": uu}, out / f"u_{step:06d}.vtk")

    try:
        u = state(phi)
    except SOLVER_ERRORS as err:
        raise _with_context(err, 0, 0.0) from err
    initial = _report(0, 0.0, mesh, cfg, phi, u)
    if progress:
        progress(initial)
    while pending and pending[0] <= 0.0:
        pending.pop(0)
        snap(0, 0.0, phi, u)

    trace: list[EnergyReport] = []
    factors: list[float] = []
    n_steps = int(math.floor(cfg.t_end / tau + 1e-9))
    reason = "t_end"
    mu = None
    t = 0.0
    for n in range(1, n_steps + 1):
        t = n * tau
        try:
            sens = sensitivity_density(mesh, cfg.elasticity, phi, u) if coupled else None
            vi = assemble_vi(mesh, cfg.aniso, params, phi, sens, relax=relax)
            sol = solve_vi(vi, m, tol=cfg.vi_tol, phi0=phi, mu_start=mu)
            new = sol.phi
            if cfg.safeguard:
                new, s = safeguard_step(mesh, cfg.aniso, params, phi, new, sens)
                factors.append(s)
            change = float(np.abs(new - phi).max())
            phi = new
            mu = sol.multiplier
            u = state(phi, u)
        except SOLVER_ERRORS as err:
            raise _with_context(err, n, t) from err
        rep = _report(n, t, mesh, cfg, phi, u, sol.multiplier, sol.sweeps)
        trace.append(rep)
        if progress:
            progress(rep)
        while pending and pending[0] <= t + 1e-12:
            pending.pop(0)
            snap(n, t, phi, u)
        if out is not None and n % 100 == 0:
            write_trace(trace, out / "trace.csv")
        if change < cfg.steady_tol * tau:
            reason = "steady"
            break
    if not snapshots or snapshots[-1].step != len(trace):
        snap(len(trace), t, phi, u)
    if out is not None:
        write_trace(trace, out / "trace.csv")
    final = PhaseState(phi, len(trace), t)
    u_final = np.zeros((mesh.n_nodes, 2)) if u is None else u
    return RunResult(cfg, mesh, final, u_final, initial, trace, snapshots, reason, tau, m, factors)


def _cantilever() -> SimConfig:
    mesh = MeshSpec(
        domain=(-0.5, 0.5, -0.5, 0.5),
        nx=128,
        ny=128,
        boundaries=(
            BoundarySpec("support", "dirichlet", "bottom", -0.25, 0.25),
            BoundarySpec("pad", "traction", "top", -0.02, 0.02),
        ),
    )
    return SimConfig(
        name="cantilever",
        mesh=mesh,
        aniso=Anisotropy.regularized(0.5, 0.1),
        elasticity=ElasticityModel(E=1.0, nu=0.33),
        loads=LoadSpec(tractions={"pad": (5.0, 0.0)}),
        eps=1.0 / (32.0 * math.pi),
        alpha_hat=0.5,
        beta=1.0,
        m=0.7,
        t_end=0.04,
        init=RandomInit(0.1),
        snapshots=(0.0, 0.01, 0.02, 0.04),
    )


def _bridge() -> SimConfig:
    mesh = MeshSpec(
        domain=(0.0, 1.0, -0.5, 0.5),
        nx=128,
        ny=128,
        boundaries=(
            BoundarySpec("symmetry", "dirichlet_x", "left", -0.5, 0.5),
            BoundarySpec("support", "dirichlet", "bottom", 0.875, 1.0),
            BoundarySpec("pad_centre", "traction", "top", 0.0, 0.02),
            BoundarySpec("pad_side", "traction", "top", 0.48, 0.52),
        ),
    )
    return SimConfig(
        name="bridge",
        mesh=mesh,
        aniso=Anisotropy.regularized(0.5, 0.1),
        elasticity=ElasticityModel(E=1200.0, nu=0.3),
        loads=LoadSpec(tractions={"pad_centre": (0.0, -3000.0), "pad_side": (0.0, -1500.0)}),
        eps=1.0 / (32.0 * math.pi),
        alpha_hat=1.0,
        beta=1.0,
        m=0.4,
        t_end=0.1,
        init=RandomInit(0.1),
        snapshots=(0.0, 0.05, 0.1),
    )


def _wulff_relax() -> SimConfig:
    return SimConfig(
        name="wulff_relax",
        mesh=MeshSpec(nx=128, ny=128),
        aniso=Anisotropy.regularized(0.5, 0.1),
        eps=1.0 / (16.0 * math.pi),
        alpha_hat=1.0,
        t_end=0.03,
        init=BallInit((0.0, 0.0), 0.2),
        snapshots=(0.0, 0.001, 0.005, 0.03),
    )


def _dripping(aniso: Anisotropy, name: str) -> SimConfig:
    return SimConfig(
        name=name,
        mesh=MeshSpec(nx=128, ny=128),
        aniso=aniso,
        eps=1.0 / (32.0 * math.pi),
        alpha_hat=1.0,
        t_end=0.02,
        init=StripeInit(height=0.0, amplitude=0.05, waves=5.0, material_above=True),
        snapshots=(0.0, 0.001, 0.005, 0.02),
    )


SCENARIOS = {
    "wulff_relax": _wulff_relax,
    "dripping_convex": lambda: _dripping(Anisotropy.regularized(0.5, 0.1), "dripping_convex"),
    "dripping_nonconvex": lambda: _dripping(Anisotropy.nonconvex(0.5, 0.5), "dripping_nonconvex"),
    "cantilever": _cantilever,
    "bridge": _bridge,
}


def scenario(name: str, **overrides) -> SimConfig:
    """Shipped configuration by name; keyword overrides replace fields."""
    try:
        cfg = SCENARIOS[name]()
    except KeyError:
        raise UnknownScenario(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None
    return replace(cfg, **overrides) if overrides else cfg


def interface_roughness(phi: np.ndarray, mesh: FeMesh) -> float:
    """Standard deviation of the height of the lowest zero crossing per column."""
    phi = np.asarray(phi, dtype=float)
    idx = mesh.column_index()
    ys = mesh.nodes[idx[:, 0], 1]
    heights = []
    for i in range(mesh.nx + 1):
        col = phi[idx[:, i]]
        s = np.sign(col)
        cross = np.flatnonzero(s[:-1] * s[1:] < 0)
        zero = np.flatnonzero(col == 0.0)
        if len(zero) and (not len(cross) or zero[0] <= cross[0]):
            heights.append(ys[zero[0]])
        elif len(cross):
            j = cross[0]
            a, b = col[j], col[j + 1]
            heights.append(ys[j] + a / (a - b) * (ys[j + 1] - ys[j]))
    if not heights:
        raise NoInterface("phase field does not change sign in any mesh column")
    return float(np.std(heights))
