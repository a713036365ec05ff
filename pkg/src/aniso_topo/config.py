"""Plain-text run configurations.

The format is INI-like::

    # comment
    [mesh]
    nx = 128
    ny = 128
    boundary.support = dirichlet, bottom, (-0.25, 0.25)

    [loads]
    traction.support = (0, 1)

Vectors are written ``(a, b)``, booleans ``true``/``false``.  Numbers are
parsed with :func:`float`, which ignores the process locale.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .anisotropy import Anisotropy
from .driver import (
    BOUNDARY_KINDS,
    BallInit,
    BoundarySpec,
    FileInit,
    MeshSpec,
    RandomInit,
    SimConfig,
    StripeInit,
)
from .elasticity import ElasticityModel, LoadSpec
from .errors import ParseError, ValidationError

__all__ = [
    "ConfigDocument",
    "parse_document",
    "build_config",
    "parse_config",
    "load_config",
    "print_config",
]

SIDES = ("left", "right", "bottom", "top")
SOLVERS = ("cg", "direct")
INIT_KINDS = ("random", "ball", "stripe", "file")

# section -> allowed plain keys; prefixed families are handled separately
KEYS = {
    "mesh": {"domain", "nx", "ny"},
    "anisotropy": {"kind", "alpha", "delta", "lambda"},
    "elasticity": {"E", "nu", "ersatz_factor", "solver"},
    "phasefield": {"eps", "tau", "alpha_hat", "beta", "m", "vi_tol", "kink_relaxation", "safeguard"},
    "loads": {"body_force"},
    "run": {
        "name", "t_end", "seed", "steady_tol", "snapshots", "init",
        "init.spread", "init.center", "init.radius", "init.height",
        "init.amplitude", "init.waves", "init.material_above", "init.path", "init.field",
    },
}
PREFIXED = {"mesh": "boundary.", "loads": "traction."}
REQUIRED = {"mesh": ("nx", "ny")}

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass
class Entry:
    value: str
    line: int


@dataclass
class ConfigDocument:
    sections: dict = field(default_factory=dict)  # section -> {key: Entry}

    def get(self, section: str, key: str):
        return self.sections.get(section, {}).get(key)

    def set(self, dotted: str, value: str) -> None:
        """Override ``section.key`` (used by parameter sweeps)."""
        section, _, key = dotted.partition(".")
        if section not in KEYS or not key:
            raise ValidationError(dotted, f"of the form section.key with section in {sorted(KEYS)}")
        _check_key(section, key, 0)
        self.sections.setdefault(section, {})[key] = Entry(value, 0)


def _check_key(section: str, key: str, line: int) -> None:
    if key in KEYS[section]:
        return
    prefix = PREFIXED.get(section)
    if prefix and key.startswith(prefix) and _NAME.match(key[len(prefix):]):
        return
    raise ParseError(line, f"unknown key {key!r} in section [{section}]")


def parse_document(text: str) -> ConfigDocument:
    doc = ConfigDocument()
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(no, "unterminated section header")
            current = line[1:-1].strip()
            if current not in KEYS:
                raise ParseError(no, f"unknown section [{current}]")
            doc.sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ParseError(no, "expected 'key = value'")
        if current is None:
            raise ParseError(no, "key outside of any section")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError(no, "empty key")
        if not value:
            raise ParseError(no, f"empty value for {key!r}")
        _check_key(current, key, no)
        if key in doc.sections[current]:
            raise ParseError(no, f"duplicate key {key!r}")
        doc.sections[current][key] = Entry(value, no)
    return doc


# value conversion


def _split_top(s: str) -> list[str]:
    parts, depth, buf = [], 0, []
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(buf).strip())
            buf = []
        else:
            buf.append(ch)
    parts.append("".join(buf).strip())
    return parts


def _number(s: str, line: int) -> float:
    try:
        x = float(s)
    except ValueError:
        raise ParseError(line, f"not a number: {s!r}") from None
    if not math.isfinite(x):
        raise ParseError(line, f"not a finite number: {s!r}")
    return x


def _vector(s: str, line: int, n: int | None = None) -> tuple[float, ...]:
    s = s.strip()
    if not (s.startswith("(") and s.endswith(")")):
        raise ParseError(line, f"expected a vector '(a, b)', got {s!r}")
    inner = s[1:-1].strip()
    vals = () if not inner else tuple(_number(p, line) for p in _split_top(inner))
    if n is not None and len(vals) != n:
        raise ParseError(line, f"expected {n} components, got {len(vals)}")
    return vals


def _integer(s: str, line: int) -> int:
    try:
        return int(s)
    except ValueError:
        raise ParseError(line, f"not an integer: {s!r}") from None


def _boolean(s: str, line: int) -> bool:
    if s == "true":
        return True
    if s == "false":
        return False
    raise ParseError(line, f"expected true or false, got {s!r}")


class _Reader:
    def __init__(self, doc: ConfigDocument):
        self.doc = doc

    def raw(self, section, key):
        return self.doc.get(section, key)

    def num(self, section, key, default):
        e = self.raw(section, key)
        return default if e is None else _number(e.value, e.line)

    def num_or_auto(self, section, key, default):
        e = self.raw(section, key)
        if e is None or e.value == "auto":
            return default
        return _number(e.value, e.line)

    def int(self, section, key, default):
        e = self.raw(section, key)
        return default if e is None else _integer(e.value, e.line)

    def vec(self, section, key, default, n=None):
        e = self.raw(section, key)
        return default if e is None else _vector(e.value, e.line, n)

    def bool(self, section, key, default):
        e = self.raw(section, key)
        return default if e is None else _boolean(e.value, e.line)

    def str(self, section, key, default):
        e = self.raw(section, key)
        return default if e is None else e.value


def _require(cond: bool, key: str, constraint: str) -> None:
    if not cond:
        raise ValidationError(key, constraint)


def _mesh(r: _Reader) -> MeshSpec:
    for key in REQUIRED["mesh"]:
        if r.raw("mesh", key) is None:
            raise ValidationError(f"mesh.{key}", "present")
    domain = r.vec("mesh", "domain", (-0.5, 0.5, -0.5, 0.5), 4)
    _require(domain[0] < domain[1] and domain[2] < domain[3], "mesh.domain", "(x0, x1, y0, y1) with x0 < x1, y0 < y1")
    nx, ny = r.int("mesh", "nx", 0), r.int("mesh", "ny", 0)
    _require(nx >= 2, "mesh.nx", ">= 2")
    _require(ny >= 2, "mesh.ny", ">= 2")
    bounds = []
    for key, e in r.doc.sections.get("mesh", {}).items():
        if not key.startswith("boundary."):
            continue
        name = key[len("boundary."):]
        parts = _split_top(e.value)
        if len(parts) != 3:
            raise ParseError(e.line, "boundary needs 'kind, side, (lo, hi)'")
        kind, side = parts[0], parts[1]
        lo, hi = _vector(parts[2], e.line, 2)
        _require(kind in BOUNDARY_KINDS, f"mesh.{key}", f"one of {', '.join(BOUNDARY_KINDS)}")
        _require(side in SIDES, f"mesh.{key}", f"on a side in {', '.join(SIDES)}")
        _require(lo < hi, f"mesh.{key}", "an interval with lo < hi")
        bounds.append(BoundarySpec(name, kind, side, lo, hi))
    return MeshSpec(tuple(domain), nx, ny, tuple(bounds))


def _anisotropy(r: _Reader) -> Anisotropy:
    given = {k for k in ("alpha", "delta", "lambda") if r.raw("anisotropy", k) is not None}
    kind = r.str("anisotropy", "kind", None)
    if kind is None:
        if not given:
            kind = "isotropic"
        elif "lambda" in given:
            kind = "nonconvex"
        elif r.num("anisotropy", "delta", 0.0) > 0.0:
            kind = "regularized"
        else:
            kind = "convex"
    _require(kind in ("isotropic", "convex", "regularized", "nonconvex"), "anisotropy.kind",
             "one of isotropic, convex, regularized, nonconvex")
    alpha = r.num("anisotropy", "alpha", 1.0 if kind != "nonconvex" else math.nan)
    delta = r.num("anisotropy", "delta", 0.0)
    lam = r.num("anisotropy", "lambda", 1.0 if kind != "nonconvex" else math.nan)
    if kind == "nonconvex":
        _require(0.0 < alpha < 1.0, "anisotropy.alpha", "in (0,1)")
        _require(0.0 < lam < 1.0, "anisotropy.lambda", "in (0,1)")
    else:
        _require(0.0 < alpha <= 1.0, "anisotropy.alpha", "in (0,1]")
        _require(delta >= 0.0, "anisotropy.delta", ">= 0")
        if kind == "regularized":
            _require(delta > 0.0, "anisotropy.delta", "> 0 for a regularized density")
    return Anisotropy(kind, alpha=alpha, delta=delta, lam=lam)


def _elasticity(r: _Reader) -> tuple[ElasticityModel, str]:
    E = r.num("elasticity", "E", 1.0)
    nu = r.num("elasticity", "nu", 0.33)
    k = r.num("elasticity", "ersatz_factor", 1e-2)
    solver = r.str("elasticity", "solver", "direct")
    _require(E > 0.0, "elasticity.E", "> 0")
    _require(-1.0 < nu < 0.5, "elasticity.nu", "in (-1,0.5)")
    _require(0.0 < k < 1.0, "elasticity.ersatz_factor", "in (0,1)")
    _require(solver in SOLVERS, "elasticity.solver", f"one of {', '.join(SOLVERS)}")
    return ElasticityModel(E, nu, k), solver


def _loads(r: _Reader, mesh: MeshSpec) -> LoadSpec:
    body = r.vec("loads", "body_force", (0.0, 0.0), 2)
    traction_tags = {b.name for b in mesh.boundaries if b.kind == "traction"}
    tractions = {}
    for key, e in r.doc.sections.get("loads", {}).items():
        if not key.startswith("traction."):
            continue
        name = key[len("traction."):]
        _require(name in traction_tags, f"loads.{key}", "attached to a traction boundary declared in [mesh]")
        tractions[name] = _vector(e.value, e.line, 2)
    return LoadSpec(tuple(body), tractions)


def _init(r: _Reader):
    kind = r.str("run", "init", "random")
    _require(kind in INIT_KINDS, "run.init", f"one of {', '.join(INIT_KINDS)}")
    if kind == "random":
        spread = r.num("run", "init.spread", 0.1)
        _require(spread >= 0.0, "run.init.spread", ">= 0")
        return RandomInit(spread)
    if kind == "ball":
        radius = r.num("run", "init.radius", 0.2)
        _require(radius > 0.0, "run.init.radius", "> 0")
        return BallInit(r.vec("run", "init.center", (0.0, 0.0), 2), radius)
    if kind == "stripe":
        waves = r.num("run", "init.waves", 5.0)
        _require(waves >= 0.0, "run.init.waves", ">= 0")
        return StripeInit(
            r.num("run", "init.height", 0.0),
            r.num("run", "init.amplitude", 0.05),
            waves,
            r.bool("run", "init.material_above", True),
        )
    path = r.str("run", "init.path", None)
    _require(path is not None, "run.init.path", "present for file initial data")
    return FileInit(path, r.str("run", "init.field", "phi"))


def build_config(doc: ConfigDocument) -> SimConfig:
    """Validate a parsed document and apply defaults."""
    r = _Reader(doc)
    mesh = _mesh(r)
    aniso = _anisotropy(r)
    model, solver = _elasticity(r)
    loads = _loads(r, mesh)

    eps = r.num("phasefield", "eps", 1.0 / (16.0 * math.pi))
    tau = r.num_or_auto("phasefield", "tau", None)
    alpha_hat = r.num("phasefield", "alpha_hat", 1.0)
    beta = r.num("phasefield", "beta", 1.0)
    m = r.num_or_auto("phasefield", "m", None)
    vi_tol = r.num("phasefield", "vi_tol", 1e-10)
    omega = r.num("phasefield", "kink_relaxation", 0.1)
    safeguard = r.bool("phasefield", "safeguard", True)
    _require(eps > 0.0, "phasefield.eps", "> 0")
    _require(tau is None or tau > 0.0, "phasefield.tau", "> 0")
    _require(alpha_hat >= 0.0, "phasefield.alpha_hat", ">= 0")
    _require(beta >= 0.0, "phasefield.beta", ">= 0")
    _require(m is None or -1.0 < m < 1.0, "phasefield.m", "in (-1,1)")
    _require(vi_tol > 0.0, "phasefield.vi_tol", "> 0")
    _require(0.0 < omega <= 1.0, "phasefield.kink_relaxation", "in (0,1]")

    init = _init(r)
    _require(not (isinstance(init, RandomInit) and m is None), "phasefield.m", "given for random initial data")
    t_end = r.num("run", "t_end", 0.03)
    seed = r.int("run", "seed", 0)
    steady = r.num("run", "steady_tol", 1e-6)
    snaps = r.vec("run", "snapshots", ())
    _require(t_end > 0.0, "run.t_end", "> 0")
    _require(tau is None or t_end >= tau, "run.t_end", ">= phasefield.tau")
    _require(seed >= 0, "run.seed", ">= 0")
    _require(steady >= 0.0, "run.steady_tol", ">= 0")
    _require(all(s >= 0.0 for s in snaps), "run.snapshots", "non-negative times")
    return SimConfig(
        name=r.str("run", "name", "custom"),
        mesh=mesh,
        aniso=aniso,
        elasticity=model,
        loads=loads,
        eps=eps,
        tau=tau,
        alpha_hat=alpha_hat,
        beta=beta,
        m=m,
        t_end=t_end,
        seed=seed,
        init=init,
        steady_tol=steady,
        snapshots=tuple(snaps),
        vi_tol=vi_tol,
        linear_solver=solver,
        kink_relaxation=omega,
        safeguard=safeguard,
    )


def parse_config(text: str) -> SimConfig:
    return build_config(parse_document(text))


def load_config(path) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# printing


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (tuple, list)):
        return "(" + ", ".join(_fmt(float(v)) for v in x) + ")"
    return str(x)


def print_config(cfg: SimConfig) -> str:
    """Fully resolved configuration text; ``parse_config`` reads it back."""
    out = ["[mesh]", f"domain = {_fmt(cfg.mesh.domain)}", f"nx = {cfg.mesh.nx}", f"ny = {cfg.mesh.ny}"]
    for b in cfg.mesh.boundaries:
        out.append(f"boundary.{b.name} = {b.kind}, {b.side}, {_fmt((b.lo, b.hi))}")
    a = cfg.aniso
    out += ["", "[anisotropy]", f"kind = {a.kind}", f"alpha = {_fmt(float(a.alpha))}",
            f"delta = {_fmt(float(a.delta))}", f"lambda = {_fmt(float(a.lam))}"]
    e = cfg.elasticity
    out += ["", "[elasticity]", f"E = {_fmt(float(e.E))}", f"nu = {_fmt(float(e.nu))}",
            f"ersatz_factor = {_fmt(float(e.ersatz_factor))}", f"solver = {cfg.linear_solver}"]
    out += [
        "",
        "[phasefield]",
        f"eps = {_fmt(float(cfg.eps))}",
        f"tau = {'auto' if cfg.tau is None else _fmt(float(cfg.tau))}",
        f"alpha_hat = {_fmt(float(cfg.alpha_hat))}",
        f"beta = {_fmt(float(cfg.beta))}",
        f"m = {'auto' if cfg.m is None else _fmt(float(cfg.m))}",
        f"vi_tol = {_fmt(float(cfg.vi_tol))}",
        f"kink_relaxation = {_fmt(float(cfg.kink_relaxation))}",
        f"safeguard = {_fmt(bool(cfg.safeguard))}",
    ]
    out += ["", "[loads]", f"body_force = {_fmt(cfg.loads.body_force)}"]
    for name, g in cfg.loads.tractions.items():
        if callable(g):
            raise ValueError(f"traction {name!r} is a callable and has no text form")
        out.append(f"traction.{name} = {_fmt(g)}")
    out += ["", "[run]", f"name = {cfg.name}", f"t_end = {_fmt(float(cfg.t_end))}", f"seed = {cfg.seed}",
            f"steady_tol = {_fmt(float(cfg.steady_tol))}", f"snapshots = {_fmt(cfg.snapshots)}"]
    init = cfg.init
    if isinstance(init, RandomInit):
        out += ["init = random", f"init.spread = {_fmt(float(init.spread))}"]
    elif isinstance(init, BallInit):
        out += ["init = ball", f"init.center = {_fmt(init.center)}", f"init.radius = {_fmt(float(init.radius))}"]
    elif isinstance(init, StripeInit):
        out += ["init = stripe", f"init.height = {_fmt(float(init.height))}",
                f"init.amplitude = {_fmt(float(init.amplitude))}", f"init.waves = {_fmt(float(init.waves))}",
                f"init.material_above = {_fmt(bool(init.material_above))}"]
    else:
        out += ["init = file", f"init.path = {init.path}", f"init.field = {init.field}"]
    return "\n".join(out) + "\n"
