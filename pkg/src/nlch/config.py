"""Run configuration: ``[section]`` headers with ``key = value`` lines.

Sections: ``domain``, ``kernel``, ``potential``, ``solver``, ``forcing``,
``init``, ``output``; harness commands additionally read ``sweep``,
``gamma``, ``poincare``, ``stability`` and ``validate``.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import Grid, InitSpec
from .kernels import FAMILIES, QUADRATURES
from .potentials import PotentialSpec
from .stepper import Forcing, SolverParams

MEAN_MARGIN = 1e-3


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.replace(";", ",").split(",") if x.strip()]


@dataclass
class RunConfig:
    dim: int = 1
    n: int = 128
    family: str = "bump"
    epsilon: float = 0.1
    quadrature: str = "moment"
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    solver: SolverParams = field(default_factory=SolverParams)
    forcing: Forcing = field(default_factory=Forcing)
    init: InitSpec = field(default_factory=InitSpec)
    output_dir: str = "nlch-out"
    extra: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return Grid(self.dim, self.n)

    def section(self, name: str) -> dict:
        return self.extra.get(name, {})

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    def with_solver(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, solver=dataclasses.replace(self.solver, **kw))

    def validate(self) -> None:
        """Config-time checks that do not need assembled operators."""
        if self.quadrature not in QUADRATURES:
            raise ValueError(f"unknown kernel quadrature {self.quadrature!r}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.solver.mode == "nonlocal" and self.epsilon < 2.0 / self.n:
            raise ValueError(f"epsilon={self.epsilon} below 2h={2.0 / self.n}")
        bound = self.potential.domain_bound
        if bound is not None and abs(self.init.mean) > bound - MEAN_MARGIN:
            raise ValueError(
                f"mean(u0)={self.init.mean} must lie inside the potential domain "
                f"(|mean| <= {bound - MEAN_MARGIN})"
            )

    def to_ini(self) -> str:
        """Resolved configuration in the input format (manifest echo)."""
        cp = configparser.ConfigParser(interpolation=None)
        cp["domain"] = {"dim": self.dim, "n": self.n}
        cp["kernel"] = {"family": self.family, "epsilon": repr(self.epsilon), "quadrature": self.quadrature}
        p = self.potential
        cp["potential"] = {"type": p.kind, "theta": repr(p.theta), "theta0": repr(p.theta0), "c": repr(p.c)}
        cp["solver"] = {k: repr(v) if isinstance(v, float) else str(v)
                        for k, v in dataclasses.asdict(self.solver).items()}
        cp["forcing"] = {k: str(v) for k, v in dataclasses.asdict(self.forcing).items()}
        i = self.init
        cp["init"] = {
            "kind": i.kind, "mean": repr(i.mean), "amplitude": repr(i.amplitude),
            "modes": ",".join(str(m) for m in i.modes),
            "amplitudes": "" if i.amplitudes is None else ",".join(repr(a) for a in i.amplitudes),
            "seed": i.seed,
        }
        cp["output"] = {"dir": self.output_dir}
        for name, sec in self.extra.items():
            cp[name] = {k: str(v) for k, v in sec.items()}
        from io import StringIO
        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.read_string(text)

    def get(sec, key, conv=str, default=None):
        if cp.has_option(sec, key):
            return conv(cp.get(sec, key))
        return default

    cfg = RunConfig()
    cfg.dim = get("domain", "dim", int, cfg.dim)
    cfg.n = get("domain", "n", int, cfg.n)
    cfg.family = get("kernel", "family", str, cfg.family)
    cfg.epsilon = get("kernel", "epsilon", float, cfg.epsilon)
    cfg.quadrature = get("kernel", "quadrature", str, cfg.quadrature)

    d = PotentialSpec()
    cfg.potential = PotentialSpec(
        kind=get("potential", "type", str, d.kind),
        theta=get("potential", "theta", float, d.theta),
        theta0=get("potential", "theta0", float, d.theta0),
        c=get("potential", "c", float, d.c),
    )

    s = SolverParams()
    cfg.solver = SolverParams(
        mode=get("solver", "mode", str, s.mode),
        tau=get("solver", "tau", float, s.tau),
        lambda_reg=get("solver", "lambda_reg", float, s.lambda_reg),
        lambda_yosida=get("solver", "lambda_yosida", float, s.lambda_yosida),
        dt=get("solver", "dt", float, s.dt),
        t_final=get("solver", "t_final", float, s.t_final),
        newton_tol=get("solver", "newton_tol", float, s.newton_tol),
        newton_max=get("solver", "newton_max", int, s.newton_max),
        snapshots=get("solver", "snapshots", int, s.snapshots),
    )

    f = Forcing()
    cfg.forcing = Forcing(
        kind=get("forcing", "kind", str, f.kind),
        amplitude=get("forcing", "amplitude", float, f.amplitude),
        mode=get("forcing", "mode", int, f.mode),
        offset=get("forcing", "offset", float, f.offset),
        t_ramp=get("forcing", "t_ramp", float, f.t_ramp),
    )

    amps = get("init", "amplitudes", str, "")
    cfg.init = InitSpec(
        kind=get("init", "kind", str, "constant"),
        mean=get("init", "mean", float, 0.0),
        amplitude=get("init", "amplitude", float, 0.0),
        modes=tuple(_ints(get("init", "modes", str, "1"))),
        amplitudes=tuple(_floats(amps)) if amps.strip() else None,
        seed=get("init", "seed", int, 0),
    )
    cfg.output_dir = get("output", "dir", str, cfg.output_dir)

    known = {"domain", "kernel", "potential", "solver", "forcing", "init", "output", "manifest"}
    cfg.extra = {name: dict(cp[name]) for name in cp.sections() if name not in known}
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


floats = _floats
ints = _ints
