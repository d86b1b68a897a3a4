"""Plain-text run configuration: ``key = value`` lines grouped in ``[section]`` blocks.

Keys before the first section header (``command``, ``output_dir``) describe
the run itself. ``#`` starts a comment. Every float is canonicalized to 12
significant digits on parse, so rendering and re-parsing a manifest is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

from .exponents import Variant, strauss
from .harness import GridPolicy, SweepPlan
from .solver import MAX_STABLE_CFL, GridSpec, ProblemConfig, RadialProfile

COMMANDS = ("exponents", "catalog", "simulate", "verify-lemma", "verify-bounds", "iterate",
            "sweep", "fit")

REQUIRED = object()


class ConfigError(ValueError):
    """Invalid configuration; the message names the violated constraint."""


def canonical(x: float) -> float:
    return float(f"{float(x):.12g}")


def fmt(x: Any) -> str:
    """Locale-independent rendering with 12 significant digits."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return f"{x:.12g}"
    if isinstance(x, (list, tuple)):
        return ", ".join(fmt(v) for v in x)
    return str(x)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int(s: str) -> int:
    v = float(s)
    if v != int(v):
        raise ValueError(f"not an integer: {s!r}")
    return int(v)


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"not a finite number: {s!r}")
    return canonical(v)


def _float_list(s: str) -> list[float]:
    if isinstance(s, (list, tuple)):
        return [canonical(v) for v in s]
    return [_float(v) for v in s.replace(";", ",").split(",") if v.strip()]


def _variant(s: str) -> str:
    return Variant(s.strip()).value


def _text(s: str) -> str:
    return str(s).strip()


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "": {"command": (_text, None), "output_dir": (_text, ".")},
    "problem": {
        "n": (_int, REQUIRED), "p": (_float, REQUIRED), "mu": (_float, None), "beta": (_float, None),
        "eps": (_float, 0.1), "R": (_float, 1.0),
        "f_amplitude": (_float, 1.0), "f_support": (_float, 1.0), "f_smoothness": (_int, 4),
        "g_amplitude": (_float, 0.0), "g_support": (_float, 1.0), "g_smoothness": (_int, 4),
        "source": (_bool, True),
    },
    "grid": {
        "dr": (_float, 0.01), "cfl": (_float, None), "t_max": (_float, 10.0), "r_max": (_float, None),
        "stride": (_int, 10), "kappa": (_float, 0.05),
    },
    "sweep": {
        "eps_values": (_float_list, None), "theorem": (_int, None), "C_pred": (_float, 10.0),
        "dr_max": (_float, 0.01), "points_per_lifespan": (_float, 4000.0),
        "horizon_factor": (_float, 4.0),
    },
    "iteration": {
        "variant": (_variant, None), "j_max": (_int, 40),
        "C3": (_float, None), "C4": (_float, None), "C11": (_float, None),
    },
    "lemma": {"t_min": (_float, 50.0), "t_max": (_float, 200.0), "points": (_int, 16)},
}

# Keys that must be present for each command (beyond n and p).
NEEDS_DAMPING = {"catalog", "simulate", "verify-bounds", "iterate", "sweep"}


@dataclass
class RunManifest:
    command: str | None
    values: dict[str, dict[str, Any]]
    config_path: str | None = field(default=None, compare=False)
    output_dir: str = "."
    deterministic: bool = True

    def get(self, section: str, key: str):
        return self.values[section][key]

    @property
    def problem(self) -> ProblemConfig:
        v = self.values["problem"]
        if v["mu"] is None or v["beta"] is None:
            raise ConfigError("mu and beta are required to build a problem configuration")
        return ProblemConfig(
            n=v["n"], p=v["p"], mu=v["mu"], beta=v["beta"], eps=v["eps"], R=v["R"],
            f_profile=RadialProfile(v["f_amplitude"], v["f_support"], v["f_smoothness"]),
            g_profile=RadialProfile(v["g_amplitude"], v["g_support"], v["g_smoothness"]),
            source=v["source"])

    @property
    def grid(self) -> GridSpec:
        g = self.values["grid"]
        return GridSpec(dr=g["dr"], cfl=g["cfl"], r_max=g["r_max"], t_max=g["t_max"])

    @property
    def grid_policy(self) -> GridPolicy | None:
        s = self.values["sweep"]
        theorem = s["theorem"]
        if theorem is None:
            return None
        from .exponents import lifespan_exponent
        n, p = self.values["problem"]["n"], self.values["problem"]["p"]
        variant = {1: Variant.GENERAL, 2: Variant.TWO_D_LOW_P, 3: Variant.ONE_D}[theorem]
        return GridPolicy(exponent=lifespan_exponent(n, p, variant), C_pred=s["C_pred"],
                          dr_max=s["dr_max"], points_per_lifespan=s["points_per_lifespan"],
                          horizon_factor=s["horizon_factor"], cfl=self.values["grid"]["cfl"])

    @property
    def sweep_plan(self) -> SweepPlan:
        eps = self.values["sweep"]["eps_values"]
        if not eps:
            raise ConfigError("sweep needs eps_values")
        return SweepPlan(self.problem, list(eps), grid_policy=self.grid_policy)


def _apply(values, section: str, key: str, raw, where: str) -> None:
    if section not in SCHEMA:
        raise ConfigError(f"{where}: unknown section [{section}]")
    if key not in SCHEMA[section]:
        label = f"[{section}] " if section else ""
        raise ConfigError(f"{where}: unknown key {label}{key!r}")
    parser = SCHEMA[section][key][0]
    try:
        values[section][key] = parser(raw) if raw is not None else None
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key}: {exc}") from None


def _lookup_section(key: str) -> str:
    hits = [s for s, keys in SCHEMA.items() if key in keys]
    if len(hits) != 1:
        raise ConfigError(f"override key {key!r} is {'ambiguous' if hits else 'unknown'}; "
                          f"use section.key")
    return hits[0]


def parse_config(text: str = "", command: str | None = None,
                 overrides: dict[str, Any] | None = None,
                 config_path: str | None = None) -> RunManifest:
    """Parse, apply overrides and defaults, and validate.

    ``overrides`` maps ``key`` or ``section.key`` to a value (flags win over the
    file). Values may be strings or already-typed numbers.
    """
    values: dict[str, dict[str, Any]] = {s: {} for s in SCHEMA}
    section = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in values[section]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        _apply(values, section, key, raw, f"line {lineno}")

    for name, raw in (overrides or {}).items():
        if raw is None:
            continue
        sec, key = name.split(".", 1) if "." in name else (_lookup_section(name), name)
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            raw = repr(raw)
        elif isinstance(raw, (list, tuple)):
            raw = ",".join(repr(float(v)) for v in raw)
        elif isinstance(raw, bool):
            raw = "true" if raw else "false"
        _apply(values, sec, key, raw, f"override {name}")

    for sec, keys in SCHEMA.items():
        for key, (_, default) in keys.items():
            if key in values[sec]:
                continue
            if default is REQUIRED:
                raise ConfigError(f"missing required key [{sec}] {key}")
            values[sec][key] = list(default) if isinstance(default, list) else default

    command = command or values[""]["command"]
    if command is not None and command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    values[""]["command"] = command
    _resolve(values)
    _validate(values, command)
    return RunManifest(command=command, values=values, config_path=config_path,
                       output_dir=values[""]["output_dir"])


def _resolve(values) -> None:
    prob, grid = values["problem"], values["grid"]
    if prob["n"] in MAX_STABLE_CFL and grid["cfl"] is None:
        grid["cfl"] = MAX_STABLE_CFL[prob["n"]]
    if grid["r_max"] is None:
        grid["r_max"] = canonical(grid["t_max"] + prob["R"] + 4 * grid["dr"])


def _validate(values, command: str | None) -> None:
    prob = values["problem"]
    n, p, mu, beta = prob["n"], prob["p"], prob["mu"], prob["beta"]
    if n < 1:
        raise ConfigError(f"n >= 1 required, got n = {n}")
    if not p > 1:
        raise ConfigError(f"p > 1 required, got p = {p}")
    if command in NEEDS_DAMPING:
        for key in ("mu", "beta"):
            if prob[key] is None:
                raise ConfigError(f"missing required key [problem] {key} for command {command}")
    if command in ("simulate", "verify-bounds", "sweep", "iterate"):
        if n not in (1, 2, 3):
            raise ConfigError(f"the radial solver supports n in {{1, 2, 3}}, got n = {n}")
        if not mu > 0:
            raise ConfigError(f"mu > 0 required, got mu = {mu}")
    if command in ("verify-bounds", "iterate") and not beta > 1:
        raise ConfigError(f"{command} requires the scattering regime beta > 1, got beta = {beta}")
    if command == "sweep":
        _validate_theorem(values)


def _validate_theorem(values) -> None:
    prob, sweep = values["problem"], values["sweep"]
    n, p, beta = prob["n"], prob["p"], prob["beta"]
    theorem = sweep["theorem"]
    if theorem is None:
        return
    if theorem not in (1, 2, 3):
        raise ConfigError(f"theorem must be 1, 2 or 3, got {theorem}")
    if not beta > 1:
        raise ConfigError(f"theorem {theorem} requires beta > 1, got beta = {beta}")
    if theorem == 1 and n >= 2:
        ps = strauss(n)
        if not p < ps:
            raise ConfigError(f"theorem 1 requires p < p_S({n}) ≈ {ps:.5g}, got p = {p}")
    if theorem == 2:
        if n != 2:
            raise ConfigError(f"theorem 2 requires n = 2, got n = {n}")
        if not p < 2:
            raise ConfigError(f"theorem 2 requires 1 < p < 2, got p = {p}")
    if theorem == 3 and n != 1:
        raise ConfigError(f"theorem 3 requires n = 1, got n = {n}")
    if theorem in (2, 3) and not prob["g_amplitude"] > 0:
        raise ConfigError(f"theorem {theorem} requires int g dx > 0 (g_amplitude > 0)")


def render(manifest: RunManifest) -> str:
    lines = ["# resolved run configuration"]
    for sec, keys in SCHEMA.items():
        body = [f"{k} = {fmt(manifest.values[sec][k])}" for k in keys
                if manifest.values[sec].get(k) is not None]
        if not body:
            continue
        if sec:
            lines.append("")
            lines.append(f"[{sec}]")
        lines.extend(body)
    return "\n".join(lines) + "\n"
