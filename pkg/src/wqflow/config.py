"""Flat key-value run configuration.

One `key = value` pair per line, '#' comments, no nesting; unknown keys are
rejected so typos fail loudly.  The resolved configuration is echoed to
run.json by the CLI for reproducibility.
"""

from __future__ import annotations

import math

from .fields import Grid, ModelParams
from .flows import RunConfig

__all__ = ["KNOWN_KEYS", "parse_config_text", "load_config", "build_run_config", "resolved_dict"]

# every accepted key with its default (None means "derived or optional")
KNOWN_KEYS = {
    "regime": "geodesic",
    "p": "2.0",
    "c": "inf",
    "n": "1",
    "N": "256",
    "topology": "torus",        # torus | box
    "lo": None,                 # default: 0 (torus) or -L (box)
    "hi": None,
    "t0": "1.0",
    "T": "1.3",
    "dt": None,
    "sigma": "0.4",
    "dt-max": "0.05",
    "eps": "1e-8",
    "ic": None,                 # default: perturbed on torus, special on box
    "seed": "1",
    "amp-rho": "0.3",
    "amp-phi": "0.2",
    "rot-amp": "0.0",
    "diag-every": "4",
    "dump-fields": "0",
    "w0": "1.0",
    "wdot0": "1.0",
    "beta0": None,
    "mass-tol": "1e-6",
    "ugrad-tol": None,
    "curl-tol": None,
}


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines; reject unknown keys and malformed lines."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (tok.strip() for tok in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if not value:
            raise ValueError(f"line {lineno}: empty value for {key!r}")
        out[key] = value
    return out


def load_config(path, overrides: dict | None = None) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = parse_config_text(fh.read())
    for key, value in (overrides or {}).items():
        if key not in KNOWN_KEYS:
            raise ValueError(f"unknown override key {key!r}")
        cfg[key] = str(value)
    return cfg


def _get(cfg: dict, key: str):
    return cfg.get(key, KNOWN_KEYS[key])


def _floats(value: str, n: int) -> tuple[float, ...]:
    parts = [float(tok) for tok in value.split(",")]
    if len(parts) == 1:
        parts = parts * n
    if len(parts) != n:
        raise ValueError(f"expected 1 or {n} comma-separated values, got {value!r}")
    return tuple(parts)


def build_run_config(cfg: dict) -> RunConfig:
    """Validate a parsed key-value map into grid, params and run settings."""
    n = int(_get(cfg, "n"))
    p = float(_get(cfg, "p"))
    c_raw = _get(cfg, "c")
    c = math.inf if c_raw in ("inf", "infinity") else float(c_raw)
    topology = _get(cfg, "topology")
    if topology not in ("torus", "box"):
        raise ValueError(f"topology must be torus or box, got {topology!r}")
    periodic = topology == "torus"

    shape = tuple(int(tok) for tok in _get(cfg, "N").split(","))
    if len(shape) == 1:
        shape = shape * n
    if len(shape) != n:
        raise ValueError("N must give one count or one per axis")

    lo_raw, hi_raw = cfg.get("lo"), cfg.get("hi")
    if periodic:
        lo = _floats(lo_raw, n) if lo_raw else (0.0,) * n
        hi = _floats(hi_raw, n) if hi_raw else tuple(v + 2.0 * math.pi for v in lo)
    else:
        if hi_raw is None:
            raise ValueError("box topology needs an explicit hi (and optionally lo)")
        hi = _floats(hi_raw, n)
        lo = _floats(lo_raw, n) if lo_raw else tuple(-v for v in hi)

    grid = Grid(lo=lo, hi=hi, shape=shape, periodic=periodic)
    params = ModelParams(p=p, c=c, eps=float(_get(cfg, "eps")), n=n)

    ic = cfg.get("ic") or ("perturbed" if periodic else "special")
    dt_raw = cfg.get("dt")
    beta0_raw = cfg.get("beta0")
    ugrad_raw = cfg.get("ugrad-tol")
    curl_raw = cfg.get("curl-tol")

    return RunConfig(
        grid=grid,
        params=params,
        regime=_get(cfg, "regime"),
        t0=float(_get(cfg, "t0")),
        T=float(_get(cfg, "T")),
        dt=float(dt_raw) if dt_raw else None,
        sigma=float(_get(cfg, "sigma")),
        dt_max=float(_get(cfg, "dt-max")),
        diag_every=int(_get(cfg, "diag-every")),
        ic=ic,
        seed=int(_get(cfg, "seed")),
        amp_rho=float(_get(cfg, "amp-rho")),
        amp_phi=float(_get(cfg, "amp-phi")),
        rot_amp=float(_get(cfg, "rot-amp")),
        scale_w0=float(_get(cfg, "w0")),
        scale_wdot0=float(_get(cfg, "wdot0")),
        scale_beta0=float(beta0_raw) if beta0_raw else None,
        mass_tol=float(_get(cfg, "mass-tol")),
        ugrad_tol=float(ugrad_raw) if ugrad_raw else None,
        curl_tol=float(curl_raw) if curl_raw else None,
    )


def resolved_dict(cfg: dict) -> dict:
    """Fully resolved key -> value map (defaults filled in) for run.json."""
    out = {}
    for key, default in KNOWN_KEYS.items():
        value = cfg.get(key, default)
        if value is not None:
            out[key] = value
    return out
