"""Command-line scenario runner.

``foliflow run config.json`` loads a JSON scenario, evolves the selected
flow variant, and writes a diagnostics table, per-sample snapshots of
the conformal factor, and a table of check reports (plus an optional SVG
chart of the diagnostics columns).  Initial data is supplied as Fourier
mode maps, so configs are resolution-independent; ``--grid`` rescales
the fiber resolution without touching the scenario.

Exit codes: 0 all requested checks pass, 1 a check failed, 2 the config
is invalid or asks for something the scenario cannot provide, 3 the
closedness hypothesis of the requested flow fails on the initial data.
Config errors are detected before any output file is created.

All CSV output uses 17 significant digits and newline-only line
endings, so reruns of one config on one version are byte-identical.
The engine's fiber-level parallelism is controlled by the
FOLIFLOW_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import checks as ck
from . import fiber as fb
from . import flows as fl
from .errors import (
    DegenerateTrajectoryError,
    FlowError,
    HypothesisViolationError,
    InputError,
)
from .fdref import FdScheme
from .fiber import FiberGrid
from .geometry import ProductState

SCENARIOS = ("twisted_torus", "double_twisted", "codim1_fibration")

DIAG_COLUMNS = ("t", "vol", "intH2", "maxDivH", "r", "umbilicalResidual", "dThetaH")


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _as_positive_floats(raw, count: int, label: str) -> tuple[float, ...]:
    if np.isscalar(raw):
        raw = [raw] * count
    vals = tuple(float(v) for v in raw)
    if len(vals) != count or any(v <= 0 for v in vals):
        raise InputError(f"{label} must be {count} positive length(s), got {raw!r}")
    return vals


def _as_points(raw, count: int, label: str) -> tuple[int, ...]:
    if raw is None:
        raw = 64
    if np.isscalar(raw):
        raw = [raw] * count
    pts = tuple(int(v) for v in raw)
    if len(pts) != count:
        raise InputError(f"{label} must give {count} resolutions, got {raw!r}")
    return pts


def _parse_modes(raw, dims: int, label: str) -> dict:
    """{'k,l': amp} JSON maps to {(k, l): (cos_amp, sin_amp)} term maps."""
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise InputError(f"{label} must be a mode map object, got {type(raw).__name__}")
    terms = {}
    for key, amp in raw.items():
        parts = key.replace(";", ",").split(",")
        try:
            mode = tuple(int(p.strip()) for p in parts)
        except ValueError as exc:
            raise InputError(f"{label} key {key!r} is not a mode tuple") from exc
        if len(mode) != dims:
            raise InputError(f"{label} key {key!r} must have {dims} integers")
        if isinstance(amp, (int, float)):
            terms[mode] = (float(amp), 0.0)
        else:
            pair = tuple(float(a) for a in amp)
            if len(pair) != 2:
                raise InputError(f"{label} value for {key!r} must be a number or [cos, sin]")
            terms[mode] = pair
    return terms


def _load_config(path: Path, args) -> dict:
    """Parse and fully validate one scenario; nothing is written here."""
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")

    scenario = cfg.get("scenario")
    if scenario not in SCENARIOS:
        raise InputError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    n = int(cfg.get("n", 1))
    p = int(cfg.get("p", 1))
    base_sides = _as_positive_floats(cfg.get("base_sides", 2 * np.pi), n, "base_sides")
    fiber_sides = _as_positive_floats(cfg.get("fiber_sides", 2 * np.pi), p, "fiber_sides")
    base_points = _as_points(cfg.get("base_points"), n, "base_points")
    fiber_points = _as_points(
        args.grid if args.grid else cfg.get("fiber_points"), p, "fiber_points"
    )
    base = FiberGrid(n, base_sides, base_points)
    fiber = FiberGrid(p, fiber_sides, fiber_points)

    variant = cfg.get("variant", "plain")
    x_field = None
    if cfg.get("x_field") is not None:
        raw_x = cfg["x_field"]
        if not isinstance(raw_x, list) or len(raw_x) != p:
            raise InputError("x_field must be a list of p mode maps")
        x_field = np.stack([
            fb.harmonic_field((base, fiber), _parse_modes(m, n + p, "x_field"))
            for m in raw_x
        ])

    samples = cfg.get("samples")
    if not isinstance(samples, list) or not samples:
        raise InputError("samples must be a nonempty list of times")
    scheme = FdScheme(dt=float(cfg.get("dt", 1e-3)), theta=float(cfg.get("theta", 0.5)))
    flow_cfg = fl.FlowConfig(
        n=n,
        p=p,
        t_end=float(cfg.get("t_end", samples[-1] if samples else 1.0)),
        samples=tuple(float(s) for s in samples),
        variant=variant,
        x_field=x_field,
        tol_converge=float(cfg.get("tol_converge", 1e-10)),
        oracle_check=bool(cfg.get("oracle_check", False)),
        fd_scheme=scheme,
    )

    checks = list(cfg.get("checks", []))
    if (flow_cfg.oracle_check and not args.no_oracle
            and "oracle_agreement" not in checks):
        checks.append("oracle_agreement")
    if args.no_oracle:
        checks = [c for c in checks if c != "oracle_agreement"]
    for name in checks:
        if name not in ck.CHECKERS:
            raise InputError(
                f"unknown check {name!r}; known: {', '.join(sorted(ck.CHECKERS))}"
            )
    if "codim1_identity" in checks and p != 1:
        raise InputError("codim1_identity needs p = 1")
    if "preservation" in checks and len(flow_cfg.samples) < 3:
        raise InputError("preservation needs at least 3 sample times")
    if "decay_rate" in checks and len(flow_cfg.samples) < 4:
        raise InputError("decay_rate needs at least 4 sample times")

    out = {"scenario": scenario, "base": base, "fiber": fiber, "flow": flow_cfg,
           "checks": checks, "plot": bool(cfg.get("plot", False)) or args.plot,
           "out_dir": Path(args.out) if args.out else Path(cfg.get("out", "foliflow_out"))}

    if scenario == "codim1_fibration":
        if p != 1:
            raise InputError("codim1_fibration needs p = 1")
        if "tau0" not in cfg:
            raise InputError("codim1_fibration needs a tau0 mode map")
        if "phi0" in cfg or cfg.get("psi"):
            raise InputError("codim1_fibration takes tau0 only; phi0/psi are derived")
        if variant == "prescribed":
            raise InputError("codim1_fibration does not take the prescribed variant")
        out["tau0"] = fb.harmonic_field(
            (base, fiber), _parse_modes(cfg["tau0"], n + 1, "tau0")
        )
        return out

    if "phi0" not in cfg:
        raise InputError(f"{scenario} needs a phi0 mode map")
    phi_terms = _parse_modes(cfg["phi0"], n + p, "phi0")
    psi_terms = _parse_modes(cfg.get("psi"), n + p, "psi")
    if scenario == "twisted_torus" and psi_terms:
        raise InputError("twisted_torus keeps the fiber factor flat; use double_twisted "
                         "for a nonzero psi")
    out["initial"] = ProductState.from_harmonics(base, fiber, phi_terms, psi_terms)
    return out


def _write_diagnostics(path: Path, traj: fl.Trajectory) -> None:
    lines = [",".join(DIAG_COLUMNS)]
    for d in traj.diagnostics:
        lines.append(",".join(_fmt(v) for v in (
            d.t, d.vol, d.int_h2, d.max_div_h, d.rate, d.umbilical_residual,
            d.d_theta_sup,
        )))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _write_snapshots(out_dir: Path, traj: fl.Trajectory) -> None:
    base_size = int(np.prod(traj.initial.base.shape))
    for i, state in enumerate(traj.states):
        table = state.phi.reshape(base_size, -1)
        lines = [",".join(_fmt(v) for v in row) for row in table]
        (out_dir / f"phi_{i:03d}.csv").write_text(
            "\n".join(lines) + "\n", encoding="utf-8", newline="\n"
        )


def _write_checks(path: Path, reports: list[ck.CheckReport]) -> None:
    lines = ["name,sampleTime,residual,tolerance,pass"]
    for r in reports:
        lines.append(",".join([
            r.name, _fmt(r.sample_time), _fmt(r.residual), _fmt(r.tolerance),
            "true" if r.passed else "false",
        ]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _svg_chart(traj: fl.Trajectory) -> str:
    """Small-multiple polyline chart of the diagnostics columns."""
    panels = [
        ("vol", [d.vol for d in traj.diagnostics]),
        ("intH2", [d.int_h2 for d in traj.diagnostics]),
        ("maxDivH", [d.max_div_h for d in traj.diagnostics]),
        ("r", [d.rate for d in traj.diagnostics]),
        ("umbilicalResidual", [d.umbilical_residual for d in traj.diagnostics]),
        ("dThetaH", [d.d_theta_sup for d in traj.diagnostics]),
    ]
    times = [d.t for d in traj.diagnostics]
    t0, t1 = times[0], times[-1]
    t_span = (t1 - t0) or 1.0
    pw, ph, pad, cols = 300, 170, 36, 2
    rows = (len(panels) + cols - 1) // cols
    width = cols * (pw + pad) + pad
    height = rows * (ph + pad) + pad
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for idx, (label, series) in enumerate(panels):
        ox = pad + (idx % cols) * (pw + pad)
        oy = pad + (idx // cols) * (ph + pad)
        lo, hi = min(series), max(series)
        span = (hi - lo) or 1.0
        pts = " ".join(
            f"{ox + (t - t0) / t_span * pw:.6g},{oy + ph - (v - lo) / span * ph:.6g}"
            for t, v in zip(times, series)
        )
        parts.append(f'<rect x="{ox}" y="{oy}" width="{pw}" height="{ph}" '
                     f'fill="none" stroke="#999"/>')
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f4e9c" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{ox}" y="{oy - 6}" font-family="monospace" '
                     f'font-size="12">{label} [{_fmt(lo)}, {_fmt(hi)}]</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _run_command(args) -> int:
    try:
        payload = _load_config(args.config, args)
    except (OSError, json.JSONDecodeError, FlowError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    flow_cfg = payload["flow"]
    try:
        if payload["scenario"] == "codim1_fibration":
            traj = fl.run_codim1(payload["tau0"], payload["base"], payload["fiber"],
                                 flow_cfg)
        else:
            traj = fl.run_extrinsic_flow(payload["initial"], flow_cfg)
    except HypothesisViolationError as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return 3
    except FlowError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        reports = ck.run_checks(traj, payload["checks"])
    except (DegenerateTrajectoryError, FlowError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir = payload["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_diagnostics(out_dir / "diagnostics.csv", traj)
    _write_snapshots(out_dir, traj)
    _write_checks(out_dir / "checks.csv", reports)
    if payload["plot"]:
        (out_dir / "diagnostics.svg").write_text(_svg_chart(traj), encoding="utf-8",
                                                 newline="\n")

    failed = [r for r in reports if not r.passed]
    for r in reports:
        print(r)
    if traj.converged_time is not None:
        print(f"converged at t={traj.converged_time:g} "
              f"(max driving < {flow_cfg.tol_converge:g})")
    print(f"wrote {out_dir}/diagnostics.csv with {len(traj.states)} samples")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="foliflow",
        description="Flow a foliated periodic product and audit its invariants "
                    "(set FOLIFLOW_THREADS to parallelize fiber batches).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run a JSON scenario config")
    run_p.add_argument("config", type=Path, help="path to the scenario JSON")
    run_p.add_argument("--out", type=Path, default=None,
                       help="output directory (overrides the config)")
    run_p.add_argument("--grid", type=int, default=None,
                       help="override the fiber resolution (points per dimension)")
    run_p.add_argument("--no-oracle", action="store_true",
                       help="skip the finite-difference cross-check")
    run_p.add_argument("--plot", action="store_true",
                       help="also write diagnostics.svg")
    args = parser.parse_args(argv)
    if args.command == "run":
        return _run_command(args)
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
