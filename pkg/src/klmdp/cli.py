"""Command-line front-end.

Verbs:
  gen-scenario  write a default UAV scenario config
  solve-ar      average-reward sweep; per-checkpoint CSVs plus manifest
  solve-fh      finite-horizon sweep
  validate      cross-oracle validation suite with a pass/fail table

Configs are JSON; all numeric CSV output carries full double precision so
identical configs reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .chain_solvers import perron_frobenius_baseline, recurrent_class
from .ode_engine import (
    OdeConfig,
    ZetaSolutionPath,
    aroe_fixed_point_oracle,
    fh_backward_oracle,
    solve_average_reward,
    solve_finite_horizon,
)
from .state_space import FactoredKernel, ProductStateSpace, StochasticMatrix, induced_transition
from .uav_benchmark import (
    UavScenario,
    WindField,
    build_scenario_model,
    controlled_spectrum,
    cost_to_go,
    generate_wind_field,
    rollout_oracle,
    velocity_field,
)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _ztag(z: float) -> str:
    return format(float(z), "g")


@dataclass
class LoadedModel:
    kernel: FactoredKernel
    utility: np.ndarray
    basepoint: int
    ode: OdeConfig
    scenario: UavScenario | None
    config: dict


def load_config(path: str | Path) -> LoadedModel:
    with open(path) as f:
        config = json.load(f)
    model_cfg = config["model"]
    solver = config.get("solver", {})
    ode = OdeConfig(
        zeta_max=float(solver.get("zeta_max", 1.0)),
        step=float(solver.get("step", 0.01)),
        checkpoints=tuple(solver["checkpoints"]) if "checkpoints" in solver else None,
        residual_tol=float(solver.get("residual_tol", 1e-6)),
    )
    kind = model_cfg["kind"]
    if kind == "uav":
        d_a, d_o, d_N = int(model_cfg["d_a"]), int(model_cfg["d_o"]), int(model_cfg["d_N"])
        wind_cfg = model_cfg.get("wind", {"kind": "seeded", "seed": 0})
        if wind_cfg["kind"] == "seeded":
            wind = generate_wind_field(d_a, d_o, d_N, int(wind_cfg.get("seed", 0)))
        elif wind_cfg["kind"] == "explicit":
            wind = WindField(np.asarray(wind_cfg["table"], dtype=int))
        else:
            raise ValueError(f"unknown wind kind {wind_cfg['kind']!r}")
        target = model_cfg.get("target")
        # config coordinates are 1-based, matching the grid description
        target0 = (int(target[0]) - 1, int(target[1]) - 1) if target is not None else None
        scenario = UavScenario(
            d_a=d_a,
            d_o=d_o,
            d_N=d_N,
            wind=wind,
            delta_n=float(model_cfg.get("delta_n", 0.05)),
            sigma_u2=float(model_cfg.get("sigma_u2", 0.5)),
            target=target0,
        )
        kernel, utility = build_scenario_model(scenario)
        return LoadedModel(kernel, utility, scenario.basepoint, ode, scenario, config)
    if kind == "explicit":
        R0 = np.asarray(model_cfg["R0"], dtype=float)
        Q0 = np.asarray(model_cfg["Q0"], dtype=float)
        utility = np.asarray(model_cfg["utility"], dtype=float)
        d_u, d_n = R0.shape[1], Q0.shape[1]
        space = ProductStateSpace(d_u, d_n)
        if R0.shape[0] != space.d or Q0.shape[0] != space.d:
            raise ValueError(
                f"R0/Q0 must have {space.d} = {d_u}*{d_n} rows, got {R0.shape[0]} and {Q0.shape[0]}"
            )
        kernel = FactoredKernel(space, StochasticMatrix(R0), StochasticMatrix(Q0))
        basepoint = int(model_cfg.get("basepoint", 0))
        return LoadedModel(kernel, utility, basepoint, ode, None, config)
    raise ValueError(f"unknown model kind {kind!r}")


def default_uav_config(seed: int = 0) -> dict:
    return {
        "model": {
            "kind": "uav",
            "d_a": 15,
            "d_o": 15,
            "d_N": 5,
            "delta_n": 0.05,
            "sigma_u2": 0.5,
            "target": [15, 15],
            "wind": {"kind": "seeded", "seed": seed},
        },
        "solver": {
            "zeta_max": 2.0,
            "step": 0.01,
            "checkpoints": [0.0, 1.0, 2.0],
            "residual_tol": 1e-6,
        },
    }


class _OutputTracker:
    """Records written files so a failed run leaves no partial output behind."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.written: list[Path] = []

    def write_text(self, name: str, text: str) -> None:
        path = self.out_dir / name
        path.write_text(text)
        self.written.append(path)

    def cleanup(self) -> None:
        for path in self.written:
            path.unlink(missing_ok=True)


def _write_policy_csv(out: _OutputTracker, name: str, rule: np.ndarray) -> None:
    # sparse triplets; entries below 1e-12 dropped, rows renormalized
    trimmed = np.where(rule >= 1e-12, rule, 0.0)
    trimmed = trimmed / trimmed.sum(axis=1, keepdims=True)
    lines = ["state_index,next_u_index,probability"]
    for x, u in zip(*np.nonzero(trimmed)):
        lines.append(f"{x},{u},{_fmt(trimmed[x, u])}")
    out.write_text(name, "\n".join(lines) + "\n")


def _write_ar_outputs(out: _OutputTracker, loaded: LoadedModel, path: ZetaSolutionPath) -> list[str]:
    warnings: list[str] = []
    space = loaded.kernel.space
    for cp in path.checkpoints:
        tag = _ztag(cp.zeta)
        J = cost_to_go(cp) if loaded.scenario is not None else -cp.h.values
        lines = ["state_index,x_u,x_n,h,cost_to_go"]
        for x in range(space.d):
            xu, xn = space.unflatten(x)
            lines.append(f"{x},{xu},{xn},{_fmt(cp.h.values[x])},{_fmt(J[x])}")
        out.write_text(f"values_zeta_{tag}.csv", "\n".join(lines) + "\n")

        _write_policy_csv(out, f"policy_zeta_{tag}.csv", cp.tilted_rule.entries)

        eig = controlled_spectrum(cp.controlled_P)
        lines = ["real,imag"]
        for z in eig:
            lines.append(f"{_fmt(z.real)},{_fmt(z.imag)}")
        out.write_text(f"eigenvalues_zeta_{tag}.csv", "\n".join(lines) + "\n")

        if loaded.scenario is not None:
            v = velocity_field(cp.tilted_rule, loaded.scenario)
            sc = loaded.scenario
            lines = ["i,j,n,v_lat,v_lon"]
            for l in range(sc.d_L):
                li, lj = divmod(l, sc.d_o)
                for n in range(sc.d_N):
                    lines.append(f"{li + 1},{lj + 1},{n + 1},{_fmt(v[l, n, 0])},{_fmt(v[l, n, 1])}")
            out.write_text(f"velocity_zeta_{tag}.csv", "\n".join(lines) + "\n")

    lines = ["zeta,eta,aroe_residual_sup"]
    for z, eta, res in zip(path.grid, path.eta_trace, path.residual_trace):
        lines.append(f"{_fmt(z)},{_fmt(eta)},{_fmt(res)}")
    out.write_text("eta.csv", "\n".join(lines) + "\n")
    return warnings


def _write_manifest(out: _OutputTracker, loaded: LoadedModel, timings: dict, snaps, warnings) -> None:
    manifest = {
        "config": loaded.config,
        "version": __version__,
        "timings_seconds": timings,
        "checkpoint_snaps": [{"requested": a, "snapped": b} for a, b in snaps],
        "warnings": warnings,
    }
    out.write_text("manifest.json", json.dumps(manifest, indent=2) + "\n")


def cmd_solve_ar(args) -> int:
    loaded = load_config(args.config)
    loaded = _apply_overrides(loaded, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = _OutputTracker(out_dir)
    timings: dict[str, float] = {}
    try:
        t0 = time.perf_counter()
        path = solve_average_reward(loaded.kernel, loaded.utility, loaded.ode, loaded.basepoint)
        timings["solve"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        warnings = _write_ar_outputs(out, loaded, path)
        timings["write"] = time.perf_counter() - t0
        _write_manifest(out, loaded, timings, path.snapped, warnings)
    except Exception as exc:
        out.cleanup()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_solve_fh(args) -> int:
    loaded = load_config(args.config)
    loaded = _apply_overrides(loaded, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = _OutputTracker(out_dir)
    timings: dict[str, float] = {}
    try:
        t0 = time.perf_counter()
        path = solve_finite_horizon(loaded.kernel, loaded.utility, args.horizon, loaded.ode)
        timings["solve"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        for cp in path.checkpoints:
            tag = _ztag(cp.zeta)
            lines = ["k,state_index,W"]
            for k in range(path.horizon + 1):
                for x in range(loaded.kernel.space.d):
                    lines.append(f"{k},{x},{_fmt(cp.W[k, x])}")
            out.write_text(f"fh_values_zeta_{tag}.csv", "\n".join(lines) + "\n")
            for k, rule in enumerate(cp.policies):
                _write_policy_csv(out, f"fh_policy_zeta_{tag}_k_{k}.csv", rule.entries)
        timings["write"] = time.perf_counter() - t0
        _write_manifest(out, loaded, timings, path.snapped, [])
    except Exception as exc:
        out.cleanup()
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def _apply_overrides(loaded: LoadedModel, args) -> LoadedModel:
    ode = loaded.ode
    zeta_max = args.zeta_max if getattr(args, "zeta_max", None) is not None else ode.zeta_max
    step = args.step if getattr(args, "step", None) is not None else ode.step
    checkpoints = ode.checkpoints
    if getattr(args, "checkpoints", None):
        checkpoints = tuple(float(c) for c in args.checkpoints.split(","))
    loaded.ode = OdeConfig(zeta_max=zeta_max, step=step, checkpoints=checkpoints, residual_tol=ode.residual_tol)
    return loaded


def cmd_validate(args) -> int:
    try:
        loaded = load_config(args.config)
        loaded = _apply_overrides(loaded, args)
        recurrent_class(induced_transition(loaded.kernel))
    except Exception as exc:
        print(f"FAIL structure: {exc}")
        return 1

    rows: list[tuple[str, float, float]] = []
    try:
        path = solve_average_reward(loaded.kernel, loaded.utility, loaded.ode, loaded.basepoint)

        def check_cp(cp):
            h, eta = aroe_fixed_point_oracle(
                loaded.kernel, loaded.utility, cp.zeta, loaded.basepoint
            )
            gap = max(float(np.max(np.abs(h.values - cp.h.values))), abs(eta - cp.eta))
            return (f"ar-ode vs fixed-point @ zeta={_ztag(cp.zeta)}", gap, 1e-6)

        with ThreadPoolExecutor(max_workers=max(args.threads, 1)) as pool:
            rows.extend(pool.map(check_cp, path.checkpoints))

        zf = loaded.ode.zeta_max
        if zf > 0:
            T = args.horizon
            fh = solve_finite_horizon(
                loaded.kernel, loaded.utility, T,
                OdeConfig(zeta_max=zf, step=min(loaded.ode.step, 0.005), checkpoints=(zf,)),
            )
            oracle = fh_backward_oracle(loaded.kernel, loaded.utility, fh.checkpoints[-1].zeta, T)
            rows.append((
                f"fh-ode vs backward dp @ zeta={_ztag(zf)}",
                float(np.max(np.abs(fh.checkpoints[-1].W - oracle))),
                1e-5,
            ))

        if loaded.kernel.space.d_n == 1 and zf > 0:
            P0 = induced_transition(loaded.kernel)
            pf, twisted = perron_frobenius_baseline(P0, loaded.utility, zf, loaded.basepoint)
            cp = path.checkpoints[-1]
            gap = float(np.max(np.abs(twisted.entries - cp.controlled_P.entries)))
            rows.append((f"pf twisted matrix vs ode @ zeta={_ztag(zf)}", gap, 1e-6))
            rows.append((f"eta vs log pf eigenvalue @ zeta={_ztag(zf)}", abs(cp.eta - np.log(pf.lam)), 1e-6))

        if loaded.scenario is not None and zf > 0 and args.trials > 0:
            cp = path.checkpoints[-1]
            sc = loaded.scenario
            start = 0 * sc.d_N  # corner location (1,1), first wind state
            result = rollout_oracle(
                loaded.kernel, cp.tilted_rule, sc, cp.zeta, start,
                trials=args.trials, horizon_cap=args.horizon_cap, seed=args.seed,
            )
            gap = abs(result.mean - (-cp.h.values[start]))
            rows.append((
                f"rollout vs cost-to-go @ zeta={_ztag(cp.zeta)}",
                gap,
                3.0 * result.half_width_95 + 1e-9,
            ))
            if result.censored_fraction > 0.01:
                print(f"warning: {result.censored_fraction:.1%} of rollouts censored (estimate biased low)")
    except Exception as exc:
        print(f"FAIL while running validation suite: {exc}")
        return 1

    ok = True
    for name, value, tol in rows:
        status = "PASS" if value <= tol else "FAIL"
        ok = ok and status == "PASS"
        print(f"{status}  {name:<45s} residual={value:.3e} tol={tol:.3e}")
    return 0 if ok else 1


def cmd_gen_scenario(args) -> int:
    config = default_uav_config(seed=args.seed)
    Path(args.out).write_text(json.dumps(config, indent=2) + "\n")
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="klmdp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="path to JSON scenario config")
        p.add_argument("--zeta-max", dest="zeta_max", type=float, default=None)
        p.add_argument("--step", type=float, default=None)
        p.add_argument("--checkpoints", type=str, default=None, help="comma-separated zeta values")

    p = sub.add_parser("solve-ar", help="average-reward sweep over the weight grid")
    add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_solve_ar)

    p = sub.add_parser("solve-fh", help="finite-horizon sweep")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.set_defaults(func=cmd_solve_fh)

    p = sub.add_parser("validate", help="cross-oracle validation suite")
    add_common(p)
    p.add_argument("--horizon", type=int, default=4)
    p.add_argument("--horizon-cap", dest="horizon_cap", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen-scenario", help="write a default UAV scenario config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_scenario)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
