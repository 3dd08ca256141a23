#!/usr/bin/env python3
"""
G-expectation FBGSDE lab: lattice, PDE, path, Picard, stitching, mollifier
and dependence experiments from one command line.

Usage:
    python glab.py gheat --config data/gheat.toml
    python glab.py solve-pde --config data/default_config.toml --emit-meta
    python glab.py simulate --config data/gheat.toml --scenario worst --paths 10000
    python glab.py picard --config data/coupled.toml --horizon 0,0.05
    python glab.py stitch --config data/default_config.toml --delta0 0.1
    python glab.py mollify --in samples.csv --n 10
    python glab.py perturb --config data/coupled.toml --config2 data/coupled_shift.toml
    python glab.py validate --config data/default_config.toml

Exit codes: 0 pass, 1 check failure, 2 usage/config error, 3 numerical blow-up.
"""
import argparse
import os
import sys
from typing import Dict, Optional

import numpy as np
import pandas as pd

from calculators.lattice import conditional_field
from calculators.mollifier import mollify
from errors import EXIT_CODES, DomainEvaluationError, LabError
from parsers.coefficients import verify_assumptions
from parsers.config_loader import RunConfig, load_config
from simulation.dependence import DEFAULT_LADDER, DependenceConfig, dependence_check
from simulation.paths import check_solution, simulate
from simulation.scenarios import parse_scenario
from solvers.pde_solver import exp_transform, field_derivatives, solve_pde
from solvers.picard import estimate_delta, picard_solve
from solvers.stitch import stitch_solve
from validation.run_validation import validate

FLOAT_FORMAT = '%.17g'


class Narrator:
    """Step narration; silent under --quiet."""

    def __init__(self, quiet: bool = False):
        self.quiet = quiet

    def banner(self, title: str):
        if not self.quiet:
            print(f"\n{'='*60}")
            print(title)
            print(f"{'='*60}\n")

    def step(self, message: str):
        if not self.quiet:
            print(message)

    def done(self, message: str):
        if not self.quiet:
            print(f"   ✓ {message}")

    def warn(self, message: str):
        print(f"   ⚠️  {message}")


def write_csv(frame: pd.DataFrame, path: str) -> str:
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_sidecar(values: Dict, path: str) -> str:
    """Structured key=value report next to a CSV."""
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for key, value in values.items():
            if isinstance(value, float):
                value = f"{value:.17g}"
            elif isinstance(value, (list, tuple)):
                value = ','.join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in value)
            f.write(f"{key}={value}\n")
    return path


def advise(config: RunConfig, say: Narrator) -> Optional[Dict]:
    """Sample the standing assumptions; each failing clause prints a warning and the run goes on."""
    say.step(f"Checking coefficient assumptions for {config.path}...")
    try:
        return verify_assumptions(config.coefficients, verbose=True)
    except DomainEvaluationError as e:
        say.warn(f"assumption sampling skipped: {e}")
        return None


def sidecar_path(csv_path: str) -> str:
    return os.path.splitext(csv_path)[0] + '.report.txt'


def _out(args, config: Optional[RunConfig], name: str) -> str:
    if args.out:
        return args.out
    base = config.run.output_dir if config else 'output'
    return os.path.join(base, f"{name}.csv")


def cmd_gheat(args, config: RunConfig, say: Narrator) -> int:
    steps = args.steps or config.run.n_steps
    say.banner(f"G-heat lattice: N={steps}, T={config.coefficients.T}")
    lattice = conditional_field(config.g, config.coefficients.phi, config.coefficients.T, steps)
    path = write_csv(lattice.to_frame(), _out(args, config, 'gheat'))
    say.done(f"Wrote {path}")
    print(f"v0(0) = {lattice.root_value:.17g}  N = {steps}")
    return 0


def cmd_solve_pde(args, config: RunConfig, say: Narrator) -> int:
    say.banner("Solving the decoupling PDE")
    field = solve_pde(config.coefficients, config.g, config.grid)
    say.done(f"nt={field.grid.nt}, dt={field.grid.dt:.3e}, CFL={field.meta['cfl']:.3f}")
    if field.meta['uxx_terminal_ratio'] > 10.0:
        say.warn(f"u_xx near T is {field.meta['uxx_terminal_ratio']:.1f}x the interior median")
    if args.exp_transform is not None:
        field = exp_transform(field, args.exp_transform, 'forward')
        say.done(f"Applied exp transform with L={args.exp_transform}")
    path = write_csv(field.to_frame(), _out(args, config, 'solve_pde'))
    say.done(f"Wrote {path}")
    if args.emit_meta:
        meta = {k: v for k, v in field.meta.items() if not isinstance(v, (dict, tuple))}
        say.done(f"Wrote {write_sidecar(meta, sidecar_path(path))}")
    print(f"u(0, {config.run.x0:g}) = {field_derivatives(field, field.grid.t0, config.run.x0)[0]:.17g}")
    return 0


def cmd_simulate(args, config: RunConfig, say: Narrator) -> int:
    config = config.with_run(n_paths=args.paths, n_steps=args.steps, seed=args.seed, increments=args.increments)
    run = config.run
    say.banner(f"Simulating {run.n_paths} paths x {run.n_steps} steps (seed {run.seed})")
    say.step("Step 1: Solving the decoupling PDE...")
    field = solve_pde(config.coefficients, config.g, config.grid)
    say.done(f"nt={field.grid.nt}")

    say.step("Step 2: Simulating paths...")
    scenario = parse_scenario(args.scenario, config.g, config.coefficients.T, config.coefficients, field)
    paths = simulate(config.coefficients, field, config.g, scenario, run.n_paths, run.n_steps, run.seed,
                     run.x0, run.increments, threads=run.threads)
    if paths.exits:
        say.warn(f"{len(paths.exits)} paths left the field hull and were terminated")
    path = write_csv(paths.to_frame(), _out(args, config, 'simulate'))
    say.done(f"Wrote {path}")

    say.step("Step 3: Checking the solution...")
    report = check_solution(config.coefficients, field, paths, config.g)
    report.update({'scenario': args.scenario, 'seed': run.seed, 'increments': run.increments})
    say.done(f"Wrote {write_sidecar(report, sidecar_path(path))}")
    print(f"mean K_T = {report['K_T_mean']:.6g} +/- {report['K_T_stderr']:.3g}  "
          f"backward residual max = {report['backward_residual_max']:.3g}")
    return 0


def cmd_picard(args, config: RunConfig, say: Narrator) -> int:
    bundle = config.coefficients
    if args.horizon:
        t_a, t_b = (float(v) for v in args.horizon.split(','))
    else:
        t_a, t_b = 0.0, bundle.T
    say.banner(f"Picard iteration on [{t_a:g}, {t_b:g}]")
    field, state = picard_solve(bundle, config.g, (t_a, t_b), bundle.terminal(config.grid.x), config.grid,
                                max_iter=args.max_iter, tol=args.tol)
    for k, d in enumerate(state.contraction_history):
        say.step(f"   iteration {k + 1}: d = {d:.3e}")
    if not state.converged:
        say.warn(f"did not reach tol={args.tol} in {args.max_iter} iterations")
    path = write_csv(field.to_frame(), _out(args, config, 'picard'))
    write_sidecar({
        'iterations': state.iter,
        'ratio': state.ratio,
        'converged': state.converged,
        'contraction_history': state.contraction_history,
        'inner_iterations': state.inner_iterations,
        **{k: v for k, v in state.meta.items()},
    }, sidecar_path(path))
    say.done(f"Wrote {path}")
    print(f"iterations = {state.iter}  ratio = {state.ratio:.6g}  converged = {state.converged}")
    return 0


def cmd_stitch(args, config: RunConfig, say: Narrator) -> int:
    bundle = config.coefficients
    delta0 = args.delta0
    if delta0 is None or args.check_delta:
        say.step("Estimating the contraction horizon...")
        estimate = estimate_delta(bundle, config.g, config.grid, bundle.T)
        say.done(f"empirical delta = {estimate['delta']:.6g}")
        if delta0 is None:
            delta0 = estimate['delta']
            if delta0 <= 0:
                raise LabError("no horizon contracts; pass --delta0 explicitly")
        elif delta0 > estimate['delta']:
            say.warn(f"delta0={delta0} exceeds the empirical delta {estimate['delta']:.4g}")
    say.banner(f"Stitching [0, {bundle.T:g}] with delta0={delta0:g}")
    field = stitch_solve(bundle, config.g, bundle.T, delta0, config.grid, max_iter=args.max_iter, tol=args.tol,
                         verbose=not say.quiet)
    path = write_csv(field.to_frame(), _out(args, config, 'stitch'))
    trace = {'delta0': delta0, 'cells': len(field.meta['cells']), 'seam_gap': field.meta['seam_gap'],
             'breakpoints': field.meta['breakpoints']}
    for cell in field.meta['cells']:
        for key in ('iterations', 'ratio', 'converged', 'M_lip'):
            trace[f"cell{cell['cell']}.{key}"] = cell[key]
    write_sidecar(trace, sidecar_path(path))
    say.done(f"Wrote {path}")
    print(f"u(0, {config.run.x0:g}) = {field_derivatives(field, 0.0, config.run.x0)[0]:.17g}  "
          f"cells = {len(field.meta['cells'])}")
    return 0


def cmd_mollify(args, config: Optional[RunConfig], say: Narrator) -> int:
    frame = pd.read_csv(args.input)
    if frame.shape[1] < 2:
        raise LabError(f"{args.input}: need at least two columns (x, value)")
    x = frame.iloc[:, 0].to_numpy(dtype=float)
    values = frame.iloc[:, 1].to_numpy(dtype=float)
    spacing = np.diff(x)
    if spacing.size == 0 or np.max(np.abs(spacing - spacing[0])) > 1e-9 * max(1.0, abs(spacing[0])):
        raise LabError(f"{args.input}: x column must be uniformly spaced")
    say.banner(f"Mollifying {len(x)} samples with n={args.n}")
    smooth = mollify(values, float(spacing[0]), args.n)
    out = args.out or os.path.splitext(args.input)[0] + f'.mollified_n{args.n}.csv'
    write_csv(pd.DataFrame({frame.columns[0]: x, frame.columns[1]: smooth}), out)
    say.done(f"Wrote {out}")
    print(f"sup |smoothed - input| = {np.max(np.abs(smooth - values)):.6g}")
    return 0


def cmd_perturb(args, config: RunConfig, say: Narrator) -> int:
    other = load_config(args.config2)
    advise(other, say)
    ladder = tuple(float(v) for v in args.ladder.split(',')) if args.ladder else DEFAULT_LADDER
    run = config.with_run(n_paths=args.paths, n_steps=args.steps, seed=args.seed).run
    cfg = DependenceConfig(alpha=args.alpha, x0=run.x0, x0_prime=other.run.x0, n_paths=run.n_paths,
                           n_steps=run.n_steps, seed=run.seed, increments=run.increments)
    say.banner(f"Perturbation ladder {list(ladder)} (alpha={args.alpha})")
    report = dependence_check(config.coefficients, other.coefficients, config.g, config.grid, cfg, ladder,
                              enforce_regime=not args.no_regime_check, verbose=not say.quiet)
    path = write_csv(report['table'], _out(args, config, 'perturb'))
    write_sidecar({k: v for k, v in report.items() if k != 'table'}, sidecar_path(path))
    say.done(f"Wrote {path}")
    print(f"LHS decreasing = {report['lhs_decreasing']}  ratio spread = {report['ratio_spread']:.4g}  "
          f"passed = {report['passed']}")
    return 0 if report['passed'] else EXIT_CODES['check_failure']


def cmd_validate(args, config: RunConfig, say: Narrator) -> int:
    return validate(config, args.output_dir, verbose=not say.quiet)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='G-expectation FBGSDE numerical lab',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Exit codes: 0 pass, 1 check failure, 2 usage/config error, 3 numerical blow-up",
    )
    parser.add_argument('--threads', type=int, default=None,
                        help='Worker threads for path noise generation (overrides run.threads)')
    parser.add_argument('--quiet', action='store_true', help='Suppress step narration')
    sub = parser.add_subparsers(dest='command', required=True)

    def with_config(p, required=True):
        p.add_argument('--config', required=required, help='TOML run configuration')
        p.add_argument('--out', default=None, help='Output CSV (default: <output_dir>/<command>.csv)')
        return p

    p = with_config(sub.add_parser('gheat', help='Lattice G-expectation of phi(B_T)'))
    p.add_argument('--steps', type=int, default=None, help='Lattice steps N (default run.n_steps)')
    p.set_defaults(handler=cmd_gheat)

    p = with_config(sub.add_parser('solve-pde', help='Explicit solve of the decoupling PDE'))
    p.add_argument('--emit-meta', action='store_true', help='Write m0, M_lip, dt, CFL, residuals as a sidecar')
    p.add_argument('--exp-transform', type=float, default=None, metavar='L',
                   help='Write e^{-L(T-t)} u instead of u')
    p.set_defaults(handler=cmd_solve_pde)

    p = with_config(sub.add_parser('simulate', help='Simulate (X, Y, Z, K) paths'))
    p.add_argument('--scenario', default='worst', help='worst | const:<gamma> | file:<csv>')
    p.add_argument('--paths', type=int, default=None, help='Number of paths (default run.n_paths)')
    p.add_argument('--steps', type=int, default=None, help='Euler steps (default run.n_steps)')
    p.add_argument('--seed', type=int, default=None, help='Master seed (default run.seed)')
    p.add_argument('--increments', choices=['bernoulli', 'gaussian'], default=None,
                   help='Increment law (default run.increments)')
    p.set_defaults(handler=cmd_simulate)

    p = with_config(sub.add_parser('picard', help='Small-time Picard solve'))
    p.add_argument('--horizon', default=None, help='a,b (default 0,T)')
    p.add_argument('--tol', type=float, default=1e-8, help='Sup-norm stopping tolerance')
    p.add_argument('--max-iter', type=int, default=50, help='Outer iteration cap')
    p.set_defaults(handler=cmd_picard)

    p = with_config(sub.add_parser('stitch', help='Stitched Picard solve on [0, T]'))
    p.add_argument('--delta0', type=float, default=None, help='Cell length (default: empirical estimate)')
    p.add_argument('--check-delta', action='store_true', help='Warn when delta0 exceeds the empirical estimate')
    p.add_argument('--tol', type=float, default=1e-8, help='Per-cell tolerance')
    p.add_argument('--max-iter', type=int, default=50, help='Per-cell iteration cap')
    p.set_defaults(handler=cmd_stitch)

    p = sub.add_parser('mollify', help='Smooth uniformly sampled (x, value) data')
    p.add_argument('--in', dest='input', required=True, help='Input CSV with x and value columns')
    p.add_argument('--n', type=int, required=True, help='Smoothing index n >= 1')
    p.add_argument('--out', default=None, help='Output CSV')
    p.set_defaults(handler=cmd_mollify, config=None)

    p = with_config(sub.add_parser('perturb', help='Continuous-dependence ladder between two configs'))
    p.add_argument('--config2', required=True, help='Target configuration c\'')
    p.add_argument('--alpha', type=float, default=0.5, help='Exponent alpha with 2 < 2 + alpha < beta')
    p.add_argument('--ladder', default=None, help='Comma-separated eps values (default 0.2,0.1,0.05,0.025)')
    p.add_argument('--paths', type=int, default=None, help='Paths per scenario (default run.n_paths)')
    p.add_argument('--steps', type=int, default=None, help='Euler steps (default run.n_steps)')
    p.add_argument('--seed', type=int, default=None, help='Master seed (default run.seed)')
    p.add_argument('--no-regime-check', action='store_true', help='Skip the small-time contraction check')
    p.set_defaults(handler=cmd_perturb)

    p = sub.add_parser('validate', help='Run the full cross-check suite')
    p.add_argument('--config', required=True, help='TOML run configuration')
    p.add_argument('--output-dir', default=None, help='Override run.output_dir')
    p.set_defaults(handler=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    say = Narrator(args.quiet)
    try:
        config = load_config(args.config) if args.config else None
        if config is not None and args.threads is not None:
            config = config.with_run(threads=args.threads)
        if config is not None:
            advise(config, say)
        return args.handler(args, config, say)
    except LabError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, ValueError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_CODES['usage']


if __name__ == "__main__":
    sys.exit(main())
