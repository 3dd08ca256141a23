#!/usr/bin/env python3
"""
Run the full cross-check suite against a config.

Steps run in order (see validation.checks.CHECKS); outputs go to the run's
output_dir:
    validation_checks.csv    one row per check (check, status, figures)
    validation_report.txt    key=value sidecar
    validation_report.html   rendered from templates/report.html

Usage:
    python -m validation.run_validation --config data/default_config.toml
"""
import argparse
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import Dict, List

import pandas as pd
from jinja2 import Environment, FileSystemLoader

from errors import LabError
from parsers.config_loader import RunConfig, load_config
from validation.checks import CHECKS

TEMPLATES = Path(__file__).resolve().parent.parent / 'templates'


def _format(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, (list, tuple)):
        return '[' + ','.join(_format(v) for v in value) + ']'
    return str(value)


def figures_of(result: Dict) -> Dict:
    return {k: v for k, v in result.items() if k not in ('check', 'status', 'passed')}


def run_checks(config: RunConfig, verbose: bool = True) -> List[Dict]:
    """
    Run every check in order.

    Numerical failures with exit code 3 (CFL, blow-up, non-contraction) stop
    the run; other lab errors mark the check as failed.
    """
    results = []
    for number, check in enumerate(CHECKS, start=1):
        name = check.__name__.replace('check_', '')
        if verbose:
            print(f"\n{'='*60}")
            print(f"Step {number}: {name}")
            print(f"{'='*60}")
        started = datetime.now()
        try:
            result = check(config)
        except LabError as e:
            if e.exit_code == 3:
                if verbose:
                    print(f"   ❌ {type(e).__name__}: {e}")
                raise
            result = {'check': name, 'status': 'FAIL', 'passed': False, 'error': f"{type(e).__name__}: {e}"}
        result['runtime_s'] = (datetime.now() - started).total_seconds()
        results.append(result)
        if verbose:
            mark = '✓' if result['passed'] else '❌'
            print(f"   {mark} {result['status']} ({result['runtime_s']:.1f}s)")
            for key, value in figures_of(result).items():
                if key != 'runtime_s':
                    print(f"      {key} = {_format(value)}")
    return results


def write_reports(results: List[Dict], config: RunConfig, output_dir: str) -> Dict[str, str]:
    """All three files leave out timings so reruns are byte-identical."""
    os.makedirs(output_dir, exist_ok=True)
    rows = []
    for result in results:
        figures = {k: v for k, v in figures_of(result).items() if k != 'runtime_s'}
        rows.append({
            'check': result['check'],
            'status': result['status'],
            'figures': ';'.join(f"{k}={_format(v)}" for k, v in figures.items()),
        })
    csv_path = os.path.join(output_dir, 'validation_checks.csv')
    pd.DataFrame(rows, columns=['check', 'status', 'figures']).to_csv(csv_path, index=False)

    sidecar_path = os.path.join(output_dir, 'validation_report.txt')
    passed = all(r['passed'] for r in results)
    with open(sidecar_path, 'w', encoding='utf-8') as f:
        f.write(f"config={config.path}\n")
        f.write(f"seed={config.run.seed}\n")
        f.write(f"passed={str(passed).lower()}\n")
        for row in rows:
            f.write(f"{row['check']}.status={row['status']}\n")
            if row['figures']:
                for item in row['figures'].split(';'):
                    f.write(f"{row['check']}.{item}\n")

    env = Environment(loader=FileSystemLoader(str(TEMPLATES)), autoescape=True)
    template = env.get_template('report.html')
    html = template.render(
        config=config.path,
        seed=config.run.seed,
        passed=passed,
        checks=[{**r, 'figures': {k: _format(v) for k, v in figures_of(r).items() if k != 'runtime_s'}}
                for r in results],
    )
    html_path = os.path.join(output_dir, 'validation_report.html')
    with open(html_path, 'w', encoding='utf-8') as f:
        f.write(html)
    return {'csv': csv_path, 'sidecar': sidecar_path, 'html': html_path}


def validate(config: RunConfig, output_dir: str = None, verbose: bool = True) -> int:
    """Run the suite, write reports, return the exit status (0 iff every check passes)."""
    start_time = datetime.now()
    if verbose:
        print(f"\n{'#'*60}")
        print("# Validation suite")
        print(f"{'#'*60}")
        print(f"Config: {config.path}")
        print(f"Seed: {config.run.seed}")
        print(f"Started at: {start_time.strftime('%Y-%m-%d %H:%M:%S')}")

    results = run_checks(config, verbose)
    paths = write_reports(results, config, output_dir or config.run.output_dir)
    failed = [r['check'] for r in results if not r['passed']]

    if verbose:
        print(f"\n{'#'*60}")
        print("# Validation complete" if not failed else "# Validation FAILED")
        print(f"{'#'*60}")
        print(f"Duration: {datetime.now() - start_time}")
        if failed:
            print(f"Failing checks: {', '.join(failed)}")
        print(f"\nOutput files:")
        for path in paths.values():
            print(f"  - {path}")
    return 1 if failed else 0


def main():
    parser = argparse.ArgumentParser(description='Run the cross-check suite')
    parser.add_argument('--config', required=True, help='TOML run configuration')
    parser.add_argument('--output-dir', default=None, help='Override run.output_dir')
    parser.add_argument('--quiet', action='store_true', help='Suppress step narration')
    args = parser.parse_args()

    try:
        config = load_config(args.config)
        return validate(config, args.output_dir, verbose=not args.quiet)
    except LabError as e:
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
