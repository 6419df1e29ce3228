"""
CSV output and percentile tables for scenario runs.
"""

import csv
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple

from .exceptions import MissingScenario
from .scenario import COMPARE_DISTANCES_M, RstaOutcome, RunResult, compare_scenario_name
from .solver import DEFAULT_PERCENTILES, PercentileRow, percentile_report

logger = logging.getLogger(__name__)

CSV_COLUMNS = ('rsta_label', 'repetition', 'aoa_error_deg', 'position_error_cm', 'distance_error_cm',
               'los_likelihood')

Percentiles = Tuple[float, float, float, float]

# Published indoor positioning accuracy (25/50/75/100 % error, cm) per distance
BASELINES: Dict[str, List[Tuple[str, Percentiles]]] = {
    '7m': [('3GPP sub-6 GHz', (2.00, 8.25, 15.50, 30.00))],
    '7.07m': [('Bluetooth 5.1', (30.00, 37.50, 46.50, 80.00))],
    '9m': [('3GPP sub-6 GHz', (3.00, 8.00, 16.00, 56.00))],
    '11.2m': [('3GPP mmWave', (6.50, 7.80, 15.00, 80.00))],
    '14.2m': [('3GPP mmWave', (7.50, 10.50, 18.75, 85.50))],
}

# 802.11az over 802.11ay hardware measurements at the same distances
MEASURED_AZ_ROWS: Dict[str, Percentiles] = {
    '7m': (1.76, 3.13, 5.02, 33.15),
    '7.07m': (4.99, 5.85, 11.46, 36.49),
    '9m': (6.19, 7.72, 15.65, 33.67),
    '11.2m': (5.67, 7.91, 20.35, 52.75),
    '14.2m': (4.39, 9.78, 22.34, 56.30),
}


def emit_csv(result: RunResult, path) -> Path:
    """
    One row per (RSTA, repetition) in scenario order. Floats are written with
    repr so reading the file back gives the same numbers.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = 0
    with path.open('w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(CSV_COLUMNS)
        for label, outcomes in result.per_rsta.items():
            for repetition, outcome in enumerate(outcomes):
                writer.writerow([label, repetition] + [repr(float(v)) for v in outcome])
                rows += 1
    logger.info(f"Wrote {rows} rows for {result.name or 'scenario'} to {path}")
    return path


def read_csv(path, name: str = '') -> RunResult:
    result = RunResult(name or Path(path).stem)
    with Path(path).open(encoding='utf-8', newline='') as handle:
        for row in csv.DictReader(handle):
            outcomes = result.per_rsta.setdefault(row['rsta_label'], [])
            if int(row['repetition']) != len(outcomes):
                raise ValueError(f"Repetitions of {row['rsta_label']} are out of order in {path}")
            outcomes.append(RstaOutcome(*(float(row[c]) for c in CSV_COLUMNS[2:])))
    return result


def _format_row(label: str, values: Sequence[float], width: int) -> str:
    return f"{label:<{width}}" + ''.join(f"{v:>10.2f}" for v in values)


def _header(first: str, width: int, percentiles: Sequence[int] = DEFAULT_PERCENTILES) -> str:
    return f"{first:<{width}}" + ''.join(f"{str(p) + '%':>10}" for p in percentiles)


def percentile_table(result: RunResult, percentiles: Sequence[int] = DEFAULT_PERCENTILES) -> str:
    """Position error percentiles (cm) per RSTA"""
    width = max([len('RSTA')] + [len(label) for label in result.per_rsta]) + 2
    lines = [f"Position error percentiles (cm): {result.name}", _header('RSTA', width, percentiles)]
    for label in result.per_rsta:
        row = percentile_report(result.errors_cm(label), percentiles, label)
        lines.append(_format_row(label, [row.values[p] for p in percentiles], width))
    return '\n'.join(lines) + '\n'


def simulated_rows(results: Mapping[str, RunResult]) -> Dict[str, PercentileRow]:
    rows = {}
    for distance in COMPARE_DISTANCES_M:
        name = compare_scenario_name(distance)
        if name not in results:
            raise MissingScenario(f"Comparison needs the {name} scenario")
        rows[name] = percentile_report(results[name].errors_cm(), label=name)
    return rows


def compare_report(results: Mapping[str, RunResult]) -> str:
    """
    Simulated 802.11az percentiles next to the measured 802.11az rows and
    the other technologies, one block per distance.
    """
    simulated = simulated_rows(results)
    width = 30
    lines = ['Comparison of indoor positioning accuracy: percentile error (cm)',
             _header('Distance / technology', width)]
    for name, row in simulated.items():
        lines.append(_format_row(f"{name} 802.11az (simulated)", [row.values[p] for p in DEFAULT_PERCENTILES], width))
        lines.append(_format_row(f"{name} 802.11az (measured)", MEASURED_AZ_ROWS[name], width))
        for technology, values in BASELINES[name]:
            lines.append(_format_row(f"{name} {technology}", values, width))
    return '\n'.join(lines) + '\n'
