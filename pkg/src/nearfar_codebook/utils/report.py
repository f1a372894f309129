from typing import Dict, Sequence

from tabulate import tabulate

from ..core.codebook.dictionaries import coherence
from ..core.states import Dictionary
from ..experiments import ResultTable


def format_results(table: ResultTable) -> str:
    """Grid table of a ResultTable: one row per (method, metric), one column per SNR, 'mean ± stderr' cells"""
    if not table.rows:
        return "No results"

    snrs = sorted({row.snr_db for row in table.rows})
    cells: Dict[tuple, Dict[float, str]] = {}
    for row in table.rows:
        cells.setdefault((row.method, row.metric), {})[row.snr_db] = f"{row.mean:.4g} ± {row.stderr:.2g}"

    headers = ["Method", "Metric"] + [f"{snr:g} dB" for snr in snrs]
    rows = [
        [method, metric] + [values.get(snr, "N/A") for snr in snrs]
        for (method, metric), values in cells.items()
    ]
    return tabulate(rows, headers=headers, tablefmt="grid", stralign="left", numalign="right")


def format_codebooks(dictionaries: Sequence[Dictionary]) -> str:
    """Size and mutual coherence of each codebook"""
    headers = ["Codebook", "N", "M", "Coherence"]
    rows = [
        [d.kind.value, d.num_elements, d.size, f"{coherence(d):.4f}" if d.size > 1 else "N/A"]
        for d in dictionaries
    ]
    return tabulate(rows, headers=headers, tablefmt="grid", stralign="left", numalign="right")
