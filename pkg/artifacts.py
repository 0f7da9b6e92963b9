"""
Output files: manifest.txt, moments.csv, experiment tables and gnuplot
scripts. Numbers are written with 12 significant digits; verification mode
leaves out the timestamp so reruns are byte-identical.
"""

import logging
import os
from datetime import datetime
from typing import Dict, Iterable, List, Optional, Sequence

import pandas as pd

import solver
from experiments import ExperimentPlan, ExperimentResult
from grid import moment_summary
from solver import SolveResult

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def _tolerances() -> Dict[str, float]:
    return {
        "m0_nonincreasing": solver.M0_TOL,
        "m1_bound": solver.M1_TOL,
        "m_neg_2beta_nonincreasing": solver.M_NEG_TOL,
        "m1_balance": solver.BALANCE_TOL,
        "weak_residual": solver.WEAK_TOL,
        "clamped_mass": solver.CLAMP_TOL,
        "contraction_ratio": solver.CONTRACTION_LIMIT,
    }


def write_table(table: pd.DataFrame, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_plot_script(path: str, table_file: str, x: str, columns: Sequence[str], all_columns: Sequence[str],
                      title: str, logscale: str = "") -> str:
    """gnuplot script plotting the named columns of a comma-separated table against x"""
    index = {name: i + 1 for i, name in enumerate(all_columns)}
    lines = [
        f"# {title}",
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{x}'",
    ]
    if logscale:
        lines.append(f"set logscale {logscale}")
    series = [f"'{os.path.basename(table_file)}' using {index[x]}:{index[c]} with linespoints" for c in columns]
    lines.append("plot " + ", \\\n     ".join(series))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    return path


def _manifest_lines(title: str, config: Dict[str, Dict[str, str]], hashes: Dict[str, str],
                    body: Iterable[str], verification_mode: bool) -> List[str]:
    lines = [f"# {title}"]
    if not verification_mode:
        lines.append(f"created = {datetime.now().isoformat(timespec='seconds')}")
    lines.append(f"verification_mode = {str(verification_mode).lower()}")
    lines.append("")
    for section, values in config.items():
        lines.append(f"[{section}]")
        lines += [f"{key} = {value}" for key, value in values.items()]
        lines.append("")
    lines.append("[hashes]")
    lines += [f"{key} = {value}" for key, value in hashes.items()]
    lines.append("")
    lines.append("[tolerances]")
    lines += [f"{key} = {value:g}" for key, value in _tolerances().items()]
    lines.append("")
    lines += list(body)
    return lines


def write_manifest(path: str, title: str, config: Dict[str, Dict[str, str]], hashes: Dict[str, str],
                   body: Iterable[str], verification_mode: bool = False) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(_manifest_lines(title, config, hashes, body, verification_mode)) + "\n")
    logger.info("manifest written to %s", path)
    return path


def scenario_hashes(scenario) -> Dict[str, str]:
    return {"kernel": scenario.kernel.digest(), "grid": scenario.grid.digest(), "field": scenario.field.digest()}


def _config_echo(config: Optional[Dict[str, Dict[str, str]]], scenario) -> Dict[str, Dict[str, str]]:
    if config:
        return config
    return {"solver": {k: str(v) for k, v in scenario.cfg.model_dump().items()}}


def write_simulation(result: SolveResult, scenario, out_dir: str,
                     config: Optional[Dict[str, Dict[str, str]]] = None) -> Dict[str, str]:
    """manifest.txt, moments.csv and moments.gp for one solve"""
    moments_path = write_table(result.moments.history, os.path.join(out_dir, "moments.csv"))
    columns = list(result.moments.history.columns)
    plot_path = write_plot_script(os.path.join(out_dir, "moments.gp"), moments_path, "time",
                                  [c for c in columns if c != "time"], columns, "moments")
    body = ["[projection]"]
    body += [f"{k} = {v:.12g}" for k, v in moment_summary(result.states[0], scenario.kernel.beta).items()]
    body += ["", "[moments]"]
    body += [f"flag.{k} = {str(v).lower()}" for k, v in result.moments.flags.items()]
    body += [f"worst.{k} = {v:.12g}" for k, v in result.moments.worst.items()]
    body += ["", "[windows]"] + [r.as_text() for r in result.reports]
    manifest = write_manifest(os.path.join(out_dir, "manifest.txt"), "simulate", _config_echo(config, scenario),
                              scenario_hashes(scenario), body, scenario.cfg.verification_mode)
    return {"manifest": manifest, "moments": moments_path, "plot": plot_path}


PLOT_AXES = {
    "continuous_dependence": ("amplitude", ["ratio"], "x"),
    "tolerance_consistency": ("picard_tol", ["sup_distance"], "xy"),
    "truncation_ladder": ("n", ["sup_l1_distance"], "xy"),
    "tail_report": ("R", None, "xy"),
}


def write_experiment(result: ExperimentResult, plan: ExperimentPlan, out_dir: str,
                     config: Optional[Dict[str, Dict[str, str]]] = None) -> Dict[str, str]:
    """manifest, comma-separated table and gnuplot script for one experiment"""
    table_path = write_table(result.table, os.path.join(out_dir, f"{result.name}.csv"))
    columns = list(result.table.columns)
    x, ys, logscale = PLOT_AXES.get(result.name, (columns[0], None, ""))
    if ys is None:
        ys = [c for c in columns if c.startswith("tail_n") or c == "sup_tail"]
    plot_path = write_plot_script(os.path.join(out_dir, f"{result.name}.gp"), table_path, x, ys, columns,
                                  result.name.replace("_", " "), logscale)
    body = [f"[{result.name}]"] + [f"flag.{k} = {str(v).lower()}" for k, v in result.flags.items()]
    body += [f"variation = {plan.variation}", f"runs = {len(result.runs)}"]
    manifest = write_manifest(os.path.join(out_dir, "manifest.txt"), result.name,
                              _config_echo(config, plan.scenario), scenario_hashes(plan.scenario), body,
                              plan.scenario.cfg.verification_mode)
    return {"manifest": manifest, "table": table_path, "plot": plot_path}
