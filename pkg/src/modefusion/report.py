"""Rendering of evaluation reports: a text summary plus figures.

Consumes the report.json written by the evaluate stage; knows nothing about
how the numbers were produced.
"""

from __future__ import annotations

import json
import logging
import os

from .errors import ConfigError, IoError

log = logging.getLogger(__name__)

TOP_FEATURES = 12


def load_report(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if "scenarios" not in doc or not isinstance(doc["scenarios"], dict):
        raise ConfigError(f"{path}: missing scenarios section")
    return doc


def _fmt_hyperparams(h: dict) -> str:
    if not h:
        return "defaults"
    return ", ".join(f"{k}={v}" for k, v in sorted(h.items()))


def render_text(doc: dict) -> str:
    lines = []
    lines.append(f"config hash: {doc.get('config_hash', '?')}")
    scenarios = doc["scenarios"]
    lines.append(f"scenarios evaluated: {len(scenarios)}")
    for name in sorted(scenarios):
        rep = scenarios[name]
        best = rep["best"]
        final = rep["final"]
        best_grid = max(rep["grid"], key=lambda g: g["mean_kappa"])
        lines.append("")
        lines.append(f"[{name}]  instances={rep['n_instances']}  "
                     f"train={rep['n_train']}  holdout={rep['n_holdout']}  "
                     f"features={rep['n_features']}")
        lines.append(f"  best model: {best['method']} "
                     f"({_fmt_hyperparams(best['hyperparams'])})")
        lines.append(f"  cross-validated kappa: {best_grid['mean_kappa']:.4f}  "
                     f"accuracy: {best_grid['mean_accuracy']:.4f}")
        lines.append(f"  holdout kappa: {final['kappa']:.4f}  "
                     f"accuracy: {final['accuracy']:.4f}")
        top = [f"{feat} ({drop:+.4f})" for feat, drop in rep["importance"][:3]]
        if top:
            lines.append("  top features: " + "; ".join(top))
    return "\n".join(lines) + "\n"


def render_figures(doc: dict, out_dir: str) -> list:
    """Bar charts per scenario and an importance chart for the strongest
    scenario. Returns the written paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    scenarios = doc["scenarios"]
    names = sorted(scenarios)
    written = []

    final_acc = [scenarios[n]["final"]["accuracy"] for n in names]
    final_kap = [scenarios[n]["final"]["kappa"] for n in names]
    cv_kap = [max(g["mean_kappa"] for g in scenarios[n]["grid"]) for n in names]

    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(names)), 4))
    xs = range(len(names))
    width = 0.28
    ax.bar([x - width for x in xs], final_acc, width, label="holdout accuracy")
    ax.bar(xs, final_kap, width, label="holdout kappa")
    ax.bar([x + width for x in xs], cv_kap, width, label="cv kappa (best)")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("score")
    ax.set_title("scenario comparison")
    ax.legend(loc="lower right", fontsize="small")
    fig.tight_layout()
    path = os.path.join(out_dir, "scenario_scores.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    # importance plot for the scenario with the highest holdout kappa
    best_name = max(names, key=lambda n: scenarios[n]["final"]["kappa"])
    imp = scenarios[best_name]["importance"][:TOP_FEATURES]
    if imp:
        feats = [f for f, _ in imp][::-1]
        drops = [d for _, d in imp][::-1]
        fig, ax = plt.subplots(figsize=(7, max(3, 0.35 * len(feats))))
        ax.barh(range(len(feats)), drops)
        ax.set_yticks(range(len(feats)))
        ax.set_yticklabels(feats, fontsize="small")
        ax.set_xlabel("mean kappa drop under permutation")
        ax.set_title(f"feature importance: {best_name}")
        fig.tight_layout()
        path = os.path.join(out_dir, "importance.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    log.info("wrote %d figures to %s", len(written), out_dir)
    return written
