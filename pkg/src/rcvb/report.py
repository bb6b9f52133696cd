"""Report documents: a machine-readable JSON file with stable key order and
an aligned human-readable rendering derived from the same values.

Floats are rounded to six significant digits when the document is built, so
emitting and re-parsing the machine format is an exact inverse and repeated
deterministic runs produce byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

from .config import ExperimentConfig, config_to_dict

SCHEMA = "rcvb-report-v1"


def sig6(x):
    """Round to 6 significant digits (None and ints pass through)."""
    if x is None or isinstance(x, (int, bool)):
        return x
    return float(f"{float(x):.6g}")


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, int):
        return str(x)
    return f"{x:.6g}"


def build_report(cfg: ExperimentConfig, profiles, skips, train_reports,
                 leaderboard, winner, ensemble_section, ablation_rows,
                 profile_seconds: float) -> dict:
    train_total = sum(r.total_seconds for r in train_reports)
    doc = {
        "schema": SCHEMA,
        "config": config_to_dict(cfg),
        "profile": {
            "seconds": sig6(profile_seconds),
            "results": [{
                "model_id": p.model_id, "input_size": p.input_size,
                "precision": p.precision.value, "batch_size": p.batch_size,
                "epoch_seconds": sig6(p.epoch_seconds), "max_epochs": p.max_epochs,
                "predicate_mode": p.predicate_mode, "capped": p.capped,
            } for p in profiles],
            "skips": [{
                "model_id": s.model_id, "input_size": s.input_size,
                "precision": s.precision.value, "reason": s.reason,
                "detail": s.detail,
            } for s in skips],
        },
        "training": {
            "seconds_total": sig6(train_total),
            "reports": [_train_report_dict(r) for r in train_reports],
        },
        "leaderboard": [{
            "rank": i + 1, "model_id": r.model_id, "param_count": r.param_count,
            "batch_size": r.batch_size, "input_size": r.input_size,
            "precision": r.precision.value, "max_epochs": r.max_epochs,
            "best_val_acc": sig6(r.best_val_acc), "failed": r.failed,
            "failure_reason": r.failure_reason,
        } for i, r in enumerate(leaderboard)],
        "winner": None if winner is None else {
            "model_id": winner.model_id, "input_size": winner.input_size,
            "precision": winner.precision.value, "batch_size": winner.batch_size,
            "max_epochs": winner.max_epochs,
            "best_val_acc": sig6(winner.best_val_acc),
        },
        "ensemble": None if ensemble_section is None else {
            "model_id": ensemble_section["model_id"],
            "views": [{"size": v["size"], "flip": v["flip"],
                       "accuracy": sig6(v["accuracy"])}
                      for v in ensemble_section["views"]],
            "combined_accuracy": sig6(ensemble_section["combined_accuracy"]),
            "single_low_accuracy": sig6(ensemble_section["single_low_accuracy"]),
            "single_high_accuracy": sig6(ensemble_section["single_high_accuracy"]),
        },
        "ablation": None if ablation_rows is None else [
            {"method": r["method"], "train_size": r["train_size"],
             "test_size": r["test_size"], "ensemble": r["ensemble"],
             "amp": r["amp"], "accuracy": sig6(r["accuracy"])}
            for r in ablation_rows],
        "budget_summary": {
            "memory_budget_bytes": cfg.budget.memory_bytes,
            "time_budget_seconds": sig6(cfg.budget.effective_train_seconds),
            "profile_seconds": sig6(profile_seconds),
            "training_seconds_total": sig6(train_total),
            "time_budget_violations": sum(
                1 for r in train_reports if not r.within_time_budget),
            "memory_budget_violations": sum(
                1 for r in train_reports if not r.within_memory_budget),
        },
    }
    return doc


def _train_report_dict(r) -> dict:
    return {
        "model_id": r.model_id, "input_size": r.input_size,
        "precision": r.precision.value, "batch_size": r.batch_size,
        "max_epochs": r.max_epochs, "base_lr": sig6(r.base_lr),
        "param_count": r.param_count,
        "epochs": [{"epoch": e.epoch, "lr": sig6(e.lr),
                    "mean_loss": sig6(e.mean_loss),
                    "epoch_seconds": sig6(e.epoch_seconds),
                    "peak_bytes": e.peak_bytes} for e in r.epochs],
        "validated": [{"epoch": e, "val_acc": sig6(a)} for e, a in r.validated],
        "best_val_acc": sig6(r.best_val_acc),
        "total_seconds": sig6(r.total_seconds),
        "within_time_budget": r.within_time_budget,
        "within_memory_budget": r.within_memory_budget,
        "failed": r.failed, "failure_reason": r.failure_reason,
    }


def emit_machine(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def parse_machine(text: str) -> dict:
    doc = json.loads(text)
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise ValueError(f"not a {SCHEMA} document")
    return doc


def _table(headers, rows) -> list:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*headers), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*r) for r in rows]
    return lines


def emit_human(doc: dict) -> str:
    """Aligned text rendering; every number comes from the machine document."""
    lines = []
    cfg = doc["config"]
    bs = doc["budget_summary"]
    lines.append("budgeted backbone search report")
    lines.append("")
    lines.append(f"seed {cfg['seed']}  clock {cfg['clock_mode']}  "
                 f"predicate {cfg['predicate_mode']}")
    lines.append(f"memory budget {bs['memory_budget_bytes']} bytes  "
                 f"time budget {_fmt(bs['time_budget_seconds'])} s")
    lines.append(f"size grid {cfg['size_grid']}  precisions {cfg['precisions']}")
    lines.append("")

    lines.append("profile phase")
    rows = [[p["model_id"], str(p["input_size"]), p["precision"],
             str(p["batch_size"]), _fmt(p["epoch_seconds"]), str(p["max_epochs"])]
            for p in doc["profile"]["results"]]
    lines += _table(["model", "size", "prec", "batch", "epoch_s", "max_epochs"], rows)
    if doc["profile"]["skips"]:
        lines.append("")
        lines.append("skipped candidates")
        rows = [[s["model_id"], str(s["input_size"]), s["precision"], s["reason"]]
                for s in doc["profile"]["skips"]]
        lines += _table(["model", "size", "prec", "reason"], rows)
    lines.append("")

    lines.append("leaderboard")
    rows = [[str(e["rank"]), e["model_id"], str(e["param_count"]),
             str(e["batch_size"]), str(e["input_size"]), e["precision"],
             str(e["max_epochs"]), _fmt(e["best_val_acc"]),
             "failed: " + e["failure_reason"] if e["failed"] else "ok"]
            for e in doc["leaderboard"]]
    lines += _table(["rank", "model", "params", "batch", "size", "prec",
                     "epochs", "val_acc", "status"], rows)
    lines.append("")

    if doc["winner"] is not None:
        w = doc["winner"]
        lines.append(f"winner: {w['model_id']} size {w['input_size']} "
                     f"{w['precision']} batch {w['batch_size']} "
                     f"epochs {w['max_epochs']} val_acc {_fmt(w['best_val_acc'])}")
        lines.append("")
    if doc["ensemble"] is not None:
        en = doc["ensemble"]
        lines.append(f"ensemble evaluation of {en['model_id']} on the test set")
        rows = [[str(v["size"]), v["flip"], _fmt(v["accuracy"])]
                for v in en["views"]]
        lines += _table(["size", "flip", "accuracy"], rows)
        lines.append(f"combined {_fmt(en['combined_accuracy'])}  "
                     f"single-low {_fmt(en['single_low_accuracy'])}  "
                     f"single-high {_fmt(en['single_high_accuracy'])}")
        lines.append("")
    if doc["ablation"] is not None:
        lines.append("component study")
        rows = [[r["method"], str(r["train_size"]), str(r["test_size"]),
                 _fmt(r["ensemble"]), _fmt(r["amp"]), _fmt(r["accuracy"])]
                for r in doc["ablation"]]
        lines += _table(["method", "train", "test", "ensemble", "amp", "accuracy"],
                        rows)
        lines.append("")

    lines.append(f"profile time {_fmt(bs['profile_seconds'])} s  "
                 f"training time {_fmt(bs['training_seconds_total'])} s")
    lines.append(f"budget violations: time {bs['time_budget_violations']}  "
                 f"memory {bs['memory_budget_violations']}")
    return "\n".join(lines) + "\n"


def write_report(doc: dict, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    machine = out / "report.json"
    human = out / "report.txt"
    machine.write_text(emit_machine(doc))
    human.write_text(emit_human(doc))
    return {"machine": machine, "human": human}
