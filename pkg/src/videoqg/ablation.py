"""Train-and-evaluate harness over the baseline and ablation configurations.

Each (configuration, seed) run trains a fresh model on the train split with
the same budget, decodes the test split, and scores the output with the
correctness metrics, the frequent word coverage grid, and entity/action
exact match. Records are written as JSON lines; the aligned tables are
rendered from those records alone, so a saved report can be re-rendered
without training again.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .config import ABLATION_CONFIGS, EvalConfig, ModelSettings
from .data import Dataset
from .metrics import build_stats, coverage_grid, evaluate
from .metrics.diversity import CATEGORIES
from .models import build_model
from .training import TrainConfig, evaluate_loss, train

CORRECTNESS_COLUMNS = ("bleu1", "bleu4", "rouge_l", "cider", "meteor")
MATCH_COLUMNS = ("entity_em", "action_em")


def ablation_settings(name: str, base: ModelSettings) -> ModelSettings:
    """Model settings for one named configuration, derived from ``base``."""
    if name == "S2VT":
        return replace(base, kind="s2vt")
    if name == "IMGD":
        return replace(base, kind="imgd")
    flags = {
        "SA": dict(use_sre=False, use_subtitles=False),
        "SA+SRE": dict(use_sre=True, use_subtitles=False),
        "SA+SRE+CMSA": dict(use_sre=True, use_subtitles=True),
    }
    if name not in flags:
        raise ValueError(f"unknown configuration {name!r}; expected one of {ABLATION_CONFIGS}")
    return replace(base, kind="srcmsa", encoder=replace(base.encoder, **flags[name]))


def exact_match(generated: Sequence[Sequence[str]], gold: Sequence[str], lexicon: Iterable[str]) -> float:
    """Share of questions whose tokens from ``lexicon`` are exactly ``{gold}``."""
    lexicon = set(lexicon)
    hits = sum({t for t in q if t in lexicon} == {g} for q, g in zip(generated, gold))
    return hits / max(len(gold), 1)


def evaluate_generated(dataset: Dataset, idx: list[int], generated: list[list[str]],
                       percents: Sequence[float]) -> dict:
    refs = [dataset.question_vocab.decode(dataset.clips[i].question) for i in idx]
    report = evaluate([(g, [r]) for g, r in zip(generated, refs)])
    nonempty = [g for g in generated if g]
    grid = coverage_grid(build_stats(nonempty), percents) if nonempty else {c: {p: None for p in percents} for c in CATEGORIES}
    return {
        **report.to_dict(),
        "entity_em": exact_match(generated, [dataset.labels[i]["entity"] for i in idx], dataset.entity_tokens),
        "action_em": exact_match(generated, [dataset.labels[i]["action"] for i in idx], dataset.action_tokens),
        "coverage": {c: [[p, v] for p, v in row.items()] for c, row in grid.items()},
    }


def run_one(dataset: Dataset, name: str, seed: int, settings: ModelSettings, train_config: TrainConfig,
            eval_config: EvalConfig) -> dict:
    spec = ablation_settings(name, settings).spec_for(dataset, init_seed=seed)
    model = build_model(spec)
    result = train(model, dataset.split("train"), replace(train_config, rng_seed=seed), dataset.split("val"))
    idx = dataset.indices("test")
    clips = [dataset.clips[i] for i in idx]
    generated_ids = []
    for start in range(0, len(clips), 64):
        generated_ids += model.generate(clips[start:start + 64], eval_config.beam_size, eval_config.max_len, eval_config.alpha)
    generated = [dataset.question_vocab.decode(g) for g in generated_ids]
    record = {
        "config": name,
        "seed": seed,
        "steps": result.steps,
        "best_val_loss": result.best_val_loss,
        "test_loss": evaluate_loss(model, clips),
        **evaluate_generated(dataset, idx, generated, eval_config.percents),
        "samples": [" ".join(g) for g in generated[:3]],
    }
    return record


@dataclass
class AblationReport:
    records: list[dict] = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "AblationReport":
        return cls([json.loads(line) for line in text.splitlines() if line.strip()])

    def configs(self) -> list[str]:
        seen: list[str] = []
        for r in self.records:
            if r["config"] not in seen:
                seen.append(r["config"])
        return seen

    def mean(self, config: str, column: str) -> float:
        return float(np.mean([r[column] for r in self.records if r["config"] == config]))

    def mean_coverage(self, config: str) -> dict[str, list[tuple[float, float | None]]]:
        rows = [r["coverage"] for r in self.records if r["config"] == config]
        out = {}
        for cat in CATEGORIES:
            cells = []
            for j, (p, _) in enumerate(rows[0][cat]):
                vals = [row[cat][j][1] for row in rows]
                cells.append((p, None if any(v is None for v in vals) else float(np.mean(vals))))
            out[cat] = cells
        return out

    def correctness_table(self) -> str:
        header = ["Model", "BLEU", "BLEU-4", "ROUGE", "CIDEr", "METEOR", "Entity EM", "Action EM"]
        rows = []
        for c in self.configs():
            rows.append([c] + [f"{100 * self.mean(c, col):.2f}" for col in CORRECTNESS_COLUMNS + MATCH_COLUMNS])
        return _align([header] + rows)

    def diversity_table(self) -> str:
        configs = self.configs()
        if not configs:
            return ""
        first = self.mean_coverage(configs[0])
        header = ["Model"] + [f"{cat} {p:g}%" for cat in CATEGORIES for p, _ in first[cat]]
        rows = []
        for c in configs:
            cov = self.mean_coverage(c)
            rows.append([c] + ["n/a" if v is None else f"{100 * v:.1f}" for cat in CATEGORIES for _, v in cov[cat]])
        return _align([header] + rows)

    def render(self) -> str:
        seeds = sorted({r["seed"] for r in self.records})
        return (
            f"Correctness (test split, mean over seeds {seeds}, x100)\n{self.correctness_table()}\n\n"
            f"Frequent word coverage (lower is more diverse, x100)\n{self.diversity_table()}\n"
        )


def _align(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for k, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(row, widths))))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def run_ablation(dataset: Dataset, configs: Sequence[str] = ABLATION_CONFIGS, seeds: Sequence[int] = (0, 1, 2),
                 settings: ModelSettings | None = None, train_config: TrainConfig | None = None,
                 eval_config: EvalConfig | None = None, progress=None) -> AblationReport:
    settings = settings or ModelSettings()
    train_config = train_config or TrainConfig()
    eval_config = eval_config or EvalConfig()
    report = AblationReport()
    for name in configs:
        for seed in seeds:
            report.records.append(run_one(dataset, name, seed, settings, train_config, eval_config))
            if progress is not None:
                progress(report.records[-1])
    return report
