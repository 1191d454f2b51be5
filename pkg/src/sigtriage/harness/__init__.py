"""Synthetic corpora and the detection experiment."""

from .corpus import (
    DEFAULT_FAMILIES, DEFAULT_MUTATIONS, CorpusManifest, FamilySpec, MutationSpec, build_rules,
    build_samples, generate_corpus,
)
from .experiment import APPROACHES, Cell, DetectionTable, approach_outcomes, run_experiment


def run_eval(out_dir, manifest=None, cfg=None, threads=0, figures=True):
    """Generate a corpus under ``out_dir/corpus`` and write the tables next to it."""
    from pathlib import Path

    from ..triage import TriageConfig

    manifest = manifest or CorpusManifest()
    cfg = cfg or TriageConfig()
    out = Path(out_dir)
    corpus = generate_corpus(manifest, out / "corpus")
    table, reports = run_experiment(corpus, cfg=cfg, threads=threads)
    (out / "detection_table.csv").write_text(table.to_csv(), encoding="utf-8")
    (out / "detection_table.txt").write_text(table.to_text(), encoding="utf-8")
    if figures:
        from .plotting import plot_detection_table, plot_fuzzy_scores

        plot_detection_table(table, out / "detection_table.png")
        plot_fuzzy_scores(reports, out / "fuzzy_scores.png", cfg.fuzzy_threshold)
    return table, reports
