"""Survey answer distributions for demographic groups and model predictions.

Both input files are long-format CSVs with one row per answer option:

    question_id, wave, group, option_index, probability     (groups)
    question_id, wave, model, option_index, probability     (models)
"""

from __future__ import annotations

import csv
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InconsistentOptions, SchemaError

SUM_REJECT = 1e-3
SUM_EXACT = 1e-6

GROUP_COLUMNS = ("question_id", "wave", "group", "option_index", "probability")
MODEL_COLUMNS = ("question_id", "wave", "model", "option_index", "probability")


@dataclass
class Question:
    id: str
    wave: str
    n_options: int


@dataclass(eq=False)
class OpinionDataset:
    """``groups[q]`` is ``(n_groups, n_options_q)``; ``models[q]`` is ``(n_models, n_options_q)``."""

    questions: list[Question]
    group_labels: list[str]
    model_labels: list[str]
    groups: list[np.ndarray]
    models: list[np.ndarray]
    partition: str = "groups"

    def __post_init__(self):
        if not (len(self.questions) == len(self.groups) == len(self.models)):
            raise ValueError("one group table and one model table per question")
        for q, g, m in zip(self.questions, self.groups, self.models):
            if g.shape != (len(self.group_labels), q.n_options) or m.shape != (len(self.model_labels), q.n_options):
                raise InconsistentOptions(q.id)

    @property
    def n_questions(self) -> int:
        return len(self.questions)

    @property
    def n_groups(self) -> int:
        return len(self.group_labels)

    @property
    def n_models(self) -> int:
        return len(self.model_labels)

    def subset(self, groups=None, models=None) -> "OpinionDataset":
        gi = list(range(self.n_groups)) if groups is None else list(groups)
        mi = list(range(self.n_models)) if models is None else list(models)
        return OpinionDataset(
            self.questions,
            [self.group_labels[i] for i in gi],
            [self.model_labels[j] for j in mi],
            [g[gi] for g in self.groups],
            [m[mi] for m in self.models],
            self.partition,
        )


def _read_long(path, who: str, columns):
    """Parse one long-format file into ``{(question, label): {option: (prob, row)}}``."""
    tables: "OrderedDict[tuple[str, str], dict[int, tuple[float, int]]]" = OrderedDict()
    waves: dict[str, str] = {}
    labels: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(0, f"missing columns {missing}")
        for row_no, row in enumerate(reader, start=1):
            qid, wave, label = row["question_id"], row["wave"] or "", row[who]
            if not qid or not label:
                raise SchemaError(row_no, "empty question_id or label")
            try:
                opt = int(row["option_index"])
                prob = float(row["probability"])
            except (TypeError, ValueError):
                raise SchemaError(row_no, "option_index/probability not numeric") from None
            if opt < 0:
                raise SchemaError(row_no, "negative option_index")
            if not np.isfinite(prob) or prob < 0:
                raise SchemaError(row_no, f"invalid probability {row['probability']!r}")
            if waves.setdefault(qid, wave) != wave:
                raise SchemaError(row_no, f"question {qid} listed under two waves")
            cell = tables.setdefault((qid, label), {})
            if opt in cell:
                raise SchemaError(row_no, f"duplicate option {opt}")
            cell[opt] = (prob, row_no)
            if label not in labels:
                labels.append(label)
    return tables, waves, labels


def _vector(cell, qid):
    n = max(cell) + 1
    if sorted(cell) != list(range(n)):
        raise InconsistentOptions(qid)
    vec = np.array([cell[o][0] for o in range(n)])
    first_row = min(r for _, r in cell.values())
    gap = abs(vec.sum() - 1.0)
    if gap > SUM_REJECT:
        raise SchemaError(first_row, f"distribution sums to {vec.sum():.6g}")
    if gap > SUM_EXACT:
        vec = vec / vec.sum()
    return vec


def load_dataset(group_file, model_file, partition: str | None = None) -> OpinionDataset:
    """Read and validate the two CSVs.

    Questions keep the order of first appearance in the group file; group
    and model labels keep file order. Distributions off by more than
    ``1e-3`` are rejected; smaller drift beyond ``1e-6`` is renormalized.
    """
    gt, gwaves, glabels = _read_long(group_file, "group", GROUP_COLUMNS)
    mt, mwaves, mlabels = _read_long(model_file, "model", MODEL_COLUMNS)
    qids = list(OrderedDict.fromkeys(q for q, _ in gt))
    questions, groups, models = [], [], []
    for qid in qids:
        if qid not in mwaves:
            raise InconsistentOptions(qid)
        rows_g, rows_m = [], []
        for label in glabels:
            if (qid, label) not in gt:
                raise SchemaError(0, f"question {qid} has no distribution for group {label}")
            rows_g.append(_vector(gt[(qid, label)], qid))
        for label in mlabels:
            if (qid, label) not in mt:
                raise SchemaError(0, f"question {qid} has no distribution for model {label}")
            rows_m.append(_vector(mt[(qid, label)], qid))
        sizes = {len(v) for v in rows_g + rows_m}
        if len(sizes) != 1:
            raise InconsistentOptions(qid)
        questions.append(Question(qid, gwaves[qid], sizes.pop()))
        groups.append(np.vstack(rows_g))
        models.append(np.vstack(rows_m))
    extra = set(mwaves) - set(qids)
    if extra:
        raise InconsistentOptions(sorted(extra)[0])
    part = partition if partition is not None else Path(group_file).stem
    return OpinionDataset(questions, glabels, mlabels, groups, models, part)


def _write_long(path, who, columns, questions, labels, tables):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(columns)
        for q, table in zip(questions, tables):
            for b, label in enumerate(labels):
                for opt, prob in enumerate(table[b]):
                    out.writerow([q.id, q.wave, label, opt, repr(float(prob))])


def save_dataset(dataset: OpinionDataset, group_file, model_file) -> None:
    """Write both CSVs; probabilities use ``repr`` so a reload is exact."""
    _write_long(group_file, "group", GROUP_COLUMNS, dataset.questions, dataset.group_labels, dataset.groups)
    _write_long(model_file, "model", MODEL_COLUMNS, dataset.questions, dataset.model_labels, dataset.models)
