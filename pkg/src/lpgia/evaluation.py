"""Evasion / poisoning evaluation of victim models on clean vs injected graphs."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import materialize
from .scoring import similarity, target_labels
from .surrogate import TrainingError, gcn_forward, train

log = logging.getLogger(__name__)

MODES = ("evasion", "poisoning")
VICTIMS = ("gcn", "sgc")
CSV_COLUMNS = ("attack", "victim", "mode", "n_fake", "edge_total", "n_seeds", "clean_acc",
               "attacked_acc", "drop", "homophily_before", "homophily_after", "failed_seeds")


def accuracy(pred, truth, mask=None) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        pred, truth = pred[mask], truth[mask]
    if truth.size == 0:
        raise ValueError("accuracy over an empty mask")
    return float(np.mean(pred == truth))


@dataclass
class EvalReport:
    mode: str
    victim: str
    clean_acc: float
    attacked_acc: float
    drop: float
    n_fake: int
    edge_total: int
    seeds_used: list
    clean_per_seed: list
    attacked_per_seed: list
    homophily_stats: dict
    failed_seeds: list = field(default_factory=list)
    attack: str = "lpgia"

    def to_dict(self):
        return asdict(self)

    def csv_row(self) -> list:
        return [self.attack, self.victim, self.mode, self.n_fake, self.edge_total,
                len(self.seeds_used), repr(self.clean_acc), repr(self.attacked_acc), repr(self.drop),
                repr(self.homophily_stats.get("before", float("nan"))),
                repr(self.homophily_stats.get("after", float("nan"))),
                " ".join(str(s) for s in self.failed_seeds)]


def _target_similarity(graph, z, n_base) -> float:
    y = z.argmax(axis=1)
    h = similarity(graph, target_labels(z, y))
    return float(h[:n_base][graph.degrees[:n_base] > 0].mean())


def evaluate(g, plan, mode: str = "evasion", victim: str = "gcn", seeds=(0,), attack: str = "lpgia",
             **train_kw) -> EvalReport:
    """Victim test accuracy on the clean graph and under ``plan``, averaged over seeds.

    Evasion reuses the clean-trained victim on the injected graph; poisoning
    retrains on the injected graph, where fake nodes have no label and sit in
    no split.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if victim not in VICTIMS:
        raise ValueError(f"victim must be one of {VICTIMS}")
    pg = materialize(plan, g)
    test = g.mask("test")
    clean, attacked, used, failed = [], [], [], []
    h_before, h_after = [], []
    for seed in seeds:
        try:
            params = train(g, variant=victim, seed=seed, **train_kw)
            if mode == "poisoning":
                attacked_params = train(pg, variant=victim, seed=seed, **train_kw)
            else:
                attacked_params = params
            z_clean = gcn_forward(params, g).rows
            z_att = gcn_forward(attacked_params, pg).rows
        except TrainingError as exc:
            log.warning("seed %s failed: %s", seed, exc)
            failed.append(seed)
            continue
        used.append(seed)
        clean.append(accuracy(z_clean.argmax(axis=1), g.labels, test))
        attacked.append(accuracy(z_att[:g.n].argmax(axis=1), g.labels, test))
        h_before.append(_target_similarity(g, z_clean, g.n))
        h_after.append(_target_similarity(pg, z_att, g.n))
    if not used:
        raise TrainingError(f"all seeds failed for {victim}/{mode}")
    clean_acc = float(np.mean(clean))
    attacked_acc = float(np.mean(attacked))
    return EvalReport(
        mode=mode, victim=victim, clean_acc=clean_acc, attacked_acc=attacked_acc,
        drop=clean_acc - attacked_acc, n_fake=pg.fake_count, edge_total=len(pg.fake_edges),
        seeds_used=list(used), clean_per_seed=clean, attacked_per_seed=attacked,
        homophily_stats={"before": float(np.mean(h_before)), "after": float(np.mean(h_after))},
        failed_seeds=failed, attack=attack,
    )


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def reports_to_json(reports, extra=None) -> str:
    doc = {"reports": [r.to_dict() for r in reports]}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2) + "\n"


def reports_from_json(text: str) -> list:
    return [EvalReport(**r) for r in json.loads(text)["reports"]]
