"""Retrieval evaluation: rank target embeddings per speech encoding and
compute recall@{1,5,10} and median rank on matched, crossed, and combined
test sets; aggregate learning-trajectory logs into mean curves and plots.

Tie handling is pessimistic: the true candidate is ranked after every
candidate tied with it, which is deterministic, order-independent, and
never inflates recall. Even-length rank lists take the mean of the two
central values as the median, so reported medians can be fractional.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .svgplot import line_chart

RECALL_KS = (1, 5, 10)


@dataclass(frozen=True)
class RankingReport:
    test_set: str
    n_candidates: int
    recall1: float
    recall5: float
    recall10: float
    median_rank: float

    def recall(self, k):
        return getattr(self, f"recall{k}")

    def csv_row(self):
        return (
            f"{self.test_set},{self.n_candidates},{self.recall1!r},"
            f"{self.recall5!r},{self.recall10!r},{self.median_rank!r}"
        )


REPORT_HEADER = "test_set,n,recall1,recall5,recall10,median_rank"


def _unit_rows(matrix):
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero-norm candidate embedding")
    return matrix / norms[:, None]


def rank_candidates(query, candidates, true_index) -> int:
    """Rank of the true candidate under ascending cosine distance to the
    query, ties resolved pessimistically; in [1, N]."""
    candidates = _unit_rows(candidates)
    query = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(query)
    if qn == 0:
        raise ValueError("zero-norm query")
    # multiply-then-reduce keeps each row's arithmetic independent of its
    # position, so exact ties between identical candidates stay exact
    sims = np.sum(candidates * (query / qn), axis=1)
    true_sim = sims[true_index]
    others = np.delete(sims, true_index)
    return int(np.count_nonzero(others >= true_sim)) + 1


def ranks_matrix(query_matrix, candidate_matrix):
    """Pessimistic rank of candidate i for query i, vectorized; queries and
    candidates are row-aligned true pairs."""
    q = _unit_rows(query_matrix)
    c = _unit_rows(candidate_matrix)
    # same row-position-independent arithmetic as rank_candidates
    sims = np.stack([np.sum(c * row, axis=1) for row in q])
    true_sims = np.diag(sims)
    ge = sims >= true_sims[:, None]
    return ge.sum(axis=1).astype(int)  # includes the true item itself -> rank base 1


def report_from_ranks(ranks, test_set, n_candidates) -> RankingReport:
    ranks = np.asarray(ranks)
    recalls = {k: float(np.mean(ranks <= k)) for k in RECALL_KS}
    return RankingReport(
        test_set=test_set,
        n_candidates=n_candidates,
        recall1=recalls[1],
        recall5=recalls[5],
        recall10=recalls[10],
        median_rank=float(np.median(ranks)),
    )


def evaluate(encoder, ids, features, targets, test_set="test") -> RankingReport:
    """Encode every test utterance and rank it against the full pool of
    test-set target embeddings."""
    ids = list(ids)
    missing = [i for i in ids if i not in targets or i not in features]
    if missing:
        raise KeyError(f"{test_set}: missing features/embeddings for ids {missing[:10]}")
    encodings = np.stack([encoder.encode_values(features[i]) for i in ids])
    target_mat = np.stack([np.asarray(targets[i]) for i in ids])
    ranks = ranks_matrix(encodings, target_mat)
    return report_from_ranks(ranks, test_set, len(ids))


@dataclass(frozen=True)
class CrossRegisterMatrix:
    """Reports for {model register} x {test set}, per seed and 3-seed mean.

    per_seed maps (model_register, test_set_name) -> list of per-seed
    reports; means holds the across-seed averages under the same keys.
    """

    per_seed: dict
    means: dict

    def table(self) -> str:
        lines = []
        for model_reg in sorted({k[0] for k in self.means}):
            lines.append(f"Model trained on {model_reg.upper()}")
            lines.append(f"{'Testset':>10} {'Med.r.':>8} {'R@1':>6} {'R@5':>6} {'R@10':>6}")
            for key, rep in self.means.items():
                if key[0] != model_reg:
                    continue
                lines.append(
                    f"{rep.test_set:>10} {rep.median_rank:>8.2f} "
                    f"{rep.recall1:>6.2f} {rep.recall5:>6.2f} {rep.recall10:>6.2f}"
                )
        return "\n".join(lines)


def mean_report(reports) -> RankingReport:
    return RankingReport(
        test_set=reports[0].test_set,
        n_candidates=reports[0].n_candidates,
        recall1=float(np.mean([r.recall1 for r in reports])),
        recall5=float(np.mean([r.recall5 for r in reports])),
        recall10=float(np.mean([r.recall10 for r in reports])),
        # across-seed medians are averaged, so means can be fractional
        median_rank=float(np.mean([r.median_rank for r in reports])),
    )


def evaluate_cross_register(
    encoders_by_register, cds_test_ids, ads_test_ids, features, targets
) -> CrossRegisterMatrix:
    """Evaluate per-seed encoders for both training registers on the CDS,
    ADS, and combined (union) test sets.

    ``encoders_by_register`` maps "cds"/"ads" to a list of encoders, one
    per seed (aligned across registers).
    """
    overlap = set(cds_test_ids) & set(ads_test_ids)
    if overlap:
        raise ValueError(f"test sets must be disjoint by id; shared: {sorted(overlap)[:5]}")
    test_sets = {
        "cds": list(cds_test_ids),
        "ads": list(ads_test_ids),
        "combined": list(cds_test_ids) + list(ads_test_ids),
    }
    per_seed = {}
    means = {}
    for model_reg, encoders in encoders_by_register.items():
        for name, ids in test_sets.items():
            reports = [
                evaluate(enc, ids, features, targets, test_set=name) for enc in encoders
            ]
            per_seed[(model_reg, name)] = reports
            means[(model_reg, name)] = mean_report(reports)
    return CrossRegisterMatrix(per_seed=per_seed, means=means)


def write_reports_csv(reports, path):
    with open(path, "w") as fh:
        fh.write(REPORT_HEADER + "\n")
        for rep in reports:
            fh.write(rep.csv_row() + "\n")


def mean_trajectory(paths):
    """Average per-epoch metric curves over runs sharing an epoch range."""
    from .training import read_trajectory

    logs = [read_trajectory(p) for p in paths]
    epochs = logs[0]["epoch"]
    for log_ in logs[1:]:
        if log_["epoch"] != epochs:
            raise ValueError("trajectory logs have mismatched epoch ranges")
    out = {"epoch": epochs}
    for key in logs[0]:
        if key != "epoch":
            out[key] = [float(np.mean([log_[key][i] for log_ in logs])) for i in range(len(epochs))]
    return out


_COLORS = {1: "#1f77b4", 5: "#d62728", 10: "#2ca02c"}


def trajectory_report(logs_by_register, out_csv, out_svg, title="Validation recall"):
    """Mean recall curves per register; CSV of means plus an SVG chart with
    solid lines for CDS-trained runs and dotted for ADS-trained ones."""
    curves = {reg: mean_trajectory(paths) for reg, paths in logs_by_register.items()}
    with open(out_csv, "w") as fh:
        fh.write("register,epoch,mean_loss,lr_end,val_recall1,val_recall5,val_recall10,val_median_rank\n")
        for reg, cols in curves.items():
            for i, epoch in enumerate(cols["epoch"]):
                fh.write(
                    f"{reg},{int(epoch)},"
                    + ",".join(
                        repr(cols[k][i])
                        for k in (
                            "mean_loss", "lr_end", "val_recall1",
                            "val_recall5", "val_recall10", "val_median_rank",
                        )
                    )
                    + "\n"
                )
    series = []
    for reg, cols in curves.items():
        for k in RECALL_KS:
            series.append(
                {
                    "label": f"{reg} R@{k}",
                    "x": cols["epoch"],
                    "y": cols[f"val_recall{k}"],
                    "color": _COLORS[k],
                    "dashed": reg == "ads",
                }
            )
    line_chart(series, out_svg, title=title, y_label="recall")
    return curves
