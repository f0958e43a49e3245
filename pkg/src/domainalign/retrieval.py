"""Cosine-similarity retrieval and mAP@All / precision@k evaluation.

Features on both sides are unit-norm, so descending dot product orders the
gallery by ascending cosine distance. Ties break by ascending gallery id
to keep degenerate synthetic data deterministic.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import InvalidInputError

PRECISION_KS = (1, 5, 10)


@dataclass
class EvalReport:
    direction: str
    map_all: float
    precision_at: dict            # k -> precision
    per_query_ap: list            # None for zero-relevant queries
    num_queries: int
    num_zero_relevant: int


def rank(query, gallery, gallery_ids):
    """Gallery ids sorted by descending similarity to the query."""
    gallery = np.atleast_2d(gallery)
    if gallery.shape[0] == 0:
        raise InvalidInputError("empty gallery")
    sims = gallery @ np.asarray(query)
    order = np.lexsort((gallery_ids, -sims))
    return np.asarray(gallery_ids)[order], sims[order]


def average_precision(ranked_relevant):
    """AP over a full ranked gallery given a boolean relevance vector.

    Returns None when nothing is relevant.
    """
    rel = np.asarray(ranked_relevant, dtype=bool)
    n_rel = int(rel.sum())
    if n_rel == 0:
        return None
    positions = np.arange(1, len(rel) + 1)
    cum_rel = np.cumsum(rel)
    return float(np.sum((cum_rel[rel] / positions[rel])) / n_rel)


def evaluate_direction(query_feats, query_labels, gallery_feats, gallery_ids,
                       gallery_labels, direction=""):
    """mAP@All plus precision@k over all queries of one domain against the
    full test gallery of the other. Queries with no relevant gallery item
    are excluded from the mean and counted separately."""
    query_feats = np.atleast_2d(query_feats)
    if query_feats.shape[0] == 0:
        raise InvalidInputError("empty query set")
    gallery_feats = np.atleast_2d(gallery_feats)
    gallery_ids = np.asarray(gallery_ids)
    gallery_labels = np.asarray(gallery_labels)

    aps = []
    prec_hits = {k: [] for k in PRECISION_KS}
    zero_relevant = 0
    for q, q_label in zip(query_feats, query_labels):
        sims = gallery_feats @ q
        order = np.lexsort((gallery_ids, -sims))
        rel = gallery_labels[order] == q_label
        ap = average_precision(rel)
        aps.append(ap)
        if ap is None:
            zero_relevant += 1
            continue
        for k in PRECISION_KS:
            kk = min(k, len(rel))
            prec_hits[k].append(float(rel[:kk].sum()) / kk)

    scored = [a for a in aps if a is not None]
    map_all = float(np.mean(scored)) if scored else 0.0
    precision_at = {
        k: (float(np.mean(v)) if v else 0.0) for k, v in prec_hits.items()
    }
    return EvalReport(
        direction=direction,
        map_all=map_all,
        precision_at=precision_at,
        per_query_ap=aps,
        num_queries=len(aps),
        num_zero_relevant=zero_relevant,
    )


def write_report_csv(path, reports):
    with open(path, "w") as f:
        f.write("direction,mAP,precision@1,precision@5,precision@10,"
                "num_queries,num_zero_relevant\n")
        for r in reports:
            f.write(
                f"{r.direction},{r.map_all!r},{r.precision_at[1]!r},"
                f"{r.precision_at[5]!r},{r.precision_at[10]!r},"
                f"{r.num_queries},{r.num_zero_relevant}\n")


def format_report_table(reports):
    """Aligned plain-text table of the same numbers."""
    header = ["direction", "mAP@All", "P@1", "P@5", "P@10", "queries", "zero-rel"]
    rows = [header]
    for r in reports:
        rows.append([
            r.direction,
            f"{r.map_all:.4f}",
            f"{r.precision_at[1]:.4f}",
            f"{r.precision_at[5]:.4f}",
            f"{r.precision_at[10]:.4f}",
            str(r.num_queries),
            str(r.num_zero_relevant),
        ])
    widths = [max(len(row[c]) for row in rows) for c in range(len(header))]
    lines = []
    for row in rows:
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines)
