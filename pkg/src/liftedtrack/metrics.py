"""CLEAR MOT evaluation over MOT-format records.

Per frame, previously established ground-truth/hypothesis pairings are
kept while both boxes still overlap at the threshold; remaining boxes are
matched by maximum-IoU assignment. An identity switch is counted whenever
a ground-truth trajectory is matched to a different hypothesis id than
its last known partner. MOTP is reported as mean IoU over matches.
"""

from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .graph import iou
from .motio import MotRecord


@dataclass(frozen=True)
class MotReport:
    mota: float
    motp: float
    ids: int
    mt: int
    ml: int
    fp: int
    fn: int
    idf1: float

    def __post_init__(self):
        if self.mota > 1.0 + 1e-12:
            raise ValueError(f"mota cannot exceed 1, got {self.mota}")
        if min(self.ids, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")

    def lines(self) -> List[str]:
        return [
            f"MOTA {self.mota:.3f}",
            f"MOTP {self.motp:.3f}",
            f"IDF1 {self.idf1:.3f}",
            f"IDs {self.ids}",
            f"MT {self.mt}",
            f"ML {self.ml}",
            f"FP {self.fp}",
            f"FN {self.fn}",
        ]


def _by_frame(records: Sequence[MotRecord]) -> Dict[int, List[Tuple[int, MotRecord]]]:
    frames: Dict[int, List[Tuple[int, MotRecord]]] = defaultdict(list)
    for rec in records:
        frames[rec.frame].append((rec.track_id, rec))
    return frames


def _as_records(source) -> List[MotRecord]:
    if hasattr(source, "to_mot_records"):
        return source.to_mot_records()
    return list(source)


def evaluate_clear_mot(gt, hyp, iou_threshold: float = 0.5) -> MotReport:
    """Score a hypothesis track set against ground-truth records."""
    gt_records = _as_records(gt)
    hyp_records = _as_records(hyp)
    if not gt_records:
        raise ValueError("ground truth is empty")
    if any(rec.track_id < 1 for rec in gt_records):
        raise ValueError("ground-truth ids must be positive")

    gt_frames = _by_frame(gt_records)
    hyp_frames = _by_frame(hyp_records)
    total_gt = len(gt_records)
    total_hyp = len(hyp_records)

    assoc: Dict[int, int] = {}
    ids = fp = fn = 0
    iou_sum = 0.0
    num_matches = 0
    gt_present: Dict[int, int] = defaultdict(int)
    gt_matched: Dict[int, int] = defaultdict(int)
    pair_frames: Dict[Tuple[int, int], int] = defaultdict(int)

    for frame in sorted(gt_frames.keys() | hyp_frames.keys()):
        gts = gt_frames.get(frame, [])
        hyps = hyp_frames.get(frame, [])
        for gid, _ in gts:
            gt_present[gid] += 1
        gt_boxes = {gid: rec.box for gid, rec in gts}
        hyp_boxes = {hid: rec.box for hid, rec in hyps}

        # identity matching counts every overlapping co-occurrence
        for gid, gbox in gt_boxes.items():
            for hid, hbox in hyp_boxes.items():
                if iou(gbox, hbox) >= iou_threshold:
                    pair_frames[(gid, hid)] += 1

        matches: Dict[int, int] = {}
        for gid in sorted(gt_boxes):
            hid = assoc.get(gid)
            if hid in hyp_boxes and hid not in matches.values():
                if iou(gt_boxes[gid], hyp_boxes[hid]) >= iou_threshold:
                    matches[gid] = hid

        free_gt = sorted(g for g in gt_boxes if g not in matches)
        free_hyp = sorted(h for h in hyp_boxes if h not in matches.values())
        if free_gt and free_hyp:
            scores = np.array(
                [[iou(gt_boxes[g], hyp_boxes[h]) for h in free_hyp] for g in free_gt]
            )
            rows, cols = linear_sum_assignment(-scores)
            for r, c in zip(rows, cols):
                if scores[r, c] >= iou_threshold:
                    matches[free_gt[r]] = free_hyp[c]

        for gid, hid in matches.items():
            if gid in assoc and assoc[gid] != hid:
                ids += 1
            assoc[gid] = hid
            gt_matched[gid] += 1
            iou_sum += iou(gt_boxes[gid], hyp_boxes[hid])
            num_matches += 1
        fn += len(gt_boxes) - len(matches)
        fp += len(hyp_boxes) - len(matches)

    mota = 1.0 - (fp + fn + ids) / total_gt
    motp = iou_sum / num_matches if num_matches else 0.0

    mt = ml = 0
    for gid, present in gt_present.items():
        coverage = gt_matched[gid] / present
        if coverage >= 0.8:
            mt += 1
        elif coverage <= 0.2:
            ml += 1

    idtp = 0
    if pair_frames:
        gids = sorted({g for g, _ in pair_frames})
        hids = sorted({h for _, h in pair_frames})
        weights = np.zeros((len(gids), len(hids)))
        for (g, h), count in pair_frames.items():
            weights[gids.index(g), hids.index(h)] = count
        rows, cols = linear_sum_assignment(-weights)
        idtp = int(weights[rows, cols].sum())
    idf1 = 2.0 * idtp / (total_gt + total_hyp) if total_hyp else 0.0

    return MotReport(
        mota=mota, motp=motp, ids=ids, mt=mt, ml=ml, fp=fp, fn=fn, idf1=idf1
    )
