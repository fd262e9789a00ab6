"""Detection scoring: greedy center matching, FROC curve, FROC score.

Counts are pooled over all images (slide-aggregated): sensitivity is
total TP over total ground truth, and the false-positive rate is total
FP over total scanned area in mm^2. The score averages sensitivity at
fixed FP/mm^2 operating points with step-function lookup, no
interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from tilkit.errors import ConfigError, ContractError
from tilkit.types import DEFAULT_MPP, Detection

DEFAULT_HIT_RADIUS = 8.0
DEFAULT_OPERATING_POINTS = (10.0, 20.0, 50.0, 100.0, 200.0, 300.0)


@dataclass(frozen=True)
class FrocConfig:
    hit_radius: float = DEFAULT_HIT_RADIUS
    mpp: float = DEFAULT_MPP
    operating_points: tuple[float, ...] = DEFAULT_OPERATING_POINTS

    def __post_init__(self) -> None:
        if self.hit_radius <= 0 or self.mpp <= 0:
            raise ConfigError("hit_radius and mpp must be positive")
        if not self.operating_points:
            raise ConfigError("at least one operating point is required")
        if any(p <= 0 for p in self.operating_points):
            raise ConfigError("operating points must be positive")
        if any(b <= a for a, b in zip(self.operating_points, self.operating_points[1:])):
            raise ConfigError("operating points must be strictly increasing")


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: list[tuple[int, int]] = field(default_factory=list)  # (gt index, det index)


def _sorted_dets(dets: list[Detection]) -> list[tuple[int, Detection]]:
    # stable sort keeps input order among confidence ties
    return sorted(enumerate(dets), key=lambda item: -item[1].confidence)


def match_greedy(
    gt_centers: list[tuple[float, float]],
    dets: list[Detection],
    hit_radius: float = DEFAULT_HIT_RADIUS,
) -> MatchResult:
    """Greedy one-to-one matching in descending confidence order.

    Each detection claims the nearest unmatched ground-truth center
    within hit_radius (distance ties go to the lowest GT index);
    detections claiming nothing are FP, unclaimed GT are FN.
    """
    claimed = [False] * len(gt_centers)
    pairs = []
    fp = 0
    r2 = hit_radius * hit_radius
    for det_idx, det in _sorted_dets(dets):
        best = None
        best_d2 = None
        for gi, (gx, gy) in enumerate(gt_centers):
            if claimed[gi]:
                continue
            d2 = (gx - det.cx) ** 2 + (gy - det.cy) ** 2
            if d2 <= r2 and (best_d2 is None or d2 < best_d2):
                best, best_d2 = gi, d2
        if best is None:
            fp += 1
        else:
            claimed[best] = True
            pairs.append((best, det_idx))
    tp = len(pairs)
    return MatchResult(tp=tp, fp=fp, fn=len(gt_centers) - tp, pairs=sorted(pairs))


@dataclass
class FrocCurve:
    """Operating points swept over every distinct detection confidence.

    points[i] pairs FP/mm^2 with sensitivity at thresholds[i]; ordered
    by descending threshold, so both coordinates are non-decreasing.
    """

    points: list[tuple[float, float]]
    thresholds: list[float]
    total_area_mm2: float

    def __post_init__(self) -> None:
        if not self.total_area_mm2 > 0:
            raise ContractError("total_area_mm2 must be positive")
        for (fp0, s0), (fp1, s1) in zip(self.points, self.points[1:]):
            if fp1 < fp0 or s1 < s0:
                raise ContractError("FROC points must be non-decreasing in both coordinates")


def froc_curve(
    per_image: list[tuple[list[tuple[float, float]], list[Detection], float]],
    config: FrocConfig = FrocConfig(),
) -> FrocCurve:
    """Pooled FROC curve over (gt_centers, detections, area_mm2) triples.

    Greedy matching is prefix-stable in confidence order, so each
    detection's TP/FP outcome is decided once and the curve is read off
    cumulatively at every distinct confidence.
    """
    total_gt = sum(len(gt) for gt, _, _ in per_image)
    if total_gt == 0:
        raise ContractError("sensitivity undefined: no ground-truth cells in any image")
    total_area = 0.0
    outcomes: list[tuple[float, bool]] = []  # (confidence, is_tp)
    for gt_centers, dets, area_mm2 in per_image:
        if not area_mm2 > 0:
            raise ContractError(f"image area must be positive, got {area_mm2}")
        total_area += area_mm2
        # matching the full list once fixes every detection's TP/FP
        # outcome for all thresholds: greedy consumption is decided by
        # higher-confidence detections only
        matched = {det_idx for _, det_idx in match_greedy(gt_centers, dets, config.hit_radius).pairs}
        outcomes.extend((det.confidence, i in matched) for i, det in enumerate(dets))

    outcomes.sort(key=lambda oc: -oc[0])
    points = []
    thresholds = []
    tp = fp = 0
    for i, (conf, is_tp) in enumerate(outcomes):
        tp += is_tp
        fp += not is_tp
        last_of_threshold = i + 1 == len(outcomes) or outcomes[i + 1][0] != conf
        if last_of_threshold:
            points.append((fp / total_area, tp / total_gt))
            thresholds.append(conf)
    return FrocCurve(points=points, thresholds=thresholds, total_area_mm2=total_area)


def froc_score(
    curve: FrocCurve, operating_points: tuple[float, ...] = DEFAULT_OPERATING_POINTS
) -> float:
    """Mean sensitivity over the operating points (FP/mm^2 values).

    Each operating point takes the sensitivity of the last curve point
    whose FP rate does not exceed it; 0 when no point qualifies.
    """
    if not operating_points:
        raise ConfigError("at least one operating point is required")
    total = 0.0
    for op in operating_points:
        sens = 0.0
        for fp_rate, sensitivity in curve.points:
            if fp_rate <= op:
                sens = sensitivity
            else:
                break
        total += sens
    return total / len(operating_points)


def precision_recall(
    gt_centers: list[tuple[float, float]],
    dets: list[Detection],
    hit_radius: float = DEFAULT_HIT_RADIUS,
    conf_threshold: float = 0.0,
) -> tuple[float, float]:
    """Precision and recall after thresholding confidence.

    Degenerate conventions: precision is 1.0 when nothing passes the
    threshold, recall is 1.0 when there is no ground truth.
    """
    passed = [d for d in dets if d.confidence >= conf_threshold]
    result = match_greedy(gt_centers, passed, hit_radius)
    precision = 1.0 if not passed else result.tp / (result.tp + result.fp)
    recall = 1.0 if not gt_centers else result.tp / len(gt_centers)
    return precision, recall


def pooled_precision_recall(
    per_image: list[tuple[list[tuple[float, float]], list[Detection]]],
    hit_radius: float = DEFAULT_HIT_RADIUS,
    conf_threshold: float = 0.0,
) -> tuple[float, float]:
    """precision_recall with TP/FP/FN counts pooled across images."""
    tp = fp = n_gt = n_det = 0
    for gt_centers, dets in per_image:
        passed = [d for d in dets if d.confidence >= conf_threshold]
        result = match_greedy(gt_centers, passed, hit_radius)
        tp += result.tp
        fp += result.fp
        n_gt += len(gt_centers)
        n_det += len(passed)
    precision = 1.0 if n_det == 0 else tp / (tp + fp)
    recall = 1.0 if n_gt == 0 else tp / n_gt
    return precision, recall


def area_mm2(width_px: int, height_px: int, mpp: float = DEFAULT_MPP) -> float:
    """Patch area in mm^2 given its micron-per-pixel scale."""
    if mpp <= 0:
        raise ConfigError(f"mpp must be positive, got {mpp}")
    return width_px * height_px * (mpp / 1000.0) ** 2


def curve_csv(curve: FrocCurve) -> str:
    lines = ["threshold,fp_per_mm2,sensitivity\n"]
    for threshold, (fp_rate, sens) in zip(curve.thresholds, curve.points):
        lines.append(f"{threshold:.6f},{fp_rate:.6f},{sens:.6f}\n")
    return "".join(lines)
