"""Box arithmetic and view transforms shared by every other module.

Boxes are corner-form ``(x1, y1, x2, y2)`` float arrays in continuous pixel
coordinates of a stated frame, with ``x2 > x1`` and ``y2 > y1``. Detections
add a class id column and a confidence score. All functions here are pure.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels


class BoxValidationError(ValueError):
    """A box violates the corner-form invariants (finite, positive area)."""


def as_boxes(boxes) -> np.ndarray:
    """Coerce to an (N,4) float64 array without validating."""
    arr = np.asarray(boxes, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 4)
    if arr.ndim == 1:
        arr = arr.reshape(1, 4)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise BoxValidationError(f"expected (N,4) boxes, got shape {arr.shape}")
    return arr


def validate_boxes(boxes: np.ndarray) -> np.ndarray:
    """Check corner-form invariants; raises BoxValidationError on violation."""
    boxes = as_boxes(boxes)
    if not np.all(np.isfinite(boxes)):
        raise BoxValidationError("boxes contain non-finite coordinates")
    bad = (boxes[:, 2] <= boxes[:, 0]) | (boxes[:, 3] <= boxes[:, 1])
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise BoxValidationError(
            f"box {idx} has zero or negative extent: {boxes[idx].tolist()}")
    return boxes


def box_areas(boxes: np.ndarray) -> np.ndarray:
    boxes = as_boxes(boxes)
    return (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise IoU in [0,1] between two collections of valid boxes."""
    a = validate_boxes(a)
    b = validate_boxes(b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]))
    return kernels.pairwise_iou(a, b)


def nms(boxes, scores, iou_threshold: float) -> np.ndarray:
    """Greedy non-maximum suppression.

    Keeps the highest-scoring box, suppresses boxes with IoU strictly above
    the threshold, repeats. Returns kept indices sorted by descending score;
    equal scores keep the lower input index first.
    """
    boxes = validate_boxes(boxes)
    scores = np.asarray(scores, dtype=np.float64)
    if boxes.shape[0] != scores.shape[0]:
        raise ValueError("boxes and scores length mismatch")
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold {iou_threshold} outside [0,1]")
    if boxes.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return kernels.nms_keep(boxes, scores, float(iou_threshold))


def scale_bucket(box, small_max: float, large_min: float) -> str:
    """Bucket one box into small/medium/large by sqrt(area).

    Boundaries are inclusive on the lower bucket: sqrt(area) == small_max is
    small, sqrt(area) == large_min is medium.
    """
    if small_max <= 0 or large_min <= 0 or small_max >= large_min:
        raise ValueError("need 0 < small_max < large_min")
    box = validate_boxes(box)[0]
    side = np.sqrt((box[2] - box[0]) * (box[3] - box[1]))
    if side <= small_max:
        return "small"
    if side <= large_min:
        return "medium"
    return "large"


def scale_buckets(boxes, small_max: float, large_min: float) -> np.ndarray:
    """Vectorized scale_bucket: returns an (N,) array of bucket name strings."""
    boxes = as_boxes(boxes)
    side = np.sqrt(np.clip(box_areas(boxes), 0, None))
    out = np.where(side <= small_max, "small",
                   np.where(side <= large_min, "medium", "large"))
    return out.astype(object)


@dataclass(frozen=True)
class AffineView:
    """An invertible 2x3 affine map between two image frames.

    Maps continuous (x, y) coordinates of the source frame into the target
    frame; horizontal flips are folded into the matrix. Frame sizes are
    (height, width) tuples.
    """

    matrix: np.ndarray
    src_size: tuple
    dst_size: tuple

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"affine matrix must be 2x3, got {m.shape}")
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if not np.isfinite(det) or abs(det) < 1e-12:
            raise ValueError("affine matrix is not invertible")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "src_size", tuple(int(v) for v in self.src_size))
        object.__setattr__(self, "dst_size", tuple(int(v) for v in self.dst_size))

    @classmethod
    def identity(cls, size) -> "AffineView":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), size, size)

    @classmethod
    def from_scale_offset(cls, src_size, dst_size, scale_x, scale_y,
                          tx=0.0, ty=0.0, hflip=False) -> "AffineView":
        """Scale-then-translate view; hflip mirrors x in the target frame."""
        m = np.array([[scale_x, 0.0, tx], [0.0, scale_y, ty]])
        if hflip:
            w = dst_size[1]
            m[0] = -m[0]
            m[0, 2] += w
        return cls(m, src_size, dst_size)

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.matrix[:, :2].T + self.matrix[:, 2]

    def inverse(self) -> "AffineView":
        a = self.matrix[:, :2]
        t = self.matrix[:, 2]
        ainv = np.linalg.inv(a)
        m = np.concatenate([ainv, (-ainv @ t)[:, None]], axis=1)
        return AffineView(m, self.dst_size, self.src_size)

    def compose(self, other: "AffineView") -> "AffineView":
        """View applying `self` first, then `other` (other ∘ self)."""
        a = other.matrix[:, :2] @ self.matrix[:, :2]
        t = other.matrix[:, :2] @ self.matrix[:, 2] + other.matrix[:, 2]
        return AffineView(np.concatenate([a, t[:, None]], axis=1),
                          self.src_size, other.dst_size)


def transform_boxes(boxes, view: AffineView, clip: bool = True):
    """Map boxes through a view into its target frame.

    The four corners of each box are mapped and re-boxed to their
    axis-aligned bound, then clipped to the target frame. Boxes that clip
    to zero area are dropped. Returns (boxes, kept_indices).
    """
    boxes = validate_boxes(boxes)
    n = boxes.shape[0]
    if n == 0:
        return boxes, np.zeros(0, dtype=np.int64)
    corners = np.stack([
        boxes[:, [0, 1]], boxes[:, [2, 1]], boxes[:, [0, 3]], boxes[:, [2, 3]],
    ], axis=1)
    mapped = view.apply_points(corners.reshape(-1, 2)).reshape(n, 4, 2)
    out = np.concatenate([mapped.min(axis=1), mapped.max(axis=1)], axis=1)
    if clip:
        h, w = view.dst_size
        out[:, 0] = np.clip(out[:, 0], 0, w)
        out[:, 2] = np.clip(out[:, 2], 0, w)
        out[:, 1] = np.clip(out[:, 1], 0, h)
        out[:, 3] = np.clip(out[:, 3], 0, h)
    kept = np.flatnonzero((out[:, 2] - out[:, 0] > 1e-9)
                          & (out[:, 3] - out[:, 1] > 1e-9))
    return out[kept], kept


def clip_boxes(boxes, frame_size) -> np.ndarray:
    """Clip boxes to a (height, width) frame without dropping any."""
    boxes = as_boxes(boxes).copy()
    h, w = frame_size
    boxes[:, 0::2] = np.clip(boxes[:, 0::2], 0, w)
    boxes[:, 1::2] = np.clip(boxes[:, 1::2], 0, h)
    return boxes
