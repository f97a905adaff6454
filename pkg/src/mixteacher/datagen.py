"""Synthetic shape-detection dataset: generation, storage, augmentation.

Scenes are float32 RGB canvases in [0,1] with 1-6 filled shapes whose class
is the shape type. Object side lengths are log-uniform over a configurable
fraction of the image side, which is what produces the wide scale spread
the detector has to cope with. Everything is reproducible: each image is
rendered from a generator seeded by (dataset seed, image index).

Directory layout::

    root/manifest              JSON, format_version 1
    root/images/<id>.arr       MTARR float32 (H,W,3)
    root/annotations/<id>.txt  one "class x1 y1 x2 y2" line per box

Ground truth for unlabeled images is written to the annotations directory
but referenced only from the manifest's ``heldout_annotations`` section;
training loaders never touch it (the evaluation module reads it).
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import arrayio
from .geometry import AffineView, transform_boxes
from .kernels import bilinear_resize

MANIFEST_VERSION = 1
CLASS_NAMES = ("circle", "square", "triangle", "diamond", "cross", "ring")


class DatasetError(Exception):
    """Base class for dataset load failures."""


class ManifestVersionError(DatasetError):
    pass


class MissingFileError(DatasetError):
    pass


class ImageChecksumError(DatasetError):
    pass


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    image_file: str
    labeled: bool
    annotation_file: str | None


@dataclass
class DatasetManifest:
    root: str
    image_size: int
    num_classes: int
    class_names: tuple
    seed: int
    records: list = field(default_factory=list)
    val_records: list = field(default_factory=list)
    heldout_annotations: dict = field(default_factory=dict)

    @property
    def num_labeled(self):
        return sum(1 for r in self.records if r.labeled)

    @property
    def num_unlabeled(self):
        return sum(1 for r in self.records if not r.labeled)

    def labeled_records(self):
        return [r for r in self.records if r.labeled]

    def unlabeled_records(self):
        return [r for r in self.records if not r.labeled]


# -- rendering --------------------------------------------------------------


def _pick_color(rng) -> np.ndarray:
    lo = rng.uniform(0.0, 0.3, 3)
    hi = rng.uniform(0.7, 1.0, 3)
    take_hi = rng.random(3) < 0.5
    if not take_hi.any():
        take_hi[rng.integers(3)] = True
    return np.where(take_hi, hi, lo).astype(np.float32)


def _shape_alpha(shape: str, side: float, rng) -> np.ndarray:
    """Anti-aliased coverage mask on a ceil(side)+1 square patch."""
    n = int(np.ceil(side)) + 1
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    # pixel centers relative to the patch-local box [0, side]^2
    cx = cy = side / 2.0
    dx = xx + 0.5 - cx
    dy = yy + 0.5 - cy
    h = side / 2.0
    if shape == "circle":
        d = h - np.hypot(dx, dy)
    elif shape == "square":
        d = h - np.maximum(np.abs(dx), np.abs(dy))
    elif shape == "triangle":
        d = _triangle_dist(dx, dy, h)
    elif shape == "diamond":
        d = (h - (np.abs(dx) + np.abs(dy))) / np.sqrt(2.0)
    elif shape == "cross":
        arm = h / 3.0
        band_x = np.minimum(arm - np.abs(dx), h - np.abs(dy))
        band_y = np.minimum(arm - np.abs(dy), h - np.abs(dx))
        d = np.maximum(band_x, band_y)
    elif shape == "ring":
        r = np.hypot(dx, dy)
        d = np.minimum(h - r, r - h * 0.55)
    else:
        raise ValueError(f"unknown shape {shape!r}")
    return np.clip(d + 0.5, 0.0, 1.0).astype(np.float32)


def _triangle_dist(dx, dy, h):
    """Signed distance to an apex-up triangle inscribed in a side-2h box."""
    # vertices: (0,-h), (-h,h), (h,h)
    bottom = h - dy
    # right edge (0,-h)->(h,h): inward normal (-2,1)/sqrt(5)
    right = (-2.0 * dx + (dy + h)) / np.sqrt(5.0)
    # left edge (0,-h)->(-h,h): inward normal (2,1)/sqrt(5)
    left = (2.0 * dx + (dy + h)) / np.sqrt(5.0)
    return np.minimum(bottom, np.minimum(left, right))


def render_scene(image_size: int, num_classes: int, scale_spread: tuple,
                 rng) -> tuple:
    """Render one scene; returns (pixels, boxes, classes)."""
    s = image_size
    base = rng.uniform(0.3, 0.55)
    coarse = rng.standard_normal((s // 8, s // 8, 1)).astype(np.float32)
    coarse = bilinear_resize(coarse.transpose(2, 0, 1)[None], s, s)[0, 0]
    img = np.empty((s, s, 3), dtype=np.float32)
    img[:] = (base + 0.06 * coarse)[..., None]
    img += rng.normal(0.0, 0.02, (s, s, 3)).astype(np.float32)

    lo, hi = scale_spread[0] * s, scale_spread[1] * s
    n_obj = int(rng.integers(1, 7))
    boxes = []
    classes = []
    for _ in range(n_obj):
        side = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        cls = int(rng.integers(num_classes))
        placed = False
        for _attempt in range(20):
            x1 = rng.uniform(0.0, s - side)
            y1 = rng.uniform(0.0, s - side)
            cand = np.array([x1, y1, x1 + side, y1 + side])
            ok = True
            for b in boxes:
                ix = min(cand[2], b[2]) - max(cand[0], b[0])
                iy = min(cand[3], b[3]) - max(cand[1], b[1])
                if ix > 0 and iy > 0:
                    inter = ix * iy
                    union = side * side + (b[2] - b[0]) * (b[3] - b[1]) - inter
                    if inter / union > 0.3:
                        ok = False
                        break
            if ok:
                placed = True
                break
        if not placed:
            continue
        alpha = _shape_alpha(CLASS_NAMES[cls], side, rng)
        color = _pick_color(rng)
        ix1, iy1 = int(np.floor(x1)), int(np.floor(y1))
        patch_h = min(alpha.shape[0], s - iy1)
        patch_w = min(alpha.shape[1], s - ix1)
        a = alpha[:patch_h, :patch_w, None]
        region = img[iy1:iy1 + patch_h, ix1:ix1 + patch_w]
        region[:] = region * (1 - a) + color[None, None, :] * a
        boxes.append([ix1 + (x1 - ix1), iy1 + (y1 - iy1),
                      x1 + side, y1 + side])
        classes.append(cls)
    np.clip(img, 0.0, 1.0, out=img)
    if boxes:
        return img, np.asarray(boxes, dtype=np.float64), np.asarray(classes, dtype=np.int64)
    return img, np.zeros((0, 4)), np.zeros(0, dtype=np.int64)


# -- generation / storage ----------------------------------------------------


def _image_rng(seed: int, index: int):
    return np.random.default_rng(np.random.SeedSequence((seed, 0x1A, index)))


def generate_dataset(root, num_images: int, image_size: int = 128,
                     num_classes: int = 3, scale_spread=(0.06, 0.6),
                     label_ratio: float = 0.1, seed: int = 0,
                     num_val: int = 200) -> DatasetManifest:
    """Render a full dataset to `root` and return its manifest.

    Regular records split into labeled/unlabeled at `label_ratio`; an extra
    `num_val` annotated images form a held-out validation split.
    """
    if image_size % 32 != 0:
        raise ValueError(f"image_size {image_size} not divisible by 32")
    if not 0.0 < label_ratio <= 1.0:
        raise ValueError(f"label_ratio {label_ratio} outside (0, 1]")
    if not 2 <= num_classes <= len(CLASS_NAMES):
        raise ValueError(f"num_classes must be in [2, {len(CLASS_NAMES)}]")
    if scale_spread[0] <= 0 or scale_spread[0] >= scale_spread[1]:
        raise ValueError(f"bad scale_spread {scale_spread}")

    os.makedirs(os.path.join(root, "images"), exist_ok=True)
    os.makedirs(os.path.join(root, "annotations"), exist_ok=True)

    n_labeled = max(1, int(round(num_images * label_ratio)))
    split_rng = np.random.default_rng(np.random.SeedSequence((seed, 0x2B)))
    labeled_idx = set(split_rng.permutation(num_images)[:n_labeled].tolist())

    manifest = DatasetManifest(
        root=str(root), image_size=image_size, num_classes=num_classes,
        class_names=CLASS_NAMES[:num_classes], seed=seed)

    total = num_images + num_val
    for index in range(total):
        image_id = f"{index:05d}"
        rng = _image_rng(seed, index)
        img, boxes, classes = render_scene(image_size, num_classes,
                                           scale_spread, rng)
        image_file = f"images/{image_id}.arr"
        ann_file = f"annotations/{image_id}.txt"
        arrayio.save_array_file(os.path.join(root, image_file), img)
        _write_annotation(os.path.join(root, ann_file), boxes, classes)
        if index >= num_images:
            manifest.val_records.append(
                ImageRecord(image_id, image_file, True, ann_file))
        elif index in labeled_idx:
            manifest.records.append(
                ImageRecord(image_id, image_file, True, ann_file))
        else:
            manifest.records.append(
                ImageRecord(image_id, image_file, False, None))
            manifest.heldout_annotations[image_id] = ann_file
    save_dataset(manifest)
    return manifest


def _write_annotation(path, boxes, classes) -> None:
    lines = []
    for box, cls in zip(boxes, classes):
        lines.append(f"{int(cls)} {box[0]!r} {box[1]!r} {box[2]!r} {box[3]!r}")
    with open(path, "w", encoding="utf-8") as fp:
        fp.write("\n".join(lines) + ("\n" if lines else ""))


def read_annotation(path) -> tuple:
    boxes = []
    classes = []
    with open(path, encoding="utf-8") as fp:
        for line in fp:
            parts = line.split()
            if not parts:
                continue
            classes.append(int(parts[0]))
            boxes.append([float(v) for v in parts[1:5]])
    if boxes:
        return np.asarray(boxes, dtype=np.float64), np.asarray(classes, dtype=np.int64)
    return np.zeros((0, 4)), np.zeros(0, dtype=np.int64)


def save_dataset(manifest: DatasetManifest) -> None:
    """Serialize the manifest document under its root."""
    doc = {
        "format_version": MANIFEST_VERSION,
        "image_size": manifest.image_size,
        "num_classes": manifest.num_classes,
        "class_names": list(manifest.class_names),
        "seed": manifest.seed,
        "counts": {
            "labeled": manifest.num_labeled,
            "unlabeled": manifest.num_unlabeled,
            "val": len(manifest.val_records),
        },
        "records": [
            {"id": r.image_id, "image": r.image_file, "labeled": r.labeled,
             "annotation": r.annotation_file}
            for r in manifest.records
        ],
        "val_records": [
            {"id": r.image_id, "image": r.image_file,
             "annotation": r.annotation_file}
            for r in manifest.val_records
        ],
        "heldout_annotations": dict(sorted(manifest.heldout_annotations.items())),
    }
    with open(os.path.join(manifest.root, "manifest"), "w",
              encoding="utf-8") as fp:
        json.dump(doc, fp, indent=1)
        fp.write("\n")


def load_dataset(root) -> DatasetManifest:
    """Load and validate a dataset manifest; checks all referenced files."""
    path = os.path.join(root, "manifest")
    if not os.path.exists(path):
        raise MissingFileError(f"no manifest under {root}")
    with open(path, encoding="utf-8") as fp:
        doc = json.load(fp)
    version = doc.get("format_version")
    if version != MANIFEST_VERSION:
        raise ManifestVersionError(
            f"manifest format_version {version!r}, supported {MANIFEST_VERSION}")
    manifest = DatasetManifest(
        root=str(root), image_size=doc["image_size"],
        num_classes=doc["num_classes"], class_names=tuple(doc["class_names"]),
        seed=doc["seed"])
    for rec in doc["records"]:
        manifest.records.append(ImageRecord(
            rec["id"], rec["image"], rec["labeled"], rec["annotation"]))
    for rec in doc["val_records"]:
        manifest.val_records.append(ImageRecord(
            rec["id"], rec["image"], True, rec["annotation"]))
    manifest.heldout_annotations = dict(doc["heldout_annotations"])
    expect = doc["counts"]
    if (expect["labeled"] != manifest.num_labeled
            or expect["unlabeled"] != manifest.num_unlabeled):
        raise DatasetError("manifest counts disagree with records")
    missing = []
    for rec in list(manifest.records) + list(manifest.val_records):
        for ref in (rec.image_file, rec.annotation_file):
            if ref and not os.path.exists(os.path.join(root, ref)):
                missing.append(ref)
    for ref in manifest.heldout_annotations.values():
        if not os.path.exists(os.path.join(root, ref)):
            missing.append(ref)
    if missing:
        raise MissingFileError(f"missing dataset files: {missing}")
    return manifest


def load_image(manifest: DatasetManifest, record: ImageRecord) -> np.ndarray:
    try:
        return arrayio.load_array_file(
            os.path.join(manifest.root, record.image_file))
    except arrayio.ChecksumError as exc:
        raise ImageChecksumError(
            f"image {record.image_id}: {exc}") from exc


def load_record_annotation(manifest: DatasetManifest,
                           record: ImageRecord) -> tuple:
    if record.annotation_file is None:
        raise DatasetError(
            f"record {record.image_id} is unlabeled; ground truth is "
            "held out for evaluation only")
    return read_annotation(os.path.join(manifest.root, record.annotation_file))


# -- augmentation -------------------------------------------------------------


@dataclass
class AugmentedSample:
    image: np.ndarray
    view: AffineView
    photometric_ops: list
    annotation: tuple | None = None


def _resize_hwc(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    chw = np.ascontiguousarray(img.transpose(2, 0, 1))[None]
    return bilinear_resize(chw, out_h, out_w)[0].transpose(1, 2, 0)


def _geometric(image: np.ndarray, rng, jitter, flip_p):
    s = image.shape[0]
    factor = float(rng.uniform(*jitter))
    flip = bool(rng.random() < flip_p)
    r = max(8, int(round(s * factor)))
    scale = r / s
    resized = _resize_hwc(image, r, r) if r != s else image
    canvas = np.zeros_like(image)
    if r <= s:
        off = (s - r) // 2
        canvas[off:off + r, off:off + r] = resized
        t = float(off)
    else:
        off = (r - s) // 2
        canvas[:] = resized[off:off + s, off:off + s]
        t = float(-off)
    if flip:
        canvas = canvas[:, ::-1].copy()
    view = AffineView.from_scale_offset((s, s), (s, s), scale, scale,
                                        tx=t, ty=t, hflip=flip)
    return np.ascontiguousarray(canvas), view


def weak_augment(image: np.ndarray, annotation=None, rng=None, *,
                 jitter=(0.5, 1.5), flip_p=0.5) -> AugmentedSample:
    """Geometric-only augmentation: scale jitter to canonical size + flip."""
    canvas, view = _geometric(image, rng, jitter, flip_p)
    ann = None
    if annotation is not None:
        boxes, classes = annotation
        new_boxes, kept = transform_boxes(boxes, view)
        ann = (new_boxes, np.asarray(classes)[kept])
    return AugmentedSample(canvas, view, [], ann)


def strong_augment(image: np.ndarray, rng=None, *, jitter=(0.5, 1.5),
                   flip_p=0.5, photo_p=0.25, cutout_p=1.0) -> AugmentedSample:
    """Weak geometry plus brightness/contrast jitter and cutout holes.

    Photometric ops never touch the recorded view.
    """
    canvas, view = _geometric(image, rng, jitter, flip_p)
    ops = []
    s = canvas.shape[0]
    if rng.random() < photo_p:
        ratio = float(rng.uniform(0.0, 1.0))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        factor = 1.0 + 0.6 * sign * ratio
        canvas = np.clip(canvas * factor, 0.0, 1.0)
        ops.append({"op": "brightness", "factor": factor})
    if rng.random() < photo_p:
        ratio = float(rng.uniform(0.0, 1.0))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        factor = 1.0 + 0.6 * sign * ratio
        mean = canvas.mean()
        canvas = np.clip(mean + (canvas - mean) * factor, 0.0, 1.0)
        ops.append({"op": "contrast", "factor": factor})
    if rng.random() < cutout_p:
        holes = int(rng.integers(1, 6))
        for _ in range(holes):
            hw = int(round(s * rng.uniform(0.05, 0.2)))
            hh = int(round(s * rng.uniform(0.05, 0.2)))
            x1 = int(rng.integers(0, max(1, s - hw)))
            y1 = int(rng.integers(0, max(1, s - hh)))
            canvas = canvas.copy() if canvas.base is not None else canvas
            canvas[y1:y1 + hh, x1:x1 + hw] = 0.5
            ops.append({"op": "cutout", "x1": x1, "y1": y1,
                        "x2": x1 + hw, "y2": y1 + hh})
    return AugmentedSample(np.ascontiguousarray(canvas, dtype=np.float32),
                           view, ops, None)
