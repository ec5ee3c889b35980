import cv2
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from utils.io_utils import to_uint8

# per pyramid level, RGB
LEVEL_COLORS = ((255, 64, 64), (64, 200, 64), (64, 128, 255))


def draw_sample_overlay(img, level_points, vp=None):
    """Draw each level's sampling trapezoid and points onto a copy of img.

    level_points: (L, 9, 2) points in full-image pixels, rows ordered
    o_l, o_r, o_t, o_b, o_tl, o_tr, o_bl, o_br, r.
    Returns an (H, W, 3) float image in [0, 1] with the input's dims.
    """
    canvas = to_uint8(img)
    if canvas.ndim == 2:
        canvas = canvas[..., None]
    if canvas.shape[2] == 1:
        canvas = np.repeat(canvas, 3, axis=2)
    canvas = np.ascontiguousarray(canvas)

    for level, pts in enumerate(np.asarray(level_points, dtype=np.float64)):
        color = LEVEL_COLORS[level % len(LEVEL_COLORS)]
        trapezoid = np.round(pts[[4, 5, 7, 6]]).astype(np.int32)
        cv2.polylines(canvas, [trapezoid.reshape(-1, 1, 2)], isClosed=True, color=color, thickness=1)
        for x, y in np.round(pts).astype(np.int32):
            cv2.circle(canvas, (int(x), int(y)), 2, color, -1)
    if vp is not None:
        cv2.drawMarker(canvas, (int(round(vp[0])), int(round(vp[1]))), (255, 255, 0), cv2.MARKER_CROSS, 9, 1)
    return canvas.astype(np.float64) / 255.0


def plot_density_report(report, output_path, title="pixel density per depth band"):
    labels = [f"{r.lo:g}-{r.hi:g} m" for r in report.rows]
    x = np.arange(len(labels))
    orig = [r.count_orig for r in report.rows]
    zoom = [r.count_zoom for r in report.rows]

    plt.figure(figsize=(6, 4), dpi=100)
    plt.bar(x - 0.2, orig, width=0.4, color="gray", edgecolor="black", label="original")
    plt.bar(x + 0.2, zoom, width=0.4, color="tab:blue", edgecolor="black", label="zoom")
    for xi, r in zip(x, report.rows):
        plt.text(xi, max(r.count_orig, r.count_zoom), f"x{r.ratio:.2f}", ha="center", va="bottom")
    plt.xticks(x, labels)
    plt.ylabel("valid pixels")
    plt.title(title)
    plt.legend()
    plt.tight_layout()
    plt.savefig(output_path)
    plt.close()
