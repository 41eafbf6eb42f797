"""Perceptibility metrics for perturbed images and budget enforcement."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .shortcuts import ShortcutSpec, hue_rgb_bound
from .validation import check_image_f, check_same_shape

# Peak for PSNR on the [0,1] working scale: 256 8-bit quantization levels.
# Makes the closed-form reference values exact (uniform 4/255 delta ->
# 20*log10(64) = 36.1236 dB).
PSNR_PEAK = 256.0 / 255.0

# One 8-bit LSB of slack on top of every budget for quantization rounding.
QUANT_ALLOWANCE = 1.0 / 255.0


@dataclass(frozen=True)
class PerceptibilityReport:
    linf: float
    l2: float
    mad: float
    psnr_db: float

    def to_json_dict(self) -> dict:
        return {
            "linf": self.linf,
            "l2": self.l2,
            "mad": self.mad,
            "psnr_db": None if math.isinf(self.psnr_db) else self.psnr_db,
        }


def compare(a: np.ndarray, b: np.ndarray) -> PerceptibilityReport:
    """Pixel-space visibility metrics between two same-shape [0,1] images.

    l2 is the per-pixel RMSE; psnr_db = 20*log10(PEAK / l2), +inf for
    identical images.
    """
    a = check_image_f(a)
    b = check_image_f(b)
    check_same_shape(a, b)
    d = a - b
    linf = float(np.max(np.abs(d)))
    mad = float(np.mean(np.abs(d)))
    l2 = float(np.sqrt(np.mean(d * d)))
    psnr = float("inf") if l2 == 0.0 else 20.0 * math.log10(PSNR_PEAK / l2)
    return PerceptibilityReport(linf=linf, l2=l2, mad=mad, psnr_db=psnr)


@dataclass(frozen=True)
class BudgetCheck:
    passed: bool
    bound: float
    reasons: tuple


def budget_bound(spec: ShortcutSpec, code=None, capacity=None) -> float:
    """Spec-derived L-inf bound for one image (before quantization slack)."""
    if spec.epsilon == 0.0:
        return 0.0
    if spec.kind == "sensor":
        return spec.epsilon
    if spec.kind == "dust":
        return spec.opacity
    if spec.kind == "lens":
        return spec.max_darkening
    # hue: bounded in hue angle; derive the RGB bound from the rotation actually
    # applied if the code is known, else from the worst code
    if spec.degrees_per_code is not None:
        step = abs(spec.degrees_per_code)
    elif capacity:
        step = 360.0 / capacity
    else:
        return 1.0
    if code is not None:
        return hue_rgb_bound(step * code)
    if capacity:
        return hue_rgb_bound(step * (capacity - 1))
    return 1.0


def check_budget(
    report: PerceptibilityReport,
    spec: ShortcutSpec,
    code=None,
    capacity=None,
) -> BudgetCheck:
    """Pass iff measured linf fits the kind's bound plus one LSB of slack."""
    bound = budget_bound(spec, code=code, capacity=capacity)
    limit = bound + QUANT_ALLOWANCE + 1e-12
    if report.linf <= limit:
        return BudgetCheck(passed=True, bound=bound, reasons=())
    return BudgetCheck(
        passed=False,
        bound=bound,
        reasons=(
            f"linf {report.linf:.6f} exceeds budget {bound:.6f} "
            f"(+{QUANT_ALLOWANCE:.6f} quantization allowance)",
        ),
    )
