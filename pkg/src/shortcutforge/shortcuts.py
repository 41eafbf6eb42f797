"""Class-coded shortcut perturbations: dust, hue, lens, sensor.

Each kind plants a deterministic, label-derived artifact that mimics a data
collection error: dark specks (dust on the optics), a global hue shift
(ambient light), a radial vignette (lens impairment), and a low-amplitude
blockwise color pattern (sensor error). A perturbation is a pure function of
(image, class code, codebook seed, spec), so protected datasets are
byte-reproducible.

The sensor pattern lives on a fixed virtual grid of (32 // cell_px)**2 cells
over the unit square; cell_px is the block size in pixels at the 32-px
reference resolution, and images of any size sample the same grid by relative
position. A crawler that rescales the images therefore still sees one
consistent pattern per class code.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .codebook import MASK64, AttributeCodebook, key_uniform
from .errors import ShortcutForgeError, SpecError
from .validation import check_batch, check_image_f, check_same_shape

KINDS = ("dust", "hue", "lens", "sensor")

# Below 2/255 a signed pattern is not reliably recoverable after 8-bit
# quantization of arbitrary backgrounds.
SENSOR_EPSILON_FLOOR = 2.0 / 255.0

# Reference resolution at which sensor cells are exactly cell_px pixels.
VIRTUAL_CANVAS = 32

# Adjacent hue codes closer than this are not usefully distinct.
MIN_HUE_STEP_DEG = 5.0

_GOLDEN = 0x9E3779B97F4A7C15
_MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = np.uint64(0x94D049BB133111EB)


def _key_stream_array(key: int, n: int) -> np.ndarray:
    """Vectorized SplitMix64 stream: words 0..n-1 for `key` as uint64."""
    x = (np.uint64(key & MASK64) + np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GOLDEN))
    x ^= x >> np.uint64(30)
    x *= _MIX_1
    x ^= x >> np.uint64(27)
    x *= _MIX_2
    x ^= x >> np.uint64(31)
    return x


@dataclass(frozen=True)
class ShortcutSpec:
    """Everything that determines a perturbation besides the image and code.

    epsilon is the additive amplitude for the sensor kind and doubles as a
    global off switch: epsilon == 0 means identity for every kind. The other
    kinds carry their own amplitude parameters (opacity, degrees_per_code,
    max_darkening).
    """

    kind: str
    epsilon: float = 4.0 / 255.0
    seed: int = 0
    # sensor
    cell_px: int = 4
    channel_coupled: bool = False
    # hue; None = 360/capacity, resolved when the codebook is known
    degrees_per_code: float | None = None
    # lens
    falloff_exponent: float = 2.0
    max_darkening: float = 0.15
    # dust
    speck_count: int = 12
    radius_px: float = 2.0
    opacity: float = 0.25

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown shortcut kind {self.kind!r}")
        if not 0.0 <= self.epsilon <= 0.5:
            raise SpecError(f"epsilon {self.epsilon} outside [0, 0.5]")
        if self.kind == "sensor" and 0.0 < self.epsilon < SENSOR_EPSILON_FLOOR - 1e-12:
            raise SpecError(
                f"sensor epsilon {self.epsilon:.6f} below the quantization-survival "
                f"floor 2/255 ({SENSOR_EPSILON_FLOOR:.6f}); the pattern would not "
                f"survive 8-bit storage"
            )
        if not 1 <= int(self.cell_px) <= VIRTUAL_CANVAS:
            raise SpecError(f"cell_px must be in [1, {VIRTUAL_CANVAS}]")
        if self.radius_px < 1.0:
            raise SpecError("dust radius_px must be >= 1 pixel")
        if self.speck_count < 0:
            raise SpecError("speck_count must be >= 0")
        if not 0.0 <= self.opacity <= 1.0:
            raise SpecError("dust opacity must be in [0, 1]")
        if not 0.0 <= self.max_darkening <= 1.0:
            raise SpecError("lens max_darkening must be in [0, 1]")
        if self.falloff_exponent <= 0.0:
            raise SpecError("lens falloff_exponent must be > 0")
        if not (0 <= int(self.seed) <= MASK64):
            raise SpecError("seed must fit in 64 bits")

    def resolve_hue_step(self, capacity: int) -> float:
        """Degrees per code, defaulting to 360/capacity under both hue invariants."""
        if self.degrees_per_code is None:
            step = 360.0 / capacity
            if step < MIN_HUE_STEP_DEG:
                raise SpecError(
                    f"capacity {capacity} leaves adjacent hue codes "
                    f"{step:.2f} deg apart (< {MIN_HUE_STEP_DEG} deg); pass an "
                    f"explicit degrees_per_code to override"
                )
        else:
            step = float(self.degrees_per_code)
        if abs(step) * capacity > 360.0 + 1e-9:
            raise SpecError(
                f"|degrees_per_code| * capacity = {abs(step) * capacity:.1f} exceeds 360"
            )
        return step

    def to_json_dict(self) -> dict:
        params = {
            "dust": {
                "speck_count": self.speck_count,
                "radius_px": self.radius_px,
                "opacity": self.opacity,
            },
            "hue": {"degrees_per_code": self.degrees_per_code},
            "lens": {
                "falloff_exponent": self.falloff_exponent,
                "max_darkening": self.max_darkening,
            },
            "sensor": {
                "cell_px": self.cell_px,
                "channel_coupled": self.channel_coupled,
            },
        }[self.kind]
        return {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "seed": int(self.seed),
            "params": params,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ShortcutSpec":
        return cls(
            kind=obj["kind"],
            epsilon=obj["epsilon"],
            seed=obj.get("seed", 0),
            **obj.get("params", {}),
        )


# ---------------------------------------------------------------------------
# sensor


def sensor_grid_cells(cell_px: int) -> int:
    return max(1, VIRTUAL_CANVAS // int(cell_px))


def gen_sensor_pattern(key: int, h: int, w: int, c: int, spec: ShortcutSpec) -> np.ndarray:
    """Keyed +/-epsilon blockwise field of shape (h, w, c).

    Cell signs come from the SplitMix64 stream of `key`, one bit per cell (per
    channel unless channel_coupled), laid out row-major over the virtual grid;
    pixels sample cells by relative position (nearest).
    """
    if spec.kind != "sensor":
        raise SpecError(f"spec kind is {spec.kind!r}, not sensor")
    if spec.epsilon < SENSOR_EPSILON_FLOOR - 1e-12:
        raise SpecError("sensor epsilon below the 2/255 quantization floor")
    if c not in (1, 3):
        raise SpecError(f"channels must be 1 or 3, got {c}")
    v = sensor_grid_cells(spec.cell_px)
    if h < v or w < v:
        raise SpecError(
            f"image {h}x{w} smaller than one pattern cell "
            f"({v}x{v} grid needs >= 1 px per cell)"
        )
    c_eff = 1 if spec.channel_coupled else c
    words = _key_stream_array(key, v * v * c_eff).reshape(v, v, c_eff)
    signs = np.where(words >> np.uint64(63) == 1, 1.0, -1.0)
    if spec.channel_coupled:
        signs = np.broadcast_to(signs, (v, v, c))
    cells = signs * spec.epsilon
    iy = (np.arange(h) * v) // h
    ix = (np.arange(w) * v) // w
    return np.ascontiguousarray(cells[iy][:, ix])


def apply_sensor(img: np.ndarray, field: np.ndarray) -> np.ndarray:
    img = check_image_f(img)
    field = np.asarray(field, dtype=np.float64)
    check_same_shape(img, field)
    return np.clip(img + field, 0.0, 1.0)


# ---------------------------------------------------------------------------
# hue


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Vectorized float RGB [0,1] -> HSV with h in [0,1)."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    delta = maxc - minc
    safe = np.where(delta == 0, 1.0, delta)
    h = np.select(
        [delta == 0, maxc == r, maxc == g],
        [0.0, ((g - b) / safe) % 6.0, (b - r) / safe + 2.0],
        default=(r - g) / safe + 4.0,
    ) / 6.0
    s = np.where(maxc == 0, 0.0, delta / np.where(maxc == 0, 1.0, maxc))
    return np.stack([h, s, maxc], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def rotate_hue(img: np.ndarray, degrees: float) -> np.ndarray:
    hsv = rgb_to_hsv(img)
    hsv[..., 0] = (hsv[..., 0] + degrees / 360.0) % 1.0
    return np.clip(hsv_to_rgb(hsv), 0.0, 1.0)


def apply_hue(img: np.ndarray, code: int, spec: ShortcutSpec, capacity: int | None = None) -> np.ndarray:
    img = check_image_f(img)
    if spec.kind != "hue":
        raise SpecError(f"spec kind is {spec.kind!r}, not hue")
    if img.shape[2] != 3:
        raise ShortcutForgeError("hue shortcut needs a 3-channel image")
    if spec.degrees_per_code is None and capacity is None:
        raise SpecError("degrees_per_code unset and no capacity to derive it from")
    step = spec.resolve_hue_step(capacity) if capacity else float(spec.degrees_per_code)
    return rotate_hue(img, code * step)


def hue_rgb_bound(angle_deg: float) -> float:
    """Worst-case RGB L-inf change of a hue rotation by angle_deg.

    HSV->RGB components are piecewise linear in hue with slope S*V per 60
    degrees, so |dRGB| <= S*V*|dh|/60 <= |dh|/60, saturating at 1.
    """
    return min(1.0, abs(angle_deg) / 60.0)


# ---------------------------------------------------------------------------
# lens


def lens_gain(h: int, w: int, code: int, spec: ShortcutSpec, n_codes: int) -> np.ndarray:
    """Radial multiplicative vignette, gain(center) == 1 exactly."""
    s_code = spec.max_darkening * (code + 1) / n_codes
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy = (np.arange(h) - cy)[:, None]
    xx = (np.arange(w) - cx)[None, :]
    r = np.sqrt(yy * yy + xx * xx)
    r_max = np.sqrt(cy * cy + cx * cx)
    if r_max == 0.0:
        return np.ones((h, w))
    return 1.0 - s_code * (r / r_max) ** spec.falloff_exponent


def apply_lens(img: np.ndarray, code: int, spec: ShortcutSpec, n_codes: int) -> np.ndarray:
    img = check_image_f(img)
    if spec.kind != "lens":
        raise SpecError(f"spec kind is {spec.kind!r}, not lens")
    gain = lens_gain(img.shape[0], img.shape[1], code, spec, n_codes)
    return img * gain[:, :, None]


# ---------------------------------------------------------------------------
# dust


def dust_factor(h: int, w: int, key: int, spec: ShortcutSpec) -> np.ndarray:
    """Multiplicative darkening map: soft specks at key-derived positions."""
    if 2.0 * spec.radius_px >= min(h, w):
        raise SpecError(
            f"dust radius {spec.radius_px} too large for a {h}x{w} image "
            f"(must be < min(h, w)/2)"
        )
    factor = np.ones((h, w))
    if spec.speck_count == 0 or spec.opacity == 0.0:
        return factor
    margin = spec.radius_px
    yy = np.arange(h, dtype=np.float64)[:, None]
    xx = np.arange(w, dtype=np.float64)[None, :]
    sigma2 = (spec.radius_px / 2.0) ** 2
    r2 = spec.radius_px**2
    for s in range(spec.speck_count):
        # fractional positions scale with the image, so speck layout is
        # resolution-covariant like the sensor grid
        cy = margin + key_uniform(key, 2 * s) * (h - 1 - 2 * margin)
        cx = margin + key_uniform(key, 2 * s + 1) * (w - 1 - 2 * margin)
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        fall = np.exp(-d2 / (2.0 * sigma2))
        fall[d2 > r2] = 0.0
        factor *= 1.0 - spec.opacity * fall
    # overlapping specks compose multiplicatively; cap the total darkening at
    # the single-speck bound so the opacity perceptibility budget always holds
    return np.maximum(factor, 1.0 - spec.opacity)


def apply_dust(img: np.ndarray, key: int, spec: ShortcutSpec) -> np.ndarray:
    img = check_image_f(img)
    if spec.kind != "dust":
        raise SpecError(f"spec kind is {spec.kind!r}, not dust")
    factor = dust_factor(img.shape[0], img.shape[1], key, spec)
    return img * factor[:, :, None]


# ---------------------------------------------------------------------------
# dispatch


def protect_image(
    img: np.ndarray,
    attrs,
    codebook: AttributeCodebook,
    spec: ShortcutSpec,
) -> np.ndarray:
    """Apply the spec's shortcut for the image's attribute-derived code.

    Pure in (img, attrs, codebook, spec); epsilon == 0 short-circuits to the
    identity for every kind.
    """
    img = check_image_f(img)
    code = codebook.encode(attrs)
    if spec.epsilon == 0.0:
        return img.copy()
    if spec.kind == "sensor":
        key = codebook.pattern_key(code)
        field = gen_sensor_pattern(key, img.shape[0], img.shape[1], img.shape[2], spec)
        return apply_sensor(img, field)
    if spec.kind == "hue":
        return apply_hue(img, code, spec, capacity=codebook.capacity)
    if spec.kind == "lens":
        return apply_lens(img, code, spec, n_codes=codebook.capacity)
    if spec.kind == "dust":
        return apply_dust(img, codebook.pattern_key(code), spec)
    raise SpecError(f"unknown shortcut kind {spec.kind!r}")  # unreachable


def protect_batch(
    X: np.ndarray,
    codes: np.ndarray,
    codebook: AttributeCodebook,
    spec: ShortcutSpec,
) -> np.ndarray:
    """protect_image over a batch, memoizing per-code work where possible."""
    X, codes = check_batch(X, codes)
    out = np.empty_like(X)
    h, w, c = X.shape[1:]
    if spec.epsilon == 0.0:
        return X.copy()
    if spec.kind == "sensor":
        fields = {}
        for code in np.unique(codes):
            key = codebook.pattern_key(int(code))
            fields[int(code)] = gen_sensor_pattern(key, h, w, c, spec)
        for i, code in enumerate(codes):
            out[i] = apply_sensor(X[i], fields[int(code)])
    elif spec.kind == "dust":
        factors = {
            int(code): dust_factor(h, w, codebook.pattern_key(int(code)), spec)
            for code in np.unique(codes)
        }
        for i, code in enumerate(codes):
            out[i] = X[i] * factors[int(code)][:, :, None]
    elif spec.kind == "lens":
        gains = {
            int(code): lens_gain(h, w, int(code), spec, codebook.capacity)
            for code in np.unique(codes)
        }
        for i, code in enumerate(codes):
            out[i] = X[i] * gains[int(code)][:, :, None]
    else:
        for i, code in enumerate(codes):
            out[i] = apply_hue(X[i], int(code), spec, capacity=codebook.capacity)
    return out


class ShortcutInjector(BaseEstimator, TransformerMixin):
    """sklearn-style transformer that plants label-coded shortcuts.

    Labels are treated as class codes directly (a single-attribute codebook of
    arity n_codes). Because the perturbation depends on the label, transform
    takes y as well; fit_transform(X, y) chains the two.

    Parameters mirror ShortcutSpec; see that class for meanings.
    """

    def __init__(
        self,
        kind="sensor",
        epsilon=4.0 / 255.0,
        seed=0,
        cell_px=4,
        channel_coupled=False,
        degrees_per_code=None,
        falloff_exponent=2.0,
        max_darkening=0.15,
        speck_count=12,
        radius_px=2.0,
        opacity=0.25,
    ):
        self.kind = kind
        self.epsilon = epsilon
        self.seed = seed
        self.cell_px = cell_px
        self.channel_coupled = channel_coupled
        self.degrees_per_code = degrees_per_code
        self.falloff_exponent = falloff_exponent
        self.max_darkening = max_darkening
        self.speck_count = speck_count
        self.radius_px = radius_px
        self.opacity = opacity

    def _spec(self) -> ShortcutSpec:
        return ShortcutSpec(
            kind=self.kind,
            epsilon=self.epsilon,
            seed=self.seed,
            cell_px=self.cell_px,
            channel_coupled=self.channel_coupled,
            degrees_per_code=self.degrees_per_code,
            falloff_exponent=self.falloff_exponent,
            max_darkening=self.max_darkening,
            speck_count=self.speck_count,
            radius_px=self.radius_px,
            opacity=self.opacity,
        )

    def fit(self, X, y):
        X, y = check_batch(X, y)
        if y is None:
            raise ShortcutForgeError("ShortcutInjector.fit needs labels")
        n_codes = max(2, int(y.max()) + 1)
        self.codebook_ = AttributeCodebook(("class",), (n_codes,), seed=self.seed)
        self.spec_ = self._spec()
        return self

    def transform(self, X, y=None):
        if not hasattr(self, "codebook_"):
            raise ShortcutForgeError("ShortcutInjector is not fitted")
        if y is None:
            raise ShortcutForgeError("transform needs labels (shortcut is label-coded)")
        X, y = check_batch(X, y)
        return protect_batch(X, y, self.codebook_, self.spec_)

    def fit_transform(self, X, y):
        return self.fit(X, y).transform(X, y)
