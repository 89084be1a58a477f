"""Eye-diagram construction, rectangular window fitting, and validity labeling.

Traces are treated as piecewise-linear between 1 ps samples, including the
joins between consecutive unit intervals, so the window search never slips
through a sampling gap.  A window placement is admissible when

  * no trace touches the window's voltage band anywhere inside its open
    time extent, and
  * trace geometry bounds the window from above and below within that
    extent (the window must sit inside the eye, not in dead space beyond
    the signal's excursion).

The search grid is 1 ps in center time over [0, UI) and 1 mV in center
voltage over [-0.25, +0.25] V; ties prefer centers nearest mid-UI, then
nearest 0 V.  Widths themselves are exact gap widths, not grid-quantized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .waveform import Waveform

WINDOW_HEIGHT_V = 0.080
VALID_WIDTH_PS = 35.0
VOLTAGE_GRID_V = np.round(np.arange(-250, 251) * 1e-3, 3)


@dataclass(frozen=True)
class EyeDiagram:
    """Folded unit-interval traces; row k holds UI k."""

    traces: np.ndarray
    ui: float
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "traces",
                           np.asarray(self.traces, dtype=np.float64))
        if self.traces.ndim != 2:
            raise ValueError("traces must be 2-D")


@dataclass(frozen=True)
class WindowFit:
    """Largest clear rectangle of fixed height found in the eye."""

    height: float
    width: float
    center_time: float
    center_voltage: float

    @property
    def area(self) -> float:
        return self.height * self.width

    @property
    def area_mvps(self) -> float:
        return self.height * 1e3 * self.width

    def to_json_dict(self) -> dict:
        return {
            "height_mV": self.height * 1e3,
            "width_ps": self.width,
            "area_mVps": self.area_mvps,
            "center_time_ps": self.center_time,
            "center_voltage_mV": self.center_voltage * 1e3,
        }


def fold_eye(w: Waveform) -> EyeDiagram:
    """Stack unit intervals into rows; errors on a fractional UI count."""
    spb = w.samples_per_ui
    n = len(w.samples)
    if n % spb != 0:
        raise DataError(
            f"waveform length {n} is not an integer number of UIs ({spb} samples each)")
    return EyeDiagram(w.samples.reshape(n // spb, spb), ui=w.ui, dt=w.dt)


def _trace_chords(eye: EyeDiagram):
    """All linear trace pieces as (start time, v0, v1) arrays.

    Every chord spans exactly dt.  Chords at t in [spb-1, spb] join row k's
    last sample to row k+1's first sample, closing the inter-UI seam.
    """
    rows, spb = eye.traces.shape
    t0 = np.tile(np.arange(spb - 1, dtype=np.float64), rows)
    v0 = eye.traces[:, :-1].ravel()
    v1 = eye.traces[:, 1:].ravel()
    if rows > 1:
        seam_t = np.full(rows - 1, float(spb - 1))
        seam_v0 = eye.traces[:-1, -1]
        seam_v1 = eye.traces[1:, 0]
        t0 = np.concatenate([t0, seam_t])
        v0 = np.concatenate([v0, seam_v0])
        v1 = np.concatenate([v1, seam_v1])
    return t0 * eye.dt, v0, v1


def _forbidden_intervals(t0, v0, v1, dt, lo, hi):
    """Closed time intervals where any chord passes through [lo, hi]."""
    vmin = np.minimum(v0, v1)
    vmax = np.maximum(v0, v1)
    hit = (vmin <= hi) & (vmax >= lo)
    if not hit.any():
        return np.empty(0), np.empty(0)
    t0h, v0h, v1h = t0[hit], v0[hit], v1[hit]
    dv = v1h - v0h
    flat = dv == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        fa = (lo - v0h) / dv
        fb = (hi - v0h) / dv
    f_lo = np.minimum(fa, fb)
    f_hi = np.maximum(fa, fb)
    f_lo[flat] = 0.0
    f_hi[flat] = 1.0
    f_lo = np.clip(f_lo, 0.0, 1.0)
    f_hi = np.clip(f_hi, 0.0, 1.0)
    return t0h + f_lo * dt, t0h + f_hi * dt


def _merge_intervals(starts, ends):
    """Union of closed intervals, returned sorted and disjoint."""
    if len(starts) == 0:
        return np.empty(0), np.empty(0)
    order = np.argsort(starts, kind="stable")
    s = starts[order]
    e = np.maximum.accumulate(ends[order])
    # interval i starts a new merged block when it begins after the running end
    new_block = np.empty(len(s), dtype=bool)
    new_block[0] = True
    new_block[1:] = s[1:] > e[:-1]
    last_of_block = np.append(new_block[1:], True)
    return s[new_block], e[last_of_block]


def max_window_area(eye: EyeDiagram) -> WindowFit:
    """Widest admissible window of the fixed 80 mV height.

    Returns a degenerate zero-width fit when no placement exists.  The
    returned window's open interior touches no trace, and widening it by one
    1 ps grid step either hits a trace or leaves the unit interval.
    """
    spb = eye.traces.shape[1]
    ui_span = spb * eye.dt  # chords cover [0, ui_span]
    mid = ui_span / 2.0
    t0, v0, v1 = _trace_chords(eye)
    seg_tmin = t0
    seg_tmax = t0 + eye.dt
    seg_vmin = np.minimum(v0, v1)
    seg_vmax = np.maximum(v0, v1)
    half_h = WINDOW_HEIGHT_V / 2.0

    gmin, gmax = seg_vmin.min(), seg_vmax.max()
    best = None  # (-width, |ct-mid|, |cv|, ct, cv)
    centers = np.arange(spb, dtype=np.float64) * eye.dt
    for cv in VOLTAGE_GRID_V:
        lo, hi = cv - half_h, cv + half_h
        if hi > gmax or lo < gmin:
            continue  # nothing can bound the window on that side of this band
        fs, fe = _forbidden_intervals(t0, v0, v1, eye.dt, lo, hi)
        ms, me = _merge_intervals(fs, fe)
        # open gaps between forbidden blocks, clipped to [0, ui_span]
        gap_s = np.concatenate([[0.0], me])
        gap_e = np.concatenate([ms, [ui_span]])
        for a, b in zip(gap_s, gap_e):
            a = max(a, 0.0)
            b = min(b, ui_span)
            if b - a <= 0:
                continue
            inside = centers[(centers > a) & (centers < b)]
            if len(inside) == 0:
                continue
            widths = 2.0 * np.minimum(inside - a, b - inside)
            order = np.lexsort((np.abs(inside - mid), -widths))
            for idx in order:
                ct, width = inside[idx], widths[idx]
                if width <= 0:
                    break
                cand = (-width, abs(ct - mid), abs(cv), ct, cv)
                if best is not None and cand[:3] >= best[:3]:
                    break  # order is sorted, so no later candidate can win
                w_lo, w_hi = ct - width / 2.0, ct + width / 2.0
                overlap = (seg_tmin < w_hi) & (seg_tmax > w_lo)
                if (overlap & (seg_vmax >= hi)).any() and (overlap & (seg_vmin <= lo)).any():
                    best = cand
                    break
    if best is None:
        return WindowFit(WINDOW_HEIGHT_V, 0.0, mid, 0.0)
    return WindowFit(WINDOW_HEIGHT_V, -best[0], best[3], best[4])


def label_validity(eye: EyeDiagram) -> int:
    """1 when an 80 mV x 35 ps window fits clear inside the eye, else 0."""
    return int(max_window_area(eye).width >= VALID_WIDTH_PS)


def window_intersects_traces(eye: EyeDiagram, fit: WindowFit,
                             eps: float = 1e-9) -> bool:
    """True when any trace chord enters the fit's open rectangle (voltage
    band closed, time extent open).  Exposed for property checks; eps
    absorbs float dust at the rectangle edges where a maximal window
    legitimately abuts a trace."""
    t0, v0, v1 = _trace_chords(eye)
    lo = fit.center_voltage - fit.height / 2.0
    hi = fit.center_voltage + fit.height / 2.0
    fs, fe = _forbidden_intervals(t0, v0, v1, eye.dt, lo, hi)
    w_lo = fit.center_time - fit.width / 2.0
    w_hi = fit.center_time + fit.width / 2.0
    return bool(((fs < w_hi - eps) & (fe > w_lo + eps)).any())


def render_eye_svg(eye: EyeDiagram, fit: WindowFit | None = None,
                   title: str = "") -> str:
    """Standalone SVG of the folded traces with the fitted window overlaid.

    Output is a deterministic function of the inputs (no timestamps or ids),
    so repeated renders are byte-identical.
    """
    spb = eye.traces.shape[1]
    ui_span = spb * eye.dt
    v_lo, v_hi = -1.6, 1.6
    width_px, height_px = 640, 480
    pad = 40.0

    def sx(t):
        return pad + (t / ui_span) * (width_px - 2 * pad)

    def sy(v):
        return pad + (v_hi - v) / (v_hi - v_lo) * (height_px - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" '
        f'height="{height_px}" viewBox="0 0 {width_px} {height_px}">',
        f'<rect x="0" y="0" width="{width_px}" height="{height_px}" fill="white"/>',
        f'<rect x="{pad}" y="{pad}" width="{width_px - 2 * pad}" '
        f'height="{height_px - 2 * pad}" fill="none" stroke="#888" stroke-width="1"/>',
    ]
    if title:
        parts.append(f'<text x="{width_px / 2}" y="{pad - 14}" text-anchor="middle" '
                     f'font-family="monospace" font-size="14">{title}</text>')
    times = np.arange(spb) * eye.dt
    for k in range(eye.traces.shape[0]):
        pts = " ".join(f"{sx(t):.2f},{sy(v):.2f}"
                       for t, v in zip(times, eye.traces[k]))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#2E639D" '
                     f'stroke-width="0.6" opacity="0.45"/>')
    if fit is not None and fit.width > 0:
        x = sx(fit.center_time - fit.width / 2.0)
        y = sy(fit.center_voltage + fit.height / 2.0)
        w = sx(fit.center_time + fit.width / 2.0) - x
        h = sy(fit.center_voltage - fit.height / 2.0) - y
        parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" '
                     f'fill="none" stroke="#8F413B" stroke-width="2"/>')
        parts.append(f'<text x="{width_px / 2}" y="{height_px - 12}" '
                     f'text-anchor="middle" font-family="monospace" font-size="12">'
                     f'window {fit.width:.1f} ps x {fit.height * 1e3:.0f} mV = '
                     f'{fit.area_mvps:.1f} mV.ps</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
