"""Small SVG figures for reports (matplotlib, Agg backend)."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "levyfront", "svg.fonttype": "none", "font.size": 9}


def _to_svg(fig):
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    text = buf.getvalue()
    start = text.find("<svg")
    return text[start:] if start >= 0 else text


def front_svg(traces, reference_rate=None, fits=None):
    """log r_h(t) against t for one or more traces, with an optional reference slope."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for tr in traces:
            ax.plot(tr.times, np.log(tr.radii), lw=1.2, label=f"h = {tr.level:g}")
        if reference_rate is not None and traces:
            tr = traces[0]
            t = np.asarray(tr.times)
            t0 = t[len(t) // 2]
            y0 = np.interp(t0, t, np.log(tr.radii))
            ax.plot(t, y0 + reference_rate * (t - t0), "k--", lw=0.8,
                    label=f"slope {reference_rate:.4g}")
        for fit in fits or []:
            t = np.linspace(*fit.window, 2)
            ax.plot(t, fit.intercept + fit.slope * t, ":", lw=1.5)
        ax.set_xlabel("t")
        ax.set_ylabel("log r_h(t)")
        ax.legend(frameon=False)
        return _to_svg(fig)


def profile_svg(profiles, lambda1, t_index=-1):
    """v^eps(x, t) against the limit profile at one time of the window."""
    from .asymptotics import limit_profile

    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for p in profiles:
            ax.plot(p.xs, p.v[t_index], lw=1.2, label=f"eps = {p.eps:g}")
        if profiles:
            p = profiles[0]
            t = p.ts[t_index]
            ax.plot(p.xs, limit_profile(p.xs, t, lambda1, p.d, p.alpha), "k--", lw=1.0,
                    label="limit")
            ax.set_title(f"t = {t:g}")
        ax.set_xlabel("x")
        ax.set_ylabel("v")
        ax.legend(frameon=False)
        return _to_svg(fig)


def series_svg(t, y, xlabel="t", ylabel="", logy=False):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        (ax.semilogy if logy else ax.plot)(t, y, lw=1.2)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        return _to_svg(fig)
