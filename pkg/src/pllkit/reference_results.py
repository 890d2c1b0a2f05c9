"""Published SEED-V reference accuracies, rendered beside desk-scale results.

These numbers were reported on the access-restricted SEED-V dataset and
cannot be reproduced by this toolkit's synthetic data; they are stored as
constants purely so reports can show desk-scale runs next to the published
benchmark. Every rendering carries the NOT-REPRODUCIBLE-AT-DESK-SCALE tag.
"""

from __future__ import annotations

REFERENCE_NOTE = "NOT-REPRODUCIBLE-AT-DESK-SCALE"
REFERENCE_SOURCE = ("G. Zhang and A. Etemad, 'Partial Label Learning for Emotion "
                    "Recognition from EEG' (SEED-V, 16 subjects, 3-fold, 5 seeds)")

Q_GRID = (0.2, 0.4, 0.6, 0.8, 0.9, 0.95)

# mean accuracy (%) and std over subjects x folds x seeds
FULLY_SUPERVISED = (63.08, 13.87)

# (method, label disambiguation) -> [(mean, std) per q in Q_GRID]
COMPARISON = {
    ("proden", False): [(58.55, 16.63), (57.69, 15.99), (53.87, 15.24),
                        (43.05, 14.76), (32.37, 11.73), (26.00, 10.72)],
    ("proden", True): [(59.73, 16.81), (58.83, 16.12), (55.87, 16.37),
                       (47.53, 14.06), (37.58, 13.54), (26.99, 10.32)],
    ("dnpl", False): [(60.86, 16.64), (60.37, 15.82), (59.62, 16.45),
                      (59.42, 15.65), (57.08, 16.46), (49.44, 15.85)],
    ("lw", False): [(60.64, 15.83), (58.86, 16.03), (55.97, 15.91),
                    (48.43, 14.00), (36.09, 12.14), (29.30, 11.57)],
    ("lw", True): [(60.48, 16.75), (60.83, 16.22), (59.81, 16.30),
                   (54.61, 16.30), (34.35, 17.91), (22.12, 10.33)],
    ("cavl", False): [(58.51, 16.63), (57.60, 15.90), (53.67, 15.24),
                      (43.03, 14.70), (32.39, 11.66), (26.03, 10.68)],
    ("cavl", True): [(57.58, 16.52), (54.94, 16.68), (48.58, 15.64),
                     (30.75, 12.18), (23.44, 8.19), (21.72, 7.03)],
    ("cr", False): [(42.42, 13.70), (42.64, 14.37), (41.22, 13.56),
                    (35.60, 12.62), (30.70, 10.71), (26.41, 9.27)],
    ("cr", True): [(28.31, 10.08), (28.55, 9.52), (27.57, 9.57),
                   (22.68, 8.66), (22.09, 7.90), (20.94, 8.56)],
    ("pico", False): [(57.23, 16.44), (55.28, 16.71), (49.95, 15.89),
                      (38.04, 12.82), (28.34, 11.18), (24.91, 10.26)],
    ("pico", True): [(62.68, 15.88), (61.92, 15.94), (57.54, 15.59),
                     (43.87, 14.99), (31.26, 11.52), (24.69, 9.66)],
}

# (variant, beta, label disambiguation) -> [(mean, std) per q]
LW_SETTINGS = {
    ("sigmoid", 0, False): [(35.68, 12.69), (31.25, 11.01), (26.79, 10.01),
                            (22.14, 9.22), (22.47, 9.26), (20.66, 8.84)],
    ("sigmoid", 0, True): [(30.14, 10.52), (27.88, 10.03), (23.03, 8.03),
                           (20.98, 6.79), (20.11, 6.52), (20.00, 6.65)],
    ("sigmoid", 1, False): [(57.44, 16.66), (48.55, 15.32), (34.54, 11.24),
                            (25.77, 9.85), (24.35, 9.68), (22.08, 9.62)],
    ("sigmoid", 1, True): [(40.99, 23.27), (33.97, 19.67), (24.74, 10.24),
                           (20.75, 7.80), (20.04, 6.99), (20.61, 6.72)],
    ("sigmoid", 2, False): [(36.72, 15.55), (48.96, 18.35), (49.51, 15.64),
                            (28.98, 11.12), (24.54, 9.70), (22.52, 9.40)],
    ("sigmoid", 2, True): [(42.44, 23.89), (37.82, 22.15), (32.85, 19.30),
                           (21.56, 9.26), (20.25, 6.91), (20.53, 7.35)],
    ("ce", 0, False): [(59.44, 16.16), (57.17, 16.03), (53.93, 15.14),
                       (42.63, 14.17), (31.81, 12.40), (27.29, 11.04)],
    ("ce", 0, True): [(59.71, 16.81), (58.85, 16.08), (55.73, 16.23),
                      (48.13, 13.88), (36.83, 13.21), (27.81, 10.48)],
    ("ce", 1, False): [(60.14, 15.85), (58.49, 16.13), (55.58, 15.96),
                       (46.38, 14.55), (33.95, 12.81), (28.27, 11.14)],
    ("ce", 1, True): [(60.23, 16.84), (60.01, 16.36), (58.79, 16.14),
                      (51.48, 16.19), (30.47, 15.87), (22.05, 10.25)],
    ("ce", 2, False): [(60.64, 15.83), (58.86, 16.03), (55.97, 15.91),
                       (48.43, 14.00), (36.09, 12.14), (29.30, 11.57)],
    ("ce", 2, True): [(60.48, 16.75), (60.83, 16.22), (59.81, 16.30),
                      (54.61, 16.30), (34.35, 17.91), (22.12, 10.33)],
}

# (contrastive learning, label disambiguation) -> [(mean, std) per q]
PICO_SETTINGS = {
    (False, False): [(59.35, 16.09), (57.75, 16.27), (53.13, 15.84),
                     (43.31, 13.41), (33.30, 12.53), (27.12, 10.52)],
    (False, True): [(59.48, 16.27), (58.77, 16.65), (55.21, 16.52),
                    (45.93, 16.42), (35.12, 13.51), (25.81, 9.60)],
    (True, False): [(57.23, 16.44), (55.28, 16.71), (49.95, 15.89),
                    (38.04, 12.82), (28.34, 11.18), (24.91, 10.26)],
    (True, True): [(62.68, 15.88), (61.92, 15.94), (57.54, 15.59),
                   (43.87, 14.99), (31.26, 11.52), (24.69, 9.66)],
}


def format_cell(mean: float, std: float) -> str:
    return f"{mean:.2f}({std:.2f})"


def reference_rows():
    """CSV-style rows: table, method, ld, q, mean, std."""
    rows = [("comparison", "supervised", "-", "-",
             FULLY_SUPERVISED[0], FULLY_SUPERVISED[1])]
    for (method, ld), cells in COMPARISON.items():
        for q, (mean, std) in zip(Q_GRID, cells):
            rows.append(("comparison", method, "on" if ld else "off", f"{q:g}", mean, std))
    for (variant, beta, ld), cells in LW_SETTINGS.items():
        for q, (mean, std) in zip(Q_GRID, cells):
            rows.append((f"lw-settings", f"lw-{variant}-b{beta}",
                         "on" if ld else "off", f"{q:g}", mean, std))
    for (cl, ld), cells in PICO_SETTINGS.items():
        for q, (mean, std) in zip(Q_GRID, cells):
            rows.append(("pico-settings", "pico" if cl else "pico-nocl",
                         "on" if ld else "off", f"{q:g}", mean, std))
    return rows


def render_reference_text() -> str:
    lines = [f"Published reference accuracies [{REFERENCE_NOTE}]",
             f"Source: {REFERENCE_SOURCE}",
             ""]
    header = f"{'method':18s} {'LD':3s}" + "".join(f"{f'q={q:g}':>15s}" for q in Q_GRID)
    lines.append(header)
    lines.append(f"{'supervised':18s} {'-':3s}" +
                 f"{format_cell(*FULLY_SUPERVISED):>15s}" + " (single column)")
    for (method, ld), cells in COMPARISON.items():
        row = f"{method:18s} {'on' if ld else 'off':3s}"
        row += "".join(f"{format_cell(m, s):>15s}" for m, s in cells)
        lines.append(row)
    return "\n".join(lines) + "\n"
