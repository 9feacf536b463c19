"""Seeded synthetic accident tables.

Nothing here is real NTSB data.  ``accident_sample`` mimics the columns and
the defects (blank coordinates, "Unavailable" severities, missing engine
fields) of an NTSB export; ``gaussian_accidents`` places the two classes in
separated coordinate clusters for end-to-end sanity runs.
"""

from __future__ import annotations

import csv
import io

import numpy as np

COLUMNS = [
    "Location",
    "Country",
    "Latitude",
    "Longitude",
    "Airport Code",
    "Airport Name",
    "Injury Severity",
    "Aircraft Damage",
    "Aircraft Category",
    "Registration Number",
    "Make",
    "Model",
    "Amateur Built",
    "Number of Engines",
    "Engine Type",
]

_TOWNS = [
    ("Elk, CA", 39.13, -123.72),
    ("Olathe, KS", 38.85, -94.74),
    ("Fairbanks, AK", 64.67, -148.13),
    ("Granbury, TX", 32.37, -97.65),
    ("Missoula, MT", 46.92, -114.09),
    ("Lafayette, LA", 30.18, -92.01),
    ("Headland, AL", 31.36, -85.31),
    ("Evansville, IN", 38.10, -87.54),
    ("Beeville, TX", 28.37, -97.80),
    ("Caldwell, ID", 43.64, -116.64),
    ("Harrison, OH", 39.26, -84.77),
    ("Chandler, AZ", 33.27, -111.81),
]
_AIRCRAFT = [
    # make, model, category, engines, engine type, amateur built
    ("Cessna", "172", "Airplane", 1, "Reciprocating", "No"),
    ("Cessna", "208", "Airplane", 1, "Turbo Prop", "No"),
    ("Piper", "PA28", "Airplane", 1, "Reciprocating", "No"),
    ("Piper", "PA 31T", "Airplane", 2, "Turbo Prop", "No"),
    ("Mooney", "M20S", "Airplane", 1, "Reciprocating", "No"),
    ("Bell", "407", "Helicopter", 1, "Turbo Shaft", "No"),
    ("Robinson", "R22", "Helicopter", 1, "Reciprocating", "No"),
    ("Vans", "RV 10", "Airplane", 1, "Reciprocating", "Yes"),
    ("Beech", "58", "Airplane", 2, "Reciprocating", "No"),
]


def _to_csv(rows) -> str:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(value: float, digits: int) -> str:
    return f"{value:.{digits}f}"


def accident_sample(n: int = 50, seed: int = 2024) -> str:
    """NTSB-style accident export with realistic gaps, as CSV text."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        town, lat, lon = _TOWNS[rng.integers(len(_TOWNS))]
        make, model, category, engines, engine_type, amateur = _AIRCRAFT[rng.integers(len(_AIRCRAFT))]
        # twins, turbines and homebuilts carry more fatal outcomes
        risk = -1.2 + 0.9 * (engines == 2) + 0.8 * (engine_type != "Reciprocating") + 0.7 * (amateur == "Yes")
        fatal = rng.random() < 1.0 / (1.0 + np.exp(-risk))
        severity = f"Fatal({rng.integers(1, 6)})" if fatal else "Non-Fatal"
        damage = "Destroyed" if fatal and rng.random() < 0.7 else "Substantial"
        lat_s = _fmt(lat + rng.normal(0, 0.3), 5)
        lon_s = _fmt(lon + rng.normal(0, 0.3), 4)
        code = "".join(chr(65 + c) for c in rng.integers(0, 26, size=3))
        reg = f"N{rng.integers(100, 9999)}{chr(65 + rng.integers(26))}"
        engines_s, engine_type_s = str(engines), engine_type

        defect = rng.random()
        if defect < 0.10:
            lat_s = lon_s = ""
        elif defect < 0.18:
            severity = "Unavailable"
        elif defect < 0.26:
            engine_type_s = ""
        elif defect < 0.30:
            engines_s = engine_type_s = ""
        rows.append(
            [town, "United States", lat_s, lon_s, code, "N/A", severity, damage, category,
             reg, make, model, amateur, engines_s, engine_type_s]
        )
    return _to_csv(rows)


def gaussian_accidents(
    n: int = 400,
    seed: int = 0,
    fatal_center=(36.0, -98.0),
    nonfatal_center=(40.0, -90.0),
    spread: float = 1.0,
) -> str:
    """Balanced two-class table whose coordinates are drawn from two Gaussians."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        fatal = i % 2 == 0
        cy, cx = fatal_center if fatal else nonfatal_center
        lat = float(np.clip(cy + spread * rng.normal(), -90, 90))
        lon = float(np.clip(cx + spread * rng.normal(), -180, 180))
        make, model, category, engines, engine_type, amateur = _AIRCRAFT[rng.integers(len(_AIRCRAFT))]
        severity = f"Fatal({rng.integers(1, 4)})" if fatal else "Non-Fatal"
        rows.append(
            ["Synthetic", "United States", repr(lat), repr(lon), "", "", severity, "Substantial",
             category, "", make, model, amateur, str(engines), engine_type]
        )
    return _to_csv(rows)
