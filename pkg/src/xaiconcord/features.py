"""Clinical feature catalogue: canonical names, abbreviations and the three feature sets."""

from pathlib import Path

# Canonical order of the full 27-feature universe.
MAXIMUM = (
    "Age",
    "Stage",
    "T",
    "N",
    "M",
    "Year of initial diagnosis",
    "Adenocarcinoma invasion",
    "Histological type",
    "Neoplasm cancer status",
    "Neoplasm histologic grade",
    "Maximum tumor dimension",
    "Residual tumor",
    "Initial diagnosis method",
    "Surgery performed type",
    "Lymph nodes positive by HE",
    "Gender",
    "Race",
    "Ethnicity",
    "Other DX",
    "History of diabetes",
    "Family history of cancer",
    "Radiation therapy",
    "Therapy outcome success",
    "New tumor events",
    "Days to new tumor",
    "Tobacco smoking history",
    "Alcoholic exposure category",
)

MINIMUM = ("Age", "T", "N", "M", "Stage")

RECOMMENDED = ("Age", "Stage", "N", "M") + MAXIMUM[5:15]

ABBREVIATIONS = {
    "Adeno.": "Adenocarcinoma invasion",
    "Year": "Year of initial diagnosis",
    "Type": "Histological type",
    "Status": "Neoplasm cancer status",
    "Grade": "Neoplasm histologic grade",
    "Dimensi.": "Maximum tumor dimension",
    "Residual": "Residual tumor",
    "Diagnos.": "Initial diagnosis method",
    "Surgery": "Surgery performed type",
    "Lymph": "Lymph nodes positive by HE",
    "Ethnic.": "Ethnicity",
    "Other": "Other DX",
    "Diabetes": "History of diabetes",
    "Family": "Family history of cancer",
    "Radiat.": "Radiation therapy",
    "Therapy": "Therapy outcome success",
    "N. tumor": "New tumor events",
    "N.tumor": "New tumor events",
    "Days to": "Days to new tumor",
    "Tobacco": "Tobacco smoking history",
    "Alcohol": "Alcoholic exposure category",
    # long forms used in the feature-description tables
    "Pathologic stage": "Stage",
    "Pathologic T": "T",
    "Pathologic N": "N",
    "Pathologic M": "M",
    "Lymph nodes positive HE": "Lymph nodes positive by HE",
    "Primary therapy outcome success": "Therapy outcome success",
    "Days to new tumor after treatment": "Days to new tumor",
}

# Ordinal domains of the minimum set.
TNM_CATEGORIES = {
    "T": ("TX", "T1", "T2", "T3", "T4"),
    "N": ("N0", "N1", "N1b", "NX"),
    "M": ("M0", "M1", "MX"),
    "Stage": (
        "Stage 0",
        "Stage I",
        "Stage IA",
        "Stage IB",
        "Stage II",
        "Stage IIA",
        "Stage IIB",
        "Stage III",
        "Stage IV",
    ),
}

BUILTIN_SETS = {"minimum": MINIMUM, "recommended": RECOMMENDED, "maximum": MAXIMUM}


def resolve_name(name, universe, aliases=ABBREVIATIONS):
    """Map `name` onto a member of `universe`.

    Tries an exact match, then the abbreviation table, then a
    case-insensitive match. Returns None when nothing matches.
    """
    name = name.strip()
    if name in universe:
        return name
    full = aliases.get(name)
    if full is not None and full in universe:
        return full
    folded = {u.casefold(): u for u in universe}
    hit = folded.get(name.casefold())
    if hit is not None:
        return hit
    for abbr, full in aliases.items():
        if abbr.casefold() == name.casefold() and full in universe:
            return full
    return None


def read_feature_list(path):
    """One column name per line; blank lines and `#` comments ignored."""
    names = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            names.append(line)
    return names
