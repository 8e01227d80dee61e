"""Stroke category taxonomy and bol-to-category mapping."""

CLASSES = ("D", "RT", "RB", "B")

CLASS_NAMES = {
    "D": "Damped",
    "RT": "Resonant Treble",
    "RB": "Resonant Bass",
    "B": "Resonant Both",
}

CLASS_INDEX = {c: i for i, c in enumerate(CLASSES)}

# Acoustic grouping of common bols into the four categories.
DEFAULT_BOL_MAP = {
    "ti": "D", "ta": "D", "tak": "D", "ke": "D", "tra": "D", "kda": "D",
    "na": "RT", "tin": "RT", "tun": "RT",
    "ghe": "RB", "dhe": "RB", "dhi": "RB",
    "dha": "B", "dhin": "B",
}

RESONANT = ("RT", "RB", "B")


def normalize_label(label, bol_map=None):
    """Map a category code or bol name to one of :data:`CLASSES`.

    Raises ``ValueError`` for labels that are neither a category code nor a
    known bol.
    """
    text = label.strip()
    if text in CLASS_INDEX:
        return text
    mapping = DEFAULT_BOL_MAP if bol_map is None else bol_map
    key = text.lower()
    lowered = {k.lower(): v for k, v in mapping.items()}
    if key in lowered and lowered[key] in CLASS_INDEX:
        return lowered[key]
    raise ValueError(f"unknown stroke label {label!r}")
