"""Published reference values, attached to reports as annotations.

These came from live Llama-2 13B / Mistral 7B runs at full corpus scale and are
not reproducible here; nothing compares against them.
"""

from __future__ import annotations

from .catalog import slugify

_INTERVALS = ("H0_6", "H6_12", "H12_18", "H18_24", "FULL_DAY")


def _row(values, y):
    return {"map_at_50": dict(zip(_INTERVALS, values)), "relevant_retrieved_full_day": y}


def _prf(p, r, f):
    return {"precision": p, "recall": r, "f1": f}


REFERENCE = {
    "broward_county": {
        "cifs": 82,
        "signal_tweets": 1205,
        "corpus_tweets": 60062,
        "retrieval": {
            "cif_only": _row((0.102, 0.098, 0.103, 0.095, 0.099), 303),
            "cif_plus_terms": _row((0.089, 0.088, 0.087, 0.090, 0.089), 484),
            "cif_plus_phrase": _row((0.139, 0.133, 0.133, 0.111, 0.129), 534),
        },
        "classification_signal": {
            "impact": _prf(0.660, 0.563, 0.565),
            "severity": _prf(0.668, 0.512, 0.566),
            "status": _prf(0.805, 0.349, 0.445),
        },
        "classification_retrieved": {
            "impact": _prf(0.821, 0.747, 0.769),
            "severity": _prf(0.687, 0.6445, 0.6442),
            "status": _prf(0.517, 0.352, 0.399),
        },
        "overall_status": _prf(0.522, 0.305, 0.216),
    },
    "christchurch": {
        "cifs": 58,
        "signal_tweets": 728,
        "corpus_tweets": 36286,
        "retrieval": {
            "cif_only": _row((0.198, 0.229, 0.172, 0.148, 0.183), 288),
            "cif_plus_terms": _row((0.156, 0.178, 0.131, 0.134, 0.148), 326),
            "cif_plus_phrase": _row((0.187, 0.212, 0.167, 0.169, 0.182), 402),
        },
        "classification_signal": {
            "impact": _prf(0.603, 0.570, 0.569),
            "severity": _prf(0.550, 0.458, 0.490),
            "status": _prf(0.655, 0.280, 0.342),
        },
        "classification_retrieved": {
            "impact": _prf(0.841, 0.805, 0.777),
            "severity": _prf(0.817, 0.794, 0.797),
            "status": _prf(0.919, 0.779, 0.809),
        },
        "overall_status": _prf(0.470, 0.248, 0.197),
    },
}


def reference_for(aoi_name: str) -> dict:
    values = REFERENCE.get(slugify(aoi_name))
    return {
        "non_reproducible": True,
        "note": "published LLM-backed values at full scale; annotation only, never compared",
        "values": values,
    }
