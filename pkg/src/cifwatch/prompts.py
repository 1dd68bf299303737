"""Prompt templates. Rendering is plain substitution; outputs are byte-stable."""

from __future__ import annotations

from typing import Sequence

from .catalog import AreaOfInterest, Cif
from .taxonomy import DisasterKind

_GENERATION_TAIL = (
    "Ensure linguistic diversity in each tweet, providing unique insights into the impact and "
    "its severity. In some tweets, include the infrastructure's address. Aim for tweet lengths "
    "between 100 to 250 characters, and avoid using emojis. Tag each tweet with the type of "
    "impact (e.g., damaged, destroyed) and its severity (e.g., low, mild, severe). These tags "
    "will be used for training classifiers.\n"
    "\n"
    "Always include 2 tags at the 'end' of the generated tweet with the following template:\n"
    "(Tags: ***** , *****)"
)

HURRICANE_GENERATION = (
    "Generate 15 diverse tweets describing the impact of a Category-5 hurricane on {cif}. "
    "The disaster triggered sub-events such as tornado, storm surge, burst of rain, strong "
    "winds, resulting in varied impacts like flooded, collapsed, submerged, damaged, "
    "destroyed, cracked, etc.\n"
    "\n" + _GENERATION_TAIL
)

# "Christchruch's" is reproduced as printed.
EARTHQUAKE_GENERATION = (
    "Generate 15 diverse tweets describing the impact of a severe earthquake on "
    "Christchruch's {cif}. The disaster triggered sub-events such as ground shake, landslide, "
    "liquefaction, ground rupture, aftershock, resulting in varied impacts like collapsed, "
    "cracked, damaged, destroyed, etc.\n"
    "\n" + _GENERATION_TAIL
)

_STATUS_INSTRUCTION = (
    "Your task is to analyze the provided tweet and determine the operational status of the "
    "mentioned infrastructure. The operational status could include descriptors such as "
    "open, closed, partially open, partially closed, or unknown."
)

# Used when labelling generated tweets.
STATUS_LABEL = _STATUS_INSTRUCTION + "\n\nTweet: {tweet}\n\nOperational status:"

# Used when classifying retrieved tweets.
STATUS_CLASSIFY = _STATUS_INSTRUCTION + "\n\nTweet: {tweet}\nOperational status:"

IMPACT_DESCRIPTORS: tuple[str, ...] = (
    "blocked", "blown", "buried", "burnt", "collapsed", "cracked", "damaged", "destroyed",
    "displaced", "disrupted", "eroded", "failed", "flooded", "ground liquefaction",
    "ground shake", "leakage", "muddy", "power outage", "ruptured", "slippery", "torn",
    "unsafe", "uprooted", "washed away", "weakened",
)
SEVERITY_DESCRIPTORS: tuple[str, ...] = ("severe", "mild", "moderate", "unknown")

IMPACT_SEVERITY = (
    "Your task is to analyze the provided tweet and determine the impacts of the disaster on "
    "the mentioned infrastructure. Please include only impact descriptors from the list such "
    "as " + ", ".join(IMPACT_DESCRIPTORS) + " or not_applicable, and severity such as "
    + ", ".join(SEVERITY_DESCRIPTORS) + ".\n"
    "\n"
    "Tweet: {tweet}\n"
    "\n"
    "Infrastructure impact:\n"
    "Infrastructure severity:"
)

OVERALL_STATUS = (
    "Your task is to analyze the tweets given below and deduce the operational status of a "
    "facility, named {cif}. Since these tweets are retrieved based on the facility name, it's "
    "possible that some tweets may not pertain to the given facility. Focus solely on the "
    "tweets pertinent to {cif} and derive the most recent operational status for the "
    "facility. Your operational status label must be one of these: open, closed, partially "
    "open, partially closed, or unknown.\n"
    "\n"
    "{tweets}\n"
    "\n"
    "operational_status:"
)


def render_generation_prompt(cif: Cif, aoi: AreaOfInterest) -> str:
    template = (
        HURRICANE_GENERATION if aoi.disaster_kind is DisasterKind.HURRICANE else EARTHQUAKE_GENERATION
    )
    return template.replace("{cif}", cif.name_and_address)


def render_status_label_prompt(tweet_text: str) -> str:
    return STATUS_LABEL.replace("{tweet}", tweet_text)


def render_status_classify_prompt(tweet_text: str) -> str:
    return STATUS_CLASSIFY.replace("{tweet}", tweet_text)


def render_impact_prompt(tweet_text: str) -> str:
    return IMPACT_SEVERITY.replace("{tweet}", tweet_text)


def render_overall_status_prompt(cif_name: str, tweets: Sequence[str]) -> str:
    lines = "\n".join(f"Tweet: {t}" for t in tweets)
    # {tweets} last so tweet text containing "{cif}" is left alone.
    return OVERALL_STATUS.replace("{cif}", cif_name).replace("{tweets}", lines)
