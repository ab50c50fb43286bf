#!/usr/bin/env python3
"""Regenerate the bundled APT29 case-study fixture.

The fixture plants exact co-targeting proportions: the United Kingdom row
of the transition matrix gives p(UK -> USA) = 47/100 and
p(UK -> Germany) = 33/100, the country ranking leads with the USA then
Germany, and the malware/industry rankings are strictly ordered.  A small
set of decoy events (different adversary/technique, some outside the study
window) exercises the case-study filters.

Run from the repository root:  python3 tools/make_apt29_fixture.py
"""

import datetime as dt
import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from threatflow.model import Corpus, ThreatEvent  # noqa: E402

OUT = Path(__file__).resolve().parent.parent / "src" / "threatflow" / "data" / "apt29_fixture.ndjson"

USA = "United States of America"
UK = "United Kingdom"
DE = "Germany"
KR = "Republic of Korea"
IN = "India"
CN = "China"

# (target set, multiplicity); the UK row sums to 100 with 47 USA / 33 DE.
TARGET_PLAN = [
    ((UK, USA), 47),
    ((UK, DE), 33),
    ((UK,), 20),
    ((USA, KR), 22),
    ((USA, IN), 15),
    ((USA, CN), 10),
    ((USA,), 36),
    ((DE, KR), 10),
    ((DE, IN), 8),
    ((DE, CN), 7),
    ((DE,), 57),
    ((KR,), 8),
    ((IN,), 7),
    ((CN,), 8),
]

# weights 5:4:3:2:1 plus one malware-free slot per 16 events
MALWARE_CYCLE = (
    ["Cobalt Strike"] * 5
    + ["TrickBot"] * 4
    + ["XMRig"] * 3
    + ["Ryuk"] * 2
    + ["Agent Tesla"]
    + [None]
)
INDUSTRY_CYCLE = (
    ["Government"] * 5
    + ["Finance"] * 4
    + ["Manufacturing"] * 3
    + ["Defense"] * 2
    + ["Technology"]
)
TECHNIQUE_CYCLE = [
    ("T1059",),
    ("T1071", "T1059"),
    ("T1078",),
    ("T1027", "T1550"),
    ("T1550",),
    ("T1071",),
    ("T1027",),
]
TAG_CYCLE = [
    ("covid-19", "vaccine"),
    ("apt29", "spearphishing"),
    ("covid-19", "espionage"),
    ("vaccine", "supply-chain"),
]
TITLE_CYCLE = [
    "Spearphishing wave against vaccine research labs",
    "Credential harvesting targeting health agencies",
    "Custom backdoor deployment in research networks",
    "Exploitation of VPN appliances at pharma suppliers",
    "Cloud account takeover attempts on trial data hosts",
]

MISSPELL = {
    USA: "Untied States of America",
    UK: "United Kingdm",
    DE: "Germny",
    KR: "Republic of Koera",
    IN: "Indai",
    CN: "Chna",
}

WINDOW_START = dt.date(2020, 1, 10)
WINDOW_END = dt.date(2021, 6, 20)


def raw_name(canonical: str, event_index: int, slot: int) -> str:
    """Deterministically vary the surface form of a country string."""
    style = (event_index + 3 * slot) % 11
    if style == 3:
        return MISSPELL[canonical]
    if style == 7:
        return canonical.upper()
    if style == 5:
        return canonical.lower()
    return canonical


def main() -> None:
    specs: list[tuple[str, ...]] = []
    for targets, times in TARGET_PLAN:
        specs.extend([targets] * times)
    rng = np.random.default_rng(2029)
    order = rng.permutation(len(specs))
    specs = [specs[i] for i in order]

    span = (WINDOW_END - WINDOW_START).days
    events = []
    for i, targets in enumerate(specs):
        date = WINDOW_START + dt.timedelta(days=i * span // len(specs))
        malware = MALWARE_CYCLE[i % len(MALWARE_CYCLE)]
        events.append(
            ThreatEvent(
                id=f"apt29-{i:04d}",
                created_at=date,
                title=TITLE_CYCLE[i % len(TITLE_CYCLE)],
                description=(
                    "Shared indicators attributed to a state-sponsored espionage "
                    "campaign against organizations involved in vaccine development."
                ),
                countries=(),
                raw_country_strings=tuple(
                    raw_name(c, i, slot) for slot, c in enumerate(targets)
                ),
                adversary="APT29",
                malware_families=(malware,) if malware else (),
                industries=(INDUSTRY_CYCLE[i % len(INDUSTRY_CYCLE)],),
                technique_ids=TECHNIQUE_CYCLE[i % len(TECHNIQUE_CYCLE)],
                tags=TAG_CYCLE[i % len(TAG_CYCLE)],
            )
        )

    # decoys: other adversary and technique, half outside the study window
    for i in range(12):
        inside = i % 2 == 0
        date = (
            WINDOW_START + dt.timedelta(days=40 + 30 * i)
            if inside
            else dt.date(2019, 3, 1) + dt.timedelta(days=25 * i)
        )
        events.append(
            ThreatEvent(
                id=f"decoy-{i:03d}",
                created_at=date,
                title="Commodity ransomware distribution campaign",
                description="Opportunistic encryption-for-ransom activity.",
                countries=(),
                raw_country_strings=("France",) if i % 3 else ("Spain", "France"),
                adversary="FIN7",
                malware_families=("Dridex",),
                industries=("Retail",),
                technique_ids=("T1486",),
                tags=("ransomware",),
            )
        )

    corpus = Corpus.from_events(events, provenance="tools/make_apt29_fixture.py")
    with OUT.open("w", encoding="utf-8", newline="\n") as fh:
        for event in corpus.events:
            fh.write(json.dumps(event.to_dict(), ensure_ascii=False))
            fh.write("\n")
    print(f"wrote {len(corpus.events)} events to {OUT}")


if __name__ == "__main__":
    main()
