#!/usr/bin/env python3
"""Generate the six-country synthetic plan corpus under data/mini.

Each plan follows the standard heading layout. Section texts are sampled
from planted word pools with country-specific mixtures: the Nordic group
leans on renewables and efficiency, the Central European group on coal,
gas and nuclear. HU omits one current-situation section so the bound
vector exclusion path is exercised.
"""

import argparse
import csv
import random
from pathlib import Path

POOLS = {
    "decarbonisation": [
        "wind solar offshore turbine photovoltaic auction renewable capacity",
        "vehicle electric charging railway biofuel mobility fleet transport",
        "forestry agriculture livestock peatland sink soil fertiliser land",
        "coal lignite mine phaseout closure miner region transition",
        "carbon tax allowance trading price levy revenue market",
    ],
    "energy_efficiency": [
        "building renovation insulation heatpump facade dwelling retrofit",
        "industry process audit motor compressor factory steel cement",
        "appliance label standard lighting ecodesign product lamp device",
        "district heating network cogeneration boiler waste heat pipe",
        "household subsidy loan grant poverty tenant landlord voucher",
    ],
    "energy_security": [
        "gas pipeline storage terminal import liquefied supply corridor",
        "nuclear reactor uranium fuel waste repository licence operator",
        "diversification supplier contract emergency stock oil refinery crisis",
    ],
    "internal_market": [
        "interconnector grid transmission crossborder coupling line congestion operator",
        "price consumer retail tariff competition bill switching supplier",
        "flexibility storage battery demand aggregator smart meter response",
    ],
    "rni_competitiveness": [
        "research innovation university patent funding laboratory scientist programme",
        "hydrogen electrolyser pilot demonstration ammonia valley project plant",
        "competitiveness startup cluster manufacturing export skill worker company",
    ],
    "overview": [
        "consultation stakeholder public workshop citizen comment survey hearing",
        "ministry coordination governance committee agency mandate parliament secretariat",
        "regional cooperation neighbour forum baltic visegrad partner dialogue",
    ],
    "impact_assessment": [
        "gdp employment macroeconomic investment growth job output sector",
        "health air pollution emission quality particulate mortality exposure",
        "budget cost benefit scenario model projection sensitivity assumption",
    ],
}

HEADINGS = {
    "decarbonisation": "decarbonisation",
    "energy_efficiency": "energy efficiency",
    "energy_security": "energy security",
    "internal_market": "internal energy market",
    "rni_competitiveness": "research, innovation and competitiveness",
}

NORDIC = ["DK", "FI", "SE"]
CENTRAL = ["CZ", "HU", "PL"]
FILLER = ["the", "and", "of", "to", "in", "with", "for"]
SECTION_DRIFT = {"objectives": 0, "policies": 1, "current_situation": 2}

# Topic weights per group; rows follow POOLS order.
PROFILES = {
    "nordic": {
        "decarbonisation": [5, 4, 3, 0.3, 2],
        "energy_efficiency": [4, 1, 2, 4, 1],
        "energy_security": [1, 3, 1],
        "internal_market": [3, 1, 3],
        "rni_competitiveness": [3, 4, 1],
        "overview": [3, 1, 3],
        "impact_assessment": [1, 3, 2],
    },
    "central": {
        "decarbonisation": [1, 1, 1, 5, 3],
        "energy_efficiency": [2, 4, 1, 2, 4],
        "energy_security": [5, 3, 3],
        "internal_market": [1, 4, 1],
        "rni_competitiveness": [1, 1, 4],
        "overview": [1, 4, 2],
        "impact_assessment": [4, 1, 2],
    },
}


def mixture(rng, weights, jitter):
    raw = [rng.gammavariate(w * jitter + 0.05, 1.0) for w in weights]
    total = sum(raw)
    return [x / total for x in raw]


def paragraph(rng, pools, weights, n_tokens):
    words = []
    while len(words) < n_tokens:
        k = rng.choices(range(len(pools)), weights=weights)[0]
        pool = pools[k].split()
        w = rng.choice(pool)
        words.append(w)
        if rng.random() < 0.25:
            words.append(rng.choice(FILLER))
    sentences = []
    for i in range(0, len(words), 9):
        chunk = words[i : i + 9]
        sentences.append(" ".join([chunk[0].capitalize()] + chunk[1:]) + ".")
    lines = []
    for i in range(0, len(sentences), 4):
        lines.append(" ".join(sentences[i : i + 4]))
    return "\n".join(lines)


def section_text(rng, country, subset, section):
    group = "nordic" if country in NORDIC else "central"
    base = PROFILES[group][subset]
    # sections of one plan share the national profile; each section
    # stresses a different topic a little
    drift = SECTION_DRIFT.get(section)
    weighted = [w * (1.5 if drift is not None and i == drift % len(base) else 1.0) for i, w in enumerate(base)]
    weights = mixture(rng, weighted, 2.0)
    return paragraph(rng, POOLS[subset], weights, rng.randint(110, 160))


def plan(rng, country):
    out = [f"National energy and climate plan of {country}", "", "SECTION A: NATIONAL PLAN", ""]
    out += ["1. Overview and process for establishing the plan", section_text(rng, country, "overview", "x"), ""]
    out += ["2. National objectives and targets", ""]
    for i, (subset, name) in enumerate(HEADINGS.items(), start=1):
        out += [f"2.{i}. Dimension {name}", section_text(rng, country, subset, "objectives"), ""]
    out += ["3. Policies and measures", ""]
    for i, (subset, name) in enumerate(HEADINGS.items(), start=1):
        out += [f"3.{i}. Dimension {name}", section_text(rng, country, subset, "policies"), ""]
    out += ["4. Current situation and projections with existing policies and measures", ""]
    out += [
        "4.1. Projected evolution of main exogenous factors influencing energy system and GHG emission developments",
        "Population and economic growth projections follow the national statistics office baseline.",
        "",
    ]
    for i, (subset, name) in enumerate(HEADINGS.items(), start=2):
        if country == "HU" and subset == "energy_security":
            continue
        out += [f"4.{i}. Dimension {name}", section_text(rng, country, subset, "current_situation"), ""]
    out += ["5. Impact assessment of planned policies and measures", section_text(rng, country, "impact_assessment", "x"), ""]
    return "\n".join(out)


INDICATORS = ["greenhouse", "renewable_energy", "primary_energy", "final_energy", "electricity"]


def indicators(rng):
    rows = []
    for c in sorted(NORDIC + CENTRAL):
        nordic = c in NORDIC
        for ind in INDICATORS:
            if c == "PL" and ind == "electricity":
                rows.append((c, ind, 2030, ""))
                continue
            centre = {"greenhouse": -40 if nordic else -10, "renewable_energy": 50 if nordic else 23}.get(ind, -20 if nordic else -8)
            rows.append((c, ind, 2030, f"{centre + rng.uniform(-6, 6):.1f}"))
    return rows


CONFIG = """# Six-country synthetic corpus. Paths are relative to this file.
seed = 42
indicators = "indicators.csv"

[corpus]
plans = [
{plans}
]

[lda]
alpha = 50.0
eta = "auto"
iterations = 1000
burn_in = 300

[subsets.decarbonisation]
num_topics = 5

[subsets.energy_efficiency]
num_topics = 5

[subsets.energy_security]
num_topics = 3

[subsets.internal_market]
num_topics = 3

[subsets.rni_competitiveness]
num_topics = 3

[subsets.overview]
num_topics = 3

[subsets.impact_assessment]
num_topics = 3

[coherence]
metric = "cv"

[tsne]
perplexity = 8.0
seed = 42

[interpretation]
lambda = 0.6

[namer]
backend = "passthrough"
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data" / "mini")
    ap.add_argument("--seed", type=int, default=2019)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    (args.out / "plans").mkdir(parents=True, exist_ok=True)
    countries = sorted(NORDIC + CENTRAL)
    for c in countries:
        (args.out / "plans" / f"{c}.txt").write_text(plan(rng, c) + "\n")
    with open(args.out / "indicators.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["country", "indicator", "year", "value"])
        w.writerows(indicators(rng))
    plans = ",\n".join(f'  {{ country = "{c}", path = "plans/{c}.txt" }}' for c in countries)
    (args.out / "config.toml").write_text(CONFIG.replace("{plans}", plans))


if __name__ == "__main__":
    main()
