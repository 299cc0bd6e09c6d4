"""Regenerates crates/core/data/two_topic_fixture.csv (100 real, 100 fake)."""

import csv
import random
from pathlib import Path

REAL = """parliament minister budget treasury senate committee legislation tariff
exports inflation quarterly economists central interest ministry coalition
reuters spokesman diplomats negotiations sanctions delegation officials
agreement ratified statement bilateral infrastructure revenue deficit
fiscal auditors regulators oversight hearing lawmakers amendment ballot
electoral commission governor provincial municipal contract procurement
pension subsidies manufacturing shipments logistics pipeline refinery
harvest exporters currency bonds yields lending banking insurers""".split()

FAKE = """shocking secret hoax celebrity miracle exposed bombshell conspiracy
cover scandal viral outrage insiders leaked hidden truth globalist elites
cabal aliens chemtrails vaccine microchip psychic prophecy reptilian
cure doctors hate trick unbelievable jaw dropping epic meltdown destroyed
slams humiliates unhinged deranged caught camera photos proof whistleblower
anonymous sources claim rumor frenzy hysteria panic apocalypse doomsday
illuminati banned censored suppressed wake sheeple exposed stunning""".split()

SHARED = "said week year people country report today news people world time".split()


def document(rng, pool):
    words = [rng.choice(pool) if rng.random() < 0.85 else rng.choice(SHARED) for _ in range(rng.randint(100, 150))]
    return " ".join(words).capitalize() + "."


def main():
    rng = random.Random(20240601)
    rows = [(document(rng, REAL), 1) for _ in range(100)] + [(document(rng, FAKE), 0) for _ in range(100)]
    rng.shuffle(rows)
    out = Path(__file__).resolve().parent.parent / "crates/core/data/two_topic_fixture.csv"
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["text", "label"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
