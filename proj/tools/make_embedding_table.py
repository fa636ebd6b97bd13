#!/usr/bin/env python3
"""Writes data/embeddings/objects-50d.txt, the category embedding table.

Each category is described by graded semantic attributes (what it is, where it
lives in a home, what it is used for, its shape and material). The attribute
vector is mapped to 50 dimensions through a fixed random projection, perturbed
with small per-token noise and L2-normalized, giving word2vec-style vectors
whose cosine geometry follows everyday semantic relatedness. The script is
deterministic; rerunning it reproduces the shipped file byte for byte.
"""

import argparse
import pathlib

import numpy as np

ATTRIBUTES = [
    "food", "produce", "pantry", "kitchen", "cookware", "tableware", "drinkware",
    "handle", "hollow", "liquid", "fabric", "paper", "cleaning", "bathroom",
    "writing", "reading", "electronic", "sport", "heavy", "decor", "flame",
    "garden", "flat", "round", "glass", "metal", "storage", "roll", "dispense",
    "beverage",
]

CATEGORIES = {
    # seen
    "aluminum_foil": dict(kitchen=0.8, metal=0.9, roll=0.8, flat=0.4, cookware=0.2),
    "basketball": dict(sport=1.0, round=1.0),
    "book": dict(reading=1.0, paper=0.8, flat=0.7, writing=0.3),
    "bottle": dict(hollow=0.8, liquid=0.9, drinkware=0.5, kitchen=0.3, glass=0.3),
    "bowl": dict(kitchen=0.8, tableware=1.0, hollow=0.9, round=0.5, food=0.2),
    "bread": dict(food=1.0, pantry=0.9, kitchen=0.2),
    "candle": dict(decor=0.9, flame=1.0, round=0.2),
    "cloth": dict(fabric=1.0, cleaning=0.7, flat=0.3),
    "cup": dict(kitchen=0.7, drinkware=1.0, hollow=0.8, liquid=0.4),
    "dish_sponge": dict(cleaning=1.0, kitchen=0.5, fabric=0.3),
    "dumbbell": dict(sport=1.0, heavy=1.0, metal=0.6, handle=0.3),
    "egg": dict(food=1.0, pantry=0.6, round=0.5),
    "hand_towel": dict(fabric=1.0, bathroom=0.9, cleaning=0.3),
    "kettle": dict(kitchen=0.9, cookware=0.7, hollow=0.7, liquid=0.7, metal=0.5, handle=0.3, beverage=0.3),
    "laptop": dict(electronic=1.0, writing=0.4, flat=0.7),
    "lettuce": dict(food=1.0, produce=1.0, garden=0.2),
    "newspaper": dict(reading=1.0, paper=1.0, flat=0.6),
    "pen": dict(writing=1.0, handle=0.8),
    "plate": dict(kitchen=0.8, tableware=1.0, flat=0.9, round=0.4),
    "pot": dict(kitchen=0.9, cookware=1.0, hollow=0.9, metal=0.6, round=0.3),
    "potato": dict(food=1.0, produce=1.0, round=0.3),
    "scrub_brush": dict(cleaning=1.0, handle=0.8, bathroom=0.3),
    "soap_dispenser": dict(bathroom=1.0, dispense=1.0, cleaning=0.5, liquid=0.4),
    "spoon": dict(kitchen=0.8, tableware=0.6, handle=1.0, metal=0.6),
    "toilet_paper": dict(bathroom=1.0, paper=0.9, roll=1.0, cleaning=0.2),
    "tomato": dict(food=1.0, produce=1.0, round=0.6, garden=0.2),
    "towel": dict(fabric=1.0, bathroom=0.9, cleaning=0.3),
    "wine_bottle": dict(beverage=1.0, glass=0.9, liquid=0.9, hollow=0.6, pantry=0.4),
    # unseen
    "apple": dict(food=1.0, produce=1.0, round=0.7),
    "box": dict(storage=1.0, paper=0.5, hollow=0.4, flat=0.3, writing=0.2),
    "ladle": dict(kitchen=0.9, cookware=0.4, handle=1.0, metal=0.5, hollow=0.2),
    "mug": dict(kitchen=0.7, drinkware=1.0, hollow=0.8, liquid=0.4, beverage=0.3),
    "pan": dict(kitchen=0.9, cookware=1.0, metal=0.7, handle=0.4, flat=0.3),
    "paper_towel_roll": dict(paper=0.8, roll=1.0, cleaning=0.7, kitchen=0.3),
    "pencil": dict(writing=1.0, handle=0.7),
    "spray_bottle": dict(cleaning=1.0, dispense=0.9, liquid=0.6, bathroom=0.3),
    "vase": dict(decor=1.0, hollow=0.7, glass=0.6, garden=0.4),
    "watering_can": dict(garden=1.0, hollow=0.7, liquid=0.7, handle=0.3, decor=0.3),
}

DIM = 50
SEED = 20230101
NOISE = 0.12


def build(seed=SEED, dim=DIM, noise=NOISE):
    rng = np.random.default_rng(seed)
    projection = rng.standard_normal((len(ATTRIBUTES), dim)) / np.sqrt(len(ATTRIBUTES))
    index = {a: i for i, a in enumerate(ATTRIBUTES)}
    table = {}
    for name in sorted(CATEGORIES):
        attrs = np.zeros(len(ATTRIBUTES))
        for key, value in CATEGORIES[name].items():
            attrs[index[key]] = value
        vec = attrs @ projection + noise * rng.standard_normal(dim)
        table[name] = vec / np.linalg.norm(vec)
    return table


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    root = pathlib.Path(__file__).resolve().parents[1]
    parser.add_argument("--out", type=pathlib.Path, default=root / "data/embeddings/objects-50d.txt")
    args = parser.parse_args()
    table = build()
    lines = [f"{len(table)} {DIM}"]
    for name, vec in table.items():
        lines.append(name + " " + " ".join(f"{x:.6f}" for x in vec))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text("\n".join(lines) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
