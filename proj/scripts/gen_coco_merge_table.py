#!/usr/bin/env python3
"""Regenerates the COCO fine-to-coarse merge table artifacts.

Writes data/coco_fine_to_coarse.txt (the pinned two-column table) and
src/coco_merge_table.inc (the identical compiled-in copy) from the
supercategory hierarchy below. Fine ids are the values stored in the
annotation PNGs: label id minus one, so 0..90 are things and 91..181 stuff;
255 stays the ignore value and is not listed.
"""

import os

THING_COARSE = [
    "accessory", "animal", "appliance", "electronic", "food", "furniture",
    "indoor", "kitchen", "outdoor", "person", "sports", "vehicle",
]
STUFF_COARSE = [
    "building", "ceiling", "floor", "food-stuff", "furniture-stuff", "ground",
    "plant", "rawmaterial", "sky", "solid", "structural", "textile", "wall",
    "water", "window",
]
COARSE_ID = {name: i for i, name in enumerate(THING_COARSE)}
COARSE_ID.update({name: len(THING_COARSE) + i for i, name in enumerate(STUFF_COARSE)})

# label id (1-based) -> (fine name, coarse supercategory)
FINE = {
    1: ("person", "person"),
    2: ("bicycle", "vehicle"), 3: ("car", "vehicle"), 4: ("motorcycle", "vehicle"),
    5: ("airplane", "vehicle"), 6: ("bus", "vehicle"), 7: ("train", "vehicle"),
    8: ("truck", "vehicle"), 9: ("boat", "vehicle"),
    10: ("traffic light", "outdoor"), 11: ("fire hydrant", "outdoor"),
    12: ("street sign", "outdoor"), 13: ("stop sign", "outdoor"),
    14: ("parking meter", "outdoor"), 15: ("bench", "outdoor"),
    16: ("bird", "animal"), 17: ("cat", "animal"), 18: ("dog", "animal"),
    19: ("horse", "animal"), 20: ("sheep", "animal"), 21: ("cow", "animal"),
    22: ("elephant", "animal"), 23: ("bear", "animal"), 24: ("zebra", "animal"),
    25: ("giraffe", "animal"),
    26: ("hat", "accessory"), 27: ("backpack", "accessory"), 28: ("umbrella", "accessory"),
    29: ("shoe", "accessory"), 30: ("eye glasses", "accessory"), 31: ("handbag", "accessory"),
    32: ("tie", "accessory"), 33: ("suitcase", "accessory"),
    34: ("frisbee", "sports"), 35: ("skis", "sports"), 36: ("snowboard", "sports"),
    37: ("sports ball", "sports"), 38: ("kite", "sports"), 39: ("baseball bat", "sports"),
    40: ("baseball glove", "sports"), 41: ("skateboard", "sports"),
    42: ("surfboard", "sports"), 43: ("tennis racket", "sports"),
    44: ("bottle", "kitchen"), 45: ("plate", "kitchen"), 46: ("wine glass", "kitchen"),
    47: ("cup", "kitchen"), 48: ("fork", "kitchen"), 49: ("knife", "kitchen"),
    50: ("spoon", "kitchen"), 51: ("bowl", "kitchen"),
    52: ("banana", "food"), 53: ("apple", "food"), 54: ("sandwich", "food"),
    55: ("orange", "food"), 56: ("broccoli", "food"), 57: ("carrot", "food"),
    58: ("hot dog", "food"), 59: ("pizza", "food"), 60: ("donut", "food"),
    61: ("cake", "food"),
    62: ("chair", "furniture"), 63: ("couch", "furniture"), 64: ("potted plant", "furniture"),
    65: ("bed", "furniture"), 66: ("mirror", "furniture"), 67: ("dining table", "furniture"),
    68: ("window", "furniture"), 69: ("desk", "furniture"), 70: ("toilet", "furniture"),
    71: ("door", "furniture"),
    72: ("tv", "electronic"), 73: ("laptop", "electronic"), 74: ("mouse", "electronic"),
    75: ("remote", "electronic"), 76: ("keyboard", "electronic"),
    77: ("cell phone", "electronic"),
    78: ("microwave", "appliance"), 79: ("oven", "appliance"), 80: ("toaster", "appliance"),
    81: ("sink", "appliance"), 82: ("refrigerator", "appliance"), 83: ("blender", "appliance"),
    84: ("book", "indoor"), 85: ("clock", "indoor"), 86: ("vase", "indoor"),
    87: ("scissors", "indoor"), 88: ("teddy bear", "indoor"), 89: ("hair drier", "indoor"),
    90: ("toothbrush", "indoor"), 91: ("hair brush", "indoor"),
    92: ("banner", "textile"), 93: ("blanket", "textile"), 94: ("branch", "plant"),
    95: ("bridge", "building"), 96: ("building-other", "building"), 97: ("bush", "plant"),
    98: ("cabinet", "furniture-stuff"), 99: ("cage", "structural"),
    100: ("cardboard", "rawmaterial"), 101: ("carpet", "floor"),
    102: ("ceiling-other", "ceiling"), 103: ("ceiling-tile", "ceiling"),
    104: ("cloth", "textile"), 105: ("clothes", "textile"), 106: ("clouds", "sky"),
    107: ("counter", "furniture-stuff"), 108: ("cupboard", "furniture-stuff"),
    109: ("curtain", "textile"), 110: ("desk-stuff", "furniture-stuff"),
    111: ("dirt", "ground"), 112: ("door-stuff", "furniture-stuff"),
    113: ("fence", "structural"), 114: ("floor-marble", "floor"),
    115: ("floor-other", "floor"), 116: ("floor-stone", "floor"),
    117: ("floor-tile", "floor"), 118: ("floor-wood", "floor"),
    119: ("flower", "plant"), 120: ("fog", "water"),
    121: ("food-other", "food-stuff"), 122: ("fruit", "food-stuff"),
    123: ("furniture-other", "furniture-stuff"), 124: ("grass", "plant"),
    125: ("gravel", "ground"), 126: ("ground-other", "ground"),
    127: ("hill", "solid"), 128: ("house", "building"), 129: ("leaves", "plant"),
    130: ("light", "furniture-stuff"), 131: ("mat", "textile"),
    132: ("metal", "rawmaterial"), 133: ("mirror-stuff", "furniture-stuff"),
    134: ("moss", "plant"), 135: ("mountain", "solid"), 136: ("mud", "ground"),
    137: ("napkin", "textile"), 138: ("net", "structural"),
    139: ("paper", "rawmaterial"), 140: ("pavement", "ground"),
    141: ("pillow", "textile"), 142: ("plant-other", "plant"),
    143: ("plastic", "rawmaterial"), 144: ("platform", "ground"),
    145: ("playingfield", "ground"), 146: ("railing", "structural"),
    147: ("railroad", "ground"), 148: ("river", "water"), 149: ("road", "ground"),
    150: ("rock", "solid"), 151: ("roof", "building"), 152: ("rug", "textile"),
    153: ("salad", "food-stuff"), 154: ("sand", "ground"), 155: ("sea", "water"),
    156: ("shelf", "furniture-stuff"), 157: ("sky-other", "sky"),
    158: ("skyscraper", "building"), 159: ("snow", "ground"),
    160: ("solid-other", "solid"), 161: ("stairs", "furniture-stuff"),
    162: ("stone", "solid"), 163: ("straw", "plant"),
    164: ("structural-other", "structural"), 165: ("table", "furniture-stuff"),
    166: ("tent", "building"), 167: ("textile-other", "textile"),
    168: ("towel", "textile"), 169: ("tree", "plant"),
    170: ("vegetable", "food-stuff"),
    171: ("wall-brick", "wall"), 172: ("wall-concrete", "wall"),
    173: ("wall-other", "wall"), 174: ("wall-panel", "wall"),
    175: ("wall-stone", "wall"), 176: ("wall-tile", "wall"),
    177: ("wall-wood", "wall"),
    178: ("water-other", "water"), 179: ("waterdrops", "water"),
    180: ("window-blind", "window"), 181: ("window-other", "window"),
    182: ("wood", "solid"),
}


def main():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    assert sorted(FINE) == list(range(1, 183)), "fine table must cover ids 1..182"
    for label_id, (_, coarse) in FINE.items():
        thing = label_id <= 91
        assert (COARSE_ID[coarse] < len(THING_COARSE)) == thing, (label_id, coarse)

    rows = [(label_id - 1, COARSE_ID[coarse], name, coarse)
            for label_id, (name, coarse) in sorted(FINE.items())]

    txt = os.path.join(root, "data", "coco_fine_to_coarse.txt")
    os.makedirs(os.path.dirname(txt), exist_ok=True)
    with open(txt, "w") as f:
        f.write("# COCO-Stuff fine id (as stored in annotation PNGs: label id - 1)\n")
        f.write("# to 27-way coarse id. Coarse ids 0-11 are things, 12-26 stuff:\n")
        for i, name in enumerate(THING_COARSE + STUFF_COARSE):
            f.write(f"#   {i} = {name}\n")
        f.write("# fine_id coarse_id  (fine name / coarse name)\n")
        for fine, coarse, name, cname in rows:
            f.write(f"{fine} {coarse}  # {name} -> {cname}\n")

    inc = os.path.join(root, "src", "coco_merge_table.inc")
    with open(inc, "w") as f:
        f.write("// Generated by scripts/gen_coco_merge_table.py; keep in sync with\n")
        f.write("// data/coco_fine_to_coarse.txt (a unit test compares them).\n")
        f.write("static constexpr int kCocoFineToCoarse[182] = {\n")
        for start in range(0, 182, 14):
            chunk = [str(c) for _, c, _, _ in rows[start:start + 14]]
            f.write("    " + ", ".join(chunk) + ",\n")
        f.write("};\n")
    print(f"wrote {txt} and {inc}")


if __name__ == "__main__":
    main()
