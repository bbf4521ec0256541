#!/usr/bin/env python3
"""Regenerate the small fixture corpus under crates/core/data/fixtures.

Usage: make_fixtures.py OUT_DIR

The corpus is synthetic: 100 images, five English captions per image in
Flickr30K token format, five independently written German caption sets in
Multi30K aligned format, and one human-translated German set. Object
mentions are planted so that English mentions outnumber German ones.
Recognition score tables, identity embeddings, a human-evaluation sheet and
a few recorded provider replies are derived from the same scenes.
"""
import json
import os
import random
import sys

N_IMAGES = 100

# (english, english plural, german, german plural, gender, coco class)
SUBJECTS = [
    ("man", "men", "Mann", "Männer", "m", "person"),
    ("woman", "women", "Frau", "Frauen", "f", "person"),
    ("boy", "boys", "Junge", "Jungen", "m", "person"),
    ("girl", "girls", "Mädchen", "Mädchen", "n", "person"),
    ("dog", "dogs", "Hund", "Hunde", "m", "dog"),
    ("cat", "cats", "Katze", "Katzen", "f", "cat"),
    ("horse", "horses", "Pferd", "Pferde", "n", "horse"),
]
OBJECTS = [
    ("ball", "Ball", "m", "sports ball"),
    ("bicycle", "Fahrrad", "n", "bicycle"),
    ("car", "Auto", "n", "car"),
    ("boat", "Boot", "n", "boat"),
    ("umbrella", "Regenschirm", "m", "umbrella"),
    ("kite", "Drachen", "m", "kite"),
    ("table", "Tisch", "m", "dining table"),
    ("cup", "Tasse", "f", "cup"),
    ("book", "Buch", "n", "book"),
    ("bottle", "Flasche", "f", "bottle"),
    ("skateboard", "Skateboard", "n", "skateboard"),
    ("surfboard", "Surfbrett", "n", "surfboard"),
    ("bus", "Bus", "m", "bus"),
    ("pizza", "Pizza", "f", "pizza"),
    ("chair", "Stuhl", "m", "chair"),
    ("cake", "Kuchen", "m", "cake"),
    ("laptop", "Laptop", "m", "laptop"),
    ("phone", "Handy", "n", "cell phone"),
    ("frisbee", "Frisbee", "n", "frisbee"),
]
PLACES = [
    ("in the park", "im Park"),
    ("on the street", "auf der Straße"),
    ("at the beach", "am Strand"),
    ("in a kitchen", "in einer Küche"),
    ("near the river", "am Fluss"),
    ("in the snow", "im Schnee"),
]
GERMAN_VOCAB = [
    ("person", ["mann", "frau", "junge", "mädchen", "kind", "person", "leute", "menschen"], ["männer", "frauen", "jungen", "kinder", "personen"], "person", True),
    ("dog", ["hund"], ["hunde"], "animal", False),
    ("cat", ["katze"], ["katzen"], "animal", False),
    ("horse", ["pferd"], ["pferde"], "animal", False),
    ("sports ball", ["ball"], ["bälle"], "sports", False),
    ("bicycle", ["fahrrad", "rad"], ["fahrräder"], "vehicle", False),
    ("car", ["auto", "wagen"], ["autos"], "vehicle", False),
    ("boat", ["boot"], ["boote"], "vehicle", False),
    ("umbrella", ["regenschirm", "schirm"], ["regenschirme"], "accessory", False),
    ("kite", ["drachen"], [], "sports", False),
    ("dining table", ["tisch"], ["tische"], "furniture", False),
    ("cup", ["tasse"], ["tassen"], "kitchen", False),
    ("book", ["buch"], ["bücher"], "indoor", False),
    ("bottle", ["flasche"], ["flaschen"], "kitchen", False),
    ("skateboard", ["skateboard"], [], "sports", False),
    ("surfboard", ["surfbrett"], ["surfbretter"], "sports", False),
    ("bus", ["bus"], ["busse"], "vehicle", False),
    ("pizza", ["pizza"], ["pizzen"], "food", False),
    ("chair", ["stuhl"], ["stühle"], "furniture", False),
    ("cake", ["kuchen"], [], "food", False),
    ("laptop", ["laptop"], [], "electronic", False),
    ("cell phone", ["handy", "telefon"], ["handys"], "electronic", False),
    ("frisbee", ["frisbee"], [], "sports", False),
]


def article(word, gender, case):
    if case == "nom":
        return ("Eine " if gender == "f" else "Ein ") + word
    return ("einer " if gender == "f" else "einem ") + word


def scene(rng):
    subj = rng.choice(SUBJECTS)
    obj = rng.choice(OBJECTS)
    place = rng.choice(PLACES)
    return subj, obj, place


def english_captions(subj, obj, place):
    s, spl = subj[0], subj[1]
    o = obj[0]
    return [
        f"A {s} with a {o} {place[0]}.",
        f"The {s} stands next to a {o}.",
        f"Two {spl} and a {o} {place[0]}.",
        f"A {s} is looking at the {o} {place[0]}.",
        f"Someone enjoys the afternoon {place[0]}.",
    ]


def german_captions(subj, obj, place):
    s, spl, g = subj[2], subj[3], subj[4]
    o, og = obj[1], obj[2]
    return [
        f"{article(s, g, 'nom')} mit {article(o, og, 'dat')} {place[1]}.",
        f"{article(s, g, 'nom')} {place[1]}.",
        f"Zwei {spl} {place[1]}.",
        f"{article(s, g, 'nom')} schaut auf etwas {place[1]}.",
        f"Ein schöner Nachmittag {place[1]}.",
    ]


def german_ht(subj, obj, place):
    s, g = subj[2], subj[4]
    return f"{article(s, g, 'nom')} mit {article(obj[1], obj[2], 'dat')} {place[1]}."


def main(out):
    os.makedirs(out, exist_ok=True)
    rng = random.Random(20240917)
    images = [f"img{i:03d}.jpg" for i in range(N_IMAGES)]
    scenes = [scene(rng) for _ in images]

    with open(os.path.join(out, "flickr_en.token"), "w", encoding="utf-8") as f:
        for img, sc in zip(images, scenes):
            for n, cap in enumerate(english_captions(*sc)):
                f.write(f"{img}#{n}\t{cap}\n")
    with open(os.path.join(out, "image_ids.txt"), "w", encoding="utf-8") as f:
        f.write("".join(i + "\n" for i in images))
    for n in range(5):
        with open(os.path.join(out, f"de_native_{n}.txt"), "w", encoding="utf-8") as f:
            f.write("".join(german_captions(*sc)[n] + "\n" for sc in scenes))
    with open(os.path.join(out, "de_ht.txt"), "w", encoding="utf-8") as f:
        f.write("".join(german_ht(*sc) + "\n" for sc in scenes))

    vocab = [
        dict(name=n, synonyms=s, plurals=p, synset_id=None, supercategory=sc, is_person=ip, sense_blocklist=[])
        for n, s, p, sc, ip in GERMAN_VOCAB
    ]
    with open(os.path.join(out, "de_vocab.json"), "w", encoding="utf-8") as f:
        json.dump(vocab, f, indent=1, ensure_ascii=False)
        f.write("\n")

    # native German truth: the subject always, the object only via set 0
    classes = [c[0] for c in GERMAN_VOCAB if c[0] != "person"]
    truth = [{sc[0][5], sc[1][3]} - {"person"} for sc in scenes]
    score_rng = random.Random(7)

    def score_table(path, idx):
        with open(path, "w", encoding="utf-8") as f:
            f.write("image_id," + ",".join(classes) + "\n")
            for i in idx:
                row = []
                for c in classes:
                    if c in truth[i]:
                        v = score_rng.uniform(24.0, 44.0)
                    elif score_rng.random() < 0.1:
                        v = score_rng.uniform(18.0, 32.0)
                    else:
                        v = score_rng.uniform(0.0, 22.0)
                    row.append(f"{v:.2f}")
                f.write(images[i] + "," + ",".join(row) + "\n")

    score_table(os.path.join(out, "recognition_val.csv"), range(0, 30))
    score_table(os.path.join(out, "recognition_test.csv"), range(30, N_IMAGES))

    ident = list(range(85, N_IMAGES))
    dim = len(ident)
    with open(os.path.join(out, "identity_images.tsv"), "w", encoding="utf-8") as f:
        f.write(f"{dim}\t{dim}\n")
        for k, i in enumerate(ident):
            f.write(images[i] + "\t" + ",".join("1" if j == k else "0" for j in range(dim)) + "\n")
    with open(os.path.join(out, "identity_captions.tsv"), "w", encoding="utf-8") as f:
        f.write(f"{dim * 5}\t{dim}\n")
        for n in range(5):
            for k, i in enumerate(ident):
                f.write(f"{images[i]}:de:native:{n}\t" + ",".join("1" if j == k else "0" for j in range(dim)) + "\n")

    sheets = {"ENG2GER-HT": (76, 21, 3), "ENG2GER-MT": (39, 38, 23), "PARA-TGT": (40, 39, 21)}
    with open(os.path.join(out, "human_eval.csv"), "w", encoding="utf-8") as f:
        f.write("set_label,caption_id,rater,score\n")
        for label, (great, good, bad) in sheets.items():
            scores = [3] * great + [2] * good + [1] * bad
            random.Random(label).shuffle(scores)
            for k, s in enumerate(scores):
                f.write(f"{label},{images[k]}:de:eval,r{k % 2 + 1},{s}\n")

    meta = {"backend_name": "recorded", "model_name": "opus-mt-en-de", "settings": {"decoding": "greedy", "max_new_tokens": 40}}
    recordings = [
        {"capability": "translate", "payload": {"src_lang": "en", "tgt_lang": "de", "text": "A dog runs."}, "body": {"text": "Ein Hund rennt."}, "meta": meta},
        {"capability": "translate", "payload": {"src_lang": "en", "tgt_lang": "de", "text": "Two dogs play."}, "body": {"text": "Zwei Hunde spielen."}, "meta": meta},
        {"capability": "embed_text", "payload": {"text": "A dog runs."}, "body": {"vector": [0.6, 0.8, 0.0]}},
        {"capability": "embed_image", "payload": {"image_id": "img000.jpg"}, "body": {"vector": [0.6, 0.8, 0.0]}},
    ]
    with open(os.path.join(out, "recordings.jsonl"), "w", encoding="utf-8") as f:
        for r in recordings:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    main(sys.argv[1])
