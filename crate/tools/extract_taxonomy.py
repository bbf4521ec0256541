#!/usr/bin/env python3
"""Write the hypernym closure of a vocabulary's synsets as taxonomy TSV.

Usage: extract_taxonomy.py VOCAB_JSON OUT_TSV

Needs a WordNet 3.0 reader; the `wn==0.0.23` package bundles the data.
Each output line is `synset_id<TAB>lemma|lemma<TAB>hypernym,hypernym`.
Instance hypernyms are treated like ordinary hypernyms.
"""
import json
import sys

from wn import WordNet


def main(vocab_path, out_path):
    wordnet = WordNet()
    with open(vocab_path, encoding="utf-8") as f:
        vocab = json.load(f)
    pending = [c["synset_id"] for c in vocab if c.get("synset_id")]
    seen = {}
    while pending:
        sid = pending.pop()
        if sid in seen:
            continue
        synset = wordnet.synset(sid)
        parents = sorted(h.name() for h in synset.hypernyms() + synset.instance_hypernyms())
        seen[sid] = (synset.lemma_names(), parents)
        pending.extend(parents)
    with open(out_path, "w", encoding="utf-8") as out:
        out.write("# WordNet 3.0 hypernym closure of %s\n" % vocab_path.rsplit("/", 1)[-1])
        for sid in sorted(seen):
            lemmas, parents = seen[sid]
            out.write("%s\t%s\t%s\n" % (sid, "|".join(lemmas), ",".join(parents)))


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2])
