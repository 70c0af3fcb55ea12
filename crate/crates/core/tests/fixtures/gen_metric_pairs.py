"""Regenerates metric_pairs.json with NLTK as the reference scorer.

    python3 gen_metric_pairs.py > metric_pairs.json
"""
import json
import random

from nltk.stem.snowball import SnowballStemmer
from nltk.translate.bleu_score import SmoothingFunction, corpus_bleu, sentence_bleu
from nltk.translate.meteor_score import single_meteor_score
from nltk.translate.nist_score import corpus_nist


class NoWordnet:
    def synsets(self, _word):
        return []


WORDS = (
    "a the of cell cells membrane membranes protein proteins binding bind binds "
    "process processes regulation regulating regulates activity active tissue "
    "tissues organ formation forming formed gene genes expression expressed "
    "small large any that which is in by from to development developing"
).split()


def sentence(rng):
    return [rng.choice(WORDS) for _ in range(rng.randint(1, 14))]


def mutate(rng, ref):
    out = list(ref)
    for _ in range(rng.randint(0, 5)):
        op = rng.random()
        if op < 0.3 and out:
            out.pop(rng.randrange(len(out)))
        elif op < 0.6:
            out.insert(rng.randint(0, len(out)), rng.choice(WORDS))
        elif out:
            out[rng.randrange(len(out))] = rng.choice(WORDS)
    return out or [rng.choice(WORDS)]


def main():
    rng = random.Random(7)
    smooth = SmoothingFunction(epsilon=1e-9).method1
    stemmer = SnowballStemmer("english")
    weights = [(1.0,), (0.5, 0.5), (1 / 3, 1 / 3, 1 / 3), (0.25, 0.25, 0.25, 0.25)]
    pairs = []
    for _ in range(50):
        ref = sentence(rng)
        cand = mutate(rng, ref)
        pairs.append(
            {
                "reference": ref,
                "candidate": cand,
                "bleu": [
                    sentence_bleu([ref], cand, weights=w, smoothing_function=smooth)
                    for w in weights
                ],
                "meteor": single_meteor_score(ref, cand, stemmer=stemmer, wordnet=NoWordnet()),
            }
        )
    refs = [[p["reference"]] for p in pairs]
    cands = [p["candidate"] for p in pairs]
    out = {
        "pairs": pairs,
        "corpus_bleu": [corpus_bleu(refs, cands, weights=w) for w in weights],
        "corpus_nist": corpus_nist(refs, cands, n=5),
    }
    print(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
