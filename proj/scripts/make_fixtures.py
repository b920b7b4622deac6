#!/usr/bin/env python3
"""Regenerates the bundled hypothesis fixtures and the synthetic model.

The fixtures imitate sampled recognizer output: each utterance has a
high-probability "mode" transcript (what beam search returns) and a noisy
channel around the reference that produces the remaining samples. In a
share of utterances the mode carries a recognition error the samples mostly
do not share.

    python3 scripts/make_fixtures.py            # writes under data/
"""

import hashlib
import json
import math
import os
import random
import unicodedata

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")
DATA = os.path.join(ROOT, "data")

N_SAMPLES = 64

EN_WORDS = """
the of and to a in that he was it his her with as for had you not be she on at by
which have from this him but all they were my one said there so no an when we what
their been out up into more like if then them could would time only little upon some
very about great man old before well made over long day any other these good see
house down came know first after such must went much own way come back never eyes
young night life away again here thought face mother father room take hand nothing
head last without once through tell might left heard under think something door
against still light people world whole morning water look found while place morning
children years voice word whom among half poor told open many round since
colour favourite neighbour honour centre theatre grey realised travelled programme
mr mrs dr don't can't won't i'm you're they're we'll i've let's
""".split()

CONFUSIONS = {}


def confusable(rng, word):
    """A stable set of plausible mis-recognitions for a word."""
    if word not in CONFUSIONS:
        h = random.Random(int(hashlib.sha256(word.encode()).hexdigest()[:12], 16))
        opts = [w for w in EN_WORDS if w != word and (w[0] == word[0] or len(w) == len(word))]
        h.shuffle(opts)
        variants = opts[:2]
        if len(word) > 3:
            variants.append(word + "s" if not word.endswith("s") else word[:-1])
        CONFUSIONS[word] = variants or [h.choice(EN_WORDS)]
    return rng.choice(CONFUSIONS[word])


def surface_en(words, rng, canonical):
    """Raw text with casing and punctuation. canonical=True is the form the
    mode and the most likely channel output use."""
    text = " ".join(words)
    if canonical:
        return text[:1].upper() + text[1:] + "."
    r = rng.random()
    if r < 0.35:
        text = text[:1].upper() + text[1:] + "."
    elif r < 0.6:
        text = text[:1].upper() + text[1:]
    elif r < 0.8:
        text = text + "."
    else:
        k = rng.randrange(1, max(2, len(words)))
        ws = list(words)
        ws[k - 1] = ws[k - 1] + ","
        text = " ".join(ws)
        text = text[:1].upper() + text[1:] + "."
    return text


def channel(rng, ref, p_sub, p_del, p_ins, confuse, vocab):
    """Word- (or char-) level noisy copy; returns tokens and path log-prob."""
    out, lp = [], 0.0
    p_keep = 1.0 - p_sub - p_del
    for w in ref:
        r = rng.random()
        if r < p_sub:
            out.append(confuse(rng, w))
            lp += math.log(p_sub / 3)
        elif r < p_sub + p_del:
            lp += math.log(p_del)
        else:
            out.append(w)
            lp += math.log(p_keep)
        if rng.random() < p_ins:
            out.append(rng.choice(vocab))
            lp += math.log(p_ins / len(vocab))
        else:
            lp += math.log(1 - p_ins)
    if not out:
        out = [ref[0]]
    return out, lp


def word_vector(word, dim=32):
    h = random.Random(int(hashlib.sha256(word.encode()).hexdigest()[:12], 16))
    v = [h.gauss(0, 1) for _ in range(dim)]
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def norm_words(text):
    t = unicodedata.normalize("NFKC", text).lower()
    t = "".join(c if (c.isalnum() or c == "'") else " " for c in t)
    return t.split()


def embed(text, dim=32):
    v = [0.0] * dim
    for i, w in enumerate(norm_words(text)):
        wv = word_vector(w, dim)
        pos = 1.0 / (1.0 + 0.05 * i)
        v = [a + pos * b for a, b in zip(v, wv)]
    if not any(v):
        v[0] = 1.0
    return v


def write_jsonl(path, sets):
    with open(path, "w", encoding="utf-8") as f:
        for s in sets:
            f.write(json.dumps(s, ensure_ascii=False, separators=(",", ":")) + "\n")


def make_utterance(rng, uid, ref_tokens, surface, confuse, vocab, rates, mode_error_share):
    """Samples, log-probs and beam lists for one utterance."""
    p_sub, p_del, p_ins = rates
    m = rng.uniform(0.15, 0.4)
    mode_tokens = list(ref_tokens)
    if rng.random() < mode_error_share:
        k = rng.randrange(len(mode_tokens))
        if rng.random() < 0.8 or len(mode_tokens) < 3:
            mode_tokens[k] = confuse(rng, mode_tokens[k])
        else:
            del mode_tokens[k]
    # Systematic errors: positions most samples (and the mode) get wrong.
    hard = {k: confuse(rng, w) for k, w in enumerate(ref_tokens) if rng.random() < 0.04}
    for k, w in hard.items():
        if k < len(mode_tokens) and mode_tokens[k] == ref_tokens[k]:
            mode_tokens[k] = w
    mode_text = surface(mode_tokens, rng, True)

    def lm_score(tokens):
        ref_set = set(ref_tokens)
        bad = sum(1 for t in tokens if t not in ref_set) + abs(len(tokens) - len(ref_tokens))
        return -2.0 * bad - 0.1 * len(tokens) + rng.gauss(0, 0.5)

    hyps = []
    seen = {}
    for _ in range(N_SAMPLES):
        if rng.random() < m:
            toks, text, lp = mode_tokens, mode_text, math.log(m)
        else:
            heard = [hard[k] if k in hard and rng.random() < 0.75 else w for k, w in enumerate(ref_tokens)]
            toks, lp = channel(rng, heard, p_sub, p_del, p_ins, confuse, vocab)
            canonical = rng.random() < 0.5
            text = surface(toks, rng, canonical)
            lp += math.log(0.5 if canonical else 0.5 * 0.25)
            lp = math.log1p(-m) + lp
            if text == mode_text:
                lp = math.log(m + math.exp(lp))
        if text in seen:
            lp = seen[text]["log_prob"]
            llm = seen[text]["external_scores"]["llm_score"]
        else:
            llm = lm_score(toks)
        h = {
            "text": text,
            "log_prob": lp,
            "token_count": len(toks) + 1,
            "external_scores": {"asr_score": lp, "llm_score": llm},
        }
        seen.setdefault(text, h)
        hyps.append(h)

    distinct = sorted(seen.values(), key=lambda h: -h["log_prob"])
    if distinct[0]["text"] != mode_text and mode_text in seen:
        distinct.remove(seen[mode_text])
        distinct.insert(0, seen[mode_text])
    beams = {}
    for b in (1, 5, 20):
        beams[b] = [{"text": h["text"], "log_prob": h["log_prob"], "token_count": h["token_count"]}
                    for h in distinct[:b]]
    if mode_text not in seen:
        for b in beams:
            beams[b][0] = {"text": mode_text, "log_prob": math.log(m), "token_count": len(mode_tokens) + 1}
    return {"utterance_id": uid, "hypotheses": hyps}, beams


def make_en(out_dir, n_utts=100, seed=7):
    rng = random.Random(seed)
    os.makedirs(out_dir, exist_ok=True)
    manifest, sets, beam_sets, texts = [], [], {1: [], 5: [], 20: []}, set()
    for i in range(n_utts):
        uid = "en-%04d" % i
        length = rng.randint(4, 34)
        ref = [rng.choice(EN_WORDS) for _ in range(length)]
        ref_text = surface_en(ref, rng, True)
        rates = (rng.uniform(0.02, 0.08), rng.uniform(0.0, 0.02), rng.uniform(0.0, 0.02))
        hs, beams = make_utterance(rng, uid, ref, surface_en, confusable, EN_WORDS, rates, 0.55)
        manifest.append((uid, "", ref_text, "en"))
        sets.append(hs)
        for b in beams:
            beam_sets[b].append({"utterance_id": uid, "hypotheses": beams[b]})
        texts.add(ref_text)
        texts.update(h["text"] for h in hs["hypotheses"])
        for b in beams:
            texts.update(h["text"] for h in beams[b])
    write_manifest(os.path.join(out_dir, "manifest.tsv"), manifest)
    write_jsonl(os.path.join(out_dir, "samples.jsonl"), sets)
    for b in beam_sets:
        write_jsonl(os.path.join(out_dir, "beam_b%d.jsonl" % b), beam_sets[b])
    with open(os.path.join(out_dir, "embeddings.tsv"), "w", encoding="utf-8") as f:
        for t in sorted(texts):
            f.write(t + "\t" + ",".join("%.6f" % x for x in embed(t)) + "\n")


JA_CHARS = list("あいうえおかきくけこさしすせそたちつてとなにぬねのはひふへほまみむめもやゆよらりるれろわをん"
                "日本語音声認識東京大学研究者今天気電車会社時間")


def confusable_char(rng, ch):
    i = JA_CHARS.index(ch) if ch in JA_CHARS else 0
    return JA_CHARS[(i + rng.choice([-1, 1, 5])) % len(JA_CHARS)]


def surface_ja(chars, rng, canonical):
    text = "".join(chars)
    if canonical:
        return text + "。"
    r = rng.random()
    if r < 0.5:
        return text + "。"
    if r < 0.8:
        return text
    k = rng.randrange(1, max(2, len(chars)))
    return text[:k] + "、" + text[k:] + "。"


def make_ja(out_dir, n_utts=20, seed=11):
    rng = random.Random(seed)
    os.makedirs(out_dir, exist_ok=True)
    manifest, sets, beam1 = [], [], []
    for i in range(n_utts):
        uid = "ja-%03d" % i
        ref = [rng.choice(JA_CHARS) for _ in range(rng.randint(8, 25))]
        rates = (rng.uniform(0.02, 0.06), rng.uniform(0.0, 0.02), rng.uniform(0.0, 0.02))
        hs, beams = make_utterance(rng, uid, ref, surface_ja, confusable_char, JA_CHARS, rates, 0.5)
        manifest.append((uid, "", surface_ja(ref, rng, True), "ja"))
        sets.append(hs)
        beam1.append({"utterance_id": uid, "hypotheses": beams[1]})
    write_manifest(os.path.join(out_dir, "manifest.tsv"), manifest)
    write_jsonl(os.path.join(out_dir, "samples.jsonl"), sets)
    write_jsonl(os.path.join(out_dir, "beam_b1.jsonl"), beam1)


def write_manifest(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        f.write("# id\taudio_path\treference\tlanguage\n")
        for r in rows:
            f.write("\t".join(r) + "\n")


def make_model(path, seed=3):
    """50 strings: one isolated high-probability string (the mode) and 49
    variants of a base sentence that share most n-grams with each other."""
    rng = random.Random(seed)
    base = "the old man walked slowly down the long road to the quiet village".split()
    subs = {
        "old": ["young", "tired"], "man": ["woman", "farmer"], "walked": ["went", "ran"],
        "slowly": ["quickly", "alone"], "down": ["along", "up"], "long": ["narrow", "dusty"],
        "road": ["path", "street"], "quiet": ["small", "distant"], "village": ["town", "farm"],
    }
    variants = set()
    positions = [i for i, w in enumerate(base) if w in subs]
    while len(variants) < 49:
        v = list(base)
        for k in rng.sample(positions, rng.choice([1, 1, 2, 2, 3])):
            v[k] = rng.choice(subs[base[k]])
        variants.add(" ".join(v))
    variants = sorted(variants)
    rng.shuffle(variants)
    weights = [1.0 / (k + 3) ** 0.6 for k in range(len(variants))]
    scale = 0.86 / sum(weights)
    mode = "an old man walked down a road into the village"
    lines = [(0.14, mode)] + [(w * scale, v) for w, v in zip(weights, variants)]
    total = sum(p for p, _ in lines)
    with open(path, "w", encoding="utf-8") as f:
        f.write("# probability<TAB>tokens\n")
        for p, t in lines:
            f.write("%.12f\t%s\n" % (p / total, t))


def main():
    make_en(os.path.join(DATA, "fixtures", "en_sim"))
    make_ja(os.path.join(DATA, "fixtures", "ja_sim"))
    os.makedirs(os.path.join(DATA, "models"), exist_ok=True)
    make_model(os.path.join(DATA, "models", "synthetic50.tsv"))


if __name__ == "__main__":
    main()
