import spacy


def parse(text):
    nlp = spacy.load("en_core_web_md")
    return [(t.text, t.pos_) for t in nlp(text)]
