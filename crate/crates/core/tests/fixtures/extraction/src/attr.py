from transformers import AutoModelForTokenClassification


class Tagger:
    def __init__(self):
        self.checkpoint = "dslim/bert-base-NER"

    def load(self):
        return AutoModelForTokenClassification.from_pretrained(self.checkpoint)
