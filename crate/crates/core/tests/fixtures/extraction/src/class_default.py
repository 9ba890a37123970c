from transformers import AutoModelForSeq2SeqLM


class Translator:
    default_model = "Helsinki-NLP/opus-mt-en-de"

    def load(self):
        return AutoModelForSeq2SeqLM.from_pretrained(self.default_model)


def load_default():
    return AutoModelForSeq2SeqLM.from_pretrained(Translator.default_model)
