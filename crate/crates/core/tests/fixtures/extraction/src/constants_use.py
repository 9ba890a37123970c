from transformers import AutoModel

MODEL_ID = "google-bert/bert-base-multilingual-cased"


def build():
    return AutoModel.from_pretrained(MODEL_ID)
