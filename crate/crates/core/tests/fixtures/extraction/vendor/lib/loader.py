from transformers import AutoModel


def load_encoder():
    return AutoModel.from_pretrained("microsoft/deberta-v3-base")
