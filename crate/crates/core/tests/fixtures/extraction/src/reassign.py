import spacy

pipeline_name = "en_core_web_sm"
pipeline_name = "en_core_web_trf"

nlp = spacy.load(pipeline_name)
