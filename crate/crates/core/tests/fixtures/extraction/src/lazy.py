def summarize(text):
    from transformers import pipeline

    summarizer = pipeline("summarization", model="facebook/bart-large-cnn")
    return summarizer(text)[0]["summary_text"]
