def pipeline(task, model=None):
    return {"task": task, "model": model}


job = pipeline("ingest", model="warehouse-v2")
