import json

import torch

with open("config.json") as fh:
    config = json.load(fh)

state = torch.load("checkpoints/best.pt")
defaults = json.load(open("defaults.json"))
