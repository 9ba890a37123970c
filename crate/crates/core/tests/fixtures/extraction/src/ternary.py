import torch
import timm

backbone = timm.create_model(
    "convnext_base" if torch.cuda.is_available() else "convnext_tiny",
    pretrained=True,
)
