import timm


def backbone():
    return timm.create_model("resnet50", pretrained=True, num_classes=0)
