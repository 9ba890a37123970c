from ultralytics import YOLO

detector = YOLO("yolov8n.pt")
results = detector("bus.jpg")
