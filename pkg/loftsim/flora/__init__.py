"""FloRa defense: flow analyzer, anomaly predictor, feature selection, detection and mitigation"""
