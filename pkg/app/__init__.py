"""Camera calibration from dynamic silhouettes using motion barcodes of lines"""
__version__ = "0.1.0"
