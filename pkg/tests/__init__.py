"""Test suite for silhouette calibration"""
