"""CLI and end-to-end tests"""
