"""Utility modules for semvoc"""
