"""semvoc Test Suite"""
