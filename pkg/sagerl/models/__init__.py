"""
Pydantic schemas for sagerl configuration, histories and reports.
"""
