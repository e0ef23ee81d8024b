"""
twogridcdm テストスイート
"""
