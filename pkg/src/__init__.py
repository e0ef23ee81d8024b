"""
twogridcdm - 変数刻みBDF2・4次コンパクト差分法と2格子法の数値ソルバー
"""

__version__ = "0.1.0"
__author__ = "twogridcdm developers"
