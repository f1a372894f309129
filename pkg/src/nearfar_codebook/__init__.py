"""Near/far-field codebook design, channel estimation and precoding simulator"""

__version__ = "1.0.0"
