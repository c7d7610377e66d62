"""Cover times of lambda-biased walks on binary trees and their Cantor-set limit."""

__version__ = "0.1.0"
