from .fenchel_nielsen import DegenerateLength, FNCoords, fn_to_holonomy, holonomy_lengths, pants_curve_words, random_coords

__all__ = ["DegenerateLength", "FNCoords", "fn_to_holonomy", "holonomy_lengths", "pants_curve_words", "random_coords"]
