"""Pinned 256-pair sampling pattern for the rotated binary descriptor.

Generated once from a seeded isotropic Gaussian (sigma 6.2, clipped to
[-13, 13]) and committed as data so descriptors are bit-identical across
platforms and versions. Each row is (x1, y1, x2, y2) in patch coordinates;
the descriptor bit is 1 when the smoothed intensity at point 1 is below
the one at point 2. Do not regenerate.
"""

PAIRS = (
    (-2, 2, 4, -6), (7, -6, 11, 7), (-4, 4, 3, -11), (4, -4, -2, -4),
    (-3, 0, 1, -10), (-2, -8, -8, -2), (5, 4, -4, -4), (-5, 1, 6, 0),
    (4, 2, 9, -12), (-13, -1, 4, -3), (3, -7, -8, -4), (5, 4, -4, 1),
    (-4, 0, -7, 0), (-5, 0, -4, -5), (1, -2, 0, -3), (4, -5, 5, 8),
    (-2, 11, 13, 3), (-8, -10, -1, 11), (4, 5, -2, -5), (2, -7, -1, 3),
    (0, 3, -3, 4), (3, -10, -6, -4), (4, 2, 2, 1), (4, 6, -3, -10),
    (4, -1, 0, -1), (-7, -9, 6, 7), (6, 1, 2, -3), (0, -2, -3, 1),
    (11, -12, 4, 4), (-8, 2, 1, -3), (-3, -9, 11, 13), (10, -2, 2, 2),
    (-5, -2, 3, -3), (-11, -8, 2, -2), (-2, 8, 1, -4), (0, 13, -7, 11),
    (9, -1, -2, 9), (2, -3, 11, 1), (2, 0, -2, 1), (-2, 3, 7, 7),
    (7, 9, 5, -4), (6, -10, -4, 2), (-10, 9, -6, -9), (-5, -5, 0, -1),
    (6, -1, 1, -6), (3, -5, -12, 8), (-7, -7, -5, 4), (-9, -2, 4, 12),
    (-2, 0, -5, 12), (-1, 0, 1, -6), (0, -8, 9, -1), (-1, 7, -8, 9),
    (9, -5, 4, -1), (5, 0, -6, 4), (-1, 1, 6, 8), (4, -9, 4, -2),
    (7, -1, 9, 3), (0, 2, -11, 4), (1, -7, 3, 2), (2, -1, 5, 5),
    (1, 0, -3, -4), (4, -3, -9, 2), (7, -2, 5, 3), (-6, 2, -1, 4),
    (-13, 5, 5, -6), (7, -1, 1, 5), (8, 1, 4, 3), (-4, 10, 5, 1),
    (7, 3, -3, 6), (0, 4, 6, 6), (12, 1, -1, -4), (-4, 4, 3, -5),
    (-4, -3, 10, -6), (2, -10, -1, 9), (-8, 7, -11, 1), (-7, 0, -1, 5),
    (2, 1, -3, 3), (-5, -4, -4, 4), (13, 0, 12, -6), (-3, 3, 4, 5),
    (10, -1, 7, 2), (-13, -6, -3, 1), (4, -1, 8, -6), (0, 6, -7, 8),
    (6, -1, 0, 0), (0, 8, 3, -8), (-9, 4, -13, -9), (-4, 0, 9, 1),
    (13, 2, 6, 7), (0, 6, 4, 2), (-4, -2, 5, 0), (3, 3, 2, 0),
    (4, 5, 9, 3), (-3, -4, 4, -9), (-3, 7, -2, -4), (8, -13, 0, -3),
    (-3, 6, 9, 7), (4, 2, -1, 0), (-10, -3, 4, -1), (5, -9, -3, -6),
    (7, -1, -2, -7), (-3, -6, -3, 13), (-7, -1, -5, 8), (-6, -5, 2, 10),
    (2, -3, -13, -13), (0, 0, 7, 3), (-1, 8, 11, -4), (6, 8, -5, 4),
    (0, 7, 7, -13), (-1, 9, 3, -6), (-3, -7, 2, -8), (8, 5, 11, 7),
    (6, 6, 4, -12), (4, -5, -13, 10), (0, -10, 2, 3), (1, 9, -7, 6),
    (-6, 3, 4, -3), (13, -11, -9, -3), (-5, 7, -3, 8), (-3, 5, 5, 1),
    (5, 2, 13, 13), (-2, 3, 7, 4), (12, 13, -12, -3), (9, 4, -4, -1),
    (1, 11, -6, 2), (9, 7, -1, -1), (-11, -10, -5, 5), (5, 8, 6, 5),
    (1, -5, 8, -2), (-11, 3, 1, 13), (-1, 2, -7, 4), (2, -5, 2, -8),
    (4, -3, 2, -6), (-5, -1, 5, 1), (-13, 4, -1, 4), (7, 5, -5, -2),
    (3, 6, -5, -4), (-6, 3, -4, 13), (5, 7, 4, -4), (-13, 9, 2, -12),
    (13, 5, 10, -1), (-11, -5, 5, -13), (-3, 7, 7, 1), (-13, -2, 8, 5),
    (-2, 2, 4, -2), (-5, -4, -5, 0), (0, 4, 4, -1), (-13, 4, -6, 11),
    (-2, 13, 4, 11), (1, 3, -3, -3), (-3, 5, -7, 6), (-2, 4, -6, 0),
    (-11, -4, -1, -6), (-1, 1, 1, -13), (-2, -1, -5, -6), (12, 5, 6, 7),
    (-6, -2, -11, 1), (-12, -4, 5, 3), (-6, -6, 8, 3), (-3, 1, 1, -7),
    (-3, -13, 1, 1), (6, 6, -3, 10), (-5, 6, -3, -4), (-8, 0, 13, 1),
    (3, -2, 3, 4), (3, 9, 0, 3), (10, 4, -5, 8), (4, -5, -5, -2),
    (5, 2, 6, 13), (11, 1, -4, 9), (-4, -5, -1, 2), (-1, 2, -13, -2),
    (0, 4, 2, -1), (13, 6, 4, 2), (3, -5, -6, 2), (-10, 4, -2, 5),
    (1, -5, -4, -2), (8, 9, -1, 1), (-5, 9, 2, -4), (-8, 3, 12, 1),
    (-5, -5, -3, -13), (6, -3, -11, -13), (2, 1, 9, 6), (-3, -11, 1, -4),
    (1, -10, -2, -1), (-8, -11, -13, 0), (7, 0, -13, 0), (-10, 1, 11, 2),
    (-13, 6, 2, 12), (3, 4, -11, 9), (-8, -13, 3, 5), (9, 7, 2, 2),
    (5, 2, 3, -13), (-1, -2, 3, -5), (6, 5, -7, 0), (3, -7, -13, -2),
    (2, 0, 7, 2), (10, -4, 10, -2), (3, -12, -5, 7), (0, 0, -7, 5),
    (-6, 9, 4, -3), (-5, -3, 2, 2), (-10, 2, -7, 11), (-12, 6, -7, 2),
    (7, 3, -7, -10), (9, -5, 5, 7), (-10, 12, -1, -1), (-6, 1, 3, 7),
    (6, 6, -1, -1), (1, 1, 8, 6), (-1, -6, -12, -1), (0, -12, -2, 2),
    (1, -9, -4, -9), (5, 2, 13, -4), (9, 0, 1, 7), (-12, -7, 9, 6),
    (12, 4, -3, 5), (-3, 0, -1, -5), (13, 4, 1, 2), (-4, -2, 1, 2),
    (-13, 8, -13, -6), (-9, 1, -11, 6), (4, 6, 5, -2), (1, -6, -3, 3),
    (-8, -2, -3, 6), (3, -3, 5, 12), (7, 1, 1, -6), (-3, 2, 2, -9),
    (-8, -8, -7, -4), (-1, -7, -4, -12), (-2, 1, -4, -10), (13, -5, 2, -13),
    (-5, 1, -1, 1), (0, -5, -6, -2), (-4, -4, 2, 1), (-3, 6, -1, -2),
    (5, 1, -10, 2), (-10, -2, 1, 4), (-6, -3, 4, 12), (12, 5, 10, -4),
    (-2, 5, 5, -10), (7, -6, -1, -7), (-2, 6, -8, -4), (0, 3, 10, 1),
    (6, -10, -4, -13), (7, -4, 4, -7), (-7, -7, -5, -2), (-11, 0, 3, -12),
    (-10, -7, -6, 10), (4, -8, 13, 5), (-8, -11, 2, -11), (1, 5, -6, -5),
    (-6, 8, 4, 3), (5, 0, -4, 2), (5, -1, -2, -6), (8, 5, 1, 1),
)
