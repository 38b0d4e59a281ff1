"""Which path layouts can be read with a single rotating cylindrical lens?

Two segments lying on one line with the same length would produce identical
fringes in the same place, so a layout is usable only if that never
happens. Rulers with all pairwise spacings distinct scale the idea to many
paths, at the price of a camera wide enough for the longest spacing.

Run: python demos/05_designing_a_layout.py
"""

from pathtomo import OpticalConfig, golomb_ruler, resource_report, validate_geometry
from pathtomo.geometry import eight_path_geometry, grid_2x3, ruler_geometry, square_geometry

for name, g in (("eight paths from three displacers", eight_path_geometry()),
                ("two by three grid", grid_2x3()),
                ("2.7 mm square", square_geometry(2.7))):
    print(f"== {name}")
    print(validate_geometry(g).to_text())

print("\n== rulers (unit minimum spacing)")
for d in (3, 5, 7, 11):
    print(f"  d={d:2d}: {[int(x) for x in golomb_ruler(d)]}")

ruler = ruler_geometry(golomb_ruler(5, 0.5))
print("\n== five paths on a 0.5 mm ruler, at full camera resolution")
print(resource_report(ruler, OpticalConfig.full_resolution()).to_text())
