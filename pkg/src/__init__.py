# Lattice Dyson-Schwinger workbench
