# Packing toolkit: instances, LP relaxations, rounding and submodular maximization
