# Services: simulation, invariant laws, couplings, hitting times and acceptance
