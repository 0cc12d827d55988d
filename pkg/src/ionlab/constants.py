"""Physical constants and laboratory reference values (SI units)."""

import math

from scipy import constants as _c

HBAR = _c.hbar
H = _c.h
K_B = _c.k
C = _c.c
E_CHARGE = _c.e
AMU = _c.atomic_mass
MU_B = _c.physical_constants["Bohr magneton"][0]

TWO_PI = 2.0 * math.pi

MG25_MASS = 25.0 * AMU

# BD cycling transition 3S1/2 F=3 <-> 3P3/2 F=4
BD_LINEWIDTH = TWO_PI * 43e6
BD_TRANSITION = TWO_PI * 1.0720841e15
RAMAN_WAVELENGTH = 280e-9

# Paul box
CLOCK_HZ = 100e6
CYCLE_S = 1.0 / CLOCK_HZ
DDS_REFERENCE_MHZ = 1200.0

# heating estimate for the 2 MHz axial mode, quanta per millisecond
HEATING_RATE_PER_MS = 0.01
