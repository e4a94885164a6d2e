#pragma once

// Umbrella header.

#include "qem/diagonalize.hpp"
#include "qem/distribution.hpp"
#include "qem/experiment.hpp"
#include "qem/ising.hpp"
#include "qem/mitigation.hpp"
#include "qem/pauli.hpp"
#include "qem/readout.hpp"
#include "qem/rng.hpp"
#include "qem/state.hpp"
#include "qem/variance.hpp"
