#pragma once

#include "maglattice/error.hpp"
#include "maglattice/physics.hpp"
#include "maglattice/numerics.hpp"
#include "maglattice/lattice_field.hpp"
#include "maglattice/pbm.hpp"
#include "maglattice/trap_analysis.hpp"
#include "maglattice/surface.hpp"
#include "maglattice/hubbard.hpp"
#include "maglattice/ensemble.hpp"
#include "maglattice/config.hpp"
#include "maglattice/report.hpp"
