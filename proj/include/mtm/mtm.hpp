#ifndef MTM_MTM_HPP
#define MTM_MTM_HPP

#include "mtm/changepoint.hpp"
#include "mtm/dependence.hpp"
#include "mtm/diagnostics.hpp"
#include "mtm/estimation.hpp"
#include "mtm/ga.hpp"
#include "mtm/io.hpp"
#include "mtm/likelihood.hpp"
#include "mtm/mean_model.hpp"
#include "mtm/parallel.hpp"
#include "mtm/simulation.hpp"
#include "mtm/types.hpp"

#endif  // MTM_MTM_HPP
