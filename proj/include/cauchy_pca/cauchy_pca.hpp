#pragma once

#include "cauchy_pca/eigenfaces.hpp"
#include "cauchy_pca/errors.hpp"
#include "cauchy_pca/experiments.hpp"
#include "cauchy_pca/matrix.hpp"
#include "cauchy_pca/matrix_io.hpp"
#include "cauchy_pca/noise_model.hpp"
#include "cauchy_pca/pcp.hpp"
#include "cauchy_pca/random.hpp"
#include "cauchy_pca/svp_solver.hpp"
