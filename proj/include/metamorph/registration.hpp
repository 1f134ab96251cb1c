#pragma once

#include <vector>

#include "metamorph/deformation.hpp"
#include "metamorph/image.hpp"

namespace metamorph {

struct RegistrationSettings {
    int max_iterations = 300;
    double rel_tol = 1e-8;       ///< stop when the relative energy decrease falls below this
    double armijo_c = 1e-4;
    double backtrack_factor = 0.5;
    int max_backtracks = 40;
    double step_init = 1.0;      ///< trial step for the first iteration
};

struct IterationRecord {
    int iteration = 0;
    double energy = 0.0;
    double step = 0.0;
    double gradient_norm_sq = 0.0;
};

struct RegistrationResult {
    DeformationField phi;
    EnergyBreakdown energy;
    std::vector<IterationRecord> log;
    bool converged = false;
    bool line_search_failed = false;
    int iterations = 0;
};

/// Minimizes the matching energy over displacements that vanish on the
/// boundary, by gradient descent with Armijo backtracking line search.
/// Starts from phi0; pass identity_field() for a cold start.
RegistrationResult register_pair(const ImageGrid& u, const ImageGrid& utilde,
                                 const DeformationField& phi0, double delta, double gamma,
                                 const RegistrationSettings& settings = {});

/// Coarse-to-fine variant: registers on restricted copies of the images,
/// prolongating each solution as the starting guess for the next finer
/// level. `levels` counts grids including the finest; 1 means single level.
RegistrationResult register_pair_multilevel(const ImageGrid& u, const ImageGrid& utilde,
                                            double delta, double gamma, int levels,
                                            const RegistrationSettings& settings = {});

} // namespace metamorph
