#pragma once

#include <string>
#include <vector>

#include "metamorph/registration.hpp"

namespace metamorph {

/// Tiny 1D reduction of the geodesic problem, small enough that the
/// deformations can be enumerated exhaustively: N nodes on [0,1], K
/// segments, interior displacements quantized to `levels` values in
/// [-range, range] per node. Ground truth for the main solver.
struct Oracle1DProblem {
    int nodes = 9;     ///< N <= 9
    int segments = 2;  ///< K in {1, 2}
    std::vector<double> u_a;
    std::vector<double> u_b;
    double delta = 1e-2;
    double gamma = 1e-3;
    int levels = 3;       ///< L <= 9 quantization levels per interior node
    double range = 0.125; ///< r <= 0.2, displacements live in [-r, r]
};

struct Segment1DEnergy {
    double dirichlet = 0.0;
    double laplacian = 0.0;
    double mismatch = 0.0;
    double total = 0.0;
};

struct Oracle1DSolution {
    double energy = 0.0;  ///< path energy K * sum of segment totals
    std::vector<std::vector<double>> deformations;  ///< K displacement vectors
    std::vector<std::vector<double>> images;        ///< K+1 signals, endpoints included
    std::vector<Segment1DEnergy> segment_energies;
};

/// One-segment 1D matching energy: per-cell forward-difference Dirichlet
/// term, interior second-difference Laplacian term, and trapezoid-weighted
/// mismatch of the linearly interpolated warp, combined exactly like the 2D
/// energy: dirichlet + gamma*laplacian + mismatch/delta.
Segment1DEnergy segment_energy_1d(const std::vector<double>& u, const std::vector<double>& utilde,
                                  const std::vector<double>& v, double delta, double gamma);

/// Exhaustive search over all quantized interior displacements of every
/// segment; for each candidate the interior images are obtained exactly by a
/// dense Cholesky solve of the image subproblem. Returns the global
/// quantized minimum. Throws std::invalid_argument when the search space
/// L^((N-2)*K) exceeds 1e7.
Oracle1DSolution brute_force_geodesic_1d(const Oracle1DProblem& problem);

/// Reruns the enumeration with the Dirichlet term evaluated on phi = id + v
/// instead of v. The two rankings differ by the constant K^2, so the argmin
/// (displacements and images) must coincide; returns whether it does and
/// whether the measured offset matches K^2 to near machine precision.
bool verify_dirichlet_constant_shift(const Oracle1DProblem& problem);

/// The main solver's algorithm transplanted to the 1D energy: images start
/// at the linear blend, each segment is registered by Armijo gradient
/// descent, interior images are solved exactly, alternating until the
/// relative path-energy decrease drops below outer_tol. Quantization fields
/// of the problem are ignored; displacements are continuous here.
Oracle1DSolution solve_geodesic_1d(const Oracle1DProblem& problem, double outer_tol = 1e-8,
                                   int max_outer = 100,
                                   const RegistrationSettings& registration = {});

/// Audit helper: writes the best max_rows candidates (energy ascending) as
/// CSV with one displacement column per interior node and segment.
void dump_candidates_csv(const Oracle1DProblem& problem, const std::string& path,
                         int max_rows = 100);

} // namespace metamorph
