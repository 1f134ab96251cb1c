#pragma once

#include <vector>

#include "metamorph/deformation.hpp"
#include "metamorph/image.hpp"
#include "metamorph/registration.hpp"

namespace metamorph {

/// Discrete path u_0..u_K with the connecting deformations phi_1..phi_K.
/// deformations[k-1] warps images[k] backward onto the frame of images[k-1],
/// so segment k is scored by matching_energy(images[k-1], images[k], phi_k).
struct DiscretePath {
    std::vector<ImageGrid> images;
    std::vector<DeformationField> deformations;
    double delta = 1.0;
    double gamma = 1.0;

    int num_segments() const { return static_cast<int>(deformations.size()); }
};

struct PathEnergy {
    double total = 0.0;  ///< K * sum of per-segment totals
    std::vector<EnergyBreakdown> segments;
};

struct OuterIterationRecord {
    int outer_iter = 0;
    double path_total = 0.0;
    std::vector<EnergyBreakdown> segments;
    double min_det = 1.0;  ///< min over segments of min_det_jacobian
    int line_search_failures = 0;
};

struct GeodesicSettings {
    double outer_tol = 1e-6;  ///< stop on relative path-energy decrease below this
    int max_outer = 50;
    RegistrationSettings registration;
    double cg_rel_tol = 1e-10;
    /// Multiplies every reported energy (result and log). It never enters an
    /// iteration decision, so the returned images and deformations are
    /// bit-identical for any positive value.
    double energy_scale = 1.0;
    int threads = 1;      ///< worker threads for the per-segment registrations
    int init_levels = 1;  ///< multilevel depth for the first registration round
};

struct GeodesicResult {
    DiscretePath path;
    PathEnergy energy;  ///< scaled by settings.energy_scale
    std::vector<OuterIterationRecord> log;
    int outer_iterations = 0;
    bool converged = false;
};

/// Evaluates the discrete path energy K * sum_k matching_energy at the
/// path's CURRENT deformations (no inner minimization happens here).
PathEnergy path_energy(const DiscretePath& path);

/// Exact minimizer of sum_k ||S_k u_k - u_{k-1}||^2_w over the interior
/// images u_1..u_{K-1}, where S_k samples along deformations[k-1]. Solved
/// matrix-free by conjugate gradient on the block-tridiagonal normal
/// equations to relative residual cg_rel_tol; throws std::runtime_error if
/// CG does not converge within 10 * (#unknowns) iterations. warm_start, if
/// given, must hold K-1 interior images and only affects iteration count.
/// delta scales the objective uniformly and cannot move the minimizer; the
/// parameter is kept so call sites mirror the segment energy they minimize.
std::vector<ImageGrid> optimal_images_given_deformations(
    const ImageGrid& u0, const ImageGrid& uK,
    const std::vector<DeformationField>& deformations, double delta,
    double cg_rel_tol = 1e-10,
    const std::vector<ImageGrid>* warm_start = nullptr);

/// Alternating minimization of the discrete path energy: images start at the
/// linear blend, deformations at identity; each round re-registers every
/// segment (warm-started) and then solves the interior images exactly.
/// The path energy is non-increasing over rounds and the endpoints are
/// preserved bit-exactly.
GeodesicResult solve_geodesic(const ImageGrid& u_a, const ImageGrid& u_b,
                              int num_segments, double delta, double gamma,
                              const GeodesicSettings& settings = {});

/// Discrete geodesic interpolation: image k of the K-segment geodesic from
/// u_a to u_b. k=0 and k=K return the endpoints without solving.
ImageGrid interpolate(const ImageGrid& u_a, const ImageGrid& u_b, int k, int num_segments,
                      double delta, double gamma, const GeodesicSettings& settings = {});

/// Diagnostic: accumulated motion maps psi_k = phi_k o ... o phi_1 (psi_0 =
/// identity), the discrete trajectory of a material point. Logging only;
/// nothing optimizes over these.
std::vector<DeformationField> compose_path(const DiscretePath& path);

} // namespace metamorph
