#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "metamorph/geodesic.hpp"
#include "metamorph/synthetic.hpp"
#include "testsupport.hpp"

using namespace metamorph;

namespace {

const double kPi = 3.14159265358979323846;

GeodesicSettings quick_settings() {
    GeodesicSettings s;
    s.max_outer = 12;
    s.registration.max_iterations = 80;
    return s;
}

DiscretePath blend_path_with_identity(const ImageGrid& a, const ImageGrid& b, int segments,
                                      double delta, double gamma) {
    DiscretePath path;
    path.delta = delta;
    path.gamma = gamma;
    for (int k = 0; k <= segments; ++k) {
        path.images.push_back(linear_blend(a, b, static_cast<double>(k) / segments));
    }
    for (int k = 0; k < segments; ++k) {
        path.deformations.push_back(identity_field(a.width, a.height));
    }
    return path;
}

} // namespace

TEST_CASE("path energy of a constant path is zero; one segment matches matching_energy") {
    const ImageGrid u = gaussian_bump(9, 9, 0.5, 0.5, 0.15);
    const DiscretePath constant = blend_path_with_identity(u, u, 3, 0.05, 1e-3);
    // Not exactly 0.0: blending u with itself and warping along the identity
    // both round in the last bits, leaving an O(1e-32) mismatch residue.
    CHECK(path_energy(constant).total <= 1e-30);

    testsupport::SplitMix64 rng(201);
    const ImageGrid a = testsupport::random_smooth_image(9, 9, rng);
    const ImageGrid b = testsupport::random_smooth_image(9, 9, rng);
    DiscretePath single = blend_path_with_identity(a, b, 1, 0.05, 1e-3);
    single.deformations[0] = testsupport::random_interior_field(9, 9, rng, 0.15);
    const PathEnergy pe = path_energy(single);
    const EnergyBreakdown direct = matching_energy(a, b, single.deformations[0], 0.05, 1e-3);
    CHECK(pe.total == doctest::Approx(direct.total).epsilon(1e-15));
    REQUIRE(pe.segments.size() == 1);
    CHECK(pe.segments[0].mismatch == direct.mismatch);
}

TEST_CASE("identity deformations make the linear blend the optimal interior") {
    testsupport::SplitMix64 rng(202);
    const ImageGrid a = testsupport::random_smooth_image(9, 9, rng);
    const ImageGrid b = testsupport::random_smooth_image(9, 9, rng);
    std::vector<DeformationField> defs(3, identity_field(9, 9));
    const std::vector<ImageGrid> interior =
        optimal_images_given_deformations(a, b, defs, 0.05);
    REQUIRE(interior.size() == 2);
    for (int k = 1; k <= 2; ++k) {
        const ImageGrid blend = linear_blend(a, b, k / 3.0);
        for (size_t i = 0; i < blend.values.size(); ++i) {
            CHECK(interior[k - 1].values[i] == doctest::Approx(blend.values[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("interior image solve matches a dense direct solve") {
    // K = 2: one unknown image; assemble A = S1^T W S1 + W densely and solve.
    testsupport::SplitMix64 rng(203);
    const int n = 9;
    const size_t m = n * n;
    const ImageGrid a = testsupport::random_smooth_image(n, n, rng);
    const ImageGrid b = testsupport::random_smooth_image(n, n, rng);
    std::vector<DeformationField> defs;
    defs.push_back(testsupport::random_interior_field(n, n, rng, 0.2));
    defs.push_back(testsupport::random_interior_field(n, n, rng, 0.2));

    const std::vector<double> s1 = testsupport::dense_sample_matrix(defs[0]);
    const std::vector<double> s2 = testsupport::dense_sample_matrix(defs[1]);
    const std::vector<double> w = node_weights(n, n);

    std::vector<double> amat(m * m, 0.0);
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < m; ++j) {
            double acc = i == j ? w[i] : 0.0;
            for (size_t r = 0; r < m; ++r) {
                acc += s1[r * m + i] * w[r] * s1[r * m + j];
            }
            amat[i * m + j] = acc;
        }
    }
    std::vector<double> rhs(m, 0.0);
    for (size_t i = 0; i < m; ++i) {
        double s2b = 0.0;
        for (size_t j = 0; j < m; ++j) {
            s2b += s2[i * m + j] * b.values[j];
        }
        rhs[i] = w[i] * s2b;
        for (size_t r = 0; r < m; ++r) {
            rhs[i] += s1[r * m + i] * w[r] * a.values[r];
        }
    }
    const std::vector<double> dense = testsupport::dense_solve(amat, rhs);

    const std::vector<ImageGrid> cg = optimal_images_given_deformations(a, b, defs, 0.05);
    REQUIRE(cg.size() == 1);
    double sup = 0.0;
    for (size_t i = 0; i < m; ++i) {
        sup = std::max(sup, std::abs(cg[0].values[i] - dense[i]));
    }
    CAPTURE(sup);
    CHECK(sup < 1e-8);
}

TEST_CASE("interior image solve reports CG failure") {
    testsupport::SplitMix64 rng(204);
    const ImageGrid a = testsupport::random_smooth_image(9, 9, rng);
    const ImageGrid b = testsupport::random_smooth_image(9, 9, rng);
    std::vector<DeformationField> defs;
    defs.push_back(testsupport::random_interior_field(9, 9, rng, 0.2));
    defs.push_back(testsupport::random_interior_field(9, 9, rng, 0.2));
    CHECK_THROWS_AS(optimal_images_given_deformations(a, b, defs, 0.05, 0.0),
                    std::runtime_error);
}

TEST_CASE("geodesic between identical images is constant with zero energy") {
    const ImageGrid u = gaussian_bump(17, 17, 0.5, 0.5, 0.12);
    const GeodesicResult res = solve_geodesic(u, u, 3, 0.05, 1e-3, quick_settings());
    CHECK(res.energy.total < 1e-10);
    for (const ImageGrid& img : res.path.images) {
        double sup = 0.0;
        for (size_t i = 0; i < img.values.size(); ++i) {
            sup = std::max(sup, std::abs(img.values[i] - u.values[i]));
        }
        CHECK(sup < 1e-8);
    }
    for (const DeformationField& phi : res.path.deformations) {
        CHECK(testsupport::max_abs_displacement(phi) < 1e-8);
    }
}

TEST_CASE("geodesic endpoints are preserved bit exactly") {
    const ImageGrid a = gaussian_bump(17, 17, 0.4, 0.5, 0.12);
    const ImageGrid b = gaussian_bump(17, 17, 0.6, 0.5, 0.12);
    const GeodesicResult res = solve_geodesic(a, b, 4, 0.05, 1e-3, quick_settings());
    REQUIRE(res.path.images.size() == 5);
    CHECK(testsupport::same_bits(res.path.images.front(), a));
    CHECK(testsupport::same_bits(res.path.images.back(), b));
}

TEST_CASE("outer iterations never increase the path energy") {
    const ImageGrid a = gaussian_bump(17, 17, 0.38, 0.45, 0.13);
    const ImageGrid b = gaussian_bump(17, 17, 0.62, 0.55, 0.13);
    const GeodesicResult res = solve_geodesic(a, b, 3, 0.05, 1e-3, quick_settings());
    REQUIRE(res.log.size() >= 2);
    for (size_t i = 1; i < res.log.size(); ++i) {
        CHECK(res.log[i].path_total <=
              res.log[i - 1].path_total * (1.0 + 1e-12) + 1e-300);
    }
    CHECK(res.energy.total == doctest::Approx(res.log.back().path_total));
}

TEST_CASE("energy scale rescales reports without touching iterates") {
    const ImageGrid a = gaussian_bump(17, 17, 0.4, 0.5, 0.12);
    const ImageGrid b = gaussian_bump(17, 17, 0.6, 0.5, 0.12);
    GeodesicSettings s1 = quick_settings();
    GeodesicSettings s2 = quick_settings();
    s2.energy_scale = 3.7;
    const GeodesicResult r1 = solve_geodesic(a, b, 3, 0.05, 1e-3, s1);
    const GeodesicResult r2 = solve_geodesic(a, b, 3, 0.05, 1e-3, s2);
    REQUIRE(r1.path.images.size() == r2.path.images.size());
    for (size_t k = 0; k < r1.path.images.size(); ++k) {
        CHECK(testsupport::same_bits(r1.path.images[k], r2.path.images[k]));
    }
    for (size_t k = 0; k < r1.path.deformations.size(); ++k) {
        CHECK(testsupport::same_bits(r1.path.deformations[k], r2.path.deformations[k]));
    }
    CHECK(r2.energy.total == doctest::Approx(3.7 * r1.energy.total).epsilon(1e-14));
    REQUIRE(r1.log.size() == r2.log.size());
    CHECK(r2.log[0].path_total == doctest::Approx(3.7 * r1.log[0].path_total).epsilon(1e-14));
}

TEST_CASE("thread count does not change the result") {
    const ImageGrid a = gaussian_bump(17, 17, 0.4, 0.45, 0.12);
    const ImageGrid b = gaussian_bump(17, 17, 0.6, 0.55, 0.12);
    GeodesicSettings st = quick_settings();
    st.threads = 1;
    const GeodesicResult r1 = solve_geodesic(a, b, 4, 0.05, 1e-3, st);
    st.threads = 4;
    const GeodesicResult r4 = solve_geodesic(a, b, 4, 0.05, 1e-3, st);
    for (size_t k = 0; k < r1.path.images.size(); ++k) {
        CHECK(testsupport::same_bits(r1.path.images[k], r4.path.images[k]));
    }
    for (size_t k = 0; k < r1.path.deformations.size(); ++k) {
        CHECK(testsupport::same_bits(r1.path.deformations[k], r4.path.deformations[k]));
    }
    CHECK(r1.energy.total == r4.energy.total);
}

TEST_CASE("huge delta reduces the geodesic to the linear blend") {
    const ImageGrid a = gaussian_bump(17, 17, 0.4, 0.5, 0.12);
    const ImageGrid b = gaussian_bump(17, 17, 0.6, 0.5, 0.12);
    const GeodesicResult res = solve_geodesic(a, b, 3, 1e6, 1e-3, quick_settings());
    for (int k = 0; k <= 3; ++k) {
        const ImageGrid blend = linear_blend(a, b, k / 3.0);
        double sup = 0.0;
        for (size_t i = 0; i < blend.values.size(); ++i) {
            sup = std::max(sup, std::abs(res.path.images[k].values[i] - blend.values[i]));
        }
        CHECK(sup < 1e-3);
    }
    for (const DeformationField& phi : res.path.deformations) {
        CHECK(testsupport::max_abs_displacement(phi) < 1e-3);
    }
}

TEST_CASE("solved geodesics have nearly constant segment speeds") {
    const ImageGrid a = gaussian_bump(17, 17, 0.4, 0.5, 0.12);
    const ImageGrid b = gaussian_bump(17, 17, 0.6, 0.5, 0.12);
    GeodesicSettings st;
    st.max_outer = 30;
    const GeodesicResult res = solve_geodesic(a, b, 4, 0.05, 1e-3, st);
    double lo = 1e300;
    double hi = 0.0;
    for (const EnergyBreakdown& seg : res.energy.segments) {
        lo = std::min(lo, seg.total);
        hi = std::max(hi, seg.total);
    }
    CAPTURE(lo);
    CAPTURE(hi);
    CHECK(hi <= 1.5 * lo);
}

TEST_CASE("refining the time grid keeps the energy comparable") {
    const ImageGrid a = gaussian_bump(17, 17, 0.42, 0.5, 0.13);
    const ImageGrid b = gaussian_bump(17, 17, 0.58, 0.5, 0.13);
    GeodesicSettings st;
    st.max_outer = 30;
    const GeodesicResult coarse = solve_geodesic(a, b, 2, 0.05, 1e-3, st);
    const GeodesicResult fine = solve_geodesic(a, b, 4, 0.05, 1e-3, st);
    const double ratio = fine.energy.total / coarse.energy.total;
    CAPTURE(coarse.energy.total);
    CAPTURE(fine.energy.total);
    CHECK(ratio > 0.75);
    CHECK(ratio < 1.25);
}

TEST_CASE("interpolate short circuits the endpoints and validates k") {
    const ImageGrid a = gaussian_bump(9, 9, 0.4, 0.5, 0.15);
    const ImageGrid b = gaussian_bump(9, 9, 0.6, 0.5, 0.15);
    CHECK(testsupport::same_bits(interpolate(a, b, 0, 3, 0.05, 1e-3), a));
    CHECK(testsupport::same_bits(interpolate(a, b, 3, 3, 0.05, 1e-3), b));
    CHECK_THROWS_AS(interpolate(a, b, 4, 3, 0.05, 1e-3), std::invalid_argument);
    CHECK_THROWS_AS(interpolate(a, b, -1, 3, 0.05, 1e-3), std::invalid_argument);

    const GeodesicResult full = solve_geodesic(a, b, 3, 0.05, 1e-3, quick_settings());
    const ImageGrid mid = interpolate(a, b, 1, 3, 0.05, 1e-3, quick_settings());
    CHECK(testsupport::same_bits(mid, full.path.images[1]));
}

TEST_CASE("composed motion maps accumulate the per segment fields") {
    const int n = 9;
    DiscretePath path = blend_path_with_identity(gaussian_bump(n, n, 0.4, 0.5, 0.15),
                                                 gaussian_bump(n, n, 0.6, 0.5, 0.15), 2, 0.05,
                                                 1e-3);
    const std::vector<DeformationField> trivial = compose_path(path);
    REQUIRE(trivial.size() == 3);
    CHECK(testsupport::max_abs_displacement(trivial[2]) == 0.0);

    testsupport::SplitMix64 rng(205);
    path.deformations[0] = testsupport::random_interior_field(n, n, rng, 0.1);
    const std::vector<DeformationField> composed = compose_path(path);
    // psi_1 is phi_1 resampled at the identity, equal up to interpolation
    // round off.
    for (size_t i = 0; i < composed[1].vx.size(); ++i) {
        CHECK(composed[1].vx[i] == doctest::Approx(path.deformations[0].vx[i]).epsilon(1e-12));
        CHECK(composed[1].vy[i] ==
              doctest::Approx(path.deformations[0].vy[i]).epsilon(1e-12));
    }
}

TEST_CASE("solve_geodesic validates its arguments") {
    const ImageGrid a = gaussian_bump(9, 9, 0.4, 0.5, 0.15);
    const ImageGrid b = gaussian_bump(9, 9, 0.6, 0.5, 0.15);
    CHECK_THROWS_AS(solve_geodesic(a, b, 0, 0.05, 1e-3), std::invalid_argument);
    CHECK_THROWS_AS(solve_geodesic(a, b, 2, -0.05, 1e-3), std::invalid_argument);
    CHECK_THROWS_AS(solve_geodesic(a, make_image(8, 9), 2, 0.05, 1e-3), std::invalid_argument);
}

TEST_CASE("two segment geodesic stays below a parametric upper bound") {
    // Family oracle: sine displacement of amplitude a on both segments with
    // exactly solved interior image. The solver optimizes over a superset.
    const ImageGrid a = gaussian_bump(17, 17, 0.4, 0.5, 0.12);
    const ImageGrid b = gaussian_bump(17, 17, 0.6, 0.5, 0.12);
    const double delta = 1e-2;
    const double gamma = 1e-3;

    double family_best = 1e300;
    for (int step = 0; step <= 60; ++step) {
        const double amp = -0.15 + 0.3 * step / 60.0;
        DeformationField f = identity_field(17, 17);
        for (int y = 0; y < 17; ++y) {
            for (int x = 0; x < 17; ++x) {
                f.vx[f.idx(x, y)] = amp * std::sin(kPi * x / 16.0) * std::sin(kPi * y / 16.0);
            }
        }
        DiscretePath path;
        path.delta = delta;
        path.gamma = gamma;
        path.deformations = {f, f};
        const std::vector<ImageGrid> interior =
            optimal_images_given_deformations(a, b, path.deformations, delta);
        path.images = {a, interior[0], b};
        family_best = std::min(family_best, path_energy(path).total);
    }

    GeodesicSettings st;
    st.max_outer = 30;
    const GeodesicResult res = solve_geodesic(a, b, 2, delta, gamma, st);
    CAPTURE(res.energy.total);
    CAPTURE(family_best);
    CHECK(res.energy.total <= family_best * 1.02);
}
