#include "metamorph/bezier.hpp"

#include <stdexcept>
#include <string>

#include "parallel.hpp"

namespace metamorph {

namespace {

void check_job(const BezierJob& job) {
    if (job.controls.size() < 2) {
        throw std::invalid_argument("bezier: need at least two control images");
    }
    for (size_t i = 1; i < job.controls.size(); ++i) {
        if (!job.controls[i].same_dims(job.controls[0])) {
            throw std::invalid_argument("bezier: control image dimension mismatch");
        }
    }
    if (job.num_segments < 1) {
        throw std::invalid_argument("bezier: need at least one segment");
    }
    if (!(job.delta > 0.0) || !(job.gamma > 0.0)) {
        throw std::invalid_argument("bezier: delta and gamma must be positive");
    }
}

void check_index(const BezierJob& job, int k) {
    if (k < 0 || k > job.num_segments) {
        throw std::invalid_argument("bezier: evaluation index " + std::to_string(k) +
                                    " outside [0, " + std::to_string(job.num_segments) + "]");
    }
}

std::vector<GeodesicResult> solve_level1(const BezierJob& job) {
    const int n = job.degree();
    std::vector<GeodesicResult> level1;
    level1.reserve(n);
    for (int i = 1; i <= n; ++i) {
        level1.push_back(solve_geodesic(job.controls[i - 1], job.controls[i], job.num_segments,
                                        job.delta, job.gamma, job.settings));
    }
    return level1;
}

/// Runs recursion levels j >= 2 for one interior k, starting from the
/// level-1 images u_1^1..u_n^1. Left-packs the row in place.
ImageGrid evaluate_upper_levels(const BezierJob& job, int k, std::vector<ImageGrid> row,
                                const GeodesicSettings& inner) {
    const int n = job.degree();
    for (int j = 2; j <= n; ++j) {
        for (int idx = 0; idx + j <= n; ++idx) {
            const int i = idx + j;
            try {
                GeodesicResult res = solve_geodesic(row[idx], row[idx + 1], job.num_segments,
                                                    job.delta, job.gamma, inner);
                row[idx] = std::move(res.path.images[k]);
            } catch (const std::exception& e) {
                throw std::runtime_error("de_casteljau (j=" + std::to_string(j) + ", i=" +
                                         std::to_string(i) + ", k=" + std::to_string(k) +
                                         "): " + e.what());
            }
        }
        row.pop_back();
    }
    return std::move(row[0]);
}

std::vector<ImageGrid> level1_images_at(const std::vector<GeodesicResult>& level1, int k) {
    std::vector<ImageGrid> row;
    row.reserve(level1.size());
    for (const GeodesicResult& g : level1) {
        row.push_back(g.path.images[k]);
    }
    return row;
}

} // namespace

ImageGrid de_casteljau_evaluate(const BezierJob& job, int k) {
    check_job(job);
    check_index(job, k);
    if (k == 0) {
        return job.controls.front();
    }
    if (k == job.num_segments) {
        return job.controls.back();
    }
    const std::vector<GeodesicResult> level1 = solve_level1(job);
    return evaluate_upper_levels(job, k, level1_images_at(level1, k), job.settings);
}

BezierCurveResult bezier_curve(const BezierJob& job) {
    check_job(job);
    std::vector<int> indices = job.eval_indices;
    if (indices.empty()) {
        indices.resize(job.num_segments + 1);
        for (int k = 0; k <= job.num_segments; ++k) {
            indices[k] = k;
        }
    }
    bool any_interior = false;
    for (int k : indices) {
        check_index(job, k);
        any_interior = any_interior || (k != 0 && k != job.num_segments);
    }

    BezierCurveResult result;
    if (any_interior) {
        result.level1 = solve_level1(job);
    }

    const int n = job.degree();
    result.evaluations.resize(indices.size());
    // evaluations at distinct k are independent; the inner solves stay
    // single-threaded so the split across k cannot change any result
    GeodesicSettings inner = job.settings;
    inner.threads = 1;
    detail::run_parallel(static_cast<int>(indices.size()), job.settings.threads, [&](int t) {
        const int k = indices[t];
        result.evaluations[t].k = k;
        if (k == 0) {
            result.evaluations[t].image = job.controls.front();
        } else if (k == job.num_segments) {
            result.evaluations[t].image = job.controls.back();
        } else {
            result.evaluations[t].image =
                evaluate_upper_levels(job, k, level1_images_at(result.level1, k), inner);
        }
    });
    if (any_interior) {
        int interior = 0;
        for (int k : indices) {
            interior += (k != 0 && k != job.num_segments) ? 1 : 0;
        }
        result.higher_level_solves = interior * n * (n - 1) / 2;
    }
    return result;
}

} // namespace metamorph
