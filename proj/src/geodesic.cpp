#include "metamorph/geodesic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "parallel.hpp"

namespace metamorph {

namespace {

void check_path(const DiscretePath& path) {
    if (path.images.size() < 2 || path.deformations.size() + 1 != path.images.size()) {
        throw std::invalid_argument("path_energy: need K+1 images and K deformations, K >= 1");
    }
    for (size_t k = 0; k + 1 < path.images.size(); ++k) {
        if (!path.images[k].same_dims(path.images[k + 1]) ||
            !path.deformations[k].same_dims(path.images[k])) {
            throw std::invalid_argument("path_energy: dimension mismatch along the path");
        }
    }
}

/// Precomputed sparse application of the warp operator S: (S u)(x_i) =
/// u sampled at x_i + v(x_i), as the four bilinear weights per node.
struct SampleOp {
    int width = 0;
    int height = 0;
    std::vector<size_t> base;  // index of the cell's lower-left node
    std::vector<double> w00, w10, w01, w11;

    explicit SampleOp(const DeformationField& phi) {
        width = phi.width;
        height = phi.height;
        const size_t n = phi.vx.size();
        base.resize(n);
        w00.resize(n);
        w10.resize(n);
        w01.resize(n);
        w11.resize(n);
        const double hx = phi.hx();
        const double hy = phi.hy();
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const size_t i = phi.idx(x, y);
                const double px = std::clamp(x * hx + phi.vx[i], 0.0, 1.0);
                const double py = std::clamp(y * hy + phi.vy[i], 0.0, 1.0);
                const double u = px * (width - 1);
                const double v = py * (height - 1);
                const int ix = std::min(static_cast<int>(u), width - 2);
                const int iy = std::min(static_cast<int>(v), height - 2);
                const double fx = u - ix;
                const double fy = v - iy;
                base[i] = static_cast<size_t>(iy) * width + ix;
                w00[i] = (1.0 - fx) * (1.0 - fy);
                w10[i] = fx * (1.0 - fy);
                w01[i] = (1.0 - fx) * fy;
                w11[i] = fx * fy;
            }
        }
    }

    void apply(const double* u, double* out) const {
        for (size_t i = 0; i < base.size(); ++i) {
            const size_t b = base[i];
            out[i] = w00[i] * u[b] + w10[i] * u[b + 1] +
                     w01[i] * u[b + width] + w11[i] * u[b + width + 1];
        }
    }

    void apply_transpose(const double* r, double* out) const {
        std::fill(out, out + base.size(), 0.0);
        for (size_t i = 0; i < base.size(); ++i) {
            const size_t b = base[i];
            out[b] += w00[i] * r[i];
            out[b + 1] += w10[i] * r[i];
            out[b + width] += w01[i] * r[i];
            out[b + width + 1] += w11[i] * r[i];
        }
    }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

} // namespace

PathEnergy path_energy(const DiscretePath& path) {
    check_path(path);
    PathEnergy e;
    const int K = path.num_segments();
    e.segments.reserve(K);
    double sum = 0.0;
    for (int k = 1; k <= K; ++k) {
        e.segments.push_back(matching_energy(path.images[k - 1], path.images[k],
                                             path.deformations[k - 1], path.delta, path.gamma));
        sum += e.segments.back().total;
    }
    e.total = K * sum;
    return e;
}

std::vector<ImageGrid> optimal_images_given_deformations(
    const ImageGrid& u0, const ImageGrid& uK,
    const std::vector<DeformationField>& deformations, double delta,
    double cg_rel_tol, const std::vector<ImageGrid>* warm_start) {
    const int K = static_cast<int>(deformations.size());
    if (K < 2) {
        throw std::invalid_argument("optimal_images_given_deformations: need K >= 2 segments");
    }
    if (!(delta > 0.0)) {
        throw std::invalid_argument("optimal_images_given_deformations: delta must be positive");
    }
    if (!u0.same_dims(uK)) {
        throw std::invalid_argument("optimal_images_given_deformations: endpoint dimension mismatch");
    }
    for (const DeformationField& phi : deformations) {
        if (!phi.same_dims(u0)) {
            throw std::invalid_argument("optimal_images_given_deformations: deformation dimension mismatch");
        }
    }
    if (warm_start && static_cast<int>(warm_start->size()) != K - 1) {
        throw std::invalid_argument("optimal_images_given_deformations: warm start must hold K-1 images");
    }

    const size_t n = u0.values.size();
    const size_t m = static_cast<size_t>(K - 1) * n;
    const std::vector<double> w = node_weights(u0.width, u0.height);

    std::vector<SampleOp> ops;
    ops.reserve(K);
    for (const DeformationField& phi : deformations) {
        ops.emplace_back(phi);
    }

    // The stationarity conditions for interior image j read
    //   S_j^T W (S_j u_j - u_{j-1}) + W (u_j - S_{j+1} u_{j+1}) = 0,
    // a symmetric positive definite block-tridiagonal system A x = b with
    // the endpoint terms moved to the right-hand side.
    std::vector<double> tmp(n), tmp2(n);
    auto apply_a = [&](const std::vector<double>& x, std::vector<double>& y) {
        for (int j = 1; j <= K - 1; ++j) {
            const double* xj = x.data() + static_cast<size_t>(j - 1) * n;
            double* yj = y.data() + static_cast<size_t>(j - 1) * n;
            ops[j - 1].apply(xj, tmp.data());
            if (j >= 2) {
                const double* xprev = x.data() + static_cast<size_t>(j - 2) * n;
                for (size_t i = 0; i < n; ++i) {
                    tmp[i] -= xprev[i];
                }
            }
            for (size_t i = 0; i < n; ++i) {
                tmp[i] *= w[i];
            }
            ops[j - 1].apply_transpose(tmp.data(), yj);
            if (j <= K - 2) {
                const double* xnext = x.data() + static_cast<size_t>(j) * n;
                ops[j].apply(xnext, tmp2.data());
                for (size_t i = 0; i < n; ++i) {
                    yj[i] += w[i] * (xj[i] - tmp2[i]);
                }
            } else {
                for (size_t i = 0; i < n; ++i) {
                    yj[i] += w[i] * xj[i];
                }
            }
        }
    };

    std::vector<double> b(m, 0.0);
    {
        for (size_t i = 0; i < n; ++i) {
            tmp[i] = w[i] * u0.values[i];
        }
        ops[0].apply_transpose(tmp.data(), b.data());
        double* blast = b.data() + static_cast<size_t>(K - 2) * n;
        ops[K - 1].apply(uK.values.data(), tmp.data());
        for (size_t i = 0; i < n; ++i) {
            blast[i] += w[i] * tmp[i];
        }
    }

    std::vector<double> x(m, 0.0);
    if (warm_start) {
        for (int j = 0; j < K - 1; ++j) {
            const ImageGrid& img = (*warm_start)[j];
            if (!img.same_dims(u0)) {
                throw std::invalid_argument("optimal_images_given_deformations: warm start dimension mismatch");
            }
            std::copy(img.values.begin(), img.values.end(), x.begin() + static_cast<size_t>(j) * n);
        }
    }

    const double b_norm = std::sqrt(dot(b, b));
    std::vector<ImageGrid> interior(K - 1, make_image(u0.width, u0.height));
    if (b_norm == 0.0) {
        return interior;  // A is SPD, so b = 0 forces x = 0
    }

    std::vector<double> r(m), p(m), ap(m);
    apply_a(x, ap);
    for (size_t i = 0; i < m; ++i) {
        r[i] = b[i] - ap[i];
    }
    p = r;
    double rs = dot(r, r);
    const double tol = cg_rel_tol * b_norm;
    const size_t max_iterations = 10 * m;
    bool converged = std::sqrt(rs) <= tol;
    for (size_t it = 0; it < max_iterations && !converged; ++it) {
        apply_a(p, ap);
        const double p_ap = dot(p, ap);
        if (!(p_ap > 0.0)) {
            break;  // numerically exhausted descent; the residual check below decides
        }
        const double alpha = rs / p_ap;
        for (size_t i = 0; i < m; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        const double rs_next = dot(r, r);
        if (std::sqrt(rs_next) <= tol) {
            converged = true;
            break;
        }
        const double beta = rs_next / rs;
        for (size_t i = 0; i < m; ++i) {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_next;
    }
    if (!converged) {
        throw std::runtime_error("optimal_images_given_deformations: CG did not reach relative residual " +
                                 std::to_string(cg_rel_tol) + " within " +
                                 std::to_string(max_iterations) + " iterations");
    }
    for (int j = 0; j < K - 1; ++j) {
        std::copy(x.begin() + static_cast<size_t>(j) * n,
                  x.begin() + static_cast<size_t>(j + 1) * n, interior[j].values.begin());
    }
    return interior;
}

GeodesicResult solve_geodesic(const ImageGrid& u_a, const ImageGrid& u_b,
                              int num_segments, double delta, double gamma,
                              const GeodesicSettings& settings) {
    if (num_segments < 1) {
        throw std::invalid_argument("solve_geodesic: need at least one segment");
    }
    if (!u_a.same_dims(u_b)) {
        throw std::invalid_argument("solve_geodesic: endpoint dimension mismatch");
    }
    const int K = num_segments;

    GeodesicResult res;
    res.path.delta = delta;
    res.path.gamma = gamma;
    res.path.images.reserve(K + 1);
    for (int k = 0; k <= K; ++k) {
        res.path.images.push_back(linear_blend(u_a, u_b, static_cast<double>(k) / K));
    }
    res.path.deformations.assign(K, identity_field(u_a.width, u_a.height));

    const double scale = settings.energy_scale;
    double prev_total = path_energy(res.path).total;
    std::vector<ImageGrid> interior;
    std::vector<EnergyBreakdown> seg_energies(K);
    std::vector<char> ls_failed(K, 0);

    for (int outer = 1; outer <= settings.max_outer; ++outer) {
        // (a) per-segment registrations, independent and warm-started
        detail::run_parallel(K, settings.threads, [&](int t) {
            const int k = t + 1;
            RegistrationResult reg;
            if (outer == 1 && settings.init_levels > 1) {
                reg = register_pair_multilevel(res.path.images[k - 1], res.path.images[k],
                                               delta, gamma, settings.init_levels,
                                               settings.registration);
            } else {
                reg = register_pair(res.path.images[k - 1], res.path.images[k],
                                    res.path.deformations[k - 1], delta, gamma,
                                    settings.registration);
            }
            res.path.deformations[k - 1] = std::move(reg.phi);
            seg_energies[t] = reg.energy;
            ls_failed[t] = reg.line_search_failed ? 1 : 0;
        });

        // (b) exact interior-image solve, warm-started from the current images
        if (K >= 2) {
            interior.assign(res.path.images.begin() + 1, res.path.images.end() - 1);
            std::vector<ImageGrid> solved = optimal_images_given_deformations(
                res.path.images.front(), res.path.images.back(), res.path.deformations, delta,
                settings.cg_rel_tol, &interior);
            for (int j = 1; j <= K - 1; ++j) {
                res.path.images[j] = std::move(solved[j - 1]);
            }
            // the image move changed the mismatch terms; refresh the breakdowns
            for (int k = 1; k <= K; ++k) {
                seg_energies[k - 1] = matching_energy(res.path.images[k - 1], res.path.images[k],
                                                      res.path.deformations[k - 1], delta, gamma);
            }
        }

        double total = 0.0;
        double min_det = std::numeric_limits<double>::infinity();
        int failures = 0;
        for (int k = 0; k < K; ++k) {
            total += seg_energies[k].total;
            min_det = std::min(min_det, min_det_jacobian(res.path.deformations[k]));
            failures += ls_failed[k];
        }
        total *= K;

        OuterIterationRecord rec;
        rec.outer_iter = outer;
        rec.path_total = scale * total;
        rec.segments = seg_energies;
        for (EnergyBreakdown& e : rec.segments) {
            e.dirichlet *= scale;
            e.laplacian *= scale;
            e.mismatch *= scale;
            e.total *= scale;
        }
        rec.min_det = min_det;
        rec.line_search_failures = failures;
        res.log.push_back(std::move(rec));
        res.outer_iterations = outer;

        const double decrease = prev_total - total;
        prev_total = total;
        if (decrease <= settings.outer_tol * std::abs(total)) {
            res.converged = true;
            break;
        }
    }

    res.energy.segments = seg_energies;
    res.energy.total = 0.0;
    for (EnergyBreakdown& e : res.energy.segments) {
        res.energy.total += e.total;
        e.dirichlet *= scale;
        e.laplacian *= scale;
        e.mismatch *= scale;
        e.total *= scale;
    }
    res.energy.total *= K * scale;
    return res;
}

ImageGrid interpolate(const ImageGrid& u_a, const ImageGrid& u_b, int k, int num_segments,
                      double delta, double gamma, const GeodesicSettings& settings) {
    if (k < 0 || k > num_segments) {
        throw std::invalid_argument("interpolate: k must lie in [0, K], got " + std::to_string(k));
    }
    if (k == 0) {
        return u_a;
    }
    if (k == num_segments) {
        return u_b;
    }
    GeodesicResult res = solve_geodesic(u_a, u_b, num_segments, delta, gamma, settings);
    return std::move(res.path.images[k]);
}

std::vector<DeformationField> compose_path(const DiscretePath& path) {
    check_path(path);
    const int K = path.num_segments();
    const int w = path.images[0].width;
    const int h = path.images[0].height;
    const double hx = path.images[0].hx();
    const double hy = path.images[0].hy();
    std::vector<DeformationField> psi;
    psi.reserve(K + 1);
    psi.push_back(identity_field(w, h));
    for (int k = 1; k <= K; ++k) {
        const DeformationField& phi = path.deformations[k - 1];
        ImageGrid phix{w, h, phi.vx};
        ImageGrid phiy{w, h, phi.vy};
        DeformationField next = identity_field(w, h);
        const DeformationField& prev = psi.back();
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const size_t i = prev.idx(x, y);
                const double px = x * hx + prev.vx[i];
                const double py = y * hy + prev.vy[i];
                next.vx[i] = prev.vx[i] + sample_bilinear(phix, px, py);
                next.vy[i] = prev.vy[i] + sample_bilinear(phiy, px, py);
            }
        }
        psi.push_back(std::move(next));
    }
    return psi;
}

} // namespace metamorph
