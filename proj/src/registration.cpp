#include "metamorph/registration.hpp"

#include <cmath>
#include <stdexcept>

namespace metamorph {

namespace {

double dot(const DeformationField& a, const DeformationField& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.vx.size(); ++i) {
        s += a.vx[i] * b.vx[i] + a.vy[i] * b.vy[i];
    }
    return s;
}

void check_finite(double e) {
    if (!std::isfinite(e)) {
        throw std::runtime_error("register_pair: energy is not finite");
    }
}

} // namespace

RegistrationResult register_pair(const ImageGrid& u, const ImageGrid& utilde,
                                 const DeformationField& phi0, double delta, double gamma,
                                 const RegistrationSettings& settings) {
    RegistrationResult res;
    res.phi = phi0;
    res.energy = matching_energy(u, utilde, res.phi, delta, gamma);
    check_finite(res.energy.total);

    DeformationField trial = res.phi;
    double next_step = settings.step_init;
    for (int iter = 1; iter <= settings.max_iterations; ++iter) {
        const DeformationField g = matching_gradient(u, utilde, res.phi, delta, gamma);
        const double gnorm_sq = dot(g, g);
        if (gnorm_sq == 0.0) {
            res.converged = true;
            break;
        }

        double step = next_step;
        bool accepted = false;
        EnergyBreakdown e_trial;
        for (int bt = 0; bt <= settings.max_backtracks; ++bt) {
            for (size_t i = 0; i < trial.vx.size(); ++i) {
                trial.vx[i] = res.phi.vx[i] - step * g.vx[i];
                trial.vy[i] = res.phi.vy[i] - step * g.vy[i];
            }
            e_trial = matching_energy(u, utilde, trial, delta, gamma);
            check_finite(e_trial.total);
            if (e_trial.total <= res.energy.total - settings.armijo_c * step * gnorm_sq) {
                accepted = true;
                break;
            }
            step *= settings.backtrack_factor;
        }
        if (!accepted) {
            res.line_search_failed = true;
            break;
        }

        const double prev_total = res.energy.total;
        std::swap(res.phi.vx, trial.vx);
        std::swap(res.phi.vy, trial.vy);
        res.energy = e_trial;
        res.iterations = iter;
        next_step = 2.0 * step;
        res.log.push_back({iter, res.energy.total, step, gnorm_sq});

        const double decrease = prev_total - res.energy.total;
        if (decrease <= settings.rel_tol * std::abs(prev_total)) {
            res.converged = true;
            break;
        }
    }
    return res;
}

RegistrationResult register_pair_multilevel(const ImageGrid& u, const ImageGrid& utilde,
                                            double delta, double gamma, int levels,
                                            const RegistrationSettings& settings) {
    if (levels < 1) {
        throw std::invalid_argument("register_pair_multilevel: levels must be >= 1");
    }
    if (levels == 1) {
        return register_pair(u, utilde, identity_field(u.width, u.height), delta, gamma, settings);
    }
    const GridPyramid pu = make_pyramid(u, levels);
    const GridPyramid put = make_pyramid(utilde, levels);

    DeformationField phi = identity_field(pu.levels[0].width, pu.levels[0].height);
    RegistrationResult res;
    for (int l = 0; l < levels; ++l) {
        res = register_pair(pu.levels[l], put.levels[l], phi, delta, gamma, settings);
        if (l + 1 < levels) {
            const int tw = pu.levels[l + 1].width;
            const int th = pu.levels[l + 1].height;
            ImageGrid cx{res.phi.width, res.phi.height, res.phi.vx};
            ImageGrid cy{res.phi.width, res.phi.height, res.phi.vy};
            phi = identity_field(tw, th);
            phi.vx = prolongate_grid(cx, tw, th).values;
            phi.vy = prolongate_grid(cy, tw, th).values;
            // prolongation can leak nonzeros onto the finer boundary; pin them
            for (int x = 0; x < tw; ++x) {
                phi.vx[phi.idx(x, 0)] = phi.vy[phi.idx(x, 0)] = 0.0;
                phi.vx[phi.idx(x, th - 1)] = phi.vy[phi.idx(x, th - 1)] = 0.0;
            }
            for (int y = 0; y < th; ++y) {
                phi.vx[phi.idx(0, y)] = phi.vy[phi.idx(0, y)] = 0.0;
                phi.vx[phi.idx(tw - 1, y)] = phi.vy[phi.idx(tw - 1, y)] = 0.0;
            }
        }
    }
    return res;
}

} // namespace metamorph
