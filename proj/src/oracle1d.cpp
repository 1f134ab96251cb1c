#include "metamorph/oracle1d.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>

namespace metamorph {

namespace {

struct Sample1D {
    int cell = 0;
    double w0 = 1.0;
    double w1 = 0.0;
    bool clamped = false;
};

Sample1D sample_point(int n, double p) {
    Sample1D s;
    s.clamped = (p < 0.0) || (p > 1.0);
    p = std::clamp(p, 0.0, 1.0);
    const double t = p * (n - 1);
    s.cell = std::min(static_cast<int>(t), n - 2);
    const double f = t - s.cell;
    s.w0 = 1.0 - f;
    s.w1 = f;
    return s;
}

std::vector<double> trapezoid_weights(int n) {
    const double h = 1.0 / (n - 1);
    std::vector<double> w(n, h);
    w.front() = 0.5 * h;
    w.back() = 0.5 * h;
    return w;
}

double dirichlet_1d(const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    const double h = 1.0 / (n - 1);
    double sum = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
        const double d = (v[i + 1] - v[i]) / h;
        sum += h * d * d;
    }
    return sum;
}

double laplacian_1d(const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    const double h = 1.0 / (n - 1);
    double sum = 0.0;
    for (int i = 1; i + 1 < n; ++i) {
        const double l = (v[i - 1] - 2.0 * v[i] + v[i + 1]) / (h * h);
        sum += h * l * l;
    }
    return sum;
}

void check_problem(const Oracle1DProblem& p) {
    if (p.nodes < 3 || p.nodes > 9) {
        throw std::invalid_argument("oracle1d: nodes must lie in [3, 9]");
    }
    if (p.segments < 1 || p.segments > 2) {
        throw std::invalid_argument("oracle1d: segments must be 1 or 2");
    }
    if (p.u_a.size() != static_cast<size_t>(p.nodes) || p.u_b.size() != static_cast<size_t>(p.nodes)) {
        throw std::invalid_argument("oracle1d: endpoint signals must have `nodes` entries");
    }
    if (!(p.delta > 0.0) || !(p.gamma > 0.0)) {
        throw std::invalid_argument("oracle1d: delta and gamma must be positive");
    }
    if (p.levels < 1 || p.levels > 9) {
        throw std::invalid_argument("oracle1d: levels must lie in [1, 9]");
    }
    if (!(p.range > 0.0) || p.range > 0.2) {
        throw std::invalid_argument("oracle1d: range must lie in (0, 0.2]");
    }
    const double space = std::pow(static_cast<double>(p.levels),
                                  static_cast<double>((p.nodes - 2) * p.segments));
    if (space > 1e7) {
        throw std::invalid_argument("oracle1d: search space levels^((nodes-2)*segments) = " +
                                    std::to_string(space) + " exceeds 1e7");
    }
}

long candidate_count(const Oracle1DProblem& p) {
    long c = 1;
    for (int i = 0; i < p.nodes - 2; ++i) {
        c *= p.levels;
    }
    return c;
}

void candidate_displacement(const Oracle1DProblem& p, long index, std::vector<double>& v) {
    v.assign(p.nodes, 0.0);
    for (int i = 1; i <= p.nodes - 2; ++i) {
        const int digit = static_cast<int>(index % p.levels);
        index /= p.levels;
        v[i] = (p.levels == 1) ? 0.0
                               : -p.range + 2.0 * p.range * digit / (p.levels - 1);
    }
}

// In-place lower Cholesky factor of a row-major SPD matrix.
void cholesky(std::vector<double>& a, int n) {
    for (int j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (int k = 0; k < j; ++k) {
            d -= a[j * n + k] * a[j * n + k];
        }
        if (!(d > 0.0)) {
            throw std::runtime_error("oracle1d: image subproblem matrix is not positive definite");
        }
        d = std::sqrt(d);
        a[j * n + j] = d;
        for (int i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (int k = 0; k < j; ++k) {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
}

void cholesky_solve(const std::vector<double>& l, int n, std::vector<double>& x) {
    for (int i = 0; i < n; ++i) {
        double s = x[i];
        for (int k = 0; k < i; ++k) {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = x[i];
        for (int k = i + 1; k < n; ++k) {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

std::vector<Sample1D> build_sampler(const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    const double h = 1.0 / (n - 1);
    std::vector<Sample1D> s(n);
    for (int i = 0; i < n; ++i) {
        s[i] = sample_point(n, i * h + v[i]);
    }
    return s;
}

double apply_sampler(const std::vector<Sample1D>& s, const std::vector<double>& u, int i) {
    return s[i].w0 * u[s[i].cell] + s[i].w1 * u[s[i].cell + 1];
}

/// Everything the pair loop needs about one displacement candidate.
struct Candidate {
    std::vector<double> v;
    double reg_v = 0.0;       // dirichlet(v) + gamma*laplacian(v)
    double reg_phi = 0.0;     // dirichlet(id + v) + gamma*laplacian(v)
    std::vector<Sample1D> s;
    std::vector<double> s_ub;     // S u_b            (second-segment role)
    double ub_const = 0.0;        // (S u_b)^T W (S u_b)
    std::vector<double> st_w_ua;  // S^T (w .* u_a)   (first-segment role)
    std::vector<double> chol;     // factor of S^T W S + W (first-segment role)
};

Candidate build_candidate(const Oracle1DProblem& p, long index, const std::vector<double>& w,
                          bool with_factor) {
    Candidate c;
    candidate_displacement(p, index, c.v);
    const int n = p.nodes;
    c.reg_v = dirichlet_1d(c.v) + p.gamma * laplacian_1d(c.v);
    std::vector<double> phi(n);
    const double h = 1.0 / (n - 1);
    for (int i = 0; i < n; ++i) {
        phi[i] = i * h + c.v[i];
    }
    c.reg_phi = dirichlet_1d(phi) + p.gamma * laplacian_1d(c.v);
    c.s = build_sampler(c.v);
    c.s_ub.resize(n);
    c.st_w_ua.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        c.s_ub[i] = apply_sampler(c.s, p.u_b, i);
        c.ub_const += w[i] * c.s_ub[i] * c.s_ub[i];
        const double r = w[i] * p.u_a[i];
        c.st_w_ua[c.s[i].cell] += c.s[i].w0 * r;
        c.st_w_ua[c.s[i].cell + 1] += c.s[i].w1 * r;
    }
    if (with_factor) {
        c.chol.assign(static_cast<size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i) {
            const int b = c.s[i].cell;
            c.chol[static_cast<size_t>(b) * n + b] += w[i] * c.s[i].w0 * c.s[i].w0;
            c.chol[static_cast<size_t>(b) * n + b + 1] += w[i] * c.s[i].w0 * c.s[i].w1;
            c.chol[static_cast<size_t>(b + 1) * n + b] += w[i] * c.s[i].w1 * c.s[i].w0;
            c.chol[static_cast<size_t>(b + 1) * n + b + 1] += w[i] * c.s[i].w1 * c.s[i].w1;
        }
        for (int i = 0; i < n; ++i) {
            c.chol[static_cast<size_t>(i) * n + i] += w[i];
        }
        cholesky(c.chol, n);
    }
    return c;
}

struct EnumOutcome {
    double energy = 0.0;
    long index1 = -1;
    long index2 = -1;
    std::vector<double> interior;  // optimal u_1 for the winner (K = 2 only)
};

/// Shared enumeration core. phi_variant switches the Dirichlet term from v
/// to id+v. visit, when set, sees every candidate's energy in a fixed order.
EnumOutcome enumerate_candidates(const Oracle1DProblem& p, bool phi_variant,
                                 const std::function<void(double, long, long)>* visit) {
    const int n = p.nodes;
    const long count = candidate_count(p);
    const std::vector<double> w = trapezoid_weights(n);
    EnumOutcome best;
    best.energy = std::numeric_limits<double>::infinity();

    if (p.segments == 1) {
        // u_0 = u_a and u_1 = u_b are both fixed; stream the candidates
        for (long idx = 0; idx < count; ++idx) {
            const Candidate c = build_candidate(p, idx, w, false);
            double mismatch = 0.0;
            for (int i = 0; i < n; ++i) {
                const double r = c.s_ub[i] - p.u_a[i];
                mismatch += w[i] * r * r;
            }
            const double reg = phi_variant ? c.reg_phi : c.reg_v;
            const double e = p.segments * (reg + mismatch / p.delta);
            if (visit) {
                (*visit)(e, idx, -1);
            }
            if (e < best.energy) {
                best.energy = e;
                best.index1 = idx;
            }
        }
        return best;
    }

    // K = 2: precompute every candidate once, then scan all pairs. For the
    // pair (phi_1, phi_2) the optimal interior image solves
    //   (S_1^T W S_1 + W) u = S_1^T W u_a + W S_2 u_b,
    // and the minimal mismatch value is const - b^T u with
    //   const = u_a^T W u_a + (S_2 u_b)^T W (S_2 u_b).
    std::vector<Candidate> cands;
    cands.reserve(count);
    for (long idx = 0; idx < count; ++idx) {
        cands.push_back(build_candidate(p, idx, w, true));
    }
    double ua_const = 0.0;
    for (int i = 0; i < n; ++i) {
        ua_const += w[i] * p.u_a[i] * p.u_a[i];
    }

    std::vector<double> b(n), x(n);
    for (long i1 = 0; i1 < count; ++i1) {
        const Candidate& c1 = cands[i1];
        const double reg1 = phi_variant ? c1.reg_phi : c1.reg_v;
        for (long i2 = 0; i2 < count; ++i2) {
            const Candidate& c2 = cands[i2];
            for (int i = 0; i < n; ++i) {
                b[i] = c1.st_w_ua[i] + w[i] * c2.s_ub[i];
            }
            x = b;
            cholesky_solve(c1.chol, n, x);
            double bx = 0.0;
            for (int i = 0; i < n; ++i) {
                bx += b[i] * x[i];
            }
            const double mismatch = ua_const + c2.ub_const - bx;
            const double reg2 = phi_variant ? c2.reg_phi : c2.reg_v;
            const double e = p.segments * (reg1 + reg2 + mismatch / p.delta);
            if (visit) {
                (*visit)(e, i1, i2);
            }
            if (e < best.energy) {
                best.energy = e;
                best.index1 = i1;
                best.index2 = i2;
                best.interior = x;
            }
        }
    }
    return best;
}

Segment1DEnergy segment_energy_nocheck(const std::vector<double>& u, const std::vector<double>& utilde,
                                       const std::vector<double>& v, double delta, double gamma,
                                       const std::vector<double>& w) {
    Segment1DEnergy e;
    e.dirichlet = dirichlet_1d(v);
    e.laplacian = laplacian_1d(v);
    const std::vector<Sample1D> s = build_sampler(v);
    for (size_t i = 0; i < u.size(); ++i) {
        const double r = apply_sampler(s, utilde, static_cast<int>(i)) - u[i];
        e.mismatch += w[i] * r * r;
    }
    e.total = e.dirichlet + gamma * e.laplacian + e.mismatch / delta;
    return e;
}

Oracle1DSolution outcome_to_solution(const Oracle1DProblem& p, const EnumOutcome& best) {
    Oracle1DSolution sol;
    sol.energy = best.energy;
    sol.deformations.resize(p.segments);
    candidate_displacement(p, best.index1, sol.deformations[0]);
    sol.images.push_back(p.u_a);
    if (p.segments == 2) {
        candidate_displacement(p, best.index2, sol.deformations[1]);
        sol.images.push_back(best.interior);
    }
    sol.images.push_back(p.u_b);
    const std::vector<double> w = trapezoid_weights(p.nodes);
    for (int k = 1; k <= p.segments; ++k) {
        sol.segment_energies.push_back(segment_energy_nocheck(
            sol.images[k - 1], sol.images[k], sol.deformations[k - 1], p.delta, p.gamma, w));
    }
    return sol;
}

} // namespace

Segment1DEnergy segment_energy_1d(const std::vector<double>& u, const std::vector<double>& utilde,
                                  const std::vector<double>& v, double delta, double gamma) {
    if (u.size() < 2 || u.size() != utilde.size() || u.size() != v.size()) {
        throw std::invalid_argument("segment_energy_1d: signals and displacement must share a size >= 2");
    }
    if (!(delta > 0.0) || !(gamma > 0.0)) {
        throw std::invalid_argument("segment_energy_1d: delta and gamma must be positive");
    }
    return segment_energy_nocheck(u, utilde, v, delta, gamma, trapezoid_weights(static_cast<int>(u.size())));
}

Oracle1DSolution brute_force_geodesic_1d(const Oracle1DProblem& problem) {
    check_problem(problem);
    return outcome_to_solution(problem, enumerate_candidates(problem, false, nullptr));
}

bool verify_dirichlet_constant_shift(const Oracle1DProblem& problem) {
    check_problem(problem);
    const EnumOutcome on_v = enumerate_candidates(problem, false, nullptr);
    const EnumOutcome on_phi = enumerate_candidates(problem, true, nullptr);
    if (on_v.index1 != on_phi.index1 || on_v.index2 != on_phi.index2) {
        return false;
    }
    if (on_v.interior != on_phi.interior) {
        return false;
    }
    // dirichlet(id+v) = dirichlet(v) + 1 per segment, exactly (the cross term
    // telescopes to v(1)-v(0) = 0), so the path energies differ by K*K
    const double k2 = static_cast<double>(problem.segments) * problem.segments;
    const double offset = on_phi.energy - on_v.energy;
    return std::abs(offset - k2) <= 1e-9 * std::max(1.0, std::abs(on_v.energy));
}

Oracle1DSolution solve_geodesic_1d(const Oracle1DProblem& problem, double outer_tol,
                                   int max_outer, const RegistrationSettings& registration) {
    check_problem(problem);
    const int n = problem.nodes;
    const int K = problem.segments;
    const std::vector<double> w = trapezoid_weights(n);
    const double h = 1.0 / (n - 1);

    auto energy_of = [&](const std::vector<double>& u, const std::vector<double>& ut,
                         const std::vector<double>& v) {
        return segment_energy_nocheck(u, ut, v, problem.delta, problem.gamma, w).total;
    };

    auto gradient_of = [&](const std::vector<double>& u, const std::vector<double>& ut,
                           const std::vector<double>& v, std::vector<double>& g) {
        g.assign(n, 0.0);
        for (int i = 0; i < n; ++i) {
            const Sample1D s = sample_point(n, i * h + v[i]);
            const double val = s.w0 * ut[s.cell] + s.w1 * ut[s.cell + 1];
            const double slope = s.clamped ? 0.0 : (ut[s.cell + 1] - ut[s.cell]) * (n - 1);
            g[i] += (2.0 / problem.delta) * w[i] * (val - u[i]) * slope;
        }
        for (int i = 0; i + 1 < n; ++i) {
            const double d = (v[i + 1] - v[i]) / h;
            g[i + 1] += 2.0 * d;
            g[i] -= 2.0 * d;
        }
        for (int i = 1; i + 1 < n; ++i) {
            const double l = (v[i - 1] - 2.0 * v[i] + v[i + 1]) / (h * h);
            const double c = 2.0 * problem.gamma * l / h;
            g[i - 1] += c;
            g[i] -= 2.0 * c;
            g[i + 1] += c;
        }
        g[0] = 0.0;
        g[n - 1] = 0.0;
    };

    auto register_segment = [&](const std::vector<double>& u, const std::vector<double>& ut,
                                std::vector<double>& v) {
        double energy = energy_of(u, ut, v);
        std::vector<double> g, trial(n);
        double next_step = registration.step_init;
        for (int iter = 1; iter <= registration.max_iterations; ++iter) {
            gradient_of(u, ut, v, g);
            double gnorm_sq = 0.0;
            for (double gi : g) {
                gnorm_sq += gi * gi;
            }
            if (gnorm_sq == 0.0) {
                break;
            }
            double step = next_step;
            bool accepted = false;
            double e_trial = 0.0;
            for (int bt = 0; bt <= registration.max_backtracks; ++bt) {
                for (int i = 0; i < n; ++i) {
                    trial[i] = v[i] - step * g[i];
                }
                e_trial = energy_of(u, ut, trial);
                if (e_trial <= energy - registration.armijo_c * step * gnorm_sq) {
                    accepted = true;
                    break;
                }
                step *= registration.backtrack_factor;
            }
            if (!accepted) {
                break;
            }
            const double prev = energy;
            v.swap(trial);
            energy = e_trial;
            next_step = 2.0 * step;
            if (prev - energy <= registration.rel_tol * std::abs(prev)) {
                break;
            }
        }
    };

    Oracle1DSolution sol;
    sol.images.resize(K + 1);
    for (int k = 0; k <= K; ++k) {
        const double t = static_cast<double>(k) / K;
        sol.images[k].resize(n);
        for (int i = 0; i < n; ++i) {
            sol.images[k][i] = (1.0 - t) * problem.u_a[i] + t * problem.u_b[i];
        }
    }
    sol.deformations.assign(K, std::vector<double>(n, 0.0));

    double prev_total = 0.0;
    for (int k = 1; k <= K; ++k) {
        prev_total += energy_of(sol.images[k - 1], sol.images[k], sol.deformations[k - 1]);
    }
    prev_total *= K;

    for (int outer = 1; outer <= max_outer; ++outer) {
        for (int k = 1; k <= K; ++k) {
            register_segment(sol.images[k - 1], sol.images[k], sol.deformations[k - 1]);
        }
        if (K == 2) {
            const std::vector<Sample1D> s1 = build_sampler(sol.deformations[0]);
            const std::vector<Sample1D> s2 = build_sampler(sol.deformations[1]);
            std::vector<double> a(static_cast<size_t>(n) * n, 0.0), b(n, 0.0);
            for (int i = 0; i < n; ++i) {
                const int c = s1[i].cell;
                a[static_cast<size_t>(c) * n + c] += w[i] * s1[i].w0 * s1[i].w0;
                a[static_cast<size_t>(c) * n + c + 1] += w[i] * s1[i].w0 * s1[i].w1;
                a[static_cast<size_t>(c + 1) * n + c] += w[i] * s1[i].w1 * s1[i].w0;
                a[static_cast<size_t>(c + 1) * n + c + 1] += w[i] * s1[i].w1 * s1[i].w1;
                const double r = w[i] * problem.u_a[i];
                b[c] += s1[i].w0 * r;
                b[c + 1] += s1[i].w1 * r;
            }
            for (int i = 0; i < n; ++i) {
                a[static_cast<size_t>(i) * n + i] += w[i];
                b[i] += w[i] * apply_sampler(s2, problem.u_b, i);
            }
            cholesky(a, n);
            cholesky_solve(a, n, b);
            sol.images[1] = b;
        }

        double total = 0.0;
        for (int k = 1; k <= K; ++k) {
            total += energy_of(sol.images[k - 1], sol.images[k], sol.deformations[k - 1]);
        }
        total *= K;
        const double decrease = prev_total - total;
        prev_total = total;
        if (decrease <= outer_tol * std::abs(total)) {
            break;
        }
    }

    sol.energy = prev_total;
    sol.segment_energies.clear();
    for (int k = 1; k <= K; ++k) {
        sol.segment_energies.push_back(segment_energy_nocheck(
            sol.images[k - 1], sol.images[k], sol.deformations[k - 1], problem.delta, problem.gamma, w));
    }
    return sol;
}

void dump_candidates_csv(const Oracle1DProblem& problem, const std::string& path, int max_rows) {
    check_problem(problem);
    if (max_rows < 1) {
        throw std::invalid_argument("dump_candidates_csv: max_rows must be positive");
    }
    using Entry = std::pair<double, std::pair<long, long>>;
    std::priority_queue<Entry> best;  // max-heap, so the worst kept row is on top
    const std::function<void(double, long, long)> visit = [&](double e, long i1, long i2) {
        best.emplace(e, std::make_pair(i1, i2));
        if (best.size() > static_cast<size_t>(max_rows)) {
            best.pop();
        }
    };
    enumerate_candidates(problem, false, &visit);

    std::vector<Entry> rows;
    rows.reserve(best.size());
    while (!best.empty()) {
        rows.push_back(best.top());
        best.pop();
    }
    std::sort(rows.begin(), rows.end());

    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("dump_candidates_csv: cannot open " + path);
    }
    out << "rank,energy";
    for (int k = 1; k <= problem.segments; ++k) {
        for (int i = 1; i <= problem.nodes - 2; ++i) {
            out << ",seg" << k << "_v" << i;
        }
    }
    out << "\n";
    out << std::setprecision(17);
    std::vector<double> v;
    for (size_t r = 0; r < rows.size(); ++r) {
        out << (r + 1) << "," << rows[r].first;
        candidate_displacement(problem, rows[r].second.first, v);
        for (int i = 1; i <= problem.nodes - 2; ++i) {
            out << "," << v[i];
        }
        if (problem.segments == 2) {
            candidate_displacement(problem, rows[r].second.second, v);
            for (int i = 1; i <= problem.nodes - 2; ++i) {
                out << "," << v[i];
            }
        }
        out << "\n";
    }
}

} // namespace metamorph
