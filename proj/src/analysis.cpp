#include "dsmt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "dsmt/common.hpp"
#include "dsmt/rng.hpp"

namespace dsmt {

namespace {

constexpr double kTol = 1e-9;
constexpr std::size_t kMaxIters = 1000;
constexpr double kRankEps = 1e-12;

// Dominant eigenvector of a symmetric d×d matrix; zero vector when the
// matrix is numerically null.
std::vector<double> power_iteration(const std::vector<double>& cov, std::size_t d) {
    Rng rng(0x9e3779b97f4a7c15ULL);
    std::vector<double> v(d);
    double norm = 0.0;
    for (double& x : v) {
        x = rng.uniform(-1.0, 1.0);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;

    std::vector<double> w(d);
    for (std::size_t iter = 0; iter < kMaxIters; ++iter) {
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += cov[i * d + j] * v[j];
            w[i] = s;
        }
        double wn = 0.0;
        for (double x : w) wn += x * x;
        wn = std::sqrt(wn);
        if (wn < kRankEps) return std::vector<double>(d, 0.0);
        double delta = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            w[i] /= wn;
            delta = std::max(delta, std::abs(w[i] - v[i]));
        }
        v = w;
        if (delta < kTol) break;
    }
    return v;
}

void fix_sign(std::vector<double>& v) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    if (v[arg] < 0.0)
        for (double& x : v) x = -x;
}

}  // namespace

GeometryExport geometry_export(const Tensor& table) {
    if (table.rank() != 2 || table.extent(0) == 0)
        throw ContractError("geometry_export: need a nonempty (n,d) table, got " +
                            shape_str(table.shape()));
    const std::size_t n = table.extent(0), d = table.extent(1);
    GeometryExport g;
    g.projection.assign(n, {0.0, 0.0});

    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += table(i, j);
    for (double& m : mean) m /= static_cast<double>(n);
    double mean_norm = 0.0;
    for (double m : mean) mean_norm += m * m;
    mean_norm = std::sqrt(mean_norm);

    // Cosine of each row against the mean row (the conicity summands).
    double cos_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double c = 0.0;
        if (mean_norm >= kRankEps) {
            double rn = 0.0, dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                rn += table(i, j) * table(i, j);
                dot += table(i, j) * mean[j];
            }
            rn = std::sqrt(rn);
            if (rn >= kRankEps) c = dot / (rn * mean_norm);
        }
        cos_sum += c;
        const auto bin = static_cast<std::size_t>(std::clamp(
            static_cast<std::ptrdiff_t>(std::floor((c + 1.0) / 2.0 * 64.0)), std::ptrdiff_t{0},
            std::ptrdiff_t{63}));
        ++g.histogram[bin];
    }
    g.conicity = mean_norm < kRankEps ? 0.0 : cos_sum / static_cast<double>(n);

    // Covariance of centered rows.
    std::vector<double> centered(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) centered[i * d + j] = table(i, j) - mean[j];
    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = centered[i * d + a];
            if (xa == 0.0) continue;
            for (std::size_t b = 0; b < d; ++b) cov[a * d + b] += xa * centered[i * d + b];
        }
    for (double& c : cov) c /= static_cast<double>(n);

    auto eigenvalue = [&](const std::vector<double>& v) {
        double lambda = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += cov[i * d + j] * v[j];
            lambda += v[i] * s;
        }
        return lambda;
    };

    std::vector<double> v1 = power_iteration(cov, d);
    const double l1 = eigenvalue(v1);
    if (l1 < kRankEps) {
        g.rank_deficient = true;  // rank 0: every row sits at the mean
        return g;
    }
    fix_sign(v1);

    std::vector<double> deflated = cov;
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) deflated[a * d + b] -= l1 * v1[a] * v1[b];
    std::vector<double> v2 = power_iteration(deflated, d);
    double l2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += deflated[i * d + j] * v2[j];
        l2 += v2[i] * s;
    }
    if (l2 < std::max(kRankEps, kRankEps * l1)) {
        g.rank_deficient = true;
        std::fill(v2.begin(), v2.end(), 0.0);
    } else {
        fix_sign(v2);
    }

    for (std::size_t i = 0; i < n; ++i) {
        double x = 0.0, y = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            x += centered[i * d + j] * v1[j];
            y += centered[i * d + j] * v2[j];
        }
        g.projection[i] = {x, y};
    }
    return g;
}

void write_geometry(std::ostream& os, const GeometryExport& g) {
    os << "conicity\t" << format_double(g.conicity) << "\n";
    for (std::size_t b = 0; b < g.histogram.size(); ++b) {
        const double lo = -1.0 + 2.0 * static_cast<double>(b) / 64.0;
        const double hi = -1.0 + 2.0 * static_cast<double>(b + 1) / 64.0;
        os << "hist\t" << b << "\t" << format_double(lo) << "\t" << format_double(hi) << "\t"
           << g.histogram[b] << "\n";
    }
    for (std::size_t i = 0; i < g.projection.size(); ++i)
        os << "proj\t" << i << "\t" << format_double(g.projection[i][0]) << "\t"
           << format_double(g.projection[i][1]) << "\n";
}

std::array<double, 2> two_way_renormalize(double forward, double backward) {
    const double mass = forward + backward;
    if (mass < 1e-12) return {0.5, 0.5};
    return {forward / mass, backward / mass};
}

}  // namespace dsmt
