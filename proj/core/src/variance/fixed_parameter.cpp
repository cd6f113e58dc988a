#include "smc/variance/fixed_parameter.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "smc/error.hpp"
#include "smc/summation.hpp"

namespace smc {

namespace {

constexpr double kTargetTolerance = 1e-10;
constexpr double kAcceptTolerance = 1e-8;
constexpr double kEdge = 1e-300;

/// exp(c + p log(theta) + q log(1 - theta)).
struct LogKernel {
    double c = 0.0;
    double p = 0.0;
    double q = 0.0;

    static LogKernel density(const BetaShape& s) {
        return {-(std::lgamma(s.a) + std::lgamma(s.b) - std::lgamma(s.a + s.b)), s.a - 1.0, s.b - 1.0};
    }
    LogKernel operator+(const LogKernel& o) const { return {c + o.c, p + o.p, q + o.q}; }
    LogKernel operator-(const LogKernel& o) const { return {c - o.c, p - o.p, q - o.q}; }
    LogKernel scaled(double s) const { return {c * s, p * s, q * s}; }
    double log_at(double lt, double l1) const { return c + p * lt + q * l1; }
    double at(double theta) const { return std::exp(log_at(std::log(theta), std::log1p(-theta))); }

    /// The same function evaluated relative to a reference point x0, so the
    /// large constant c cancels once instead of at every node.
    struct Centered {
        double log_scale = 0.0;
        double p = 0.0;
        double q = 0.0;
        double x0 = 0.5;

        double log_at(double theta) const {
            double out = log_scale;
            if (p != 0.0) out += p * std::log1p((theta - x0) / x0);
            if (q != 0.0) out += q * std::log1p((x0 - theta) / (1.0 - x0));
            return out;
        }
        double at(double theta) const { return std::exp(log_at(theta)); }
    };

    Centered centered() const {
        const double a = p + 1.0;
        const double b = q + 1.0;
        double x0 = 0.5;
        if (a > 1.0 && b > 1.0) x0 = (a - 1.0) / (a + b - 2.0);
        return {log_at(std::log(x0), std::log1p(-x0)), p, q, x0};
    }
};

void add_kernel_splits(const LogKernel& k, std::vector<double>& splits) {
    const double a = k.p + 1.0;
    const double b = k.q + 1.0;
    if (a > 0.0 && b > 0.0) {
        const double mode = (a > 1.0 && b > 1.0) ? (a - 1.0) / (a + b - 2.0) : a / (a + b);
        const double sd = std::sqrt(a * b / ((a + b) * (a + b) * (a + b + 1.0)));
        for (double c : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
            splits.push_back(mode - c * sd);
            splits.push_back(mode + c * sd);
        }
    }
    if (a < 1.0 || b < 1.0) {
        for (double e = 1e-1; e >= 1e-12; e *= 1e-1) {
            splits.push_back(e);
            splits.push_back(1.0 - e);
        }
    }
}

struct Panel {
    double a = 0.0;
    double b = 0.0;
    double value = 0.0;
    double error = 0.0;
    double l1 = 0.0;
    bool operator<(const Panel& o) const { return error < o.error; }
};

template <typename F>
Panel gk_panel(F& f, double a, double b) {
    Panel p{a, b};
    p.value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 0, 0.0, &p.error, &p.l1);
    return p;
}

/// Globally adaptive Gauss-Kronrod: always bisect the panel with the largest
/// error estimate, stop once the summed error is small against the summed L1.
/// A per-panel relative test would chase rounding noise where the integrand
/// is tiny.
template <typename F>
double integrate(F&& f, std::vector<double> splits) {
    constexpr std::size_t kMaxPanels = 4000;
    splits.push_back(0.0);
    splits.push_back(1.0);
    std::erase_if(splits, [](double x) { return !(x >= 0.0 && x <= 1.0); });
    std::sort(splits.begin(), splits.end());
    splits.erase(std::unique(splits.begin(), splits.end()), splits.end());

    std::priority_queue<Panel> heap;
    double error = 0.0;
    double l1 = 0.0;
    for (std::size_t i = 0; i + 1 < splits.size(); ++i) {
        Panel p = gk_panel(f, splits[i], splits[i + 1]);
        error += p.error;
        l1 += p.l1;
        heap.push(p);
    }
    while (error > kTargetTolerance * l1 + kEdge && heap.size() < kMaxPanels) {
        Panel worst = heap.top();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) break;
        heap.pop();
        Panel left = gk_panel(f, worst.a, mid);
        Panel right = gk_panel(f, mid, worst.b);
        error += left.error + right.error - worst.error;
        l1 += left.l1 + right.l1 - worst.l1;
        heap.push(left);
        heap.push(right);
    }
    // recompute from the panels; the running sums drift
    CompensatedSum total;
    CompensatedSum err_sum;
    CompensatedSum l1_sum;
    while (!heap.empty()) {
        total.add(heap.top().value);
        err_sum.add(heap.top().error);
        l1_sum.add(heap.top().l1);
        heap.pop();
    }
    error = err_sum.value();
    l1 = l1_sum.value();
    if (error > kAcceptTolerance * l1 + kEdge) {
        std::ostringstream msg;
        msg << "quadrature did not converge: achieved relative error " << (l1 > 0.0 ? error / l1 : error);
        throw Error(msg.str());
    }
    return total.value();
}

}  // namespace

BetaBernoulliVariance::BetaBernoulliVariance(BetaBernoulliModel model, std::function<double(double)> phi)
    : model_(std::move(model)), phi_(std::move(phi)) {
    model_.validate();
    if (!phi_) throw Error("functional is not defined");
    shapes_.push_back(model_.prior);
    for (int y : model_.observations) {
        BetaShape s = shapes_.back();
        (y == 1 ? s.a : s.b) += 1.0;
        shapes_.push_back(s);
    }
    breakpoints_.resize(shapes_.size());
}

double BetaBernoulliVariance::posterior_mean(std::size_t t) const {
    const LogKernel k = LogKernel::density(shapes_.at(t));
    const auto kc = k.centered();
    std::vector<double> splits;
    add_kernel_splits(k, splits);
    return integrate([&](double th) { return kc.at(th) * phi_(th); }, splits);
}

const std::vector<double>& BetaBernoulliVariance::weight_breakpoints(std::size_t k) const {
    auto& slot = breakpoints_.at(k);
    if (slot) return *slot;
    const LogKernel prop = k == 0 ? LogKernel::density(model_.instrumental) : LogKernel::density(shapes_[k - 1]);
    const auto v = (LogKernel::density(shapes_[k]) - prop).centered();
    auto level = [&](double th) { return snapped_floor(v.at(th)); };
    constexpr int kGrid = 4000;
    std::vector<double> out;
    double prev_x = 1e-12;
    double prev_level = level(prev_x);
    for (int i = 1; i <= kGrid; ++i) {
        const double x = i == kGrid ? 1.0 - 1e-12 : static_cast<double>(i) / kGrid;
        const double lv = level(x);
        if (lv != prev_level) {
            double lo = prev_x;
            double hi = x;
            for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
                const double mid = 0.5 * (lo + hi);
                (level(mid) == prev_level ? lo : hi) = mid;
            }
            out.push_back(0.5 * (lo + hi));
        }
        prev_x = x;
        prev_level = lv;
    }
    slot = std::move(out);
    return *slot;
}

double BetaBernoulliVariance::sis(std::size_t t) const {
    const double m = posterior_mean(t);
    const LogKernel k = LogKernel::density(shapes_.at(t)).scaled(2.0) - LogKernel::density(model_.instrumental);
    const auto kc = k.centered();
    std::vector<double> splits;
    add_kernel_splits(k, splits);
    return integrate(
        [&](double th) {
            const double d = phi_(th) - m;
            return kc.at(th) * d * d;
        },
        splits);
}

double BetaBernoulliVariance::multinomial(std::size_t t) const {
    const double m = posterior_mean(t);
    CompensatedSum acc;
    acc.add(sis(t));
    const LogKernel target2 = LogKernel::density(shapes_.at(t)).scaled(2.0);
    for (std::size_t k = 1; k <= t; ++k) {
        const LogKernel kern = target2 - LogKernel::density(shapes_[k - 1]);
        const auto kc = kern.centered();
        std::vector<double> splits;
        add_kernel_splits(kern, splits);
        acc.add(integrate(
            [&](double th) {
                const double d = phi_(th) - m;
                return kc.at(th) * d * d;
            },
            splits));
    }
    return acc.value();
}

double BetaBernoulliVariance::residual(std::size_t t) const {
    const double m = posterior_mean(t);
    CompensatedSum acc;
    acc.add(sis(t));
    const LogKernel target = LogKernel::density(shapes_.at(t));
    for (std::size_t k = 0; k < t; ++k) {
        const LogKernel prop = k == 0 ? LogKernel::density(model_.instrumental) : LogKernel::density(shapes_[k - 1]);
        const LogKernel cur = LogKernel::density(shapes_[k]);
        const LogKernel v = cur - prop;
        const LogKernel k1 = prop + target - cur;                           // pi~_k h / phibar
        const LogKernel k2 = prop + target.scaled(2.0) - cur.scaled(2.0);  // pi~_k h^2 / phibar^2
        const std::vector<double>& breaks = weight_breakpoints(k);
        const auto vc = v.centered();
        const auto c0 = prop.centered();
        const auto c1 = k1.centered();
        const auto c2 = k2.centered();
        auto r_at = [&](double th) { return fractional_part(vc.at(th)); };

        std::vector<double> s0(breaks), s1(breaks), s2(breaks);
        add_kernel_splits(prop, s0);
        add_kernel_splits(k1, s1);
        add_kernel_splits(k2, s2);
        const double e0 = integrate([&](double th) { return c0.at(th) * r_at(th); }, s0);
        if (!(e0 > 0.0)) continue;  // deterministic selection: R_k = 0
        const double e1 = integrate([&](double th) { return c1.at(th) * r_at(th) * (phi_(th) - m); }, s1);
        const double e2 = integrate(
            [&](double th) {
                const double d = phi_(th) - m;
                return c2.at(th) * r_at(th) * d * d;
            },
            s2);
        acc.add(e2 - e1 * e1 / e0);
    }
    return acc.value();
}

FixedParameterVariances BetaBernoulliVariance::at(std::size_t t) const { return {sis(t), multinomial(t), residual(t)}; }

double BetaBernoulliVariance::value(std::size_t t, SelectionScheme scheme) const {
    switch (scheme) {
        case SelectionScheme::none: return sis(t);
        case SelectionScheme::multinomial: return multinomial(t);
        case SelectionScheme::residual: return residual(t);
        case SelectionScheme::systematic: break;
    }
    throw Error("no asymptotic variance is available for systematic selection");
}

}  // namespace smc
