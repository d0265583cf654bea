#include "rts/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rts::stochastic {

namespace {

// SplitMix64 finalizer; full-avalanche 64-bit mix.
std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Regularized lower incomplete gamma P(a, x): series for x < a+1,
// continued fraction otherwise.
double gammp(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::domain_error("gammp: bad arguments");
    if (x == 0.0) return 0.0;
    const double gln = std::lgamma(a);
    const int kMaxIter = 500;
    const double kEps = 1e-15;
    if (x < a + 1.0) {
        double ap = a;
        double sum = 1.0 / a;
        double del = sum;
        for (int i = 0; i < kMaxIter; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * kEps)
                return sum * std::exp(-x + a * std::log(x) - gln);
        }
        throw std::runtime_error("gammp: series did not converge");
    }
    // Lentz continued fraction for Q(a, x)
    const double kFpMin = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / kFpMin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = b + an / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) {
            double q = std::exp(-x + a * std::log(x) - gln) * h;
            return 1.0 - q;
        }
    }
    throw std::runtime_error("gammp: continued fraction did not converge");
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), key_(mix64(seed ^ mix64(stream_id))) {}

std::uint64_t RngStream::next_u64() {
    return mix64(key_ + counter_++ * 0x9e3779b97f4a7c15ULL);
}

double RngStream::uniform_open() {
    double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return std::clamp(u, 1e-12, 1.0 - 1e-12);
}

double RngStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform_open();
}

double RngStream::normal() {
    double u1 = uniform_open();
    double u2 = uniform_open();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("RngStream::below: n must be positive");
    // Rejection-free modulo is fine here: n is tiny relative to 2^64.
    return next_u64() % n;
}

std::vector<double> sample_gumbel(RngStream& rng, std::size_t n, double scale_t) {
    if (scale_t <= 0.0) throw std::invalid_argument("sample_gumbel: scale must be positive");
    std::vector<double> out(n);
    for (double& x : out) x = -scale_t * std::log(-std::log(rng.uniform_open()));
    return out;
}

TemperatureDraw temperature_from_draws(const std::vector<double>& v,
                                       const std::vector<double>& epsilon) {
    const std::size_t dof = v.size();
    if (dof < 3) throw std::invalid_argument("temperature: dof must be >= 3 (divisor dof-2)");
    if (epsilon.size() != dof) throw std::invalid_argument("temperature: eps/v length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < dof; ++i) {
        if (v[i] <= 0.0) throw std::invalid_argument("temperature: scales must be positive");
        acc += v[i] * epsilon[i] * epsilon[i];
    }
    TemperatureDraw d;
    d.v = v;
    d.epsilon = epsilon;
    d.t_raw = acc / static_cast<double>(dof - 2);
    d.floored = d.t_raw < kTemperatureFloor;
    d.t = d.floored ? kTemperatureFloor : d.t_raw;
    return d;
}

TemperatureDraw sample_temperature(RngStream& rng, const std::vector<double>& v) {
    std::vector<double> eps(v.size());
    for (double& e : eps) e = rng.normal();
    return temperature_from_draws(v, eps);
}

double gamma_pdf(double t, double alpha, double beta) {
    if (t <= 0.0 || alpha <= 0.0 || beta <= 0.0) throw std::domain_error("gamma_pdf: domain violation");
    return std::exp(alpha * std::log(beta) + (alpha - 1.0) * std::log(t) - beta * t -
                    std::lgamma(alpha));
}

double gamma_cdf(double t, double alpha, double beta) {
    if (alpha <= 0.0 || beta <= 0.0) throw std::domain_error("gamma_cdf: domain violation");
    if (t <= 0.0) return 0.0;
    return gammp(alpha, beta * t);
}

std::vector<double> softmax(const std::vector<double>& scores, double t) {
    if (t <= 0.0) throw std::invalid_argument("softmax: temperature must be positive");
    double mx = *std::max_element(scores.begin(), scores.end());
    std::vector<double> p(scores.size());
    double z = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        p[i] = std::exp((scores[i] - mx) / t);
        z += p[i];
    }
    for (double& x : p) x /= z;
    return p;
}

std::vector<double> mc_gumbel_argmax(const std::vector<double>& scores, double t,
                                     std::size_t trials, RngStream& rng) {
    if (trials == 0) throw std::invalid_argument("mc_gumbel_argmax: trials must be >= 1");
    if (t <= 0.0) throw std::invalid_argument("mc_gumbel_argmax: scale must be positive");
    std::vector<std::size_t> counts(scores.size(), 0);
    for (std::size_t trial = 0; trial < trials; ++trial) {
        std::size_t best = 0;
        double best_val = -1e308;
        for (std::size_t k = 0; k < scores.size(); ++k) {
            double u = -t * std::log(-std::log(rng.uniform_open()));
            double val = scores[k] + u;
            if (val > best_val) {
                best_val = val;
                best = k;
            }
        }
        ++counts[best];
    }
    std::vector<double> freq(scores.size());
    for (std::size_t k = 0; k < scores.size(); ++k)
        freq[k] = static_cast<double>(counts[k]) / static_cast<double>(trials);
    return freq;
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
    if (samples.empty()) throw std::invalid_argument("ks_statistic: empty sample");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double f = cdf(samples[i]);
        d = std::max(d, f - static_cast<double>(i) / n);
        d = std::max(d, static_cast<double>(i + 1) / n - f);
    }
    return d;
}

double ks_critical(double alpha, std::size_t n) {
    if (alpha <= 0.0 || alpha >= 1.0 || n == 0) throw std::invalid_argument("ks_critical: bad arguments");
    return std::sqrt(-std::log(alpha / 2.0) / 2.0) / std::sqrt(static_cast<double>(n));
}

double histogram_mode(const std::vector<double>& samples, double bin_width) {
    if (samples.empty() || bin_width <= 0.0) throw std::invalid_argument("histogram_mode: bad arguments");
    // Bin b covers [(b-0.5)*w, (b+0.5)*w); center b*w.
    std::vector<std::size_t> counts;
    long long lo = 0;
    bool first = true;
    for (double x : samples) {
        long long b = std::llround(x / bin_width);
        if (first) {
            lo = b;
            counts.assign(1, 0);
            first = false;
        }
        if (b < lo) {
            counts.insert(counts.begin(), static_cast<std::size_t>(lo - b), 0);
            lo = b;
        } else if (b - lo >= static_cast<long long>(counts.size())) {
            counts.resize(static_cast<std::size_t>(b - lo + 1), 0);
        }
        ++counts[static_cast<std::size_t>(b - lo)];
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < counts.size(); ++i)
        if (counts[i] > counts[best]) best = i;
    return static_cast<double>(lo + static_cast<long long>(best)) * bin_width;
}

}  // namespace rts::stochastic
