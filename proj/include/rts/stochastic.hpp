// Deterministic splittable random streams plus the samplers behind the
// random-temperature head: Gumbel noise, Gamma-sum temperatures, and the
// Monte-Carlo / goodness-of-fit machinery that verifies them.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace rts::stochastic {

// Named substreams. Everything random in a run derives from one top-level
// seed plus one of these tags, so runs replay exactly.
namespace streams {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kTemperature = 3;
inline constexpr std::uint64_t kGumbel = 4;
inline constexpr std::uint64_t kPairs = 5;
inline constexpr std::uint64_t kShuffle = 6;  // + epoch
inline constexpr std::uint64_t kOod = 7;
inline constexpr std::uint64_t kProbes = 8;
inline constexpr std::uint64_t kEvalCorrupt = 9;
inline constexpr std::uint64_t kVerify = 10;
}  // namespace streams

// Counter-based stream: output i is a strong 64-bit hash of
// (seed, stream-id, i). Same (seed, stream-id) always replays the same
// sequence; distinct stream ids give unrelated sequences.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t next_u64();
    // Uniform in (0,1), bounded away from both endpoints by 1e-12.
    double uniform_open();
    double uniform(double lo, double hi);
    // Standard normal via Box-Muller (two uniforms per draw, no cached state).
    double normal();
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// One temperature draw of the random-temperature head: t = sum(v_i e_i^2)/(dof-2),
// floored at kTemperatureFloor when a degenerate draw lands at ~0.
inline constexpr double kTemperatureFloor = 1e-3;

struct TemperatureDraw {
    std::vector<double> v;        // per-component scales, all > 0
    std::vector<double> epsilon;  // standard normal draws
    double t = 0.0;               // floored temperature actually used
    double t_raw = 0.0;           // exact sum(v_i * eps_i^2) / (dof - 2)
    bool floored = false;
};

// Gumbel(0, t) variates via inverse CDF: -t*ln(-ln(U)).
std::vector<double> sample_gumbel(RngStream& rng, std::size_t n, double scale_t);

TemperatureDraw sample_temperature(RngStream& rng, const std::vector<double>& v);
// Deterministic variant used by the trainer and by degenerate-draw tests.
TemperatureDraw temperature_from_draws(const std::vector<double>& v,
                                       const std::vector<double>& epsilon);

// Gamma(alpha, rate beta) density / regularized CDF, via log-gamma.
double gamma_pdf(double t, double alpha, double beta);
double gamma_cdf(double t, double alpha, double beta);

// Frequency of argmax_k(scores_k + u_k) over `trials` draws of Gumbel(0,t)
// noise; converges to softmax(scores / t).
std::vector<double> mc_gumbel_argmax(const std::vector<double>& scores, double t,
                                     std::size_t trials, RngStream& rng);

// Closed-form softmax with temperature (max-shifted).
std::vector<double> softmax(const std::vector<double>& scores, double t = 1.0);

// One-sample Kolmogorov-Smirnov statistic against an arbitrary CDF.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);
// Asymptotic critical value sqrt(-ln(alpha/2)/2) / sqrt(n).
double ks_critical(double alpha, std::size_t n);

// Histogram mode: center of the fullest bin of width `bin_width`, bins
// aligned so that bin centers sit at integer multiples of bin_width.
double histogram_mode(const std::vector<double>& samples, double bin_width);

}  // namespace rts::stochastic
