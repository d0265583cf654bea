// Evaluation computations. Score convention everywhere: higher uncertainty
// score = more OOD; ROC positives are in-distribution samples, predicted
// positive when their score falls at or below the threshold.
#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "rts/datasynth.hpp"

namespace rts::evalmetrics {

struct RocPoint {
    double threshold;  // predict in-distribution iff score <= threshold
    double tpr;
    double fpr;
    long long tp;  // in-distribution samples at or below threshold
    long long fp;  // OOD samples at or below threshold
};

struct RocCurve {
    std::vector<RocPoint> points;  // starts at (0,0), ends at (1,1); ties grouped
    long long num_in = 0;
    long long num_ood = 0;
};

struct RejectPoint {
    double reject_fraction;
    double fnmr;  // NaN when the point is undefined
    bool defined = true;
};

struct RejectCurve {
    std::vector<RejectPoint> points;
    double fmr_target = 0.0;
};

RocCurve roc(const std::vector<double>& in_scores, const std::vector<double>& ood_scores);

// Trapezoidal area; equals the Mann-Whitney statistic with ties counted 1/2,
// exactly (integer accumulation internally).
double auc(const RocCurve& curve);

// TNR = 1 - FPR at TPR == target, linearly interpolated between the two
// adjacent sweep points.
double tnr_at_tpr(const RocCurve& curve, double tpr_target);

// Finite-sample threshold: smallest impostor similarity whose >= tail has
// FMR <= target; if none qualifies (e.g. fmr_target < 1/n) the threshold
// sits just above the largest impostor similarity. FNMR = fraction of
// genuine similarities strictly below the threshold.
double fnmr_at_fmr(const std::vector<double>& genuine_sims,
                   const std::vector<double>& impostor_sims, double fmr_target);

// For each fraction f: drop the ceil(f*N) highest-uncertainty images
// (ties broken by descending sample index), discard pairs touching them,
// recompute FNMR on the survivors. `image_uncertainty` is keyed by sample
// index; `genuine_sims`/`impostor_sims` align with the pair lists.
RejectCurve error_vs_reject(const datasynth::PairSet& pairs,
                            const std::vector<double>& image_uncertainty,
                            const std::vector<double>& genuine_sims,
                            const std::vector<double>& impostor_sims, double fmr_target,
                            const std::vector<double>& fractions);

// Rank correlation with averaged ties.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

// Best-threshold verification accuracy over genuine/impostor similarities.
struct VerificationResult {
    double accuracy = 0.0;
    double threshold = 0.0;
};
VerificationResult verification_accuracy(const std::vector<double>& genuine_sims,
                                         const std::vector<double>& impostor_sims);

// --- CSV emission (column names documented in the README) -------------------
void write_roc_csv(const RocCurve& curve, std::ostream& out);
void write_reject_csv(const RejectCurve& curve, std::ostream& out);

std::string format_double(double v);  // %.17g, round-trip exact

}  // namespace rts::evalmetrics
