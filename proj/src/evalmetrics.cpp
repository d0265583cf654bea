#include "rts/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <set>
#include <stdexcept>

namespace rts::evalmetrics {

RocCurve roc(const std::vector<double>& in_scores, const std::vector<double>& ood_scores) {
    if (in_scores.empty() || ood_scores.empty())
        throw std::invalid_argument("roc: both score lists must be non-empty");

    std::vector<double> in_sorted = in_scores;
    std::vector<double> ood_sorted = ood_scores;
    std::sort(in_sorted.begin(), in_sorted.end());
    std::sort(ood_sorted.begin(), ood_sorted.end());

    std::vector<double> thresholds;
    thresholds.reserve(in_sorted.size() + ood_sorted.size());
    std::merge(in_sorted.begin(), in_sorted.end(), ood_sorted.begin(), ood_sorted.end(),
               std::back_inserter(thresholds));
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    RocCurve curve;
    curve.num_in = static_cast<long long>(in_sorted.size());
    curve.num_ood = static_cast<long long>(ood_sorted.size());
    curve.points.push_back({-std::numeric_limits<double>::infinity(), 0.0, 0.0, 0, 0});

    std::size_t ii = 0, oi = 0;
    for (double th : thresholds) {
        while (ii < in_sorted.size() && in_sorted[ii] <= th) ++ii;
        while (oi < ood_sorted.size() && ood_sorted[oi] <= th) ++oi;
        RocPoint p;
        p.threshold = th;
        p.tp = static_cast<long long>(ii);
        p.fp = static_cast<long long>(oi);
        p.tpr = static_cast<double>(p.tp) / static_cast<double>(curve.num_in);
        p.fpr = static_cast<double>(p.fp) / static_cast<double>(curve.num_ood);
        curve.points.push_back(p);
    }
    return curve;
}

double auc(const RocCurve& curve) {
    if (curve.points.size() < 2 || curve.num_in <= 0 || curve.num_ood <= 0)
        throw std::invalid_argument("auc: malformed curve");
    // 2 * area * num_in * num_ood accumulated in integers, exact.
    long long twice_area = 0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const RocPoint& a = curve.points[i - 1];
        const RocPoint& b = curve.points[i];
        twice_area += (b.fp - a.fp) * (a.tp + b.tp);
    }
    return static_cast<double>(twice_area) /
           (2.0 * static_cast<double>(curve.num_in) * static_cast<double>(curve.num_ood));
}

double tnr_at_tpr(const RocCurve& curve, double tpr_target) {
    if (curve.points.empty()) throw std::invalid_argument("tnr_at_tpr: empty curve");
    if (tpr_target <= 0.0 || tpr_target > 1.0)
        throw std::invalid_argument("tnr_at_tpr: target must be in (0,1]");
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        const RocPoint& p = curve.points[i];
        if (p.tpr >= tpr_target) {
            if (p.tpr == tpr_target || i == 0) return 1.0 - p.fpr;
            const RocPoint& q = curve.points[i - 1];
            double fpr = q.fpr + (tpr_target - q.tpr) * (p.fpr - q.fpr) / (p.tpr - q.tpr);
            return 1.0 - fpr;
        }
    }
    return 1.0 - curve.points.back().fpr;  // unreachable for valid curves
}

double fnmr_at_fmr(const std::vector<double>& genuine_sims,
                   const std::vector<double>& impostor_sims, double fmr_target) {
    if (genuine_sims.empty() || impostor_sims.empty())
        throw std::invalid_argument("fnmr_at_fmr: empty similarity list");
    if (fmr_target < 0.0 || fmr_target > 1.0)
        throw std::invalid_argument("fnmr_at_fmr: target must be in [0,1]");

    std::vector<double> imp = impostor_sims;
    std::sort(imp.begin(), imp.end());
    const double n_imp = static_cast<double>(imp.size());

    // Candidates ascending: FMR(theta) = #{impostor >= theta} / n is
    // non-increasing, so the first qualifying candidate is the smallest.
    bool found = false;
    double threshold = 0.0;
    for (std::size_t i = 0; i < imp.size(); ++i) {
        if (i > 0 && imp[i] == imp[i - 1]) continue;
        double fmr = static_cast<double>(imp.size() - i) / n_imp;
        if (fmr <= fmr_target) {
            threshold = imp[i];
            found = true;
            break;
        }
    }

    long long misses = 0;
    if (found) {
        for (double g : genuine_sims)
            if (g < threshold) ++misses;
    } else {
        // Even the largest impostor similarity exceeds the budget: the
        // threshold sits just above it, so matches require sim > max.
        double top = imp.back();
        for (double g : genuine_sims)
            if (g <= top) ++misses;
    }
    return static_cast<double>(misses) / static_cast<double>(genuine_sims.size());
}

RejectCurve error_vs_reject(const datasynth::PairSet& pairs,
                            const std::vector<double>& image_uncertainty,
                            const std::vector<double>& genuine_sims,
                            const std::vector<double>& impostor_sims, double fmr_target,
                            const std::vector<double>& fractions) {
    if (genuine_sims.size() != pairs.genuine.size() ||
        impostor_sims.size() != pairs.impostor.size())
        throw std::invalid_argument("error_vs_reject: similarity/pair list mismatch");

    std::set<std::size_t> image_set;
    for (const auto& [a, b] : pairs.genuine) {
        image_set.insert(a);
        image_set.insert(b);
    }
    for (const auto& [a, b] : pairs.impostor) {
        image_set.insert(a);
        image_set.insert(b);
    }
    std::vector<std::size_t> images(image_set.begin(), image_set.end());
    for (std::size_t idx : images)
        if (idx >= image_uncertainty.size())
            throw std::invalid_argument("error_vs_reject: image without an uncertainty score");

    // Highest uncertainty first; ties broken by descending sample index.
    std::sort(images.begin(), images.end(), [&](std::size_t a, std::size_t b) {
        if (image_uncertainty[a] != image_uncertainty[b])
            return image_uncertainty[a] > image_uncertainty[b];
        return a > b;
    });

    RejectCurve curve;
    curve.fmr_target = fmr_target;
    const double n_images = static_cast<double>(images.size());
    for (double f : fractions) {
        if (f < 0.0 || f >= 1.0) throw std::invalid_argument("error_vs_reject: fraction must be in [0,1)");
        std::size_t drop = static_cast<std::size_t>(std::ceil(f * n_images));
        std::set<std::size_t> rejected(images.begin(), images.begin() + static_cast<long>(drop));

        std::vector<double> gen, imp;
        for (std::size_t i = 0; i < pairs.genuine.size(); ++i) {
            const auto& [a, b] = pairs.genuine[i];
            if (!rejected.count(a) && !rejected.count(b)) gen.push_back(genuine_sims[i]);
        }
        for (std::size_t i = 0; i < pairs.impostor.size(); ++i) {
            const auto& [a, b] = pairs.impostor[i];
            if (!rejected.count(a) && !rejected.count(b)) imp.push_back(impostor_sims[i]);
        }

        RejectPoint pt;
        pt.reject_fraction = f;
        if (gen.empty() || imp.empty()) {
            pt.defined = false;
            pt.fnmr = std::numeric_limits<double>::quiet_NaN();
        } else {
            pt.fnmr = fnmr_at_fmr(gen, imp, fmr_target);
        }
        curve.points.push_back(pt);
    }
    return curve;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < v.size()) {
        std::size_t j = i;
        while (j + 1 < v.size() && v[order[j + 1]] == v[order[i]]) ++j;
        double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("spearman: length mismatch");
    if (xs.size() < 3) throw std::invalid_argument("spearman: need at least 3 points");
    std::vector<double> rx = average_ranks(xs);
    std::vector<double> ry = average_ranks(ys);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(rx.size());
    my /= static_cast<double>(ry.size());
    double num = 0.0, dx = 0.0, dy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    if (dx == 0.0 || dy == 0.0) throw std::domain_error("spearman: zero variance in a ranking");
    return num / std::sqrt(dx * dy);
}

VerificationResult verification_accuracy(const std::vector<double>& genuine_sims,
                                         const std::vector<double>& impostor_sims) {
    if (genuine_sims.empty() || impostor_sims.empty())
        throw std::invalid_argument("verification_accuracy: empty similarity list");
    std::vector<double> all = genuine_sims;
    all.insert(all.end(), impostor_sims.begin(), impostor_sims.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());

    const double total = static_cast<double>(genuine_sims.size() + impostor_sims.size());
    VerificationResult best;
    best.accuracy = -1.0;
    for (double th : all) {  // match iff sim >= th
        long long correct = 0;
        for (double g : genuine_sims)
            if (g >= th) ++correct;
        for (double i : impostor_sims)
            if (i < th) ++correct;
        double acc = static_cast<double>(correct) / total;
        if (acc > best.accuracy) {
            best.accuracy = acc;
            best.threshold = th;
        }
    }
    return best;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_roc_csv(const RocCurve& curve, std::ostream& out) {
    out << "threshold,tpr,fpr\n";
    for (const RocPoint& p : curve.points)
        out << format_double(p.threshold) << ',' << format_double(p.tpr) << ','
            << format_double(p.fpr) << '\n';
}

void write_reject_csv(const RejectCurve& curve, std::ostream& out) {
    out << "reject_fraction,fnmr\n";
    for (const RejectPoint& p : curve.points)
        out << format_double(p.reject_fraction) << ','
            << (p.defined ? format_double(p.fnmr) : "nan") << '\n';
}

}  // namespace rts::evalmetrics
