#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "rts/datasynth.hpp"
#include "support/oracles.hpp"

using namespace rts::datasynth;
using rts::stochastic::RngStream;

namespace {
double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / std::sqrt(na * nb);
}
}  // namespace

TEST_CASE("gen_identities basics") {
    RngStream rng(1, 1);
    Dataset ds = gen_identities(rng, 10, 16, 8, 0.3);
    CHECK(ds.samples.size() == 80);
    CHECK(ds.num_identities == 10);
    CHECK(ds.input_dim == 16);

    // train/test disjoint by construction; every identity has >= 2 test samples
    std::vector<int> test_count(10, 0);
    for (const Sample& s : ds.samples) {
        CHECK(s.label >= 0);
        CHECK(s.noise_kind == NoiseKind::Clean);
        if (s.split == Split::Test) ++test_count[static_cast<std::size_t>(s.label)];
    }
    for (int c : test_count) CHECK(c >= 2);

    CHECK_THROWS_AS(gen_identities(rng, 1, 16, 8, 0.3), std::invalid_argument);
    CHECK_THROWS_AS(gen_identities(rng, 4, 16, 3, 0.3), std::invalid_argument);
    CHECK_THROWS_AS(gen_identities(rng, 4, 16, 8, 1.5), std::invalid_argument);
}

TEST_CASE("tiny spread collapses samples onto the prototype") {
    RngStream rng(2, 1);
    std::vector<std::vector<double>> protos{{1.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}};
    Dataset ds = gen_identities_with_prototypes(rng, protos, 4, 1e-9);
    for (const Sample& s : ds.samples)
        CHECK(cosine(s.x, protos[static_cast<std::size_t>(s.label)]) ==
              doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("antipodal prototypes give cross-identity cosine near -1") {
    RngStream rng(3, 1);
    std::vector<double> p(8, 0.0);
    p[0] = 1.0;
    std::vector<double> q(8, 0.0);
    q[0] = -1.0;
    Dataset ds = gen_identities_with_prototypes(rng, {p, q}, 4, 0.01);
    for (const Sample& a : ds.samples)
        for (const Sample& b : ds.samples)
            if (a.label != b.label) CHECK(cosine(a.x, b.x) < -0.99);
}

TEST_CASE("within-identity cosine exceeds cross-identity cosine on average") {
    RngStream rng(4, 1);
    Dataset ds = gen_identities(rng, 50, 32, 8, 0.3);
    double within = 0.0, cross = 0.0;
    long long nw = 0, nc = 0;
    for (std::size_t i = 0; i < ds.samples.size(); i += 3)
        for (std::size_t j = i + 1; j < ds.samples.size(); j += 3) {
            double c = cosine(ds.samples[i].x, ds.samples[j].x);
            if (ds.samples[i].label == ds.samples[j].label) {
                within += c;
                ++nw;
            } else {
                cross += c;
                ++nc;
            }
        }
    CHECK(within / static_cast<double>(nw) > cross / static_cast<double>(nc));
}

TEST_CASE("corrupt: level zero is identity, unknown levels rejected") {
    RngStream rng(5, 1);
    std::vector<double> x{0.6, 0.0, 0.8, 0.0};
    for (NoiseKind k :
         {NoiseKind::Additive, NoiseKind::SaltPepper, NoiseKind::Maskout, NoiseKind::Mixup})
        CHECK(corrupt(x, k, 0.0, rng) == x);

    CHECK_THROWS_AS(corrupt(x, NoiseKind::SaltPepper, 1.5, rng), std::invalid_argument);
    CHECK_THROWS_AS(corrupt(x, NoiseKind::Maskout, 1.5, rng), std::invalid_argument);
    CHECK_THROWS_AS(corrupt(x, NoiseKind::Mixup, 1.5, rng), std::invalid_argument);
    CHECK_THROWS_AS(corrupt(x, NoiseKind::Additive, -0.1, rng), std::invalid_argument);
    // maskout at level 1 zeroes everything: rejected
    CHECK_THROWS_AS(corrupt(x, NoiseKind::Maskout, 1.0, rng), std::domain_error);
}

TEST_CASE("average cosine to the original is non-increasing in level") {
    RngStream base(6, 1);
    std::vector<double> x(32);
    for (double& v : x) v = base.normal();
    double n = 0.0;
    for (double v : x) n += v * v;
    n = std::sqrt(n);
    for (double& v : x) v /= n;

    for (NoiseKind k :
         {NoiseKind::Additive, NoiseKind::SaltPepper, NoiseKind::Maskout, NoiseKind::Mixup}) {
        // maskout at level 1 is rejected (all-zero), so it tops out at 0.9
        const std::vector<double> levels =
            k == NoiseKind::Maskout ? std::vector<double>{0.1, 0.3, 0.5, 0.9}
                                    : std::vector<double>{0.1, 0.3, 0.5, 1.0};
        double prev = 1e9;
        for (double level : levels) {
            RngStream rng(7, static_cast<std::uint64_t>(level * 1000) + static_cast<int>(k));
            double acc = 0.0;
            for (int i = 0; i < 1000; ++i) acc += cosine(x, corrupt(x, k, level, rng));
            acc /= 1000.0;
            CHECK(acc <= prev + 1e-3);
            prev = acc;
        }
    }
}

TEST_CASE("gen_ood") {
    RngStream rng(8, 1);
    auto uniform = gen_ood(rng, 1000, 16, OodMode::UniformSphere);
    CHECK(uniform.size() == 1000);
    for (const Sample& s : uniform) {
        CHECK(s.split == Split::Ood);
        CHECK(s.label == kOodLabel);
    }
    // spherical symmetry: mean cosine to a fixed direction ~ 0 within 3 sigma
    std::vector<double> proto(16, 0.0);
    proto[0] = 1.0;
    double acc = 0.0;
    for (const Sample& s : uniform) acc += cosine(s.x, proto);
    acc /= 1000.0;
    // per-sample std is 1/sqrt(16) = 0.25 -> sigma of the mean ~ 0.0079
    CHECK(std::abs(acc) < 3.0 * 0.25 / std::sqrt(1000.0));

    RngStream rng2(9, 1);
    OodClusterOptions opts;
    opts.cluster_spread = 0.2;
    opts.cluster_count = 4;
    auto clustered = gen_ood(rng2, 100, 16, OodMode::ShiftedClusters, opts);
    CHECK(clustered.size() == 100);

    // anchored clusters sit near, but never on, the anchor prototypes
    std::vector<std::vector<double>> anchors{std::vector<double>(16, 0.0)};
    anchors[0][0] = 1.0;
    opts.anchors = &anchors;
    opts.shift = 0.1;
    opts.cluster_spread = 0.02;
    RngStream rng3(10, 1);
    auto shifted = gen_ood(rng3, 50, 16, OodMode::ShiftedClusters, opts);
    for (const Sample& s : shifted) {
        double c = cosine(s.x, anchors[0]);
        CHECK(c > 0.5);
        CHECK(c < 1.0 - 1e-9);
    }
}

TEST_CASE("build_pairs") {
    RngStream rng(10, 1);
    std::vector<std::vector<double>> protos{{1.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}};
    Dataset ds = gen_identities_with_prototypes(rng, protos, 4, 0.1);
    // per_identity=4 with test_per_id=2: 2 test each -> 1 genuine per id, 4 impostor
    RngStream prng(11, 1);
    PairSet ps = build_pairs(ds, 100, prng);
    CHECK(ps.genuine.size() == 2);
    CHECK(ps.impostor.size() == 4);
    for (const auto& [a, b] : ps.genuine) CHECK(ds.samples[a].label == ds.samples[b].label);
    for (const auto& [a, b] : ps.impostor) CHECK(ds.samples[a].label != ds.samples[b].label);

    // no repeats
    std::set<std::pair<std::size_t, std::size_t>> seen(ps.genuine.begin(), ps.genuine.end());
    seen.insert(ps.impostor.begin(), ps.impostor.end());
    CHECK(seen.size() == ps.genuine.size() + ps.impostor.size());

    // capped subsampling is deterministic per seed
    RngStream p1(12, 1), p2(12, 1);
    PairSet a = build_pairs(ds, 3, p1);
    PairSet b = build_pairs(ds, 3, p2);
    CHECK(a.impostor == b.impostor);
    CHECK(a.impostor.size() == 3);
}

TEST_CASE("build_dataset is reproducible and export/import round-trips") {
    DataConfig cfg;
    cfg.num_identities = 8;
    cfg.input_dim = 12;
    cfg.samples_per_identity = 6;
    cfg.ood_count = 20;
    cfg.corrupt_fraction = 0.25;

    Dataset d1 = build_dataset(42, cfg);
    Dataset d2 = build_dataset(42, cfg);
    REQUIRE(d1.samples.size() == d2.samples.size());
    for (std::size_t i = 0; i < d1.samples.size(); ++i) {
        CHECK(d1.samples[i].x == d2.samples[i].x);
        CHECK(d1.samples[i].label == d2.samples[i].label);
        CHECK(d1.samples[i].noise_kind == d2.samples[i].noise_kind);
    }

    long long corrupted = 0, ood = 0;
    for (const Sample& s : d1.samples) {
        corrupted += (s.split != Split::Ood && s.noise_kind != NoiseKind::Clean) ? 1 : 0;
        ood += s.split == Split::Ood ? 1 : 0;
        CHECK((s.noise_level == 0.0) == (s.noise_kind == NoiseKind::Clean));
    }
    CHECK(ood == 20);
    CHECK(corrupted > 0);

    std::ostringstream out1;
    export_dataset(d1, out1);
    std::istringstream in(out1.str());
    Dataset back = import_dataset(in);
    std::ostringstream out2;
    export_dataset(back, out2);
    CHECK(out1.str() == out2.str());
    CHECK(back.num_identities == d1.num_identities);
    REQUIRE(back.samples.size() == d1.samples.size());
    for (std::size_t i = 0; i < d1.samples.size(); ++i)
        CHECK(back.samples[i].x == d1.samples[i].x);
}

TEST_CASE("uniform-sphere OOD is stochastically farther than in-distribution") {
    DataConfig cfg;
    cfg.num_identities = 10;
    cfg.input_dim = 16;
    cfg.samples_per_identity = 8;
    cfg.corrupt_fraction = 0.0;
    cfg.ood_count = 80;
    Dataset ds = build_dataset(7, cfg);

    // prototypes approximated by per-identity mean
    std::vector<std::vector<double>> proto(10, std::vector<double>(16, 0.0));
    std::vector<int> counts(10, 0);
    for (const Sample& s : ds.samples) {
        if (s.split == Split::Ood) continue;
        for (int j = 0; j < 16; ++j) proto[static_cast<std::size_t>(s.label)][static_cast<std::size_t>(j)] += s.x[static_cast<std::size_t>(j)];
        ++counts[static_cast<std::size_t>(s.label)];
    }

    auto max_cos = [&proto](const std::vector<double>& x) {
        double best = -2.0;
        for (const auto& p : proto) best = std::max(best, cosine(x, p));
        return best;
    };

    // rank-sum: in-distribution samples should rank higher than OOD
    std::vector<double> in_vals, ood_vals;
    for (const Sample& s : ds.samples)
        (s.split == Split::Ood ? ood_vals : in_vals).push_back(max_cos(s.x));
    double better = 0.0;
    for (double a : in_vals)
        for (double b : ood_vals)
            if (a > b) better += 1.0;
    better /= static_cast<double>(in_vals.size() * ood_vals.size());
    CHECK(better > 0.9);
}
