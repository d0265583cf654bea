#include "rts/datasynth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace rts::datasynth {

using stochastic::RngStream;

const char* noise_kind_name(NoiseKind k) {
    switch (k) {
        case NoiseKind::Clean: return "clean";
        case NoiseKind::Additive: return "additive";
        case NoiseKind::SaltPepper: return "saltpepper";
        case NoiseKind::Maskout: return "maskout";
        case NoiseKind::Mixup: return "mixup";
    }
    return "?";
}

NoiseKind noise_kind_from_name(const std::string& name) {
    if (name == "clean") return NoiseKind::Clean;
    if (name == "additive") return NoiseKind::Additive;
    if (name == "saltpepper") return NoiseKind::SaltPepper;
    if (name == "maskout") return NoiseKind::Maskout;
    if (name == "mixup") return NoiseKind::Mixup;
    throw std::invalid_argument("unknown noise kind: " + name);
}

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Test: return "test";
        case Split::Ood: return "ood";
    }
    return "?";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "test") return Split::Test;
    if (name == "ood") return Split::Ood;
    throw std::invalid_argument("unknown split tag: " + name);
}

OodMode ood_mode_from_name(const std::string& name) {
    if (name == "uniform-sphere") return OodMode::UniformSphere;
    if (name == "shifted-clusters") return OodMode::ShiftedClusters;
    throw std::invalid_argument("unknown ood mode: " + name);
}

const char* ood_mode_name(OodMode m) {
    return m == OodMode::UniformSphere ? "uniform-sphere" : "shifted-clusters";
}

std::vector<std::size_t> Dataset::indices_of(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].split == s) out.push_back(i);
    return out;
}

namespace {

std::vector<double> random_unit_vector(RngStream& rng, int dim) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : v) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
    } while (norm == 0.0);
    for (double& x : v) x /= norm;
    return v;
}

void normalize_or_throw(std::vector<double>& v, const char* what) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw std::domain_error(std::string(what) + ": all-zero vector cannot be normalized");
    for (double& x : v) x /= norm;
}

// Distinct index subset of size k via partial Fisher-Yates.
std::vector<int> choose_indices(RngStream& rng, int n, int k) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
        int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

}  // namespace

Dataset gen_identities_with_prototypes(RngStream& rng,
                                       const std::vector<std::vector<double>>& prototypes,
                                       int per_identity, double spread) {
    int num_identities = static_cast<int>(prototypes.size());
    if (num_identities < 2) throw std::invalid_argument("gen_identities: need >= 2 identities");
    if (per_identity < 4) throw std::invalid_argument("gen_identities: need >= 4 samples per identity");
    if (!(spread > 0.0 && spread < 1.0)) throw std::invalid_argument("gen_identities: spread must be in (0,1)");
    int input_dim = static_cast<int>(prototypes.front().size());

    if (static_cast<double>(num_identities) > std::exp2(input_dim / 2.0))
        std::cerr << "warning: " << num_identities << " identities may not be well separated in "
                  << input_dim << " dimensions\n";

    int test_per_id = std::max(2, per_identity / 5);
    Dataset ds;
    ds.num_identities = num_identities;
    ds.input_dim = input_dim;
    ds.samples.reserve(static_cast<std::size_t>(num_identities) * per_identity);
    for (int c = 0; c < num_identities; ++c) {
        const std::vector<double>& proto = prototypes[static_cast<std::size_t>(c)];
        if (static_cast<int>(proto.size()) != input_dim)
            throw std::invalid_argument("gen_identities: inconsistent prototype dimensions");
        for (int i = 0; i < per_identity; ++i) {
            Sample s;
            s.label = c;
            s.split = (i >= per_identity - test_per_id) ? Split::Test : Split::Train;
            s.x = proto;
            for (double& v : s.x) v += spread * rng.normal();
            normalize_or_throw(s.x, "gen_identities");
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

Dataset gen_identities(RngStream& rng, int num_identities, int input_dim, int per_identity,
                       double spread) {
    if (input_dim < 2) throw std::invalid_argument("gen_identities: input_dim must be >= 2");
    std::vector<std::vector<double>> prototypes;
    prototypes.reserve(static_cast<std::size_t>(num_identities));
    for (int c = 0; c < num_identities; ++c) prototypes.push_back(random_unit_vector(rng, input_dim));
    return gen_identities_with_prototypes(rng, prototypes, per_identity, spread);
}

std::vector<double> corrupt(const std::vector<double>& x, NoiseKind kind, double level,
                            RngStream& rng) {
    if (level < 0.0) throw std::invalid_argument("corrupt: level must be >= 0");
    if (kind == NoiseKind::Clean) {
        if (level != 0.0) throw std::invalid_argument("corrupt: clean kind requires level 0");
        return x;
    }
    if (level == 0.0) return x;
    int dim = static_cast<int>(x.size());
    std::vector<double> out = x;
    switch (kind) {
        case NoiseKind::Additive: {
            for (double& v : out) v += level * rng.normal();
            normalize_or_throw(out, "corrupt/additive");
            break;
        }
        case NoiseKind::SaltPepper: {
            if (level > 1.0) throw std::invalid_argument("corrupt: saltpepper level must be <= 1");
            int k = static_cast<int>(std::llround(level * dim));
            for (int i : choose_indices(rng, dim, k))
                out[static_cast<std::size_t>(i)] = (rng.next_u64() & 1u) ? 1.0 : -1.0;
            break;
        }
        case NoiseKind::Maskout: {
            if (level > 1.0) throw std::invalid_argument("corrupt: maskout level must be <= 1");
            int k = static_cast<int>(std::llround(level * dim));
            for (int i : choose_indices(rng, dim, k)) out[static_cast<std::size_t>(i)] = 0.0;
            normalize_or_throw(out, "corrupt/maskout");
            break;
        }
        case NoiseKind::Mixup: {
            if (level > 1.0) throw std::invalid_argument("corrupt: mixup level must be <= 1");
            std::vector<double> u = random_unit_vector(rng, dim);
            for (int i = 0; i < dim; ++i)
                out[static_cast<std::size_t>(i)] =
                    (1.0 - level) * x[static_cast<std::size_t>(i)] + level * u[static_cast<std::size_t>(i)];
            normalize_or_throw(out, "corrupt/mixup");
            break;
        }
        case NoiseKind::Clean:
            break;
    }
    return out;
}

std::vector<Sample> gen_ood(RngStream& rng, int n, int input_dim, OodMode mode,
                            const OodClusterOptions& opts) {
    if (n < 1) throw std::invalid_argument("gen_ood: n must be >= 1");
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(n));
    if (mode == OodMode::UniformSphere) {
        for (int i = 0; i < n; ++i) {
            Sample s;
            s.split = Split::Ood;
            s.x = random_unit_vector(rng, input_dim);
            out.push_back(std::move(s));
        }
        return out;
    }
    if (opts.cluster_count < 1) throw std::invalid_argument("gen_ood: need >= 1 cluster");
    std::vector<std::vector<double>> protos;
    for (int c = 0; c < opts.cluster_count; ++c) {
        if (opts.anchors && !opts.anchors->empty()) {
            std::vector<double> p = (*opts.anchors)[rng.below(opts.anchors->size())];
            for (double& v : p) v += opts.shift * rng.normal();
            normalize_or_throw(p, "gen_ood");
            protos.push_back(std::move(p));
        } else {
            protos.push_back(random_unit_vector(rng, input_dim));
        }
    }
    for (int i = 0; i < n; ++i) {
        Sample s;
        s.split = Split::Ood;
        s.x = protos[static_cast<std::size_t>(i % opts.cluster_count)];
        for (double& v : s.x) v += opts.cluster_spread * rng.normal();
        normalize_or_throw(s.x, "gen_ood");
        out.push_back(std::move(s));
    }
    return out;
}

Dataset build_dataset(std::uint64_t seed, const DataConfig& cfg) {
    RngStream rng_data(seed, stochastic::streams::kData);
    if (cfg.input_dim < 2) throw std::invalid_argument("build_dataset: input_dim must be >= 2");
    std::vector<std::vector<double>> prototypes;
    prototypes.reserve(static_cast<std::size_t>(cfg.num_identities));
    for (int c = 0; c < cfg.num_identities; ++c)
        prototypes.push_back(random_unit_vector(rng_data, cfg.input_dim));
    Dataset ds = gen_identities_with_prototypes(rng_data, prototypes,
                                                cfg.samples_per_identity, cfg.spread);

    if (cfg.corrupt_fraction > 0.0) {
        if (cfg.corrupt_kinds.empty() || cfg.corrupt_levels.empty())
            throw std::invalid_argument("build_dataset: corruption requested but kinds/levels empty");
        std::vector<std::size_t> train = ds.indices_of(Split::Train);
        int k = static_cast<int>(std::llround(cfg.corrupt_fraction * static_cast<double>(train.size())));
        std::vector<int> chosen = choose_indices(rng_data, static_cast<int>(train.size()), k);
        std::sort(chosen.begin(), chosen.end());  // deterministic application order
        for (int pos : chosen) {
            Sample& s = ds.samples[train[static_cast<std::size_t>(pos)]];
            NoiseKind kind = cfg.corrupt_kinds[rng_data.below(cfg.corrupt_kinds.size())];
            double level = cfg.corrupt_levels[rng_data.below(cfg.corrupt_levels.size())];
            s.x = corrupt(s.x, kind, level, rng_data);
            s.noise_kind = kind;
            s.noise_level = level;
        }
    }

    RngStream rng_ood(seed, stochastic::streams::kOod);
    OodClusterOptions ood_opts;
    ood_opts.cluster_spread = cfg.spread;
    ood_opts.cluster_count = cfg.ood_clusters;
    ood_opts.shift = cfg.ood_shift;
    ood_opts.anchors = &prototypes;
    std::vector<Sample> ood = gen_ood(rng_ood, cfg.ood_count, cfg.input_dim, cfg.ood_mode, ood_opts);
    ds.samples.insert(ds.samples.end(), ood.begin(), ood.end());
    return ds;
}

PairSet build_pairs(const Dataset& ds, std::size_t max_pairs, RngStream& rng) {
    std::vector<std::size_t> test = ds.indices_of(Split::Test);
    if (test.empty()) throw std::invalid_argument("build_pairs: empty test split");

    PairSet ps;
    for (std::size_t a = 0; a < test.size(); ++a)
        for (std::size_t b = a + 1; b < test.size(); ++b) {
            const Sample& sa = ds.samples[test[a]];
            const Sample& sb = ds.samples[test[b]];
            if (sa.label == sb.label)
                ps.genuine.emplace_back(test[a], test[b]);
            else
                ps.impostor.emplace_back(test[a], test[b]);
        }

    auto subsample = [&rng, max_pairs](std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
        if (pairs.size() <= max_pairs) return;
        for (std::size_t i = 0; i < max_pairs; ++i) {
            std::size_t j = i + rng.below(pairs.size() - i);
            std::swap(pairs[i], pairs[j]);
        }
        pairs.resize(max_pairs);
    };
    subsample(ps.genuine);
    subsample(ps.impostor);
    return ps;
}

void export_dataset(const Dataset& ds, std::ostream& out) {
    out << "# rts-dataset v1 identities=" << ds.num_identities << " dim=" << ds.input_dim << "\n";
    char buf[32];
    for (const Sample& s : ds.samples) {
        out << split_name(s.split) << ' ';
        if (s.label == kOodLabel)
            out << "OOD";
        else
            out << s.label;
        std::snprintf(buf, sizeof buf, "%.17g", s.noise_level);
        out << ' ' << noise_kind_name(s.noise_kind) << ' ' << buf;
        for (double v : s.x) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << ' ' << buf;
        }
        out << '\n';
    }
}

void export_dataset_file(const Dataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    export_dataset(ds, f);
}

Dataset import_dataset(std::istream& in) {
    Dataset ds;
    std::string line;
    int max_label = -1;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string split_tag, label_tok, kind_tok;
        double level;
        if (!(ls >> split_tag >> label_tok >> kind_tok >> level))
            throw std::runtime_error("dataset parse error: " + line);
        Sample s;
        s.split = split_from_name(split_tag);
        s.label = (label_tok == "OOD") ? kOodLabel : std::stoi(label_tok);
        s.noise_kind = noise_kind_from_name(kind_tok);
        s.noise_level = level;
        if ((s.noise_level == 0.0) != (s.noise_kind == NoiseKind::Clean))
            throw std::runtime_error("dataset parse error: noise level/kind mismatch");
        double v;
        while (ls >> v) s.x.push_back(v);
        if (s.x.empty()) throw std::runtime_error("dataset parse error: sample has no coordinates");
        if (ds.input_dim == 0)
            ds.input_dim = static_cast<int>(s.x.size());
        else if (static_cast<int>(s.x.size()) != ds.input_dim)
            throw std::runtime_error("dataset parse error: inconsistent dimensions");
        max_label = std::max(max_label, s.label);
        ds.samples.push_back(std::move(s));
    }
    ds.num_identities = max_label + 1;
    return ds;
}

Dataset import_dataset_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open dataset: " + path);
    return import_dataset(f);
}

}  // namespace rts::datasynth
