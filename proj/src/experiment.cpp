#include "rts/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rts/evalmetrics.hpp"
#include "rts/losses.hpp"
#include "rts/quadrature.hpp"

namespace rts::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using datasynth::Dataset;
using datasynth::NoiseKind;
using datasynth::Sample;
using datasynth::Split;
using heads::ModelParams;
using heads::Variant;
using stochastic::RngStream;
using trainer::TrainConfig;

namespace streams = stochastic::streams;

// ===========================================================================
// Config parsing
// ===========================================================================

namespace {

void check_keys(const json& obj, const std::string& section,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError("config error: unknown key \"" + section + it.key() + "\"");
    }
}

template <typename T>
void read_key(const json& obj, const std::string& section, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config error: bad value for key \"" + section + key + "\"");
    }
}

std::vector<NoiseKind> parse_kind_list(const json& obj, const std::string& section,
                                       const char* key, std::vector<NoiseKind> fallback) {
    if (!obj.contains(key)) return fallback;
    std::vector<NoiseKind> out;
    try {
        for (const auto& s : obj.at(key)) out.push_back(datasynth::noise_kind_from_name(s.get<std::string>()));
    } catch (const std::exception&) {
        throw ConfigError("config error: bad value for key \"" + section + key + "\"");
    }
    return out;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config error: invalid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config error: top level must be an object");
    check_keys(root, "", {"seed", "out_dir", "data", "model", "train", "eval"});
    if (!root.contains("seed"))
        throw ConfigError("config error: missing required key \"seed\"");

    ExperimentConfig cfg;
    read_key(root, "", "seed", cfg.seed);
    read_key(root, "", "out_dir", cfg.out_dir);

    if (root.contains("data")) {
        const json& d = root.at("data");
        check_keys(d, "data.",
                   {"num_identities", "input_dim", "samples_per_identity", "spread",
                    "corrupt_fraction", "corrupt_kinds", "corrupt_levels", "ood_count",
                    "ood_mode", "ood_shift", "ood_clusters", "file"});
        read_key(d, "data.", "num_identities", cfg.data.num_identities);
        read_key(d, "data.", "input_dim", cfg.data.input_dim);
        read_key(d, "data.", "samples_per_identity", cfg.data.samples_per_identity);
        read_key(d, "data.", "spread", cfg.data.spread);
        read_key(d, "data.", "corrupt_fraction", cfg.data.corrupt_fraction);
        cfg.data.corrupt_kinds = parse_kind_list(d, "data.", "corrupt_kinds", cfg.data.corrupt_kinds);
        read_key(d, "data.", "corrupt_levels", cfg.data.corrupt_levels);
        read_key(d, "data.", "ood_count", cfg.data.ood_count);
        read_key(d, "data.", "ood_shift", cfg.data.ood_shift);
        read_key(d, "data.", "ood_clusters", cfg.data.ood_clusters);
        if (d.contains("ood_mode")) {
            std::string m = d.at("ood_mode").get<std::string>();
            try {
                cfg.data.ood_mode = datasynth::ood_mode_from_name(m);
            } catch (const std::exception&) {
                throw ConfigError("config error: bad value for key \"data.ood_mode\"");
            }
        }
        read_key(d, "data.", "file", cfg.dataset_file);
    }

    if (root.contains("model")) {
        const json& m = root.at("model");
        check_keys(m, "model.",
                   {"variant", "fixed_t", "embedding_dim", "hidden_dim", "delta", "gamma",
                    "margin", "score_aggregation"});
        if (m.contains("variant")) {
            try {
                cfg.train.variant = heads::variant_from_name(m.at("variant").get<std::string>());
            } catch (const std::exception&) {
                throw ConfigError("config error: bad value for key \"model.variant\"");
            }
        }
        read_key(m, "model.", "fixed_t", cfg.train.fixed_t);
        read_key(m, "model.", "embedding_dim", cfg.train.embedding_dim);
        read_key(m, "model.", "hidden_dim", cfg.train.hidden_dim);
        read_key(m, "model.", "delta", cfg.train.delta);
        read_key(m, "model.", "gamma", cfg.train.gamma);
        read_key(m, "model.", "margin", cfg.train.margin_final);
        if (m.contains("score_aggregation")) {
            try {
                cfg.train.score_agg =
                    trainer::score_agg_from_name(m.at("score_aggregation").get<std::string>());
            } catch (const std::exception&) {
                throw ConfigError("config error: bad value for key \"model.score_aggregation\"");
            }
        }
    }

    if (root.contains("train")) {
        const json& t = root.at("train");
        check_keys(t, "train.",
                   {"lambda", "epochs", "batch_size", "lr_initial", "lr_decay_epochs",
                    "lr_decay_factor", "momentum", "weight_decay", "dynamic_margin",
                    "probe_size"});
        read_key(t, "train.", "lambda", cfg.train.lambda);
        read_key(t, "train.", "epochs", cfg.train.epochs);
        read_key(t, "train.", "batch_size", cfg.train.batch_size);
        read_key(t, "train.", "lr_initial", cfg.train.lr_initial);
        read_key(t, "train.", "lr_decay_epochs", cfg.train.lr_decay_epochs);
        read_key(t, "train.", "lr_decay_factor", cfg.train.lr_decay_factor);
        read_key(t, "train.", "momentum", cfg.train.momentum);
        read_key(t, "train.", "weight_decay", cfg.train.weight_decay);
        read_key(t, "train.", "dynamic_margin", cfg.train.dynamic_margin);
        read_key(t, "train.", "probe_size", cfg.train.probe_size);
    }

    if (root.contains("eval")) {
        const json& e = root.at("eval");
        check_keys(e, "eval.",
                   {"fmr_target", "max_pairs", "reject_fraction_max", "reject_fraction_step",
                    "noise_kinds", "noise_levels"});
        read_key(e, "eval.", "fmr_target", cfg.fmr_target);
        read_key(e, "eval.", "max_pairs", cfg.max_pairs);
        read_key(e, "eval.", "reject_fraction_max", cfg.reject_fraction_max);
        read_key(e, "eval.", "reject_fraction_step", cfg.reject_fraction_step);
        cfg.noise_kinds = parse_kind_list(e, "eval.", "noise_kinds", cfg.noise_kinds);
        read_key(e, "eval.", "noise_levels", cfg.noise_levels);
    }

    cfg.train.seed = cfg.seed;
    try {
        cfg.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config error: ") + e.what());
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config error: cannot open file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
    json root;
    root["seed"] = cfg.seed;
    root["out_dir"] = cfg.out_dir;

    json d;
    d["num_identities"] = cfg.data.num_identities;
    d["input_dim"] = cfg.data.input_dim;
    d["samples_per_identity"] = cfg.data.samples_per_identity;
    d["spread"] = cfg.data.spread;
    d["corrupt_fraction"] = cfg.data.corrupt_fraction;
    json kinds = json::array();
    for (NoiseKind k : cfg.data.corrupt_kinds) kinds.push_back(datasynth::noise_kind_name(k));
    d["corrupt_kinds"] = kinds;
    d["corrupt_levels"] = cfg.data.corrupt_levels;
    d["ood_count"] = cfg.data.ood_count;
    d["ood_mode"] = datasynth::ood_mode_name(cfg.data.ood_mode);
    d["ood_shift"] = cfg.data.ood_shift;
    d["ood_clusters"] = cfg.data.ood_clusters;
    d["file"] = cfg.dataset_file;
    root["data"] = d;

    json m;
    m["variant"] = heads::variant_name(cfg.train.variant);
    m["fixed_t"] = cfg.train.fixed_t;
    m["embedding_dim"] = cfg.train.embedding_dim;
    m["hidden_dim"] = cfg.train.hidden_dim;
    m["delta"] = cfg.train.delta;
    m["gamma"] = cfg.train.gamma;
    m["margin"] = cfg.train.margin_final;
    m["score_aggregation"] = trainer::score_agg_name(cfg.train.score_agg);
    root["model"] = m;

    json t;
    t["lambda"] = cfg.train.lambda;
    t["epochs"] = cfg.train.epochs;
    t["batch_size"] = cfg.train.batch_size;
    t["lr_initial"] = cfg.train.lr_initial;
    t["lr_decay_epochs"] = cfg.train.lr_decay_epochs;
    t["lr_decay_factor"] = cfg.train.lr_decay_factor;
    t["momentum"] = cfg.train.momentum;
    t["weight_decay"] = cfg.train.weight_decay;
    t["dynamic_margin"] = cfg.train.dynamic_margin;
    t["probe_size"] = cfg.train.probe_size;
    root["train"] = t;

    json e;
    e["fmr_target"] = cfg.fmr_target;
    e["max_pairs"] = cfg.max_pairs;
    e["reject_fraction_max"] = cfg.reject_fraction_max;
    e["reject_fraction_step"] = cfg.reject_fraction_step;
    json nk = json::array();
    for (NoiseKind k : cfg.noise_kinds) nk.push_back(datasynth::noise_kind_name(k));
    e["noise_kinds"] = nk;
    e["noise_levels"] = cfg.noise_levels;
    root["eval"] = e;

    return root.dump(2) + "\n";
}

// ===========================================================================
// verify-math battery
// ===========================================================================

namespace {

CheckResult bounded_check(const std::string& name, double err, double bound) {
    CheckResult r;
    r.name = name;
    r.pass = err < bound;
    r.margin = bound - err;
    char buf[96];
    std::snprintf(buf, sizeof buf, "err %.3e, bound %.3e", err, bound);
    r.detail = buf;
    return r;
}

double sample_variance(const std::vector<double>& xs) {
    double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return var / static_cast<double>(xs.size() - 1);
}

}  // namespace

bool VerifyMathReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

std::string VerifyMathReport::to_text() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        const CheckResult& c = checks[i];
        char line[192];
        std::snprintf(line, sizeof line, "[%2zu] %-28s %s  margin=%.3e  (%s)\n", i + 1,
                      c.name.c_str(), c.pass ? "PASS" : "FAIL", c.margin, c.detail.c_str());
        out << line;
    }
    std::size_t passed = 0;
    for (const CheckResult& c : checks) passed += c.pass ? 1u : 0u;
    out << "RESULT: " << (all_pass() ? "PASS" : "FAIL") << " (" << passed << "/" << checks.size()
        << " checks)\n";
    return out.str();
}

VerifyMathReport run_verify_math(std::uint64_t seed, bool inject_gradient_fault) {
    VerifyMathReport rep;

    {  // log-sum-exp shift identity at large magnitude
        diffcore::Graph g;
        double lse = g.value(g.log_sum_exp(g.constant(diffcore::Tensor::vector({1000.0, 1000.0}))))
                         .data[0];
        rep.checks.push_back(bounded_check("lse-shift-identity",
                                           std::abs(lse - (1000.0 + std::numbers::ln2)), 1e-12));
    }

    {  // Gumbel variance pi^2 t^2 / 6
        RngStream rng(seed, streams::kVerify);
        auto draws1 = stochastic::sample_gumbel(rng, 1000000, 1.0);
        double err1 = std::abs(sample_variance(draws1) - std::numbers::pi * std::numbers::pi / 6.0);
        rep.checks.push_back(bounded_check("gumbel-variance-t1", err1, 0.01));
        auto draws2 = stochastic::sample_gumbel(rng, 1000000, 2.0);
        double err2 =
            std::abs(sample_variance(draws2) - 4.0 * std::numbers::pi * std::numbers::pi / 6.0);
        rep.checks.push_back(bounded_check("gumbel-variance-t2", err2, 0.05));

        double below = 0.0;
        for (double x : draws1)
            if (x <= 0.0) below += 1.0;
        below /= static_cast<double>(draws1.size());
        rep.checks.push_back(
            bounded_check("gumbel-cdf-at-zero", std::abs(below - std::exp(-1.0)), 0.002));
    }

    {  // Monte-Carlo Gumbel argmax == softmax(s/t), canonical scores
        RngStream rng(seed, streams::kVerify + 256);
        const std::vector<double> scores{2.1, 1.0, 0.6};
        double worst = 0.0;
        for (double t : {0.5, 1.0, 2.0}) {
            auto freq = stochastic::mc_gumbel_argmax(scores, t, 1000000, rng);
            auto truth = stochastic::softmax(scores, t);
            for (std::size_t k = 0; k < freq.size(); ++k)
                worst = std::max(worst, std::abs(freq[k] - truth[k]));
        }
        rep.checks.push_back(bounded_check("mc-gumbel-softmax", worst, 0.003));

        // random cases, reported in units of binomial sigma (bound 4)
        double worst_sigma = 0.0;
        for (int c = 0; c < 5; ++c) {
            std::size_t classes = 2 + rng.below(7);
            std::vector<double> s(classes);
            for (double& v : s) v = rng.uniform(-2.0, 3.0);
            double t = rng.uniform(0.3, 3.0);
            const std::size_t n = 200000;
            auto freq = stochastic::mc_gumbel_argmax(s, t, n, rng);
            auto truth = stochastic::softmax(s, t);
            for (std::size_t k = 0; k < freq.size(); ++k) {
                double sigma = std::sqrt(truth[k] * (1.0 - truth[k]) / static_cast<double>(n));
                worst_sigma = std::max(worst_sigma, std::abs(freq[k] - truth[k]) / sigma);
            }
        }
        rep.checks.push_back(bounded_check("mc-gumbel-softmax-random", worst_sigma, 4.0));
    }

    {  // closed-form KL vs quadrature oracle
        double worst = 0.0;
        for (double v : {0.25, 0.5, 1.0, 2.0, 4.0})
            worst = std::max(worst,
                             std::abs(losses::kl_gamma({v}) - losses::kl_numeric_oracle(v)));
        rep.checks.push_back(bounded_check("kl-closed-vs-quadrature", worst, 1e-6));
        rep.checks.push_back(bounded_check("kl-zero-at-one", std::abs(losses::kl_gamma({1.0})), 1e-15));
    }

    {  // temperature law: Gamma(delta/2, (delta/2-1)/v)
        RngStream rng(seed, streams::kVerify + 512);
        const int delta = 16;
        std::vector<double> v(delta, 1.0);
        std::vector<double> t1;
        t1.reserve(1000000);
        for (int i = 0; i < 1000000; ++i) t1.push_back(stochastic::sample_temperature(rng, v).t);
        double mean1 = std::accumulate(t1.begin(), t1.end(), 0.0) / static_cast<double>(t1.size());
        rep.checks.push_back(bounded_check("gamma-mean-v1", std::abs(mean1 - 8.0 / 7.0), 0.005));
        rep.checks.push_back(
            bounded_check("gamma-mode-v1", std::abs(stochastic::histogram_mode(t1, 0.1) - 1.0), 0.051));

        std::vector<double> ks_sample(t1.begin(), t1.begin() + 100000);
        double d = stochastic::ks_statistic(
            ks_sample, [](double x) { return stochastic::gamma_cdf(x, 8.0, 7.0); });
        rep.checks.push_back(bounded_check("gamma-ks", d, stochastic::ks_critical(0.001, 100000)));

        std::vector<double> v2(delta, 2.0);
        std::vector<double> t2;
        t2.reserve(200000);
        for (int i = 0; i < 200000; ++i) t2.push_back(stochastic::sample_temperature(rng, v2).t);
        double mean2 = std::accumulate(t2.begin(), t2.end(), 0.0) / static_cast<double>(t2.size());
        rep.checks.push_back(
            bounded_check("gamma-scale-mean-v2", std::abs(mean2 - 16.0 / 7.0), 0.01));
        // The density plateau around the doubled mode is twice as wide, so
        // one histogram bin of slack is expected at this sample size.
        rep.checks.push_back(bounded_check(
            "gamma-scale-mode-v2", std::abs(stochastic::histogram_mode(t2, 0.1) - 2.0), 0.16));
    }

    {  // per-op gradients vs central differences
        RngStream rng(seed, streams::kVerify + 768);
        double worst = 0.0;
        for (int rep_i = 0; rep_i < 3; ++rep_i) {
            diffcore::Tensor p = diffcore::Tensor::zeros({4});
            for (double& x : p.data) x = rng.uniform(0.15, 0.85);
            auto composite = [](diffcore::Graph& g, diffcore::NodeId x) {
                auto v1 = g.tanh(g.scale(x, 1.7));
                auto v2 = g.exp(g.cos(x));
                auto v3 = g.mul(v1, v2);
                auto v4 = g.add(v3, g.acos(x));
                auto v5 = g.log(g.add(g.mul(x, x), g.constant_scalar(0.5)));
                auto v6 = g.add(v4, v5);
                auto v7 = g.l2_normalize(v6);
                auto s = g.add(g.log_sum_exp(v6), g.sum(v7));
                auto m = g.add(g.mean(v6), g.select_index(v6, 1));
                return g.add(g.add(s, m), g.reciprocal(g.add(g.sum(g.mul(x, x)),
                                                             g.constant_scalar(1.0))));
            };
            worst = std::max(worst, diffcore::finite_diff_check(composite, p, 1e-5));
        }
        rep.checks.push_back(bounded_check("grad-ops", worst, 1e-6));
    }

    {  // full RTS loss gradient on a tiny model (the injectable check)
        RngStream rng(seed, streams::kVerify + 1024);
        TrainConfig tiny;
        tiny.variant = Variant::RTS;
        tiny.delta = 4;
        tiny.lambda = 10.0;
        tiny.gamma = 30.0;
        tiny.hidden_dim = 8;
        tiny.embedding_dim = 4;
        heads::ModelDims dims;
        dims.input_dim = 8;
        dims.hidden_dim = 8;
        dims.embedding_dim = 4;
        dims.num_classes = 5;
        dims.delta = 4;

        double worst = 0.0;
        for (int point = 0; point < 3; ++point) {
            ModelParams params = heads::init_params(Variant::RTS, dims, rng);
            for (diffcore::Tensor* t : params.trainable())
                for (double& x : t->data) x += 0.05 * rng.normal();
            std::vector<double> x(8);
            for (double& v : x) v = rng.normal();
            std::vector<double> eps(4);
            for (double& e : eps) e = rng.normal();
            int label = static_cast<int>(rng.below(5));

            auto fn = trainer::total_loss_fn(tiny, params, x, label, 0.3, eps);
            diffcore::Tensor flat = trainer::flatten_params(params);

            diffcore::Graph g;
            diffcore::NodeId leaf = g.leaf(flat);
            diffcore::NodeId loss = fn(g, leaf);
            diffcore::GradMap gm = g.backward(loss);
            diffcore::Tensor analytic = gm.grad(leaf);
            if (inject_gradient_fault && point == 0) analytic.data[0] += 0.5;

            diffcore::Tensor probe = flat;
            const double h = 1e-5;
            for (std::size_t i = 0; i < flat.data.size(); ++i) {
                probe.data[i] = flat.data[i] + h;
                diffcore::Graph gp;
                double fp = gp.value(fn(gp, gp.leaf(probe))).data[0];
                probe.data[i] = flat.data[i] - h;
                diffcore::Graph gmn;
                double fm = gmn.value(fn(gmn, gmn.leaf(probe))).data[0];
                probe.data[i] = flat.data[i];
                double numeric = (fp - fm) / (2.0 * h);
                double rel = std::abs(analytic.data[i] - numeric) /
                             std::max(1.0, std::abs(analytic.data[i]));
                worst = std::max(worst, rel);
            }
        }
        rep.checks.push_back(bounded_check("grad-rts-loss", worst, 1e-4));
    }

    return rep;
}

// ===========================================================================
// Shared evaluation helpers
// ===========================================================================

namespace {

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
}

void write_config_echo(const ExperimentConfig& cfg, const std::string& out_dir) {
    write_text_file(out_dir + "/config_echo.json", serialize_config(cfg));
}

json base_report(const ExperimentConfig& cfg) {
    json r;
    r["seed"] = cfg.seed;
    r["version"] = kCodeVersion;
    r["config_echo"] = "config_echo.json";
    return r;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot;  // embeddings are unit vectors
}

void require_uncertainty_head(const ModelParams& params, const char* mode) {
    if (!heads::has_uncertainty_head(params.variant))
        throw ConfigError(std::string("eval: checkpoint variant '") +
                          heads::variant_name(params.variant) + "' does not support mode " +
                          mode + " (no uncertainty head)");
}

struct PairSims {
    datasynth::PairSet pairs;
    std::vector<double> genuine;
    std::vector<double> impostor;
};

PairSims compute_pair_sims(const ModelParams& params, const Dataset& ds, std::size_t max_pairs,
                           RngStream& rng) {
    PairSims out;
    out.pairs = datasynth::build_pairs(ds, max_pairs, rng);
    std::vector<std::vector<double>> emb(ds.samples.size());
    auto embed_of = [&](std::size_t idx) -> const std::vector<double>& {
        if (emb[idx].empty()) emb[idx] = heads::embed(params, ds.samples[idx].x);
        return emb[idx];
    };
    for (const auto& [a, b] : out.pairs.genuine)
        out.genuine.push_back(cosine(embed_of(a), embed_of(b)));
    for (const auto& [a, b] : out.pairs.impostor)
        out.impostor.push_back(cosine(embed_of(a), embed_of(b)));
    return out;
}

}  // namespace

Dataset load_or_generate_dataset(const ExperimentConfig& cfg) {
    if (!cfg.dataset_file.empty()) return datasynth::import_dataset_file(cfg.dataset_file);
    return datasynth::build_dataset(cfg.seed, cfg.data);
}

std::uint64_t dataset_hash(const Dataset& ds) {
    std::ostringstream ss;
    datasynth::export_dataset(ds, ss);
    std::string text = ss.str();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ===========================================================================
// Drivers
// ===========================================================================

TrainOutcome run_train(const ExperimentConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    write_config_echo(cfg, out_dir);

    Dataset ds = load_or_generate_dataset(cfg);
    trainer::TrainResult result = trainer::train(cfg.train, ds);

    TrainOutcome outcome;
    outcome.diverged = result.diverged;
    outcome.checkpoint_path = out_dir + "/checkpoint.bin";
    outcome.epochs_csv_path = out_dir + "/epochs.csv";

    trainer::save_checkpoint(result.params, outcome.checkpoint_path);
    {
        std::ofstream out(outcome.epochs_csv_path, std::ios::binary);
        trainer::write_epoch_csv(result.logs, out);
    }

    json rep = base_report(cfg);
    rep["diverged"] = result.diverged;
    rep["epochs_completed"] = result.logs.size();
    rep["variant"] = heads::variant_name(cfg.train.variant);
    rep["lambda"] = cfg.train.lambda;
    rep["delta"] = cfg.train.delta;
    rep["dataset_hash"] = dataset_hash(ds);
    if (!result.logs.empty()) {
        const trainer::EpochLog& last = result.logs.back();
        rep["final_ce"] = last.mean_ce;
        rep["final_kl"] = last.mean_kl;
        if (last.has_uncertainty) {
            rep["final_u_clean"] = last.u_clean;
            rep["final_u_corrupted"] = last.u_corrupted;
            rep["final_u_ood"] = last.u_ood;
        }
    }
    rep["files"] = {{"checkpoint", "checkpoint.bin"}, {"epochs_csv", "epochs.csv"}};
    write_text_file(out_dir + "/report.json", rep.dump(2) + "\n");
    return outcome;
}

EvalMode eval_mode_from_name(const std::string& name) {
    if (name == "ood") return EvalMode::Ood;
    if (name == "reject") return EvalMode::Reject;
    if (name == "verify-pairs") return EvalMode::VerifyPairs;
    if (name == "noise-curve") return EvalMode::NoiseCurve;
    throw ConfigError("unknown eval mode: " + name);
}

const char* eval_mode_name(EvalMode m) {
    switch (m) {
        case EvalMode::Ood: return "ood";
        case EvalMode::Reject: return "reject";
        case EvalMode::VerifyPairs: return "verify-pairs";
        case EvalMode::NoiseCurve: return "noise-curve";
    }
    return "?";
}

void run_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path, EvalMode mode,
              const std::string& out_dir) {
    ensure_dir(out_dir);
    write_config_echo(cfg, out_dir);

    ModelParams params = trainer::load_checkpoint(checkpoint_path);
    Dataset ds = load_or_generate_dataset(cfg);
    if (ds.input_dim != params.dims.input_dim)
        throw ConfigError("eval: dataset dimension does not match checkpoint");

    json rep = base_report(cfg);
    rep["mode"] = eval_mode_name(mode);
    rep["checkpoint"] = checkpoint_path;

    switch (mode) {
        case EvalMode::Ood: {
            require_uncertainty_head(params, "ood");
            std::vector<double> in_scores, ood_scores;
            for (std::size_t i : ds.indices_of(Split::Test))
                in_scores.push_back(
                    trainer::uncertainty_score(params, ds.samples[i].x, cfg.train.score_agg));
            for (std::size_t i : ds.indices_of(Split::Ood))
                ood_scores.push_back(
                    trainer::uncertainty_score(params, ds.samples[i].x, cfg.train.score_agg));

            evalmetrics::RocCurve curve = evalmetrics::roc(in_scores, ood_scores);
            {
                std::ofstream out(out_dir + "/roc.csv", std::ios::binary);
                evalmetrics::write_roc_csv(curve, out);
            }
            {
                std::ofstream out(out_dir + "/scores.csv", std::ios::binary);
                out << "cohort,score\n";
                for (double s : in_scores) out << "in," << evalmetrics::format_double(s) << '\n';
                for (double s : ood_scores) out << "ood," << evalmetrics::format_double(s) << '\n';
            }
            rep["auc"] = evalmetrics::auc(curve);
            rep["tnr_at_tpr90"] = evalmetrics::tnr_at_tpr(curve, 0.90);
            rep["tnr_at_tpr95"] = evalmetrics::tnr_at_tpr(curve, 0.95);
            rep["num_in"] = in_scores.size();
            rep["num_ood"] = ood_scores.size();
            rep["files"] = {{"roc_csv", "roc.csv"}, {"scores_csv", "scores.csv"}};
            break;
        }
        case EvalMode::Reject: {
            require_uncertainty_head(params, "reject");
            // Corrupted-pairs benchmark: a fraction of test images carries
            // graded noise, so rejection by score can actually help.
            Dataset noisy = ds;
            std::vector<std::size_t> test = noisy.indices_of(Split::Test);
            RngStream rng_c(cfg.seed, streams::kEvalCorrupt);
            int k = static_cast<int>(
                std::llround(cfg.data.corrupt_fraction * static_cast<double>(test.size())));
            for (int i = 0; i < k; ++i) {  // deterministic prefix of the test split
                Sample& s = noisy.samples[test[static_cast<std::size_t>(i)]];
                NoiseKind kind = cfg.data.corrupt_kinds[rng_c.below(cfg.data.corrupt_kinds.size())];
                double level = cfg.data.corrupt_levels[rng_c.below(cfg.data.corrupt_levels.size())];
                s.x = datasynth::corrupt(s.x, kind, level, rng_c);
                s.noise_kind = kind;
                s.noise_level = level;
            }

            RngStream rng_p(cfg.seed, streams::kPairs);
            PairSims ps = compute_pair_sims(params, noisy, cfg.max_pairs, rng_p);

            std::vector<double> uncertainty(noisy.samples.size(), 0.0);
            for (std::size_t i : test)
                uncertainty[i] =
                    trainer::uncertainty_score(params, noisy.samples[i].x, cfg.train.score_agg);

            std::vector<double> fractions;
            for (double f = 0.0; f <= cfg.reject_fraction_max + 1e-12;
                 f += cfg.reject_fraction_step)
                fractions.push_back(f);

            evalmetrics::RejectCurve curve = evalmetrics::error_vs_reject(
                ps.pairs, uncertainty, ps.genuine, ps.impostor, cfg.fmr_target, fractions);
            {
                std::ofstream out(out_dir + "/reject.csv", std::ios::binary);
                evalmetrics::write_reject_csv(curve, out);
            }
            rep["fmr_target"] = cfg.fmr_target;
            rep["fnmr_at_reject0"] = curve.points.front().fnmr;
            rep["num_genuine_pairs"] = ps.genuine.size();
            rep["num_impostor_pairs"] = ps.impostor.size();
            rep["files"] = {{"reject_csv", "reject.csv"}};
            break;
        }
        case EvalMode::VerifyPairs: {
            RngStream rng_p(cfg.seed, streams::kPairs);
            PairSims ps = compute_pair_sims(params, ds, cfg.max_pairs, rng_p);
            {
                std::ofstream out(out_dir + "/pair_sims.csv", std::ios::binary);
                out << "pair_type,similarity\n";
                for (double s : ps.genuine)
                    out << "genuine," << evalmetrics::format_double(s) << '\n';
                for (double s : ps.impostor)
                    out << "impostor," << evalmetrics::format_double(s) << '\n';
            }
            evalmetrics::VerificationResult vr =
                evalmetrics::verification_accuracy(ps.genuine, ps.impostor);
            rep["verification_accuracy"] = vr.accuracy;
            rep["best_threshold"] = vr.threshold;
            rep["fnmr_at_fmr"] = evalmetrics::fnmr_at_fmr(ps.genuine, ps.impostor, cfg.fmr_target);
            rep["fmr_target"] = cfg.fmr_target;
            rep["num_genuine_pairs"] = ps.genuine.size();
            rep["num_impostor_pairs"] = ps.impostor.size();
            rep["files"] = {{"pair_sims_csv", "pair_sims.csv"}};
            break;
        }
        case EvalMode::NoiseCurve: {
            require_uncertainty_head(params, "noise-curve");
            std::vector<std::size_t> test = ds.indices_of(Split::Test);
            std::size_t probes =
                std::min(test.size(), static_cast<std::size_t>(cfg.train.probe_size));
            RngStream rng_c(cfg.seed, streams::kEvalCorrupt);

            std::ofstream csv(out_dir + "/noise_scores.csv", std::ios::binary);
            csv << "kind,level,score\n";
            json rho;
            for (NoiseKind kind : cfg.noise_kinds) {
                std::vector<double> levels_col, scores_col;
                for (double level : cfg.noise_levels) {
                    for (std::size_t i = 0; i < probes; ++i) {
                        const Sample& s = ds.samples[test[i]];
                        std::vector<double> xc = datasynth::corrupt(s.x, kind, level, rng_c);
                        double score =
                            trainer::uncertainty_score(params, xc, cfg.train.score_agg);
                        csv << datasynth::noise_kind_name(kind) << ','
                            << evalmetrics::format_double(level) << ','
                            << evalmetrics::format_double(score) << '\n';
                        levels_col.push_back(level);
                        scores_col.push_back(score);
                    }
                }
                rho[datasynth::noise_kind_name(kind)] =
                    evalmetrics::spearman(levels_col, scores_col);
            }
            rep["spearman_rho"] = rho;
            rep["probes_per_level"] = probes;
            rep["files"] = {{"noise_scores_csv", "noise_scores.csv"}};
            break;
        }
    }

    write_text_file(out_dir + "/summary.json", rep.dump(2) + "\n");
}

SweepAxis sweep_axis_from_name(const std::string& name) {
    if (name == "lambda") return SweepAxis::Lambda;
    if (name == "delta") return SweepAxis::Delta;
    throw ConfigError("unknown sweep axis: " + name);
}

void run_sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::string& out_dir) {
    ensure_dir(out_dir);
    write_config_echo(cfg, out_dir);

    const std::vector<double> lambda_values{0.1, 1.0, 10.0};
    const std::vector<int> delta_values{8, 16, 32};
    const std::string axis_name = axis == SweepAxis::Lambda ? "lambda" : "delta";
    const std::size_t count = axis == SweepAxis::Lambda ? lambda_values.size() : delta_values.size();

    std::ostringstream table;
    table << "value,converged,verification_accuracy,ood_auc,dataset_hash\n";
    json rows = json::array();

    for (std::size_t i = 0; i < count; ++i) {
        ExperimentConfig member = cfg;
        std::string value_str;
        if (axis == SweepAxis::Lambda) {
            member.train.lambda = lambda_values[i];
            value_str = evalmetrics::format_double(lambda_values[i]);
        } else {
            member.train.delta = delta_values[i];
            value_str = std::to_string(delta_values[i]);
        }
        std::string member_dir = out_dir + "/" + axis_name + "_" + value_str;

        bool converged = false;
        double accuracy = std::numeric_limits<double>::quiet_NaN();
        double ood_auc = std::numeric_limits<double>::quiet_NaN();
        std::uint64_t hash = 0;
        try {
            Dataset ds = load_or_generate_dataset(member);
            hash = dataset_hash(ds);
            TrainOutcome outcome = run_train(member, member_dir);
            converged = !outcome.diverged;
            if (converged) {
                ModelParams params = trainer::load_checkpoint(outcome.checkpoint_path);
                RngStream rng_p(member.seed, streams::kPairs);
                PairSims ps = compute_pair_sims(params, ds, member.max_pairs, rng_p);
                accuracy = evalmetrics::verification_accuracy(ps.genuine, ps.impostor).accuracy;
                if (heads::has_uncertainty_head(params.variant)) {
                    std::vector<double> in_scores, ood_scores;
                    for (std::size_t idx : ds.indices_of(Split::Test))
                        in_scores.push_back(trainer::uncertainty_score(params, ds.samples[idx].x,
                                                                       member.train.score_agg));
                    for (std::size_t idx : ds.indices_of(Split::Ood))
                        ood_scores.push_back(trainer::uncertainty_score(params, ds.samples[idx].x,
                                                                        member.train.score_agg));
                    ood_auc = evalmetrics::auc(evalmetrics::roc(in_scores, ood_scores));
                }
            }
        } catch (const std::exception&) {
            converged = false;  // row marked failed; sweep continues
        }

        char hash_hex[24];
        std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                      static_cast<unsigned long long>(hash));
        table << value_str << ',' << (converged ? 1 : 0) << ','
              << evalmetrics::format_double(accuracy) << ','
              << evalmetrics::format_double(ood_auc) << ',' << hash_hex << '\n';

        json row;
        row["value"] = axis == SweepAxis::Lambda ? json(lambda_values[i]) : json(delta_values[i]);
        row["converged"] = converged;
        row["verification_accuracy"] = accuracy;
        row["ood_auc"] = ood_auc;
        row["dataset_hash"] = hash_hex;
        row["dir"] = axis_name + "_" + value_str;
        rows.push_back(row);
    }

    write_text_file(out_dir + "/sweep_" + axis_name + ".csv", table.str());
    json rep = base_report(cfg);
    rep["axis"] = axis_name;
    rep["rows"] = rows;
    rep["files"] = {{"table_csv", "sweep_" + axis_name + ".csv"}};
    write_text_file(out_dir + "/report.json", rep.dump(2) + "\n");
}

void run_gen_data(const ExperimentConfig& cfg, const std::string& out_path) {
    Dataset ds = datasynth::build_dataset(cfg.seed, cfg.data);
    datasynth::export_dataset_file(ds, out_path);
}

}  // namespace rts::cli
