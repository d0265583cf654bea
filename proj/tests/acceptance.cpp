// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Criteria 6 and 7 drive the command-line binary; the rest
// exercise the library directly.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rts/datasynth.hpp"
#include "rts/diffcore.hpp"
#include "rts/evalmetrics.hpp"
#include "rts/experiment.hpp"
#include "rts/heads.hpp"
#include "rts/losses.hpp"
#include "rts/stochastic.hpp"
#include "rts/trainer.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace rts;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(RTS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// --- criterion 1: Gumbel-max argmax frequencies equal tempered softmax ------
Outcome criterion_gumbel_softmax() {
    auto t0 = Clock::now();
    stochastic::RngStream rng(2024, 101);
    const std::vector<double> scores{2.1, 1.0, 0.6};
    double worst = 0.0;
    for (double t : {0.5, 1.0, 2.0}) {
        auto freq = stochastic::mc_gumbel_argmax(scores, t, 1000000, rng);
        auto truth = stochastic::softmax(scores, t);
        for (std::size_t k = 0; k < freq.size(); ++k)
            worst = std::max(worst, std::abs(freq[k] - truth[k]));
    }
    bool canonical_ok = worst < 0.003;

    double worst_sigma = 0.0;
    for (int c = 0; c < 20; ++c) {
        std::size_t classes = 2 + rng.below(7);
        std::vector<double> s(classes);
        for (double& x : s) x = rng.uniform(-2.0, 3.0);
        double t = rng.uniform(0.3, 3.0);
        const std::size_t n = 1000000;
        auto freq = stochastic::mc_gumbel_argmax(s, t, n, rng);
        auto truth = oracles::softmax_naive(s, t);
        for (std::size_t k = 0; k < classes; ++k) {
            double sigma = std::sqrt(truth[k] * (1.0 - truth[k]) / static_cast<double>(n));
            if (sigma > 0.0)
                worst_sigma = std::max(worst_sigma, std::abs(freq[k] - truth[k]) / sigma);
        }
    }
    double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = canonical_ok && worst_sigma <= 3.0 && elapsed < 30.0;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "max |freq-softmax| %.2e (<3e-3), random cases %.2f sigma (<=3), %.1fs (<30s)",
                  worst, worst_sigma, elapsed);
    o.detail = buf;
    return o;
}

// --- criterion 2: closed-form KL equals the quadrature oracle ---------------
Outcome criterion_kl() {
    double worst = 0.0;
    for (double v : {0.25, 0.5, 1.0, 2.0, 4.0})
        worst = std::max(worst, std::abs(losses::kl_gamma({v}) - losses::kl_numeric_oracle(v)));
    double at_one = losses::kl_gamma({1.0});
    Outcome o;
    o.pass = worst < 1e-6 && at_one == 0.0;
    char buf[120];
    std::snprintf(buf, sizeof buf, "max |closed-quadrature| %.2e (<1e-6), kl(1)=%.1e (==0)",
                  worst, at_one);
    o.detail = buf;
    return o;
}

// --- criterion 3: temperature law Gamma(delta/2, (delta/2-1)/v) -------------
Outcome criterion_temperature_law() {
    stochastic::RngStream rng(2024, 103);
    std::vector<double> v(16, 1.0);
    std::vector<double> draws;
    draws.reserve(1000000);
    for (int i = 0; i < 1000000; ++i) draws.push_back(stochastic::sample_temperature(rng, v).t);
    double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / 1e6;
    double mode = stochastic::histogram_mode(draws, 0.1);
    double ks = stochastic::ks_statistic(
        draws, [](double x) { return stochastic::gamma_cdf(x, 8.0, 7.0); });
    double ks_crit = stochastic::ks_critical(0.001, draws.size());

    std::vector<double> v2(16, 2.0);
    std::vector<double> draws2;
    draws2.reserve(200000);
    for (int i = 0; i < 200000; ++i) draws2.push_back(stochastic::sample_temperature(rng, v2).t);
    double mean2 = std::accumulate(draws2.begin(), draws2.end(), 0.0) / 2e5;
    double mode2 = stochastic::histogram_mode(draws2, 0.1);

    Outcome o;
    bool mean_ok = std::abs(mean - 8.0 / 7.0) < 0.005;
    bool mode_ok = mode >= 0.95 && mode <= 1.05;
    bool ks_ok = ks < ks_crit;
    bool scale_ok = std::abs(mean2 - 16.0 / 7.0) < 0.01 && std::abs(mode2 - 2.0) <= 0.15;
    o.pass = mean_ok && mode_ok && ks_ok && scale_ok;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "mean %.5f (8/7±.005), mode %.2f ([.95,1.05]), KS %.2e (<%.2e); v=2: mean %.4f mode %.2f",
                  mean, mode, ks, ks_crit, mean2, mode2);
    o.detail = buf;
    return o;
}

// --- criterion 4: full-loss gradients vs central differences ----------------
Outcome criterion_gradients() {
    stochastic::RngStream rng(2024, 104);
    trainer::TrainConfig cfg;
    cfg.variant = heads::Variant::RTS;
    cfg.delta = 4;
    cfg.lambda = 10.0;
    cfg.gamma = 30.0;
    heads::ModelDims dims;
    dims.input_dim = 8;
    dims.hidden_dim = 8;
    dims.embedding_dim = 4;
    dims.num_classes = 5;
    dims.delta = 4;

    double worst = 0.0;
    for (int point = 0; point < 100; ++point) {
        heads::ModelParams params = heads::init_params(heads::Variant::RTS, dims, rng);
        for (diffcore::Tensor* t : params.trainable())
            for (double& x : t->data) x += 0.05 * rng.normal();
        for (int c = 0; c < dims.num_classes; ++c) {  // restore the unit-norm precondition
            double n = 0.0;
            for (int j = 0; j < dims.embedding_dim; ++j) n += params.centers.at(c, j) * params.centers.at(c, j);
            n = std::sqrt(n);
            for (int j = 0; j < dims.embedding_dim; ++j) params.centers.at(c, j) /= n;
        }
        std::vector<double> x(8);
        for (double& val : x) val = rng.normal();
        std::vector<double> eps(4);
        for (double& e : eps) e = rng.normal();
        int label = static_cast<int>(rng.below(5));
        double margin = rng.uniform(0.0, 0.5);

        auto fn = trainer::total_loss_fn(cfg, params, x, label, margin, eps);
        worst = std::max(worst,
                         diffcore::finite_diff_check(fn, trainer::flatten_params(params), 1e-5));
    }
    Outcome o;
    o.pass = worst < 1e-4;
    char buf[96];
    std::snprintf(buf, sizeof buf, "max relative error %.2e over 100 points (<1e-4)", worst);
    o.detail = buf;
    return o;
}

// --- criterion 5: desk-scale open-set experiment -----------------------------
Outcome criterion_desk_experiment() {
    auto t0 = Clock::now();
    cli::ExperimentConfig cfg = cli::parse_config_text(R"({"seed": 1})");
    datasynth::Dataset ds = cli::load_or_generate_dataset(cfg);
    auto test_idx = ds.indices_of(datasynth::Split::Test);
    auto ood_idx = ds.indices_of(datasynth::Split::Ood);

    trainer::TrainResult rts_dyn = trainer::train(cfg.train, ds);

    trainer::TrainConfig fixed_cfg = cfg.train;
    fixed_cfg.dynamic_margin = false;
    trainer::TrainResult rts_fixed = trainer::train(fixed_cfg, ds);

    trainer::TrainConfig plain_cfg = cfg.train;
    plain_cfg.variant = heads::Variant::Plain;
    trainer::TrainResult plain = trainer::train(plain_cfg, ds);

    // (a) v-score OOD AUC vs the plain max-probability baseline
    std::vector<double> v_in, v_out, mp_in, mp_out;
    for (std::size_t i : test_idx) {
        v_in.push_back(trainer::uncertainty_score(rts_dyn.params, ds.samples[i].x));
        mp_in.push_back(1.0 -
                        heads::max_softmax_prob(plain.params, ds.samples[i].x, cfg.train.gamma));
    }
    for (std::size_t i : ood_idx) {
        v_out.push_back(trainer::uncertainty_score(rts_dyn.params, ds.samples[i].x));
        mp_out.push_back(1.0 -
                         heads::max_softmax_prob(plain.params, ds.samples[i].x, cfg.train.gamma));
    }
    double v_auc = evalmetrics::auc(evalmetrics::roc(v_in, v_out));
    double mp_auc = evalmetrics::auc(evalmetrics::roc(mp_in, mp_out));
    bool a_threshold_ok = v_auc >= 0.90;
    bool a_baseline_ok = v_auc > mp_auc;  // see decisions ledger: unattainable at desk scale

    // (b) Spearman rho between injected additive level and the score
    stochastic::RngStream rng_nc(cfg.seed, stochastic::streams::kEvalCorrupt);
    std::vector<double> levels_col, scores_col;
    std::size_t probes = std::min<std::size_t>(test_idx.size(), 200);
    for (double level : cfg.noise_levels) {
        for (std::size_t i = 0; i < probes; ++i) {
            auto xc = datasynth::corrupt(ds.samples[test_idx[i]].x,
                                         datasynth::NoiseKind::Additive, level, rng_nc);
            levels_col.push_back(level);
            scores_col.push_back(trainer::uncertainty_score(rts_dyn.params, xc));
        }
    }
    double rho = evalmetrics::spearman(levels_col, scores_col);
    bool b_ok = rho >= 0.5;

    // (c) fixed-margin cohort ordering at the final epoch
    const trainer::EpochLog& last = rts_fixed.logs.back();
    bool c_ok = last.u_clean < last.u_corrupted && last.u_corrupted < last.u_ood;

    // (d) error-versus-reject on the corrupted-pairs benchmark
    datasynth::Dataset noisy = ds;
    stochastic::RngStream rng_c(cfg.seed, stochastic::streams::kEvalCorrupt + 77);
    std::size_t n_corrupt = static_cast<std::size_t>(
        std::llround(cfg.data.corrupt_fraction * static_cast<double>(test_idx.size())));
    for (std::size_t i = 0; i < n_corrupt; ++i) {
        datasynth::Sample& s = noisy.samples[test_idx[i]];
        datasynth::NoiseKind kind = cfg.data.corrupt_kinds[rng_c.below(cfg.data.corrupt_kinds.size())];
        double level = cfg.data.corrupt_levels[rng_c.below(cfg.data.corrupt_levels.size())];
        s.x = datasynth::corrupt(s.x, kind, level, rng_c);
    }
    stochastic::RngStream rng_p(cfg.seed, stochastic::streams::kPairs);
    datasynth::PairSet pairs = datasynth::build_pairs(noisy, cfg.max_pairs, rng_p);
    std::vector<std::vector<double>> emb(noisy.samples.size());
    auto embed_of = [&](std::size_t idx) -> const std::vector<double>& {
        if (emb[idx].empty()) emb[idx] = heads::embed(rts_dyn.params, noisy.samples[idx].x);
        return emb[idx];
    };
    auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
        return dot;
    };
    std::vector<double> gen_sims, imp_sims;
    for (const auto& [a, b] : pairs.genuine) gen_sims.push_back(cosine(embed_of(a), embed_of(b)));
    for (const auto& [a, b] : pairs.impostor) imp_sims.push_back(cosine(embed_of(a), embed_of(b)));
    std::vector<double> unc(noisy.samples.size(), 0.0);
    for (std::size_t i : test_idx)
        unc[i] = trainer::uncertainty_score(rts_dyn.params, noisy.samples[i].x);
    evalmetrics::RejectCurve curve = evalmetrics::error_vs_reject(
        pairs, unc, gen_sims, imp_sims, cfg.fmr_target, {0.0, 0.1, 0.2});
    double fnmr0 = curve.points[0].fnmr;
    double fnmr20 = curve.points[2].fnmr;
    bool d_ok = curve.points[2].defined && fnmr20 <= fnmr0;

    // trainer invariant on the default task, checked while everything is built
    bool loss_ok = rts_dyn.logs[1].mean_total(cfg.train.lambda) <=
                   rts_dyn.logs[0].mean_total(cfg.train.lambda);

    double elapsed = seconds_since(t0);
    Outcome o;
    o.pass = a_threshold_ok && a_baseline_ok && b_ok && c_ok && d_ok && loss_ok &&
             elapsed < 600.0;
    char buf[320];
    std::snprintf(buf, sizeof buf,
                  "(a) v_auc %.4f (>=0.90 %s), baseline %.4f (v>baseline %s: ledger); "
                  "(b) rho %.3f (>=0.5 %s); (c) %.3f<%.3f<%.3f (%s); (d) fnmr %.3f->%.3f (%s); "
                  "loss e0>=e1 %s; %.0fs (<600s)",
                  v_auc, a_threshold_ok ? "ok" : "FAIL", mp_auc, a_baseline_ok ? "ok" : "FAIL",
                  rho, b_ok ? "ok" : "FAIL", last.u_clean, last.u_corrupted, last.u_ood,
                  c_ok ? "ok" : "FAIL", fnmr0, fnmr20, d_ok ? "ok" : "FAIL",
                  loss_ok ? "ok" : "FAIL", elapsed);
    o.detail = buf;
    return o;
}

// --- criterion 6: ablation sweep structure -----------------------------------
Outcome criterion_sweep() {
    fs::path dir = fs::temp_directory_path() / "rts_acceptance_sweep";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream cfg(dir / "config.json");
    cfg << R"({"seed": 1, "out_dir": ")" << (dir / "out").string() << R"("})";
    cfg.close();

    int rc1 = run_cli("sweep --config " + (dir / "config.json").string() + " --axis lambda --out " +
                      (dir / "lambda").string());
    int rc2 = run_cli("sweep --config " + (dir / "config.json").string() + " --axis delta --out " +
                      (dir / "delta").string());

    auto parse_table = [](const std::string& path, int& rows, int& converged,
                          std::string& hash_set) {
        std::ifstream in(path);
        std::string line;
        std::getline(in, line);  // header
        rows = 0;
        converged = 0;
        while (std::getline(in, line)) {
            ++rows;
            std::stringstream ss(line);
            std::string value, conv, acc, auc, hash;
            std::getline(ss, value, ',');
            std::getline(ss, conv, ',');
            std::getline(ss, acc, ',');
            std::getline(ss, auc, ',');
            std::getline(ss, hash, ',');
            if (conv == "1") ++converged;
            if (hash_set.empty())
                hash_set = hash;
            else if (hash_set != hash)
                hash_set = "MISMATCH";
        }
    };
    int rows_l = 0, conv_l = 0, rows_d = 0, conv_d = 0;
    std::string hash_l, hash_d;
    parse_table((dir / "lambda" / "sweep_lambda.csv").string(), rows_l, conv_l, hash_l);
    parse_table((dir / "delta" / "sweep_delta.csv").string(), rows_d, conv_d, hash_d);

    Outcome o;
    o.pass = rc1 == 0 && rc2 == 0 && rows_l == 3 && conv_l == 3 && rows_d == 3 && conv_d == 3 &&
             hash_l != "MISMATCH" && hash_d != "MISMATCH" && hash_l == hash_d;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "lambda rows %d conv %d, delta rows %d conv %d, shared dataset hash %s",
                  rows_l, conv_l, rows_d, conv_d,
                  (hash_l == hash_d && hash_l != "MISMATCH") ? "ok" : "MISMATCH");
    o.detail = buf;
    return o;
}

// --- criterion 7: byte-identical reruns --------------------------------------
Outcome criterion_determinism() {
    fs::path dir = fs::temp_directory_path() / "rts_acceptance_det";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream cfg(dir / "config.json");
    cfg << R"({"seed": 9, "out_dir": "unused",
      "data": {"num_identities": 12, "input_dim": 16, "samples_per_identity": 8, "ood_count": 60},
      "train": {"epochs": 4, "batch_size": 32},
      "eval": {"max_pairs": 200}})";
    cfg.close();
    std::string c = (dir / "config.json").string();

    bool ok = true;
    ok &= run_cli("train --config " + c + " --out " + (dir / "r1").string()) == 0;
    ok &= run_cli("train --config " + c + " --out " + (dir / "r2").string()) == 0;
    ok &= run_cli("eval --config " + c + " --checkpoint " + (dir / "r1" / "checkpoint.bin").string() +
                  " --mode ood --out " + (dir / "e1").string()) == 0;
    ok &= run_cli("eval --config " + c + " --checkpoint " + (dir / "r2" / "checkpoint.bin").string() +
                  " --mode ood --out " + (dir / "e2").string()) == 0;

    bool epochs_same = read_file((dir / "r1" / "epochs.csv").string()) ==
                       read_file((dir / "r2" / "epochs.csv").string());
    bool ckpt_same = read_file((dir / "r1" / "checkpoint.bin").string()) ==
                     read_file((dir / "r2" / "checkpoint.bin").string());
    bool roc_same = read_file((dir / "e1" / "roc.csv").string()) ==
                    read_file((dir / "e2" / "roc.csv").string());
    bool scores_same = read_file((dir / "e1" / "scores.csv").string()) ==
                       read_file((dir / "e2" / "scores.csv").string());
    bool nonempty = !read_file((dir / "r1" / "epochs.csv").string()).empty() &&
                    !read_file((dir / "e1" / "roc.csv").string()).empty();

    Outcome o;
    o.pass = ok && nonempty && epochs_same && ckpt_same && roc_same && scores_same;
    char buf[160];
    std::snprintf(buf, sizeof buf, "epochs.csv %s, checkpoint %s, roc.csv %s, scores.csv %s",
                  epochs_same ? "identical" : "DIFFER", ckpt_same ? "identical" : "DIFFER",
                  roc_same ? "identical" : "DIFFER", scores_same ? "identical" : "DIFFER");
    o.detail = buf;
    return o;
}

// --- criterion 8: metric implementations equal brute-force oracles ----------
Outcome criterion_metric_oracles() {
    stochastic::RngStream rng(2024, 108);
    const std::vector<double> values{0.05, 0.2, 0.2, 0.35, 0.5, 0.5, 0.65, 0.8, 0.95};
    int mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 1 + rng.below(8), m = 1 + rng.below(8);
        std::vector<double> in(n), ood(m);
        for (double& x : in) x = values[rng.below(values.size())];
        for (double& x : ood) x = values[rng.below(values.size())];

        evalmetrics::RocCurve c = evalmetrics::roc(in, ood);
        if (evalmetrics::auc(c) != oracles::auc_pairwise(in, ood)) ++mismatches;
        for (double target : {0.90, 0.95})
            if (evalmetrics::tnr_at_tpr(c, target) != oracles::tnr_at_tpr_scan(in, ood, target))
                ++mismatches;
        for (double target : {0.001, 0.25, 0.5})
            if (evalmetrics::fnmr_at_fmr(in, ood, target) !=
                oracles::fnmr_at_fmr_enum(in, ood, target))
                ++mismatches;
    }
    Outcome o;
    o.pass = mismatches == 0;
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d mismatches over 200 instances x 6 checks (exact equality)",
                  mismatches);
    o.detail = buf;
    return o;
}

}  // namespace

int main() {
    struct Entry {
        int id;
        const char* name;
        std::function<Outcome()> fn;
    };
    const std::vector<Entry> criteria{
        {1, "gumbel-softmax identity", criterion_gumbel_softmax},
        {2, "KL closed form vs quadrature", criterion_kl},
        {3, "temperature law Gamma(8,7)", criterion_temperature_law},
        {4, "gradient correctness (full RTS loss)", criterion_gradients},
        {5, "desk-scale open-set experiment", criterion_desk_experiment},
        {6, "ablation sweep structure", criterion_sweep},
        {7, "train+eval determinism", criterion_determinism},
        {8, "metric oracles exact agreement", criterion_metric_oracles},
    };

    int failures = 0;
    for (const Entry& e : criteria) {
        Outcome o;
        try {
            o = e.fn();
        } catch (const std::exception& ex) {
            o.pass = false;
            o.detail = std::string("exception: ") + ex.what();
        }
        if (!o.pass) ++failures;
        std::printf("[%s] criterion %d: %s — %s\n", o.pass ? "PASS" : "FAIL", e.id, e.name,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/8 criteria passed\n", 8 - failures);
    if (failures > 0)
        std::printf("criterion 5(a) baseline comparison is analyzed as unattainable at desk "
                    "scale; see the project notes.\n");
    return failures;
}
