#include "rts/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "rts/evalmetrics.hpp"

namespace rts::trainer {

using datasynth::Dataset;
using datasynth::NoiseKind;
using datasynth::Sample;
using datasynth::Split;
using diffcore::Graph;
using diffcore::NodeId;
using heads::ModelParams;
using heads::Variant;
using stochastic::RngStream;

namespace streams = stochastic::streams;

ScoreAgg score_agg_from_name(const std::string& name) {
    if (name == "mean") return ScoreAgg::Mean;
    if (name == "max") return ScoreAgg::Max;
    if (name == "harmonic") return ScoreAgg::Harmonic;
    throw std::invalid_argument("unknown score aggregation: " + name);
}

const char* score_agg_name(ScoreAgg agg) {
    switch (agg) {
        case ScoreAgg::Mean: return "mean";
        case ScoreAgg::Max: return "max";
        case ScoreAgg::Harmonic: return "harmonic";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (variant == Variant::RTS && delta < 3)
        throw std::invalid_argument("config: delta must be >= 3 (temperature divisor is delta-2)");
    if (lambda < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
    if (gamma <= 0.0) throw std::invalid_argument("config: gamma must be > 0");
    if (margin_final < 0.0 || margin_final >= 3.14159265358979323846)
        throw std::invalid_argument("config: margin must be in [0, pi)");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (lr_initial <= 0.0) throw std::invalid_argument("config: lr_initial must be > 0");
    if (lr_decay_factor <= 1.0) throw std::invalid_argument("config: lr_decay_factor must be > 1");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("config: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw std::invalid_argument("config: weight_decay must be >= 0");
    if (variant == Variant::FixedT && fixed_t <= 0.0)
        throw std::invalid_argument("config: fixed_t must be > 0");
    if (hidden_dim < 1 || embedding_dim < 1)
        throw std::invalid_argument("config: model dimensions must be positive");
    if (probe_size < 1) throw std::invalid_argument("config: probe_size must be >= 1");
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.epochs) throw std::out_of_range("lr_schedule: epoch out of range");
    double lr = cfg.lr_initial;
    for (int d : cfg.lr_decay_epochs)
        if (epoch >= d) lr /= cfg.lr_decay_factor;
    return lr;
}

double margin_schedule(long long step, long long total_steps, double margin_final, bool dynamic) {
    if (step < 0 || step > total_steps) throw std::out_of_range("margin_schedule: step out of range");
    if (!dynamic) return margin_final;
    double ramp = std::min(1.0, 2.0 * static_cast<double>(step) / static_cast<double>(total_steps));
    return margin_final * ramp;
}

void sgd_update(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum,
                double weight_decay) {
    if (!param.same_shape(grad) || !param.same_shape(velocity))
        throw std::invalid_argument("sgd_update: shape mismatch");
    for (std::size_t i = 0; i < param.data.size(); ++i) {
        velocity.data[i] = momentum * velocity.data[i] + grad.data[i] + weight_decay * param.data[i];
        param.data[i] -= lr * velocity.data[i];
    }
}

void sgd_step(ModelParams& params, const std::vector<Tensor>& grads, SgdState& state, double lr,
              double momentum, double weight_decay) {
    std::vector<Tensor*> tensors = params.trainable();
    if (grads.size() != tensors.size()) throw std::invalid_argument("sgd_step: gradient count mismatch");
    if (state.velocity.empty())
        for (const Tensor* t : tensors) state.velocity.push_back(Tensor::zeros(t->shape));

    static const char* kNames[] = {"w1", "b1", "w2", "b2", "wg", "bg", "centers"};
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (!grads[i].all_finite()) {
            const char* name = tensors.size() == 7 ? kNames[i] : (i < 4 ? kNames[i] : "centers");
            throw std::runtime_error(std::string("sgd_step: non-finite gradient for ") + name);
        }
        sgd_update(*tensors[i], grads[i], state.velocity[i], lr, momentum, weight_decay);
    }

    // Project class centers back onto the unit sphere.
    Tensor& w = params.centers;
    for (int c = 0; c < w.shape[0]; ++c) {
        double norm = 0.0;
        for (int j = 0; j < w.shape[1]; ++j) norm += w.at(c, j) * w.at(c, j);
        norm = std::sqrt(norm);
        if (norm == 0.0) throw std::runtime_error("sgd_step: class center collapsed to zero");
        for (int j = 0; j < w.shape[1]; ++j) w.at(c, j) /= norm;
    }
}

SampleLossNodes build_sample_loss(Graph& g, const heads::ParamNodes& pn, const TrainConfig& cfg,
                                  int num_classes, const std::vector<double>& x, int label,
                                  double margin, const std::vector<double>& epsilon) {
    NodeId xn = g.constant(Tensor::vector(x));
    NodeId h = heads::hidden_node(g, pn, xn);
    NodeId y = heads::embed_node(g, pn, h);
    NodeId scores = heads::arcface_node(g, pn, y, label, num_classes, cfg.gamma, margin);
    NodeId logits = scores;
    SampleLossNodes out;

    if (cfg.variant == Variant::FixedT) {
        logits = g.scale(scores, 1.0 / cfg.fixed_t);
    } else if (cfg.variant == Variant::Relaxed) {
        NodeId z = heads::log_scale_node(g, pn, h);
        NodeId t = g.exp(z);  // scalar, strictly positive by construction
        logits = heads::final_logits_node(g, scores, t);
    } else if (cfg.variant == Variant::RTS) {
        if (static_cast<int>(epsilon.size()) != cfg.delta)
            throw std::invalid_argument("build_sample_loss: epsilon length must equal delta");
        NodeId z = heads::log_scale_node(g, pn, h);
        NodeId v = g.exp(z);
        Tensor eps2 = Tensor::zeros({cfg.delta});
        for (int i = 0; i < cfg.delta; ++i) eps2.at(i) = epsilon[static_cast<std::size_t>(i)] *
                                                        epsilon[static_cast<std::size_t>(i)];
        NodeId t_raw = g.scale(g.sum(g.mul(v, g.constant(eps2))),
                               1.0 / static_cast<double>(cfg.delta - 2));
        NodeId t = g.clamp(t_raw, stochastic::kTemperatureFloor, 1e300);
        logits = heads::final_logits_node(g, scores, t);
        out.kl = losses::kl_gamma_node_from_log_scales(g, z);
    }

    out.ce = losses::cross_entropy_node(g, logits, label);
    return out;
}

Tensor flatten_params(const ModelParams& params) {
    std::vector<double> flat;
    for (const Tensor* t : params.trainable())
        flat.insert(flat.end(), t->data.begin(), t->data.end());
    return Tensor::vector(std::move(flat));
}

heads::ParamNodes params_from_flat(Graph& g, NodeId flat, const ModelParams& shape_template) {
    std::vector<const Tensor*> tensors = shape_template.trainable();
    std::vector<NodeId> nodes;
    int offset = 0;
    for (const Tensor* t : tensors) {
        int len = static_cast<int>(t->numel());
        NodeId piece = g.slice(flat, offset, len);
        nodes.push_back(t->rank() == 1 ? piece : g.reshape(piece, t->shape));
        offset += len;
    }
    heads::ParamNodes pn{};
    pn.w1 = nodes[0];
    pn.b1 = nodes[1];
    pn.w2 = nodes[2];
    pn.b2 = nodes[3];
    if (nodes.size() == 7) {
        pn.wg = nodes[4];
        pn.bg = nodes[5];
        pn.centers = nodes[6];
    } else {
        pn.wg = -1;
        pn.bg = -1;
        pn.centers = nodes[4];
    }
    return pn;
}

diffcore::ScalarFn total_loss_fn(const TrainConfig& cfg, const ModelParams& shape_template,
                                 std::vector<double> x, int label, double margin,
                                 std::vector<double> epsilon) {
    int num_classes = shape_template.dims.num_classes;
    return [cfg, shape_template, x = std::move(x), label, margin,
            epsilon = std::move(epsilon), num_classes](Graph& g, NodeId flat) -> NodeId {
        heads::ParamNodes pn = params_from_flat(g, flat, shape_template);
        SampleLossNodes ln = build_sample_loss(g, pn, cfg, num_classes, x, label, margin, epsilon);
        if (ln.kl < 0) return ln.ce;
        return g.add(ln.ce, g.scale(ln.kl, cfg.lambda));
    };
}

double uncertainty_score(const ModelParams& params, const std::vector<double>& x, ScoreAgg agg) {
    std::vector<double> v = heads::scale_vector(params, x);  // throws for Plain/FixedT
    switch (agg) {
        case ScoreAgg::Mean:
            return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        case ScoreAgg::Max:
            return *std::max_element(v.begin(), v.end());
        case ScoreAgg::Harmonic: {
            double inv = 0.0;
            for (double vi : v) inv += 1.0 / vi;
            return static_cast<double>(v.size()) / inv;
        }
    }
    throw std::logic_error("uncertainty_score: bad aggregation");
}

namespace {

struct ProbeSets {
    std::vector<std::size_t> clean;
    std::vector<std::size_t> corrupted;
    std::vector<std::size_t> ood;
};

ProbeSets freeze_probes(const Dataset& ds, int probe_size, RngStream& rng) {
    std::vector<std::size_t> clean, corrupted, ood;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        if (s.split == Split::Ood)
            ood.push_back(i);
        else if (s.split == Split::Train && s.noise_kind == NoiseKind::Clean)
            clean.push_back(i);
        else if (s.split == Split::Train)
            corrupted.push_back(i);
    }
    auto take = [&rng, probe_size](std::vector<std::size_t>& v) {
        std::size_t want = std::min(v.size(), static_cast<std::size_t>(probe_size));
        for (std::size_t i = 0; i < want; ++i) {
            std::size_t j = i + rng.below(v.size() - i);
            std::swap(v[i], v[j]);
        }
        v.resize(want);
        std::sort(v.begin(), v.end());
    };
    take(clean);
    take(corrupted);
    take(ood);
    return ProbeSets{std::move(clean), std::move(corrupted), std::move(ood)};
}

double probe_mean(const ModelParams& params, const Dataset& ds,
                  const std::vector<std::size_t>& idx, ScoreAgg agg) {
    if (idx.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i : idx) acc += uncertainty_score(params, ds.samples[i].x, agg);
    return acc / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& dataset) {
    cfg.validate();
    std::vector<std::size_t> train_idx = dataset.indices_of(Split::Train);
    if (train_idx.empty()) throw std::invalid_argument("train: dataset has no train split");

    heads::ModelDims dims;
    dims.input_dim = dataset.input_dim;
    dims.hidden_dim = cfg.hidden_dim;
    dims.embedding_dim = cfg.embedding_dim;
    dims.num_classes = dataset.num_identities;
    dims.delta = cfg.delta;

    RngStream rng_init(cfg.seed, streams::kInit);
    ModelParams params = heads::init_params(cfg.variant, dims, rng_init, cfg.fixed_t);

    RngStream rng_probes(cfg.seed, streams::kProbes);
    ProbeSets probes = freeze_probes(dataset, cfg.probe_size, rng_probes);

    RngStream rng_temp(cfg.seed, streams::kTemperature);

    const long long batches_per_epoch =
        (static_cast<long long>(train_idx.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const long long total_steps = batches_per_epoch * cfg.epochs;

    SgdState opt_state;
    TrainResult result;
    ModelParams last_good = params;
    long long step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = lr_schedule(epoch, cfg);
        double margin = 0.0;

        // Per-epoch deterministic shuffle.
        RngStream rng_shuffle(cfg.seed, streams::kShuffle + 256 * (static_cast<std::uint64_t>(epoch) + 1));
        std::vector<std::size_t> order = train_idx;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            std::size_t j = i + rng_shuffle.below(order.size() - i);
            std::swap(order[i], order[j]);
        }

        double epoch_ce = 0.0, epoch_kl = 0.0;
        long long epoch_samples = 0;
        bool aborted = false;

        for (long long b = 0; b < batches_per_epoch && !aborted; ++b) {
            std::size_t lo = static_cast<std::size_t>(b) * cfg.batch_size;
            std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
            std::size_t bs = hi - lo;
            margin = margin_schedule(step, total_steps, cfg.margin_final, cfg.dynamic_margin);

            try {
                Graph g;
                heads::ParamNodes pn = heads::insert_params(g, params);
                NodeId ce_sum = -1, kl_sum = -1;

                for (std::size_t s = lo; s < hi; ++s) {
                    const Sample& sample = dataset.samples[order[s]];
                    std::vector<double> eps;
                    if (cfg.variant == Variant::RTS) {
                        eps.resize(static_cast<std::size_t>(cfg.delta));
                        for (double& e : eps) e = rng_temp.normal();
                    }
                    SampleLossNodes ln = build_sample_loss(g, pn, cfg, dims.num_classes,
                                                           sample.x, sample.label, margin, eps);
                    ce_sum = (ce_sum < 0) ? ln.ce : g.add(ce_sum, ln.ce);
                    if (ln.kl >= 0) kl_sum = (kl_sum < 0) ? ln.kl : g.add(kl_sum, ln.kl);
                }

                NodeId ce_mean = g.scale(ce_sum, 1.0 / static_cast<double>(bs));
                NodeId total = ce_mean;
                double kl_value = 0.0;
                if (kl_sum >= 0) {
                    NodeId kl_mean = g.scale(kl_sum, 1.0 / static_cast<double>(bs));
                    total = g.add(ce_mean, g.scale(kl_mean, cfg.lambda));
                    kl_value = g.value(kl_mean).data[0];
                }

                double total_value = g.value(total).data[0];
                if (!std::isfinite(total_value) || total_value > 1e4) {
                    aborted = true;
                    break;
                }

                diffcore::GradMap gm = g.backward(total);
                std::vector<Tensor> grads;
                grads.push_back(gm.grad(pn.w1));
                grads.push_back(gm.grad(pn.b1));
                grads.push_back(gm.grad(pn.w2));
                grads.push_back(gm.grad(pn.b2));
                if (pn.wg >= 0) {
                    grads.push_back(gm.grad(pn.wg));
                    grads.push_back(gm.grad(pn.bg));
                }
                grads.push_back(gm.grad(pn.centers));
                sgd_step(params, grads, opt_state, lr, cfg.momentum, cfg.weight_decay);

                epoch_ce += g.value(ce_mean).data[0] * static_cast<double>(bs);
                epoch_kl += kl_value * static_cast<double>(bs);
                epoch_samples += static_cast<long long>(bs);
            } catch (const std::domain_error&) {
                // Numeric blow-up inside the batch graph: same treatment as
                // an over-threshold loss.
                aborted = true;
            }
            ++step;
        }

        if (aborted) {
            result.params = last_good;  // logs already stop at the previous epoch
            result.diverged = true;
            result.divergence_epoch = epoch;
            return result;
        }

        EpochLog log;
        log.epoch = epoch;
        log.mean_ce = epoch_ce / static_cast<double>(epoch_samples);
        log.mean_kl = epoch_kl / static_cast<double>(epoch_samples);
        log.lr = lr;
        log.margin = margin;
        if (heads::has_uncertainty_head(cfg.variant)) {
            log.has_uncertainty = true;
            log.u_clean = probe_mean(params, dataset, probes.clean, cfg.score_agg);
            log.u_corrupted = probe_mean(params, dataset, probes.corrupted, cfg.score_agg);
            log.u_ood = probe_mean(params, dataset, probes.ood, cfg.score_agg);
        }
        result.logs.push_back(log);
        last_good = params;
    }

    result.params = std::move(params);
    return result;
}

void write_epoch_csv(const std::vector<EpochLog>& logs, std::ostream& out) {
    bool with_u = !logs.empty() && logs.front().has_uncertainty;
    out << "epoch,ce,kl,lr,margin";
    if (with_u) out << ",u_clean,u_corrupted,u_ood";
    out << '\n';
    for (const EpochLog& l : logs) {
        out << l.epoch << ',' << evalmetrics::format_double(l.mean_ce) << ','
            << evalmetrics::format_double(l.mean_kl) << ',' << evalmetrics::format_double(l.lr)
            << ',' << evalmetrics::format_double(l.margin);
        if (with_u)
            out << ',' << evalmetrics::format_double(l.u_clean) << ','
                << evalmetrics::format_double(l.u_corrupted) << ','
                << evalmetrics::format_double(l.u_ood);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format v1 (little endian):
//   8 bytes magic "RTSCKPT1"
//   u32 version, u32 variant, u32 delta, u32 g_out,
//   u32 input_dim, u32 hidden_dim, u32 embedding_dim, u32 num_classes
//   f64 fixed_t
//   f64 arrays: w1, b1, w2, b2, wg, bg, centers (row-major)
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'R', 'T', 'S', 'C', 'K', 'P', 'T', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void write_tensor(std::ostream& out, const Tensor& t) {
    for (double v : t.data) write_f64(out, v);
}

void read_tensor(std::istream& in, Tensor& t) {
    for (double& v : t.data) v = read_f64(in);
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out.write(kMagic, 8);
    write_u32(out, 1);
    write_u32(out, static_cast<std::uint32_t>(params.variant));
    write_u32(out, static_cast<std::uint32_t>(params.dims.delta));
    write_u32(out, static_cast<std::uint32_t>(params.g_output_dim()));
    write_u32(out, static_cast<std::uint32_t>(params.dims.input_dim));
    write_u32(out, static_cast<std::uint32_t>(params.dims.hidden_dim));
    write_u32(out, static_cast<std::uint32_t>(params.dims.embedding_dim));
    write_u32(out, static_cast<std::uint32_t>(params.dims.num_classes));
    write_f64(out, params.fixed_t);
    write_tensor(out, params.w1);
    write_tensor(out, params.b1);
    write_tensor(out, params.w2);
    write_tensor(out, params.b2);
    if (params.g_output_dim() > 0) {
        write_tensor(out, params.wg);
        write_tensor(out, params.bg);
    }
    write_tensor(out, params.centers);
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    std::uint32_t version = read_u32(in);
    if (version != 1) throw std::runtime_error("unsupported checkpoint version");

    ModelParams p;
    p.variant = static_cast<Variant>(read_u32(in));
    p.dims.delta = static_cast<int>(read_u32(in));
    std::uint32_t g_out = read_u32(in);
    p.dims.input_dim = static_cast<int>(read_u32(in));
    p.dims.hidden_dim = static_cast<int>(read_u32(in));
    p.dims.embedding_dim = static_cast<int>(read_u32(in));
    p.dims.num_classes = static_cast<int>(read_u32(in));
    p.fixed_t = read_f64(in);
    if (static_cast<int>(g_out) != p.g_output_dim())
        throw std::runtime_error("checkpoint header inconsistent with variant");

    p.w1 = Tensor::zeros({p.dims.hidden_dim, p.dims.input_dim});
    p.b1 = Tensor::zeros({p.dims.hidden_dim});
    p.w2 = Tensor::zeros({p.dims.embedding_dim, p.dims.hidden_dim});
    p.b2 = Tensor::zeros({p.dims.embedding_dim});
    read_tensor(in, p.w1);
    read_tensor(in, p.b1);
    read_tensor(in, p.w2);
    read_tensor(in, p.b2);
    if (g_out > 0) {
        p.wg = Tensor::zeros({static_cast<int>(g_out), p.dims.hidden_dim});
        p.bg = Tensor::zeros({static_cast<int>(g_out)});
        read_tensor(in, p.wg);
        read_tensor(in, p.bg);
    }
    p.centers = Tensor::zeros({p.dims.num_classes, p.dims.embedding_dim});
    read_tensor(in, p.centers);
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    return p;
}

}  // namespace rts::trainer
