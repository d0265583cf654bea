// SGD training loop with momentum/weight-decay, step-decay learning rate,
// linear margin ramp, per-epoch uncertainty dynamics over frozen probe
// cohorts, and checkpoint I/O.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rts/datasynth.hpp"
#include "rts/heads.hpp"
#include "rts/losses.hpp"

namespace rts::trainer {

using diffcore::Tensor;

enum class ScoreAgg { Mean, Max, Harmonic };
ScoreAgg score_agg_from_name(const std::string& name);
const char* score_agg_name(ScoreAgg agg);

struct TrainConfig {
    heads::Variant variant = heads::Variant::RTS;
    int delta = 16;
    double lambda = 10.0;
    double gamma = 30.0;
    double margin_final = 0.5;
    bool dynamic_margin = true;
    double fixed_t = 1.0;  // FixedT variant only
    int epochs = 32;
    int batch_size = 64;
    double lr_initial = 0.1;
    std::vector<int> lr_decay_epochs{20, 28};
    double lr_decay_factor = 10.0;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    int hidden_dim = 64;
    int embedding_dim = 16;
    int probe_size = 200;
    ScoreAgg score_agg = ScoreAgg::Mean;
    std::uint64_t seed = 1;

    void validate() const;  // throws std::invalid_argument naming the field
};

struct EpochLog {
    int epoch = 0;
    double mean_ce = 0.0;
    double mean_kl = 0.0;
    double lr = 0.0;
    double margin = 0.0;
    bool has_uncertainty = false;
    double u_clean = 0.0;
    double u_corrupted = 0.0;
    double u_ood = 0.0;

    double mean_total(double lambda) const { return mean_ce + lambda * mean_kl; }
};

double lr_schedule(int epoch, const TrainConfig& cfg);
double margin_schedule(long long step, long long total_steps, double margin_final, bool dynamic);

// One momentum step on a single tensor:
//   velocity = momentum*velocity + grad + weight_decay*param
//   param   -= lr*velocity
void sgd_update(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum,
                double weight_decay);

struct SgdState {
    std::vector<Tensor> velocity;  // aligned with ModelParams::trainable()
};

// Whole-model step; re-normalizes class-center rows afterward. Throws on
// non-finite gradients, naming the offending tensor.
void sgd_step(heads::ModelParams& params, const std::vector<Tensor>& grads, SgdState& state,
              double lr, double momentum, double weight_decay);

struct TrainResult {
    heads::ModelParams params;
    std::vector<EpochLog> logs;
    bool diverged = false;
    int divergence_epoch = -1;
};

TrainResult train(const TrainConfig& cfg, const datasynth::Dataset& dataset);

// --- loss graph construction -------------------------------------------------
struct SampleLossNodes {
    diffcore::NodeId ce = -1;
    diffcore::NodeId kl = -1;  // -1 when the variant carries no KL term
};

// Full forward pass for one sample: embed -> (log scale) -> temperature ->
// margin scores -> scaled logits -> losses. For RTS, `epsilon` holds the
// frozen normal draws for this pass (gradients flow through v only).
SampleLossNodes build_sample_loss(diffcore::Graph& g, const heads::ParamNodes& pn,
                                  const TrainConfig& cfg, int num_classes,
                                  const std::vector<double>& x, int label, double margin,
                                  const std::vector<double>& epsilon);

// Concatenation of all trainable tensors (trainable() order), and its inverse
// as graph nodes; lets finite_diff_check drive the whole model from one leaf.
Tensor flatten_params(const heads::ModelParams& params);
heads::ParamNodes params_from_flat(diffcore::Graph& g, diffcore::NodeId flat,
                                   const heads::ModelParams& shape_template);

// Scalar function `flat params -> total loss` for gradient verification;
// captures one sample and frozen noise draws.
diffcore::ScalarFn total_loss_fn(const TrainConfig& cfg, const heads::ModelParams& shape_template,
                                 std::vector<double> x, int label, double margin,
                                 std::vector<double> epsilon);

// Deterministic per-input uncertainty score: aggregate of v(x) = exp(g(x)).
// No sampling happens at evaluation time.
double uncertainty_score(const heads::ModelParams& params, const std::vector<double>& x,
                         ScoreAgg agg = ScoreAgg::Mean);

void write_epoch_csv(const std::vector<EpochLog>& logs, std::ostream& out);

// Versioned binary checkpoint: magic, header, then little-endian f64 arrays
// in the order w1, b1, w2, b2, wg, bg, centers.
void save_checkpoint(const heads::ModelParams& params, const std::string& path);
heads::ModelParams load_checkpoint(const std::string& path);

}  // namespace rts::trainer
