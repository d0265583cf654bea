// Embedding network, log-scale head, ArcFace scoring, and the four head
// variants that turn margin scores into final logits.
#pragma once

#include <string>
#include <vector>

#include "rts/diffcore.hpp"
#include "rts/stochastic.hpp"

namespace rts::heads {

using diffcore::Graph;
using diffcore::NodeId;
using diffcore::Tensor;

enum class Variant { Plain, FixedT, Relaxed, RTS };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);
bool has_uncertainty_head(Variant v);

// Log-scales are clamped to [-8, 8] before exponentiation, so the
// per-component scale v stays inside [e^-8, e^8].
inline constexpr double kLogScaleClamp = 8.0;

struct ModelDims {
    int input_dim = 32;
    int hidden_dim = 64;
    int embedding_dim = 16;
    int num_classes = 50;
    int delta = 16;  // dof of the temperature; log-scale head width for RTS
};

// Two-layer trunk shared by f and g:
//   h = tanh(w1 x + b1);  y = l2norm(w2 h + b2);  z = clamp(wg h + bg).
// Rows of `centers` are kept unit-norm by the trainer after each step.
struct ModelParams {
    Variant variant = Variant::RTS;
    double fixed_t = 1.0;  // FixedT only
    ModelDims dims;
    Tensor w1, b1;       // [hidden, input], [hidden]
    Tensor w2, b2;       // [embed, hidden], [embed]
    Tensor wg, bg;       // [g_out, hidden], [g_out]; empty for Plain/FixedT
    Tensor centers;      // [classes, embed]

    int g_output_dim() const;
    std::vector<Tensor*> trainable();
    std::vector<const Tensor*> trainable() const;
};

// g's final layer starts at zero so v(x) = 1 at step 0.
ModelParams init_params(Variant variant, const ModelDims& dims, stochastic::RngStream& rng,
                        double fixed_t = 1.0);

struct HeadOutput {
    std::vector<double> embedding;     // unit vector
    std::vector<double> log_scales;    // empty for Plain/FixedT
    std::vector<double> margin_scores; // s' before temperature
    std::vector<double> logits;        // s
    double temperature = 1.0;
};

// --- forward-only operations -----------------------------------------------
std::vector<double> embed(const ModelParams& p, const std::vector<double>& x);
std::vector<double> log_scale(const ModelParams& p, const std::vector<double>& x);
// exp of the clamped log-scales; the per-input scale vector v(x).
std::vector<double> scale_vector(const ModelParams& p, const std::vector<double>& x);

std::vector<double> arcface_scores(const std::vector<double>& y, int label,
                                   const Tensor& centers, double gamma, double margin);
std::vector<double> final_logits(const std::vector<double>& margin_scores, double t);

// Margin-free logits gamma*cos used at evaluation time (no label, no draw).
std::vector<double> eval_logits(const ModelParams& p, const std::vector<double>& x, double gamma);
double max_softmax_prob(const ModelParams& p, const std::vector<double>& x, double gamma);

// --- graph builders (training path) ----------------------------------------
struct ParamNodes {
    NodeId w1, b1, w2, b2, wg, bg, centers;
};
ParamNodes insert_params(Graph& g, const ModelParams& p);

NodeId hidden_node(Graph& g, const ParamNodes& pn, NodeId x);
NodeId embed_node(Graph& g, const ParamNodes& pn, NodeId hidden);
NodeId log_scale_node(Graph& g, const ParamNodes& pn, NodeId hidden);
NodeId arcface_node(Graph& g, const ParamNodes& pn, NodeId y, int label, int num_classes,
                    double gamma, double margin);
// s = s' / t for a graph temperature (gradient flows through t).
NodeId final_logits_node(Graph& g, NodeId margin_scores, NodeId t);

}  // namespace rts::heads
