#include "rts/heads.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rts::heads {

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Plain: return "plain";
        case Variant::FixedT: return "fixed";
        case Variant::Relaxed: return "relaxed";
        case Variant::RTS: return "rts";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    if (name == "plain") return Variant::Plain;
    if (name == "fixed") return Variant::FixedT;
    if (name == "relaxed") return Variant::Relaxed;
    if (name == "rts") return Variant::RTS;
    throw std::invalid_argument("unknown head variant: " + name);
}

bool has_uncertainty_head(Variant v) {
    return v == Variant::Relaxed || v == Variant::RTS;
}

int ModelParams::g_output_dim() const {
    switch (variant) {
        case Variant::RTS: return dims.delta;
        case Variant::Relaxed: return 1;
        default: return 0;
    }
}

std::vector<Tensor*> ModelParams::trainable() {
    std::vector<Tensor*> out{&w1, &b1, &w2, &b2};
    if (g_output_dim() > 0) {
        out.push_back(&wg);
        out.push_back(&bg);
    }
    out.push_back(&centers);
    return out;
}

std::vector<const Tensor*> ModelParams::trainable() const {
    std::vector<const Tensor*> out{&w1, &b1, &w2, &b2};
    if (g_output_dim() > 0) {
        out.push_back(&wg);
        out.push_back(&bg);
    }
    out.push_back(&centers);
    return out;
}

ModelParams init_params(Variant variant, const ModelDims& dims, stochastic::RngStream& rng,
                        double fixed_t) {
    if (dims.input_dim < 1 || dims.hidden_dim < 1 || dims.embedding_dim < 1 ||
        dims.num_classes < 2)
        throw std::invalid_argument("init_params: bad dimensions");
    if (variant == Variant::RTS && dims.delta < 3)
        throw std::invalid_argument("init_params: RTS needs dof >= 3");
    if (variant == Variant::FixedT && fixed_t <= 0.0)
        throw std::invalid_argument("init_params: fixed temperature must be positive");

    ModelParams p;
    p.variant = variant;
    p.fixed_t = fixed_t;
    p.dims = dims;

    auto gaussian_matrix = [&rng](int rows, int cols, double std_dev) {
        Tensor t = Tensor::zeros({rows, cols});
        for (double& x : t.data) x = std_dev * rng.normal();
        return t;
    };

    p.w1 = gaussian_matrix(dims.hidden_dim, dims.input_dim, 1.0 / std::sqrt(dims.input_dim));
    p.b1 = Tensor::zeros({dims.hidden_dim});
    p.w2 = gaussian_matrix(dims.embedding_dim, dims.hidden_dim, 1.0 / std::sqrt(dims.hidden_dim));
    p.b2 = Tensor::zeros({dims.embedding_dim});

    int g_out = p.g_output_dim();
    if (g_out > 0) {
        p.wg = Tensor::zeros({g_out, dims.hidden_dim});
        p.bg = Tensor::zeros({g_out});
    }

    p.centers = Tensor::zeros({dims.num_classes, dims.embedding_dim});
    for (int c = 0; c < dims.num_classes; ++c) {
        double norm = 0.0;
        for (int j = 0; j < dims.embedding_dim; ++j) {
            double v = rng.normal();
            p.centers.at(c, j) = v;
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (int j = 0; j < dims.embedding_dim; ++j) p.centers.at(c, j) /= norm;
    }
    return p;
}

namespace {

void check_input(const ModelParams& p, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != p.dims.input_dim)
        throw std::invalid_argument("input dimension mismatch");
    for (double v : x)
        if (!std::isfinite(v)) throw std::domain_error("non-finite model input");
}

std::vector<double> affine(const Tensor& w, const Tensor& b, const std::vector<double>& x) {
    int rows = w.shape[0], cols = w.shape[1];
    std::vector<double> out(static_cast<std::size_t>(rows));
    for (int i = 0; i < rows; ++i) {
        double acc = b.at(i);
        for (int j = 0; j < cols; ++j) acc += w.at(i, j) * x[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

std::vector<double> hidden_features(const ModelParams& p, const std::vector<double>& x) {
    std::vector<double> h = affine(p.w1, p.b1, x);
    for (double& v : h) v = std::tanh(v);
    return h;
}

}  // namespace

std::vector<double> embed(const ModelParams& p, const std::vector<double>& x) {
    check_input(p, x);
    std::vector<double> y = affine(p.w2, p.b2, hidden_features(p, x));
    double norm = 0.0;
    for (double v : y) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw std::domain_error("embed: zero pre-normalization embedding");
    for (double& v : y) v /= norm;
    return y;
}

std::vector<double> log_scale(const ModelParams& p, const std::vector<double>& x) {
    if (!has_uncertainty_head(p.variant))
        throw std::logic_error("log_scale: variant has no uncertainty head");
    check_input(p, x);
    std::vector<double> z = affine(p.wg, p.bg, hidden_features(p, x));
    for (double& v : z) v = std::clamp(v, -kLogScaleClamp, kLogScaleClamp);
    return z;
}

std::vector<double> scale_vector(const ModelParams& p, const std::vector<double>& x) {
    std::vector<double> v = log_scale(p, x);
    for (double& z : v) z = std::exp(z);
    return v;
}

std::vector<double> arcface_scores(const std::vector<double>& y, int label,
                                   const Tensor& centers, double gamma, double margin) {
    if (gamma <= 0.0) throw std::invalid_argument("arcface_scores: gamma must be positive");
    if (margin < 0.0) throw std::invalid_argument("arcface_scores: margin must be >= 0");
    int num_classes = centers.shape[0];
    if (label < 0 || label >= num_classes)
        throw std::out_of_range("arcface_scores: label out of range");
    if (static_cast<int>(y.size()) != centers.shape[1])
        throw std::invalid_argument("arcface_scores: embedding dimension mismatch");

    std::vector<double> s(static_cast<std::size_t>(num_classes));
    for (int k = 0; k < num_classes; ++k) {
        double cosine = 0.0;
        for (int j = 0; j < centers.shape[1]; ++j)
            cosine += centers.at(k, j) * y[static_cast<std::size_t>(j)];
        if (k == label && margin > 0.0) {
            double theta = std::acos(std::clamp(cosine, -1.0, 1.0));
            s[static_cast<std::size_t>(k)] = gamma * std::cos(theta + margin);
        } else {
            s[static_cast<std::size_t>(k)] = gamma * cosine;
        }
    }
    return s;
}

std::vector<double> final_logits(const std::vector<double>& margin_scores, double t) {
    if (t <= 0.0) throw std::invalid_argument("final_logits: temperature must be positive");
    std::vector<double> out(margin_scores.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = margin_scores[i] / t;
    return out;
}

std::vector<double> eval_logits(const ModelParams& p, const std::vector<double>& x, double gamma) {
    if (gamma <= 0.0) throw std::invalid_argument("eval_logits: gamma must be positive");
    std::vector<double> y = embed(p, x);
    int num_classes = p.centers.shape[0];
    std::vector<double> s(static_cast<std::size_t>(num_classes));
    for (int k = 0; k < num_classes; ++k) {
        double cosine = 0.0;
        for (int j = 0; j < p.centers.shape[1]; ++j)
            cosine += p.centers.at(k, j) * y[static_cast<std::size_t>(j)];
        s[static_cast<std::size_t>(k)] = gamma * cosine;
    }
    return s;
}

double max_softmax_prob(const ModelParams& p, const std::vector<double>& x, double gamma) {
    std::vector<double> s = eval_logits(p, x, gamma);
    std::vector<double> probs = stochastic::softmax(s);
    double best = 0.0;
    for (double v : probs) best = std::max(best, v);
    return best;
}

ParamNodes insert_params(Graph& g, const ModelParams& p) {
    ParamNodes pn{};
    pn.w1 = g.leaf(p.w1);
    pn.b1 = g.leaf(p.b1);
    pn.w2 = g.leaf(p.w2);
    pn.b2 = g.leaf(p.b2);
    if (p.g_output_dim() > 0) {
        pn.wg = g.leaf(p.wg);
        pn.bg = g.leaf(p.bg);
    } else {
        pn.wg = -1;
        pn.bg = -1;
    }
    pn.centers = g.leaf(p.centers);
    return pn;
}

NodeId hidden_node(Graph& g, const ParamNodes& pn, NodeId x) {
    return g.tanh(g.add(g.matmul(pn.w1, x), pn.b1));
}

NodeId embed_node(Graph& g, const ParamNodes& pn, NodeId hidden) {
    return g.l2_normalize(g.add(g.matmul(pn.w2, hidden), pn.b2));
}

NodeId log_scale_node(Graph& g, const ParamNodes& pn, NodeId hidden) {
    if (pn.wg < 0) throw std::logic_error("log_scale_node: variant has no uncertainty head");
    return g.clamp(g.add(g.matmul(pn.wg, hidden), pn.bg), -kLogScaleClamp, kLogScaleClamp);
}

NodeId arcface_node(Graph& g, const ParamNodes& pn, NodeId y, int label, int num_classes,
                    double gamma, double margin) {
    if (label < 0 || label >= num_classes)
        throw std::out_of_range("arcface_node: label out of range");
    NodeId cosines = g.matmul(pn.centers, y);
    if (margin == 0.0) return g.scale(cosines, gamma);
    NodeId cos_c = g.select_index(cosines, label);
    NodeId margined = g.cos(g.add(g.acos(cos_c), g.constant_scalar(margin)));
    NodeId keep_mask = g.constant(Tensor::one_hot(num_classes, label, 0.0, 1.0));
    NodeId target_mask = g.constant(Tensor::one_hot(num_classes, label, 1.0, 0.0));
    NodeId merged = g.add(g.mul(cosines, keep_mask), g.mul(target_mask, margined));
    return g.scale(merged, gamma);
}

NodeId final_logits_node(Graph& g, NodeId margin_scores, NodeId t) {
    if (g.value(t).data[0] <= 0.0)
        throw std::invalid_argument("final_logits_node: temperature must be positive");
    return g.mul(margin_scores, g.reciprocal(t));
}

}  // namespace rts::heads
