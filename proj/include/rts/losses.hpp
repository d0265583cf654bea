// Training objective: cross entropy on scaled logits plus the closed-form
// KL pull of each Gamma scale toward 1, with an independent quadrature
// oracle for the KL term.
#pragma once

#include <vector>

#include "rts/diffcore.hpp"

namespace rts::losses {

struct LossBreakdown {
    double ce = 0.0;
    double kl = 0.0;
    double total = 0.0;
    double lambda = 0.0;
};

// -log softmax(logits)[label], computed through log-sum-exp.
double cross_entropy(const std::vector<double>& logits, int label);

// (1/dof) * sum_i 0.5*(v_i - ln v_i - 1); zero iff every v_i == 1.
double kl_gamma(const std::vector<double>& v);

// Same KL for a single component, by adaptive quadrature of
// integral p ln(p/q) with p = Gamma(1/2, 1/(2v)), q = Gamma(1/2, 1/2).
// Independent of kl_gamma; agrees within 1e-6.
double kl_numeric_oracle(double v);

LossBreakdown total_loss(double ce, double kl, double lambda);

// Graph builders used by the trainer (values match the plain functions).
diffcore::NodeId cross_entropy_node(diffcore::Graph& g, diffcore::NodeId logits, int label);
// KL from the clamped log-scales z (v = exp(z), so ln v = z).
diffcore::NodeId kl_gamma_node_from_log_scales(diffcore::Graph& g, diffcore::NodeId z);

}  // namespace rts::losses
