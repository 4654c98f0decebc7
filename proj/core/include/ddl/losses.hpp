#pragma once

#include <span>
#include <string>
#include <vector>

#include "ddl/histogram.hpp"
#include "ddl/pairing.hpp"
#include "ddl/tensor.hpp"

namespace ddl {

/// Loss term weights. Defaults: kl_pos 1e-1, kl_neg 2e-2, order 5e-1;
/// margin head scale 64 and additive angular margin 0.5.
struct DdlWeights {
    double kl_pos = 1e-1;  // positive-pair KL weight
    double kl_neg = 2e-2;  // negative-pair KL weight
    double order = 5e-1;   // order-loss weight
    double margin_scale = 64.0;
    double margin = 0.5;
};

/// Mass floor added inside the KL so disjoint supports stay finite.
inline constexpr double kKlMassFloor = 1e-10;

struct KlResult {
    double value = 0.0;
    Vector grad_p; // d/dP_r
    Vector grad_q; // d/dQ_r
};

/// KL(P || Q) = sum_r (P_r + eps) log((P_r + eps)/(Q_r + eps)).
/// grad_p[r] = log((P_r+eps)/(Q_r+eps)) + 1, grad_q[r] = -(P_r+eps)/(Q_r+eps).
KlResult kl_divergence(std::span<const double> p_masses, std::span<const double> q_masses);
/// Histogram overload; throws on bin mismatch.
KlResult kl_divergence(const SoftHistogram& p, const SoftHistogram& q);

struct KlLossResult {
    Vector pos_terms; // weighted lambda1 * KL(P+ || Q+_k), one per student
    Vector neg_terms; // weighted lambda2 * KL(P- || Q-_k)
    double value = 0.0;
    Vector teacher_pos_grad, teacher_neg_grad;             // dL/ds per similarity
    std::vector<Vector> student_pos_grads, student_neg_grads;
};

/// Weighted KL between the teacher histograms and every student's, gradients
/// flowing into both teacher and student similarity sets.
KlLossResult kl_loss(const BlockPairSets& teacher, std::span<const BlockPairSets> students,
                     const DdlWeights& weights, std::size_t bins, double gamma);

/// Which expectation pairs the order loss sums over.
enum class OrderPairs {
    CrossOnly, // ordered pairs between distinct distributions
    All        // additionally the within-distribution pairs
};

std::string order_pairs_name(OrderPairs mode);
OrderPairs parse_order_pairs(const std::string& name);

struct OrderLossResult {
    double value = 0.0;
    std::vector<Vector> pos_grads; // per distribution, teacher first
    std::vector<Vector> neg_grads;
};

/// -weight * sum over the pair set of (E[S+_i] - E[S-_j]); distributions[0]
/// is the teacher.
OrderLossResult order_loss(std::span<const BlockPairSets> distributions, double weight,
                           OrderPairs pairs);

struct MarginSoftmaxResult {
    double value = 0.0;
    Matrix embedding_grads;
    Matrix head_grads;
};

/// Additive angular-margin softmax over cosine logits: the target logit is
/// scale * cos(theta_y + margin), the rest scale * cos(theta_j); mean
/// cross-entropy over the batch. Embeddings and head columns must be
/// unit-norm.
MarginSoftmaxResult margin_softmax_loss(const Matrix& embeddings, const std::vector<int>& labels,
                                        const Matrix& head, double scale, double margin);

struct LossReport {
    Vector kl_pos_terms; // weighted, per student
    Vector kl_neg_terms;
    double order_term = 0.0;
    double margin_term = 0.0;
    double total = 0.0;
    Matrix embedding_grads; // rows align with the batch rows
    Matrix head_grads;

    double kl_pos_total() const;
    double kl_neg_total() const;
};

/// The full objective over one mini-batch: KL + order over the similarity
/// sets (teacher first) plus the margin term over every batch row. labels
/// are class indices aligned with embedding rows.
LossReport ddl_total(const Matrix& embeddings, const std::vector<int>& labels,
                     std::span<const BlockPairSets> sets, const Matrix& head,
                     const DdlWeights& weights, std::size_t bins, double gamma,
                     OrderPairs order_pairs = OrderPairs::CrossOnly);

} // namespace ddl
