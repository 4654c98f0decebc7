#include "ddl/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ddl {

double LossReport::kl_pos_total() const {
    double acc = 0.0;
    for (const double v : kl_pos_terms) acc += v;
    return acc;
}

double LossReport::kl_neg_total() const {
    double acc = 0.0;
    for (const double v : kl_neg_terms) acc += v;
    return acc;
}

KlResult kl_divergence(std::span<const double> p_masses, std::span<const double> q_masses) {
    if (p_masses.size() != q_masses.size())
        throw std::invalid_argument("kl_divergence: bin mismatch");
    KlResult result;
    result.grad_p.resize(p_masses.size());
    result.grad_q.resize(q_masses.size());
    for (std::size_t r = 0; r < p_masses.size(); ++r) {
        const double p = p_masses[r] + kKlMassFloor;
        const double q = q_masses[r] + kKlMassFloor;
        const double log_ratio = std::log(p / q);
        result.value += p * log_ratio;
        result.grad_p[r] = log_ratio + 1.0;
        result.grad_q[r] = -p / q;
    }
    return result;
}

KlResult kl_divergence(const SoftHistogram& p, const SoftHistogram& q) {
    if (!p.same_binning(q)) throw std::invalid_argument("kl_divergence: histograms use different bins");
    return kl_divergence(p.masses(), q.masses());
}

KlLossResult kl_loss(const BlockPairSets& teacher, std::span<const BlockPairSets> students,
                     const DdlWeights& weights, std::size_t bins, double gamma) {
    const Vector teacher_pos = teacher.positives.values();
    const Vector teacher_neg = teacher.negatives.values();
    const SoftHistogram p_pos = SoftHistogram::estimate(teacher_pos, bins, gamma);
    const SoftHistogram p_neg = SoftHistogram::estimate(teacher_neg, bins, gamma);

    KlLossResult result;
    result.teacher_pos_grad.assign(teacher_pos.size(), 0.0);
    result.teacher_neg_grad.assign(teacher_neg.size(), 0.0);

    for (const BlockPairSets& student : students) {
        const Vector student_pos = student.positives.values();
        const Vector student_neg = student.negatives.values();
        const SoftHistogram q_pos = SoftHistogram::estimate(student_pos, bins, gamma);
        const SoftHistogram q_neg = SoftHistogram::estimate(student_neg, bins, gamma);

        const KlResult kl_p = kl_divergence(p_pos, q_pos);
        const KlResult kl_n = kl_divergence(p_neg, q_neg);
        result.pos_terms.push_back(weights.kl_pos * kl_p.value);
        result.neg_terms.push_back(weights.kl_neg * kl_n.value);
        result.value += weights.kl_pos * kl_p.value + weights.kl_neg * kl_n.value;

        // gradients flow into both sides of each KL
        Vector up_p = kl_p.grad_p;
        for (double& g : up_p) g *= weights.kl_pos;
        Vector down_p = kl_p.grad_q;
        for (double& g : down_p) g *= weights.kl_pos;
        Vector up_n = kl_n.grad_p;
        for (double& g : up_n) g *= weights.kl_neg;
        Vector down_n = kl_n.grad_q;
        for (double& g : down_n) g *= weights.kl_neg;

        const Vector teacher_pos_add = p_pos.backprop(up_p);
        const Vector teacher_neg_add = p_neg.backprop(up_n);
        for (std::size_t i = 0; i < teacher_pos_add.size(); ++i)
            result.teacher_pos_grad[i] += teacher_pos_add[i];
        for (std::size_t i = 0; i < teacher_neg_add.size(); ++i)
            result.teacher_neg_grad[i] += teacher_neg_add[i];
        result.student_pos_grads.push_back(q_pos.backprop(down_p));
        result.student_neg_grads.push_back(q_neg.backprop(down_n));
    }
    return result;
}

std::string order_pairs_name(OrderPairs mode) {
    return mode == OrderPairs::CrossOnly ? "cross" : "all";
}

OrderPairs parse_order_pairs(const std::string& name) {
    if (name == "cross") return OrderPairs::CrossOnly;
    if (name == "all") return OrderPairs::All;
    throw std::invalid_argument("unknown order_pairs mode: " + name);
}

OrderLossResult order_loss(std::span<const BlockPairSets> distributions, double weight,
                           OrderPairs pairs) {
    if (distributions.empty()) throw std::invalid_argument("order_loss: no distributions");
    const std::size_t n = distributions.size();

    OrderLossResult result;
    std::vector<double> pos_expect(n), neg_expect(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (distributions[i].positives.size() == 0 || distributions[i].negatives.size() == 0)
            throw std::invalid_argument("order_loss: empty similarity set");
        pos_expect[i] = expectation(distributions[i].positives.values());
        neg_expect[i] = expectation(distributions[i].negatives.values());
        result.pos_grads.emplace_back(distributions[i].positives.size(), 0.0);
        result.neg_grads.emplace_back(distributions[i].negatives.size(), 0.0);
    }

    double margin_sum = 0.0;
    std::vector<double> pos_uses(n, 0.0), neg_uses(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (pairs == OrderPairs::CrossOnly && i == j) continue;
            margin_sum += pos_expect[i] - neg_expect[j];
            pos_uses[i] += 1.0;
            neg_uses[j] += 1.0;
        }
    }
    result.value = -weight * margin_sum;

    for (std::size_t i = 0; i < n; ++i) {
        const double dpos = -weight * pos_uses[i] / static_cast<double>(distributions[i].positives.size());
        const double dneg = weight * neg_uses[i] / static_cast<double>(distributions[i].negatives.size());
        for (double& g : result.pos_grads[i]) g = dpos;
        for (double& g : result.neg_grads[i]) g = dneg;
    }
    return result;
}

MarginSoftmaxResult margin_softmax_loss(const Matrix& embeddings, const std::vector<int>& labels,
                                        const Matrix& head, double scale, double margin) {
    const std::size_t n = embeddings.rows();
    const std::size_t classes = head.cols();
    if (labels.size() != n) throw std::invalid_argument("margin_softmax_loss: label count mismatch");
    if (embeddings.cols() != head.rows())
        throw std::invalid_argument("margin_softmax_loss: embedding/head dim mismatch");
    for (const int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw std::invalid_argument("margin_softmax_loss: invalid label " + std::to_string(y));
    }

    const double cos_m = std::cos(margin);
    const double sin_m = std::sin(margin);
    // keeps sqrt(1 - c^2) away from zero in the target-logit derivative
    constexpr double cos_clamp = 1.0 - 1e-12;

    Matrix cosines = matmul(embeddings, false, head, false); // n x classes
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < classes; ++j) {
            const double c = cosines(i, j);
            if (c < -1.0 - 1e-6 || c > 1.0 + 1e-6)
                throw std::invalid_argument("margin_softmax_loss: cosine outside [-1, 1]");
            cosines(i, j) = clamp_unit(c);
        }
    }

    MarginSoftmaxResult result;
    result.embedding_grads = Matrix(n, embeddings.cols());
    result.head_grads = Matrix(head.rows(), head.cols());

    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix cos_grad(n, classes); // dLoss/dcos_ij
    for (std::size_t i = 0; i < n; ++i) {
        const auto y = static_cast<std::size_t>(labels[i]);
        double c = cosines(i, y);
        c = std::min(cos_clamp, std::max(-cos_clamp, c));
        const double sin_theta = std::sqrt(1.0 - c * c);
        const double target_logit = scale * (c * cos_m - sin_theta * sin_m);
        const double target_slope = scale * (cos_m + c * sin_m / sin_theta);

        // softmax with max subtraction
        double max_logit = target_logit;
        for (std::size_t j = 0; j < classes; ++j) {
            if (j == y) continue;
            max_logit = std::max(max_logit, scale * cosines(i, j));
        }
        double z = 0.0;
        Vector probs(classes);
        for (std::size_t j = 0; j < classes; ++j) {
            const double logit = j == y ? target_logit : scale * cosines(i, j);
            probs[j] = std::exp(logit - max_logit);
            z += probs[j];
        }
        for (double& p : probs) p /= z;

        result.value += -std::log(std::max(probs[y], 1e-300)) * inv_n;
        for (std::size_t j = 0; j < classes; ++j) {
            const double dlogit = (probs[j] - (j == y ? 1.0 : 0.0)) * inv_n;
            cos_grad(i, j) = dlogit * (j == y ? target_slope : scale);
        }
    }

    // chain through cos_ij = e_i . w_j
    result.embedding_grads = matmul(cos_grad, false, head, true);
    result.head_grads = matmul(embeddings, true, cos_grad, false);
    return result;
}

LossReport ddl_total(const Matrix& embeddings, const std::vector<int>& labels,
                     std::span<const BlockPairSets> sets, const Matrix& head,
                     const DdlWeights& weights, std::size_t bins, double gamma,
                     OrderPairs order_pairs) {
    if (sets.empty()) throw std::invalid_argument("ddl_total: need at least the teacher sets");

    LossReport report;
    report.embedding_grads = Matrix(embeddings.rows(), embeddings.cols());
    report.head_grads = Matrix(head.rows(), head.cols());

    auto scatter = [&report, &embeddings](const SimilaritySet& set, const Vector& grads) {
        // s = e_a . e_b => ds/de_a = e_b, ds/de_b = e_a
        for (std::size_t i = 0; i < set.entries.size(); ++i) {
            const SimilarityEntry& entry = set.entries[i];
            const double g = grads[i];
            for (std::size_t j = 0; j < embeddings.cols(); ++j) {
                report.embedding_grads(entry.row_a, j) += g * embeddings(entry.row_b, j);
                report.embedding_grads(entry.row_b, j) += g * embeddings(entry.row_a, j);
            }
        }
    };

    const BlockPairSets& teacher = sets.front();
    const std::span<const BlockPairSets> students = sets.subspan(1);

    if (!students.empty() && (weights.kl_pos != 0.0 || weights.kl_neg != 0.0)) {
        const KlLossResult kl = kl_loss(teacher, students, weights, bins, gamma);
        report.kl_pos_terms = kl.pos_terms;
        report.kl_neg_terms = kl.neg_terms;
        scatter(teacher.positives, kl.teacher_pos_grad);
        scatter(teacher.negatives, kl.teacher_neg_grad);
        for (std::size_t k = 0; k < students.size(); ++k) {
            scatter(students[k].positives, kl.student_pos_grads[k]);
            scatter(students[k].negatives, kl.student_neg_grads[k]);
        }
    } else {
        report.kl_pos_terms.assign(students.size(), 0.0);
        report.kl_neg_terms.assign(students.size(), 0.0);
    }

    if (weights.order != 0.0) {
        const OrderLossResult order = order_loss(sets, weights.order, order_pairs);
        report.order_term = order.value;
        for (std::size_t i = 0; i < sets.size(); ++i) {
            scatter(sets[i].positives, order.pos_grads[i]);
            scatter(sets[i].negatives, order.neg_grads[i]);
        }
    }

    MarginSoftmaxResult margin =
        margin_softmax_loss(embeddings, labels, head, weights.margin_scale, weights.margin);
    report.margin_term = margin.value;
    for (std::size_t i = 0; i < embeddings.rows(); ++i)
        for (std::size_t j = 0; j < embeddings.cols(); ++j)
            report.embedding_grads(i, j) += margin.embedding_grads(i, j);
    report.head_grads = std::move(margin.head_grads);

    report.total = report.kl_pos_total() + report.kl_neg_total() + report.order_term +
                   report.margin_term;
    return report;
}

} // namespace ddl
