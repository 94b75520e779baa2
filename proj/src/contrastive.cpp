#include "klite/contrastive.hpp"

#include <cmath>
#include <map>

#include "klite/error.hpp"

namespace klite {

Vector normalize(const Vector& v) {
    const double n = v.norm();
    if (!(n > 1e-12)) throw NumericError("normalize: vector norm is (near) zero");
    return v / n;
}

Vector normalize_backward(const Vector& v, const Vector& d_unit) {
    const double n = v.norm();
    const Vector u = v / n;
    return (d_unit - u * u.dot(d_unit)) / n;
}

Tensor similarity_matrix(const Tensor& u, const Tensor& v) {
    if (u.cols() != v.cols()) throw DataError("similarity_matrix: feature dimensions differ");
    for (const Tensor* m : {&u, &v}) {
        for (Eigen::Index r = 0; r < m->rows(); ++r) {
            if (std::abs(m->row(r).norm() - 1.0) > 1e-4) {
                throw DataError("similarity_matrix: row " + std::to_string(r) + " is not unit norm");
            }
        }
    }
    return u * v.transpose();
}

PositiveSets::PositiveSets(const std::vector<int>& labels) {
    std::map<int, std::vector<int>> groups;
    for (std::size_t k = 0; k < labels.size(); ++k) groups[labels[k]].push_back(static_cast<int>(k));
    members.reserve(labels.size());
    for (int label : labels) members.push_back(groups[label]);
}

namespace {

void check_inputs(const Tensor& sim, const std::vector<int>& labels, double tau) {
    if (sim.rows() != sim.cols() || static_cast<std::size_t>(sim.rows()) != labels.size() || labels.empty()) {
        throw DataError("unicl_loss: similarity must be BxB with B labels, B >= 1");
    }
    if (!(tau > 0.0) || !std::isfinite(tau)) throw DataError("unicl_loss: tau must be positive and finite");
    if (!sim.allFinite()) throw NumericError("unicl_loss: non-finite similarity");
}

// Row-wise log-softmax with max subtraction.
Tensor log_softmax_rows(const Tensor& z) {
    Tensor out(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double m = z.row(r).maxCoeff();
        const double lse = m + std::log((z.row(r).array() - m).exp().sum());
        out.row(r) = z.row(r).array() - lse;
    }
    return out;
}

// -sum_i 1/|P(i)| sum_{k in P(i)} logp(i, k), and its gradient w.r.t. the logits.
double grouped_nll(const Tensor& logits, const PositiveSets& pos, Tensor* d_logits) {
    const Tensor logp = log_softmax_rows(logits);
    double loss = 0.0;
    if (d_logits) *d_logits = logp.array().exp();
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const auto& members = pos.members[static_cast<std::size_t>(i)];
        const double w = 1.0 / static_cast<double>(members.size());
        for (int k : members) {
            loss -= w * logp(i, k);
            if (d_logits) (*d_logits)(i, k) -= w;
        }
    }
    return loss;
}

}  // namespace

ContrastiveLoss unicl_loss(const Tensor& sim, const std::vector<int>& labels, double tau) {
    check_inputs(sim, labels, tau);
    const PositiveSets pos(labels);
    const Tensor logits = tau * sim;
    ContrastiveLoss out;
    out.i2t = grouped_nll(logits, pos, nullptr);
    out.t2i = grouped_nll(logits.transpose(), pos, nullptr);
    out.total = out.i2t + out.t2i;
    if (!std::isfinite(out.total)) throw NumericError("unicl_loss: non-finite loss");
    return out;
}

ContrastiveGrad unicl_loss_grad(const Tensor& sim, const std::vector<int>& labels, double tau) {
    check_inputs(sim, labels, tau);
    const PositiveSets pos(labels);
    const Tensor logits = tau * sim;
    Tensor d_row, d_col;
    ContrastiveGrad g;
    g.loss.i2t = grouped_nll(logits, pos, &d_row);
    g.loss.t2i = grouped_nll(logits.transpose(), pos, &d_col);
    g.loss.total = g.loss.i2t + g.loss.t2i;
    if (!std::isfinite(g.loss.total)) throw NumericError("unicl_loss: non-finite loss");
    const Tensor d_logits = d_row + d_col.transpose();
    g.d_sim = tau * d_logits;
    g.d_tau = (d_logits.array() * sim.array()).sum();
    return g;
}

}  // namespace klite
