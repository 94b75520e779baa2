#pragma once

// Bidirectional supervised contrastive (UniCL) objective over label-grouped positives.
// Row i of the similarity matrix is image i, column j is text j. With all labels
// distinct it is the symmetric InfoNCE objective used by CLIP.

#include <vector>

#include "klite/encoder.hpp"

namespace klite {

// Throws NumericError when the norm is <= 1e-12.
Vector normalize(const Vector& v);

// Gradient of normalize(): maps d(v/|v|) back to dv.
Vector normalize_backward(const Vector& v, const Vector& d_unit);

// Rows of u and v must be unit norm to 1e-4; throws DataError otherwise.
Tensor similarity_matrix(const Tensor& u, const Tensor& v);

// positives[i] = { k : labels[k] == labels[i] } in ascending order. The text-side
// sets are the same structure because both directions share one label vector.
struct PositiveSets {
    std::vector<std::vector<int>> members;

    explicit PositiveSets(const std::vector<int>& labels);
};

struct ContrastiveLoss {
    double i2t = 0.0;
    double t2i = 0.0;
    double total = 0.0;
};

// Summed over the batch, not averaged. Throws NumericError on non-finite input
// and DataError on shape mismatch or tau <= 0.
ContrastiveLoss unicl_loss(const Tensor& sim, const std::vector<int>& labels, double tau);

struct ContrastiveGrad {
    ContrastiveLoss loss;
    Tensor d_sim;   // dL_IC / dsim
    double d_tau;   // dL_IC / dtau
};

ContrastiveGrad unicl_loss_grad(const Tensor& sim, const std::vector<int>& labels, double tau);

}  // namespace klite
