#pragma once

#include <Eigen/Dense>

#include <vector>

namespace mmpp {

/// Per-account cluster labels (1-based by convention).
using LabelVector = std::vector<int>;

/// (1/n) sum over predicted clusters of the largest overlap with a true cluster.
double purity(const LabelVector& predicted, const LabelVector& truth);

/// One cross-validation trial: the held-out accounts and the labels of all accounts.
struct Trial {
    std::vector<int> test;  // 0-based account indices
    LabelVector labels;
};

/// Relabels `labels` to best match `reference`: repeatedly pairs the two
/// labels with the largest overlap. Labels left unmatched get fresh values.
LabelVector align_labels(const LabelVector& labels, const LabelVector& reference);

/// Minimum over trials k of the fraction of (k', (i, i')) combinations where
/// the pair (i, i'), together in trial k, is also together in trial k'.
/// Only co-membership is compared, so label switching does not matter.
/// Throws DomainError for fewer than 2 trials or a trial without same-label pairs.
double clustering_consistency(const std::vector<Trial>& trials);

/// Row-wise argmax, 1-based; ties go to the lower index.
LabelVector argmax_labels(const Eigen::MatrixXd& posterior);

} // namespace mmpp
