#include "mmpp/metrics.hpp"

#include "mmpp/errors.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <string>

namespace mmpp {

double purity(const LabelVector& predicted, const LabelVector& truth) {
    if (predicted.size() != truth.size()) throw DomainError("label vectors differ in length");
    if (predicted.empty()) throw DomainError("no labels");
    std::map<int, std::map<int, int>> overlap;
    for (std::size_t i = 0; i < predicted.size(); ++i) ++overlap[predicted[i]][truth[i]];
    long total = 0;
    for (const auto& [label, row] : overlap) {
        int best = 0;
        for (const auto& [t, count] : row) best = std::max(best, count);
        total += best;
    }
    return static_cast<double>(total) / static_cast<double>(predicted.size());
}

LabelVector align_labels(const LabelVector& labels, const LabelVector& reference) {
    if (labels.size() != reference.size()) throw DomainError("label vectors differ in length");
    std::map<std::pair<int, int>, int> overlap;
    std::set<int> own, target;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ++overlap[{labels[i], reference[i]}];
        own.insert(labels[i]);
        target.insert(reference[i]);
    }
    std::map<int, int> mapping;
    std::set<int> used;
    while (true) {
        int best = 0;
        std::pair<int, int> pick{};
        for (const auto& [key, count] : overlap) {
            if (count > best && !mapping.contains(key.first) && !used.contains(key.second)) {
                best = count;
                pick = key;
            }
        }
        if (best == 0) break;
        mapping[pick.first] = pick.second;
        used.insert(pick.second);
    }
    int fresh = std::max(*own.rbegin(), *target.rbegin()) + 1;
    for (int label : own) {
        if (!mapping.contains(label)) mapping[label] = fresh++;
    }
    LabelVector out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = mapping[labels[i]];
    return out;
}

double clustering_consistency(const std::vector<Trial>& trials) {
    const std::size_t K = trials.size();
    if (K < 2) throw DomainError("clustering consistency needs K >= 2 trials");
    const std::size_t n = trials[0].labels.size();
    for (const auto& t : trials) {
        if (t.labels.size() != n) throw DomainError("trials label different account sets");
    }
    double result = 1.0;
    for (std::size_t k = 0; k < K; ++k) {
        const auto& c = trials[k].labels;
        long pairs = 0, hits = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t i2 = i + 1; i2 < n; ++i2) {
                if (c[i] != c[i2]) continue;
                ++pairs;
                for (std::size_t k2 = 0; k2 < K; ++k2) {
                    if (k2 != k && trials[k2].labels[i] == trials[k2].labels[i2]) ++hits;
                }
            }
        }
        if (pairs == 0) {
            throw DomainError("trial " + std::to_string(k + 1) + " has no same-cluster pairs");
        }
        result = std::min(result, static_cast<double>(hits) /
                                      (static_cast<double>(K - 1) * static_cast<double>(pairs)));
    }
    return result;
}

LabelVector argmax_labels(const Eigen::MatrixXd& posterior) {
    LabelVector labels(posterior.rows());
    for (Eigen::Index i = 0; i < posterior.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < posterior.cols(); ++c) {
            if (posterior(i, c) > posterior(i, best)) best = c;
        }
        labels[i] = static_cast<int>(best) + 1;
    }
    return labels;
}

} // namespace mmpp
