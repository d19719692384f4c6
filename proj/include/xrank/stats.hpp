#pragma once

#include <span>
#include <vector>

namespace xrank::stats {

// 1-based ranks in ascending order; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> a, std::span<const double> b);
// Pearson correlation of average ranks. Returns 0 when either side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

// Probability a random positive outscores a random negative (ties count 1/2).
double roc_auc(std::span<const double> scores, std::span<const int> labels);

double mean(std::span<const double> v);
double median(std::vector<double> v);
// Linear-interpolated quantile, q in [0,1].
double quantile(std::vector<double> v, double q);

}  // namespace xrank::stats
