#pragma once

#include <vector>

#include "tal/graph.hpp"
#include "tal/tensor.hpp"

namespace tal {

// Kernel distance between pooled classification features of the trimmed
// (source) and untrimmed (target) branches. Biased V-statistic with a sum of
// Gaussian kernels; zero exactly when the batches coincide.
Graph::Id mmd(Graph& g, Graph::Id x, Graph::Id y, const std::vector<double>& bandwidths);

// Linear-kernel variant of the same V-statistic; algebraically equal to
// the squared distance between the batch means.
double mmd_linear(const Tensor& x, const Tensor& y);

// Median pairwise distance over the pooled rows of both batches, scaled by
// {0.5, 1, 2}. Falls back to 1.0 when all rows coincide. The result is used
// as a fixed (non-differentiated) bandwidth set.
std::vector<double> median_bandwidths(const Tensor& x, const Tensor& y);

// Convenience: classification loss plus lambda * MMD(source, target), where
// the source batch is a frozen constant.
Graph::Id transfer_loss(Graph& g, Graph::Id target_cls_loss, const Tensor& source_pooled,
                        Graph::Id target_pooled, double lambda_mmd,
                        const std::vector<double>& bandwidths);

}  // namespace tal
