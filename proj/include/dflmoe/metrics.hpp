#pragma once

#include <cstddef>
#include <vector>

namespace dflmoe {

/// Fraction of positions where preds[i] == labels[i].
double accuracy(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels);

/// Unweighted mean of per-class F1 over all `classes` classes. A class with
/// no predicted and no true instances contributes F1 = 0.
double macro_f1(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels,
                std::size_t classes);

}  // namespace dflmoe
