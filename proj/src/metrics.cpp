#include "dflmoe/metrics.hpp"

#include "dflmoe/errors.hpp"

namespace dflmoe {

double accuracy(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels) {
    if (preds.size() != labels.size() || preds.empty()) {
        throw Error(ErrorCode::LengthMismatch, "prediction/label lengths disagree or are empty");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double macro_f1(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels,
                std::size_t classes) {
    if (preds.size() != labels.size() || preds.empty()) {
        throw Error(ErrorCode::LengthMismatch, "prediction/label lengths disagree or are empty");
    }
    if (classes == 0) throw Error(ErrorCode::InvalidParams, "class count must be positive");
    std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        std::size_t p = preds[i], t = labels[i];
        if (p >= classes || t >= classes) {
            throw Error(ErrorCode::LabelOutOfRange, "class index exceeds class count");
        }
        if (p == t) {
            ++tp[p];
        } else {
            ++fp[p];
            ++fn[t];
        }
    }
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
        total += denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp[c]) / denom;
    }
    return total / static_cast<double>(classes);
}

}  // namespace dflmoe
