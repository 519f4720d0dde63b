#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dflmoe/rng.hpp"
#include "dflmoe/tensor.hpp"

namespace dflmoe {

struct Dataset {
    Tensor features;                  // [n x input_dim]
    std::vector<std::size_t> labels;  // values in [0, classes)
    std::size_t classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.defined() ? features.cols() : 0; }
    void validate() const;
};

struct PartitionSpec {
    std::size_t n_clients = 0;
    double dirichlet_alpha = 0.5;
    std::vector<std::size_t> feature_shift_factors;  // per client, each in {1,2,4,8}
    std::uint64_t seed = 0;
};

/// Gaussian mixture with one component per class. Class means are drawn
/// once from the seed as mean_scale * (unit-norm gaussian direction);
/// labels are uniform draws; examples are mean[label] + sigma * noise.
Dataset make_synthetic(std::size_t classes, std::size_t dim, std::size_t n, std::uint64_t seed,
                       double sigma = 0.5, double mean_scale = 0.8);

/// Label-skew split: for each class, client shares are one Dirichlet(alpha)
/// draw; examples are dealt to clients deterministically. Clients left with
/// fewer than two examples are topped up from the largest client. The
/// multiset union of the parts equals the input exactly.
std::vector<Dataset> dirichlet_partition(const Dataset& ds, const PartitionSpec& spec);

/// Resolution-loss stand-in: block-average pool the feature vector by
/// `factor`, then zero-pad back to the original width. factor must divide
/// the feature dimension.
Dataset feature_shift(const Dataset& ds, std::size_t factor);

/// Seeded 7:3-style split; both sides are guaranteed non-empty.
std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double train_fraction, Rng& rng);

struct CsvSchema {
    std::string label_column = "label";
};

/// Header-based CSV: every non-label column is a feature, in header order.
/// Labels must parse as nonnegative integers; missing cells and non-numeric
/// features are rejected with the offending line number.
Dataset load_csv(const std::string& path, const CsvSchema& schema);

/// Canonical CSV export (features at max round-trip precision); a file
/// produced here re-imports to the identical dataset and re-exports to
/// identical bytes.
void save_csv(const Dataset& ds, const std::string& path, const CsvSchema& schema);

/// Binary export: features tensor + labels tensor in the tensor binary
/// layout, plus a JSON sidecar (<path>.json) recording classes, counts,
/// dim, seed, and provenance.
void save_dataset(const Dataset& ds, const std::string& path, std::uint64_t seed,
                  const std::string& provenance);
Dataset load_dataset(const std::string& path);

/// Rows of `ds` selected by index, in order.
Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& indices);

}  // namespace dflmoe
