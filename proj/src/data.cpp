#include "dflmoe/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dflmoe/serialize.hpp"

namespace dflmoe {

void Dataset::validate() const {
    if (!features.defined() || labels.empty()) throw Error(ErrorCode::DataEmpty, "dataset has no examples");
    if (features.rows() != labels.size()) {
        throw Error(ErrorCode::LengthMismatch, "feature rows and label count disagree");
    }
    if (classes < 2) throw Error(ErrorCode::InvalidParams, "dataset needs at least 2 classes");
    for (std::size_t lab : labels) {
        if (lab >= classes) throw Error(ErrorCode::LabelOutOfRange, "label exceeds class count");
    }
    features.check_finite("dataset features");
}

Dataset make_synthetic(std::size_t classes, std::size_t dim, std::size_t n, std::uint64_t seed,
                       double sigma, double mean_scale) {
    if (classes < 2) throw Error(ErrorCode::InvalidParams, "classes must be >= 2");
    if (dim < classes) throw Error(ErrorCode::InvalidParams, "dim must be >= classes");
    if (n == 0) throw Error(ErrorCode::InvalidParams, "n must be positive");
    if (sigma <= 0.0 || mean_scale <= 0.0) {
        throw Error(ErrorCode::InvalidParams, "sigma and mean_scale must be positive");
    }
    Rng rng(seed);
    // Class means: unit-norm gaussian directions scaled to mean_scale, so
    // class separation is controlled by mean_scale/sigma rather than dim.
    std::vector<std::vector<double>> means(classes, std::vector<double>(dim));
    for (auto& mean : means) {
        double norm2 = 0.0;
        for (auto& v : mean) {
            v = rng.normal();
            norm2 += v * v;
        }
        double inv = mean_scale / std::sqrt(norm2);
        for (auto& v : mean) v *= inv;
    }
    std::vector<double> feats(n * dim);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t lab = static_cast<std::size_t>(rng.uniform_below(classes));
        labels[i] = lab;
        for (std::size_t d = 0; d < dim; ++d) {
            feats[i * dim + d] = means[lab][d] + sigma * rng.normal();
        }
    }
    Dataset ds;
    ds.features = Tensor::from_data({n, dim}, std::move(feats));
    ds.labels = std::move(labels);
    ds.classes = classes;
    return ds;
}

Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw Error(ErrorCode::DataEmpty, "row selection is empty");
    std::size_t dim = ds.dim();
    std::vector<double> feats(indices.size() * dim);
    std::vector<std::size_t> labels(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        std::size_t src = indices[i];
        if (src >= ds.size()) throw Error(ErrorCode::InvalidParams, "row index out of range");
        std::copy_n(ds.features.values().begin() + src * dim, dim, feats.begin() + i * dim);
        labels[i] = ds.labels[src];
    }
    Dataset out;
    out.features = Tensor::from_data({indices.size(), dim}, std::move(feats));
    out.labels = std::move(labels);
    out.classes = ds.classes;
    return out;
}

std::vector<Dataset> dirichlet_partition(const Dataset& ds, const PartitionSpec& spec) {
    ds.validate();
    if (spec.n_clients < 2) throw Error(ErrorCode::InvalidParams, "need at least 2 clients");
    if (spec.dirichlet_alpha <= 0.0) throw Error(ErrorCode::InvalidParams, "dirichlet_alpha must be positive");
    if (ds.size() < 2 * spec.n_clients) {
        throw Error(ErrorCode::InvalidParams, "dataset too small for the client count");
    }
    Rng rng(spec.seed);

    // Collect and shuffle the indices of each class, then deal contiguous
    // chunks according to one Dirichlet draw per class.
    std::vector<std::vector<std::size_t>> by_class(ds.classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

    std::vector<std::vector<std::size_t>> assigned(spec.n_clients);
    for (std::size_t c = 0; c < ds.classes; ++c) {
        auto& idx = by_class[c];
        if (idx.empty()) continue;
        rng.shuffle(idx);
        std::vector<double> shares = rng.dirichlet(spec.dirichlet_alpha, spec.n_clients);
        // cumulative rounding keeps the total exact
        std::size_t used = 0;
        double cum = 0.0;
        for (std::size_t k = 0; k < spec.n_clients; ++k) {
            cum += shares[k];
            std::size_t upto = k + 1 == spec.n_clients
                                   ? idx.size()
                                   : std::min(idx.size(), static_cast<std::size_t>(
                                                              std::llround(cum * static_cast<double>(idx.size()))));
            for (std::size_t i = used; i < upto; ++i) assigned[k].push_back(idx[i]);
            used = std::max(used, upto);
        }
    }

    // Repair: every client needs at least 2 examples (one per split); take
    // from the largest client.
    for (std::size_t k = 0; k < spec.n_clients; ++k) {
        while (assigned[k].size() < 2) {
            std::size_t donor = 0;
            for (std::size_t j = 1; j < spec.n_clients; ++j) {
                if (assigned[j].size() > assigned[donor].size()) donor = j;
            }
            if (assigned[donor].size() <= 2) {
                throw Error(ErrorCode::InvalidParams, "not enough examples to give every client two");
            }
            assigned[k].push_back(assigned[donor].back());
            assigned[donor].pop_back();
        }
    }

    std::vector<Dataset> parts;
    parts.reserve(spec.n_clients);
    for (std::size_t k = 0; k < spec.n_clients; ++k) {
        std::sort(assigned[k].begin(), assigned[k].end());
        parts.push_back(take_rows(ds, assigned[k]));
    }
    return parts;
}

Dataset feature_shift(const Dataset& ds, std::size_t factor) {
    ds.validate();
    if (factor == 0) throw Error(ErrorCode::InvalidParams, "factor must be positive");
    if (factor == 1) return ds;
    std::size_t dim = ds.dim();
    if (dim % factor != 0) {
        throw Error(ErrorCode::IndivisibleDim,
                    "factor " + std::to_string(factor) + " does not divide dim " + std::to_string(dim));
    }
    std::size_t pooled = dim / factor;
    std::vector<double> feats(ds.size() * dim, 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t p = 0; p < pooled; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < factor; ++j) acc += ds.features.values()[i * dim + p * factor + j];
            feats[i * dim + p] = acc / static_cast<double>(factor);
        }
    }
    Dataset out;
    out.features = Tensor::from_data({ds.size(), dim}, std::move(feats));
    out.labels = ds.labels;
    out.classes = ds.classes;
    return out;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double train_fraction, Rng& rng) {
    ds.validate();
    if (ds.size() < 2) throw Error(ErrorCode::DataEmpty, "need at least 2 examples to split");
    if (train_fraction <= 0.0 || train_fraction >= 1.0) {
        throw Error(ErrorCode::InvalidParams, "train_fraction must be in (0, 1)");
    }
    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::size_t n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(ds.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, ds.size() - 1);
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
    std::vector<std::size_t> test_idx(order.begin() + n_train, order.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {take_rows(ds, train_idx), take_rows(ds, test_idx)};
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingArtifacts, "cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_line(line);
    std::size_t label_col = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == schema.label_column) label_col = i;
    }
    if (label_col == header.size()) {
        throw Error(ErrorCode::ParseError, path + ": header has no '" + schema.label_column + "' column");
    }
    std::size_t dim = header.size() - 1;
    if (dim == 0) throw Error(ErrorCode::ParseError, path + ": no feature columns");

    std::vector<double> feats;
    std::vector<std::size_t> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw Error(ErrorCode::ParseError,
                        path + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(header.size()));
        }
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (cells[i].empty()) {
                throw Error(ErrorCode::MissingValue,
                            path + ": line " + std::to_string(line_no) + " column '" + header[i] + "' is empty");
            }
            std::size_t consumed = 0;
            if (i == label_col) {
                long lab = 0;
                try {
                    lab = std::stol(cells[i], &consumed);
                } catch (const std::exception&) {
                    consumed = 0;
                }
                if (consumed != cells[i].size() || lab < 0) {
                    throw Error(ErrorCode::ParseError,
                                path + ": line " + std::to_string(line_no) + ": label '" + cells[i] +
                                    "' is not a nonnegative integer");
                }
                labels.push_back(static_cast<std::size_t>(lab));
            } else {
                double v = 0.0;
                try {
                    v = std::stod(cells[i], &consumed);
                } catch (const std::exception&) {
                    consumed = 0;
                }
                if (consumed != cells[i].size() || !std::isfinite(v)) {
                    throw Error(ErrorCode::ParseError,
                                path + ": line " + std::to_string(line_no) + ": value '" + cells[i] +
                                    "' in column '" + header[i] + "' is not numeric");
                }
                feats.push_back(v);
            }
        }
    }
    if (labels.empty()) throw Error(ErrorCode::DataEmpty, path + ": no data rows");
    Dataset ds;
    ds.features = Tensor::from_data({labels.size(), dim}, std::move(feats));
    ds.labels = std::move(labels);
    ds.classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    if (ds.classes < 2) ds.classes = 2;
    return ds;
}

void save_csv(const Dataset& ds, const std::string& path, const CsvSchema& schema) {
    ds.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::MissingArtifacts, "cannot open " + path + " for writing");
    std::size_t dim = ds.dim();
    for (std::size_t d = 0; d < dim; ++d) out << "f" << d << ",";
    out << schema.label_column << "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t d = 0; d < dim; ++d) out << format_double(ds.features.values()[i * dim + d]) << ",";
        out << ds.labels[i] << "\n";
    }
}

void save_dataset(const Dataset& ds, const std::string& path, std::uint64_t seed,
                  const std::string& provenance) {
    ds.validate();
    std::vector<std::uint8_t> bytes;
    write_tensor(bytes, ds.features);
    std::vector<double> labels_f(ds.labels.begin(), ds.labels.end());
    write_tensor(bytes, Tensor::from_data({ds.labels.size()}, std::move(labels_f)));
    write_file(path, bytes);

    nlohmann::json sidecar = {
        {"schema_version", 1},
        {"classes", ds.classes},
        {"examples", ds.size()},
        {"dim", ds.dim()},
        {"seed", seed},
        {"provenance", provenance},
    };
    std::ofstream out(path + ".json", std::ios::trunc);
    if (!out) throw Error(ErrorCode::MissingArtifacts, "cannot open " + path + ".json for writing");
    out << sidecar.dump(2) << "\n";
}

Dataset load_dataset(const std::string& path) {
    auto bytes = read_file(path);
    std::size_t offset = 0;
    Tensor features = read_tensor(bytes, offset);
    Tensor labels_f = read_tensor(bytes, offset);
    std::ifstream sidecar_in(path + ".json");
    if (!sidecar_in) throw Error(ErrorCode::MissingArtifacts, "missing sidecar " + path + ".json");
    nlohmann::json sidecar = nlohmann::json::parse(sidecar_in, nullptr, false);
    if (sidecar.is_discarded()) throw Error(ErrorCode::ParseError, path + ".json: invalid JSON");
    Dataset ds;
    ds.features = features;
    ds.labels.reserve(labels_f.size());
    for (double v : labels_f.values()) ds.labels.push_back(static_cast<std::size_t>(v));
    ds.classes = sidecar.at("classes").get<std::size_t>();
    ds.validate();
    return ds;
}

}  // namespace dflmoe
