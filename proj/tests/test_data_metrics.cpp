#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "dflmoe/data.hpp"
#include "dflmoe/metrics.hpp"
#include "dflmoe/model.hpp"
#include "oracles.hpp"

using namespace dflmoe;

namespace {

// Confusion-matrix macro-F1, written independently of the library path.
double mf1_oracle(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels,
                  std::size_t classes) {
    std::vector<std::vector<double>> confusion(classes, std::vector<double>(classes, 0.0));
    for (std::size_t i = 0; i < preds.size(); ++i) confusion[labels[i]][preds[i]] += 1.0;
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        double tp = confusion[c][c];
        double pred_c = 0.0, true_c = 0.0;
        for (std::size_t k = 0; k < classes; ++k) {
            pred_c += confusion[k][c];
            true_c += confusion[c][k];
        }
        if (pred_c == 0.0 || true_c == 0.0 || tp == 0.0) continue;  // F1 = 0 by convention
        double precision = tp / pred_c;
        double recall = tp / true_c;
        total += 2.0 * precision * recall / (precision + recall);
    }
    return total / static_cast<double>(classes);
}

std::string temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "dflmoe_data_test";
    std::filesystem::create_directories(dir);
    return dir.string();
}

std::vector<std::vector<double>> sorted_rows(const Dataset& ds) {
    std::vector<std::vector<double>> rows;
    std::size_t dim = ds.dim();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::vector<double> row(ds.features.values().begin() + i * dim,
                                ds.features.values().begin() + (i + 1) * dim);
        row.push_back(static_cast<double>(ds.labels[i]));
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

}  // namespace

TEST_CASE("synthetic data is reproducible and near-separable at tiny sigma") {
    Dataset a = make_synthetic(3, 8, 300, 42, 0.01, 1.0);
    Dataset b = make_synthetic(3, 8, 300, 42, 0.01, 1.0);
    CHECK(std::memcmp(a.features.values().data(), b.features.values().data(),
                      a.features.size() * sizeof(double)) == 0);
    CHECK(a.labels == b.labels);

    // linear probe: softmax regression trained on the data itself
    Tensor w = Tensor::zeros({8, 3}, true);
    Tensor bias = Tensor::zeros({3}, true);
    for (int step = 0; step < 150; ++step) {
        GradGraph::current().clear();
        Tensor loss = cross_entropy_loss(add_row_bias(matmul(a.features, w), bias), a.labels);
        backward(loss);
        sgd_step({w, bias}, 0.5);
    }
    NoGradGuard ng;
    auto preds = argmax_rows(add_row_bias(matmul(a.features, w), bias));
    CHECK(accuracy(preds, a.labels) > 0.99);
}

TEST_CASE("synthetic label histogram is near-uniform") {
    std::size_t n = 4000, classes = 4;
    Dataset ds = make_synthetic(classes, 8, n, 7);
    std::vector<double> counts(classes, 0.0);
    for (auto lab : ds.labels) counts[lab] += 1.0;
    double expected = static_cast<double>(n) / static_cast<double>(classes);
    double bound = 2.0 * std::sqrt(static_cast<double>(n));
    for (double c : counts) CHECK(std::abs(c - expected) <= bound);
}

TEST_CASE("synthetic rejects bad parameters") {
    CHECK_THROWS_AS(make_synthetic(1, 8, 100, 0), Error);
    CHECK_THROWS_AS(make_synthetic(4, 2, 100, 0), Error);
    CHECK_THROWS_AS(make_synthetic(4, 8, 0, 0), Error);
}

TEST_CASE("dirichlet partition with huge alpha is near-uniform") {
    Dataset ds = make_synthetic(4, 8, 4000, 11);
    PartitionSpec spec{.n_clients = 4, .dirichlet_alpha = 1e6, .seed = 5};
    auto parts = dirichlet_partition(ds, spec);
    std::vector<double> global(4, 0.0);
    for (auto lab : ds.labels) global[lab] += 1.0;
    for (auto& g : global) g /= static_cast<double>(ds.size());
    for (const auto& part : parts) {
        std::vector<double> local(4, 0.0);
        for (auto lab : part.labels) local[lab] += 1.0;
        for (auto& l : local) l /= static_cast<double>(part.size());
        double tv = 0.0;
        for (std::size_t c = 0; c < 4; ++c) tv += std::abs(local[c] - global[c]);
        CHECK(tv / 2.0 < 0.05);
    }
}

TEST_CASE("dirichlet partition with small alpha concentrates labels") {
    Dataset ds = make_synthetic(4, 8, 2000, 11);
    PartitionSpec spec{.n_clients = 4, .dirichlet_alpha = 0.1, .seed = 5};
    auto parts = dirichlet_partition(ds, spec);
    bool concentrated = false;
    for (const auto& part : parts) {
        std::vector<double> counts(4, 0.0);
        for (auto lab : part.labels) counts[lab] += 1.0;
        std::sort(counts.rbegin(), counts.rend());
        double top2 = (counts[0] + counts[1]) / static_cast<double>(part.size());
        concentrated = concentrated || top2 > 0.6;
    }
    CHECK(concentrated);
}

TEST_CASE("partition conserves the dataset as a multiset") {
    Dataset ds = make_synthetic(3, 6, 500, 13);
    PartitionSpec spec{.n_clients = 3, .dirichlet_alpha = 0.5, .seed = 21};
    auto parts = dirichlet_partition(ds, spec);
    std::size_t total = 0;
    std::vector<std::vector<double>> all_rows;
    for (const auto& part : parts) {
        total += part.size();
        auto rows = sorted_rows(part);
        all_rows.insert(all_rows.end(), rows.begin(), rows.end());
    }
    CHECK(total == ds.size());
    std::sort(all_rows.begin(), all_rows.end());
    CHECK(all_rows == sorted_rows(ds));
    for (const auto& part : parts) CHECK(part.size() >= 2);
}

TEST_CASE("feature shift cases") {
    Dataset ds;
    ds.features = Tensor::from_data({1, 4}, {1, 3, 5, 7});
    ds.labels = {0};
    ds.classes = 2;

    Dataset same = feature_shift(ds, 1);
    for (std::size_t i = 0; i < 4; ++i) CHECK(same.features.values()[i] == ds.features.values()[i]);

    Dataset pooled = feature_shift(ds, 2);
    CHECK(pooled.features.values()[0] == 2.0);
    CHECK(pooled.features.values()[1] == 6.0);
    CHECK(pooled.features.values()[2] == 0.0);
    CHECK(pooled.features.values()[3] == 0.0);

    Dataset constant;
    constant.features = Tensor::from_data({1, 4}, {2.5, 2.5, 2.5, 2.5});
    constant.labels = {1};
    constant.classes = 2;
    Dataset cpooled = feature_shift(constant, 2);
    CHECK(cpooled.features.values()[0] == 2.5);
    CHECK(cpooled.features.values()[1] == 2.5);

    CHECK_THROWS_AS(feature_shift(ds, 3), Error);
    try {
        feature_shift(ds, 3);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IndivisibleDim);
    }
}

TEST_CASE("accuracy cases and oracle agreement") {
    CHECK(accuracy({0, 1, 2}, {0, 1, 2}) == 1.0);
    CHECK(accuracy({0, 1, 1}, {0, 0, 1}) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(accuracy({0, 1}, {0}), Error);

    Rng rng(3);
    std::vector<std::size_t> preds(200), labels(200);
    for (std::size_t i = 0; i < 200; ++i) {
        preds[i] = rng.uniform_below(4);
        labels[i] = rng.uniform_below(4);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < 200; ++i) correct += preds[i] == labels[i];
    CHECK(accuracy(preds, labels) == doctest::Approx(static_cast<double>(correct) / 200.0));
}

TEST_CASE("macro f1 cases and oracle agreement") {
    CHECK(macro_f1({0, 1, 2, 0}, {0, 1, 2, 0}, 3) == 1.0);
    CHECK(macro_f1({1, 1, 0, 0}, {1, 0, 1, 0}, 2) == doctest::Approx(0.5));

    Rng rng(9);
    std::vector<std::size_t> preds(300), labels(300);
    for (std::size_t i = 0; i < 300; ++i) {
        preds[i] = rng.uniform_below(4);
        labels[i] = rng.uniform_below(4);
    }
    CHECK(macro_f1(preds, labels, 4) == doctest::Approx(mf1_oracle(preds, labels, 4)).epsilon(1e-12));

    // a class absent from preds and labels contributes zero
    CHECK(macro_f1({0, 1, 0, 1}, {0, 1, 0, 1}, 3) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("csv export/import round-trips") {
    std::string dir = temp_dir();
    Dataset ds = make_synthetic(3, 4, 20, 31);
    std::string path_a = dir + "/round_a.csv";
    std::string path_b = dir + "/round_b.csv";
    save_csv(ds, path_a, {});
    Dataset back = load_csv(path_a, {});
    CHECK(back.size() == ds.size());
    CHECK(back.classes == ds.classes);
    CHECK(back.labels == ds.labels);
    CHECK(std::memcmp(back.features.values().data(), ds.features.values().data(),
                      ds.features.size() * sizeof(double)) == 0);
    save_csv(back, path_b, {});
    std::ifstream fa(path_a), fb(path_b);
    std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ca == cb);
}

TEST_CASE("csv parse errors name the line") {
    std::string dir = temp_dir();
    {
        std::ofstream out(dir + "/bad_cell.csv");
        out << "f0,f1,label\n1.0,2.0,0\nx,2.0,1\n";
    }
    try {
        load_csv(dir + "/bad_cell.csv", {});
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    {
        std::ofstream out(dir + "/missing.csv");
        out << "f0,f1,label\n1.0,,0\n";
    }
    try {
        load_csv(dir + "/missing.csv", {});
        FAIL("expected MissingValue");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingValue);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    {
        std::ofstream out(dir + "/nolabel.csv");
        out << "f0,f1\n1.0,2.0\n";
    }
    CHECK_THROWS_AS(load_csv(dir + "/nolabel.csv", {}), Error);
}

TEST_CASE("an iris-like three-class csv loads with the right shape") {
    std::string dir = temp_dir();
    std::string path = dir + "/iris_like.csv";
    {
        std::ofstream out(path);
        out << "sepal_l,sepal_w,petal_l,petal_w,label\n";
        Rng rng(15);
        for (int i = 0; i < 150; ++i) {
            int lab = i / 50;
            for (int d = 0; d < 4; ++d) out << 1.0 + lab + 0.1 * rng.uniform() << ",";
            out << lab << "\n";
        }
    }
    Dataset ds = load_csv(path, {});
    CHECK(ds.size() == 150);
    CHECK(ds.classes == 3);
    CHECK(ds.dim() == 4);
}

TEST_CASE("binary dataset export restores exactly") {
    std::string dir = temp_dir();
    Dataset ds = make_synthetic(4, 6, 64, 17);
    std::string path = dir + "/dataset.bin";
    save_dataset(ds, path, 17, "make_synthetic");
    Dataset back = load_dataset(path);
    CHECK(back.classes == ds.classes);
    CHECK(back.labels == ds.labels);
    CHECK(std::memcmp(back.features.values().data(), ds.features.values().data(),
                      ds.features.size() * sizeof(double)) == 0);
}

TEST_CASE("train/test split keeps both sides populated and conserves rows") {
    Dataset ds = make_synthetic(3, 6, 100, 19);
    Rng rng(4);
    auto [train, test] = train_test_split(ds, 0.7, rng);
    CHECK(train.size() == 70);
    CHECK(test.size() == 30);
    auto all = sorted_rows(train);
    auto rest = sorted_rows(test);
    all.insert(all.end(), rest.begin(), rest.end());
    std::sort(all.begin(), all.end());
    CHECK(all == sorted_rows(ds));

    Dataset tiny = take_rows(ds, {0, 1});
    Rng rng2(4);
    auto [t2, e2] = train_test_split(tiny, 0.9, rng2);
    CHECK(t2.size() == 1);
    CHECK(e2.size() == 1);
}
